//! Conversion of weak-supervision output and external precondition datasets
//! into one NLI schema, plus seeded train/dev/test splitting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentationRecord;
use crate::corpus::Segmenter;
use crate::extraction::ExtractionRecord;
use crate::{Error, Polarity, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NliLabel {
    Entailment,
    Contradiction,
}

impl From<Polarity> for NliLabel {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Allow => NliLabel::Entailment,
            Polarity::Prevent => NliLabel::Contradiction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliRecord {
    pub record_id: String,
    pub hypothesis: String,
    pub premise: String,
    pub label: NliLabel,
    pub source_task: String,
    pub split: Option<Split>,
}

fn record(
    record_id: impl Into<String>,
    hypothesis: impl Into<String>,
    premise: impl Into<String>,
    label: NliLabel,
    source_task: &str,
) -> Result<NliRecord> {
    let record_id = record_id.into();
    let hypothesis = hypothesis.into();
    let premise = premise.into();
    if hypothesis.trim().is_empty() || premise.trim().is_empty() {
        return Err(Error::contract(format!(
            "{source_task} row {record_id}: hypothesis and premise must be non-empty"
        )));
    }
    Ok(NliRecord {
        record_id,
        hypothesis,
        premise,
        label,
        source_task: source_task.to_string(),
        split: None,
    })
}

pub const WEAK_TASK: &str = "pinks";

pub fn convert_weak(rec: &ExtractionRecord) -> Result<NliRecord> {
    record(&rec.stmt_id, &rec.action, &rec.precondition, rec.label.into(), WEAK_TASK)
}

pub fn convert_augmented(rec: &AugmentationRecord, ordinal: usize) -> Result<NliRecord> {
    record(
        format!("{}~aug{ordinal}", rec.parent_id),
        &rec.action,
        &rec.precondition,
        rec.label.into(),
        WEAK_TASK,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaNliRow {
    pub hypothesis: String,
    pub premise: String,
    pub update: String,
    pub label: String,
}

pub fn convert_delta_nli(id: &str, row: &DeltaNliRow) -> Result<NliRecord> {
    let label = match row.label.to_ascii_lowercase().as_str() {
        "weakener" => NliLabel::Contradiction,
        "strengthener" => NliLabel::Entailment,
        other => {
            return Err(Error::contract(format!(
                "delta-nli row {id}: unknown label {other:?} (expected weakener or strengthener)"
            )))
        }
    };
    let hypothesis = format!("{} {}", row.hypothesis.trim(), row.premise.trim());
    record(id, hypothesis.trim(), row.update.trim(), label, "delta-nli")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicRow {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

/// `None` for relations other than HinderedBy, Causes and xNeed.
pub fn convert_atomic(id: &str, row: &AtomicRow) -> Result<Option<NliRecord>> {
    let label = match row.relation.as_str() {
        "HinderedBy" => NliLabel::Contradiction,
        "Causes" | "xNeed" => NliLabel::Entailment,
        _ => return Ok(None),
    };
    record(id, row.head.trim(), row.tail.trim(), label, "atomic").map(Some)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinoventiRow {
    pub masked_prompt: String,
    pub target: String,
    pub incorrect: String,
}

pub const WINOVENTI_MASK: &str = "{MASK}";

/// First sentence as hypothesis; the second, with the mask filled by the
/// target and then the incorrect word, as the two premises.
pub fn convert_winoventi(id: &str, row: &WinoventiRow, segmenter: &Segmenter) -> Result<[NliRecord; 2]> {
    let prompt = crate::corpus::normalize(&row.masked_prompt);
    let spans = segmenter.spans(&prompt);
    let [first, second] = spans.as_slice() else {
        return Err(Error::contract(format!(
            "winoventi row {id}: masked_prompt must hold exactly two sentences, found {}",
            spans.len()
        )));
    };
    let hypothesis = &prompt[first.0..first.1];
    let premise = &prompt[second.0..second.1];
    if premise.matches(WINOVENTI_MASK).count() != 1 {
        return Err(Error::contract(format!(
            "winoventi row {id}: second sentence must contain {WINOVENTI_MASK} exactly once"
        )));
    }
    Ok([
        record(
            format!("{id}/target"),
            hypothesis,
            premise.replacen(WINOVENTI_MASK, row.target.trim(), 1),
            NliLabel::Entailment,
            "winoventi",
        )?,
        record(
            format!("{id}/incorrect"),
            hypothesis,
            premise.replacen(WINOVENTI_MASK, row.incorrect.trim(), 1),
            NliLabel::Contradiction,
            "winoventi",
        )?,
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnionRow {
    pub orig_head: String,
    pub neg_head: String,
    pub relation: String,
    pub tail: String,
}

pub const NAMES: [&str; 20] = [
    "Alice", "Bob", "Carol", "David", "Emma", "Frank", "Grace", "Henry", "Isabel", "Jack",
    "Karen", "Liam", "Maria", "Noah", "Olivia", "Peter", "Quinn", "Rachel", "Samuel", "Tina",
];

/// Names for PersonX and PersonY: pair `i = name_seed mod 10` of the fixed list.
pub fn person_names(name_seed: u64) -> (&'static str, &'static str) {
    let i = (name_seed % (NAMES.len() as u64 / 2)) as usize;
    (NAMES[2 * i], NAMES[2 * i + 1])
}

/// Relation → prefix placed before the tail to make it a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicalization(pub BTreeMap<String, String>);

impl Default for Lexicalization {
    fn default() -> Self {
        Lexicalization(
            [
                ("xEffect", ""),
                ("xIntent", "PersonX intends to"),
                ("xNeed", "PersonX needs to"),
                ("xWant", "PersonX wants to"),
                ("xReact", "PersonX feels"),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        )
    }
}

impl Lexicalization {
    pub fn lexicalize(&self, relation: &str, tail: &str) -> Result<String> {
        let prefix = self.0.get(relation).ok_or_else(|| {
            Error::contract(format!(
                "unknown ANION relation {relation:?}; supported: {}",
                self.0.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })?;
        let tail = tail.trim();
        let mut out = if prefix.is_empty() {
            tail.to_string()
        } else {
            format!("{prefix} {tail}")
        };
        if !out.ends_with(['.', '!', '?']) {
            out.push('.');
        }
        Ok(out)
    }
}

fn name_people(text: &str, x: &str, y: &str) -> String {
    text.replace("PersonX", x).replace("PersonY", y)
}

pub fn convert_anion(
    id: &str,
    row: &AnionRow,
    name_seed: u64,
    lexicalization: &Lexicalization,
) -> Result<[NliRecord; 2]> {
    let (x, y) = person_names(name_seed);
    let premise = name_people(&lexicalization.lexicalize(&row.relation, &row.tail)?, x, y);
    Ok([
        record(
            format!("{id}/orig"),
            name_people(row.orig_head.trim(), x, y),
            premise.clone(),
            NliLabel::Entailment,
            "anion",
        )?,
        record(
            format!("{id}/neg"),
            name_people(row.neg_head.trim(), x, y),
            premise,
            NliLabel::Contradiction,
            "anion",
        )?,
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacoRow {
    pub statement: String,
    pub precondition: String,
    pub label: String,
}

pub fn convert_paco(id: &str, row: &PacoRow) -> Result<NliRecord> {
    let label = match row.label.as_str() {
        "Disabling" => NliLabel::Contradiction,
        "Enabling" => NliLabel::Entailment,
        other => {
            return Err(Error::contract(format!(
                "paco row {id}: unknown label {other:?} (expected Disabling or Enabling)"
            )))
        }
    };
    record(id, row.statement.trim(), row.precondition.trim(), label, "paco")
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.45, 0.15, 0.40];

/// Bucket sizes: `floor(ratio * n)` for train and dev, the remainder to test.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be in [0, 1] and sum to 1")));
    }
    // the epsilon keeps 0.29 * 100 = 28.999999999999996 at 29
    let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let train = floor(ratios[0]).min(n);
    let dev = floor(ratios[1]).min(n - train);
    Ok([train, dev, n - train - dev])
}

/// Tags every record with a split. A seeded shuffle of the record positions
/// is cut into contiguous train/dev/test runs; records keep their order.
pub fn split(records: &mut [NliRecord], ratios: [f64; 3], seed: u64) -> Result<[usize; 3]> {
    let sizes = split_sizes(records.len(), ratios)?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut crate::seed::rng(seed));
    for (k, &i) in order.iter().enumerate() {
        records[i].split = Some(if k < sizes[0] {
            Split::Train
        } else if k < sizes[0] + sizes[1] {
            Split::Dev
        } else {
            Split::Test
        });
    }
    Ok(sizes)
}
