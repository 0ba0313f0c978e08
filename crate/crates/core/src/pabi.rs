//! PAC-Bayesian informativeness of a cross-domain incidental signal.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Radicands in `[-RADICAND_WINDOW, 0)` are floating-point noise and read as 0.
pub const RADICAND_WINDOW: f64 = 1e-12;

/// Enum order used to break majority ties.
pub const LABEL_ORDER: [&str; 2] = ["ENTAILMENT", "CONTRADICTION"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub label_count: u32,
    /// Silver vs perfect system, source domain.
    pub eta1: f64,
    /// Silver vs gold system, target domain.
    pub eta2: f64,
}

impl RatePair {
    pub fn validate(&self) -> Result<()> {
        if self.label_count < 2 {
            return Err(Error::contract(format!("label count must be >= 2, got {}", self.label_count)));
        }
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledId {
    pub record_id: String,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub ids: Vec<String>,
    pub labels: Vec<String>,
}

impl LabelSequence {
    pub fn new(ids: Vec<String>, labels: Vec<String>) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(Error::contract(format!("{} ids but {} labels", ids.len(), labels.len())));
        }
        Ok(LabelSequence { ids, labels })
    }

    pub fn from_rows(rows: Vec<LabeledId>) -> Self {
        let (ids, labels) = rows.into_iter().map(|r| (r.record_id, r.label)).unzip();
        LabelSequence { ids, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Fraction of aligned positions whose labels differ.
pub fn error_rate(pred: &LabelSequence, gold: &LabelSequence) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::contract(format!(
            "prediction length {} differs from gold length {}",
            pred.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::contract("cannot compute an error rate over zero records"));
    }
    if let Some(i) = (0..gold.len()).find(|&i| pred.ids[i] != gold.ids[i]) {
        return Err(Error::contract(format!(
            "record ids misaligned at position {i}: {:?} vs {:?}",
            pred.ids[i], gold.ids[i]
        )));
    }
    let wrong = pred.labels.iter().zip(&gold.labels).filter(|(p, g)| p != g).count();
    Ok(wrong as f64 / gold.len() as f64)
}

pub fn eta_from_rates(r: RatePair) -> Result<f64> {
    r.validate()?;
    let l = f64::from(r.label_count);
    let denominator = 1.0 - l * (1.0 - r.eta1);
    if denominator.abs() < f64::EPSILON {
        return Err(Error::Singularity { label_count: r.label_count, eta1: r.eta1 });
    }
    let eta = (l - 1.0) * (r.eta1 - r.eta2) / denominator;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InconsistentRates { label_count: r.label_count, eta1: r.eta1, eta2: r.eta2, eta });
    }
    Ok(eta)
}

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

pub fn pabi_score(label_count: u32, eta: f64) -> Result<f64> {
    if label_count < 2 {
        return Err(Error::contract(format!("label count must be >= 2, got {label_count}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::contract(format!("eta must be in [0, 1], got {eta}")));
    }
    let l = f64::from(label_count);
    let entropy = eta * (l - 1.0).ln() - xlnx(eta) - xlnx(1.0 - eta);
    let radicand = 1.0 - entropy / l.ln();
    if radicand < -RADICAND_WINDOW {
        return Err(Error::Domain { label_count, eta, radicand });
    }
    Ok(radicand.max(0.0).sqrt())
}

fn label_rank(label: &str) -> (usize, &str) {
    let pos = LABEL_ORDER.iter().position(|l| *l == label).unwrap_or(LABEL_ORDER.len());
    (pos, label)
}

/// A constant sequence of the modal gold label. Ties go to the label that
/// comes first in [`LABEL_ORDER`], then lexicographically.
pub fn zero_rate_predictions(gold: &LabelSequence) -> Result<LabelSequence> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in &gold.labels {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    let modal = counts
        .into_iter()
        .min_by(|a, b| b.1.cmp(&a.1).then_with(|| label_rank(a.0).cmp(&label_rank(b.0))))
        .map(|(l, _)| l.to_string())
        .ok_or_else(|| Error::contract("zero-rate baseline needs at least one gold label"))?;
    Ok(LabelSequence { ids: gold.ids.clone(), labels: vec![modal; gold.len()] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSource {
    Given,
    LabelFiles { predictions: String, gold: String, records: usize },
    ZeroRate { gold: String, records: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PabiReport {
    pub label_count: u32,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub eta1_source: Option<RateSource>,
    pub eta2_source: Option<RateSource>,
    pub eta_source: RateSource,
    pub eta: f64,
    pub score: f64,
}

impl PabiReport {
    pub fn from_eta(label_count: u32, eta: f64, source: RateSource) -> Result<Self> {
        Ok(PabiReport {
            label_count,
            eta1: None,
            eta2: None,
            eta1_source: None,
            eta2_source: None,
            eta_source: source,
            eta,
            score: pabi_score(label_count, eta)?,
        })
    }

    pub fn from_rates(r: RatePair, eta1_source: RateSource, eta2_source: RateSource) -> Result<Self> {
        let eta = eta_from_rates(r)?;
        Ok(PabiReport {
            eta1: Some(r.eta1),
            eta2: Some(r.eta2),
            eta1_source: Some(eta1_source),
            eta2_source: Some(eta2_source),
            ..PabiReport::from_eta(r.label_count, eta, RateSource::Given)?
        })
    }

    /// Score ×100 to one decimal, as printed in result tables.
    pub fn display_score(&self) -> String {
        format!("{:.1}", self.score * 100.0)
    }
}
