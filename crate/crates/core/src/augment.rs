//! Mask-and-fill augmentation of extracted statements.
//!
//! Nouns and adjectives (pivots) are masked one at a time, a mask filler
//! proposes replacements, candidates that change the pivot's POS are dropped,
//! and the best few per mask are kept. A statement never yields more than
//! `per_statement` augmentations; when there are more, a seeded uniform
//! sample keyed by the statement id picks which ones stay.

use std::sync::Arc;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Lexicon, Pos, TaggedToken, Tagger};
use crate::extraction::ExtractionRecord;
use crate::seed::keyed_rng;
use crate::{Error, Polarity, Result};

pub const DEFAULT_PLACEHOLDER: &str = "[MASK]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskQuery {
    pub text_with_placeholder: String,
    pub placeholder: String,
    pub pivot: TaggedToken,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillCandidate {
    pub token: String,
    pub score: f64,
    pub pos: Pos,
}

pub trait MaskFiller: Send + Sync {
    fn fill(&self, query: &MaskQuery) -> Result<Vec<FillCandidate>>;

    fn id(&self) -> String;
}

fn match_case(template: &str, word: &str) -> String {
    let mut chars = word.chars();
    match (template.chars().next(), chars.next()) {
        (Some(t), Some(first)) if t.is_uppercase() => first.to_uppercase().chain(chars).collect(),
        _ => word.to_string(),
    }
}

/// Lexicon fill: synonyms of `source` in table order, scored `1/rank`, with
/// the case of the source's first letter. Multi-token synonyms and the
/// placeholder literal are never returned.
pub fn lexicon_fill(
    lexicon: &Lexicon,
    text: &str,
    placeholder: &str,
    source: &str,
    top_k: usize,
) -> Result<Vec<FillCandidate>> {
    if placeholder.is_empty() || text.matches(placeholder).count() != 1 {
        return Err(Error::contract(format!(
            "fill text must contain exactly one {placeholder:?}"
        )));
    }
    if top_k == 0 {
        return Err(Error::contract("top_k must be positive"));
    }
    let mut seen = std::collections::HashSet::new();
    let synonyms = lexicon.get(source).map(|e| e.synonyms.as_slice()).unwrap_or_default();
    Ok(synonyms
        .iter()
        .filter(|s| !s.is_empty() && !s.contains(char::is_whitespace) && !s.contains(placeholder))
        .map(|s| match_case(source, s))
        .filter(|s| seen.insert(s.clone()))
        .take(top_k)
        .enumerate()
        .map(|(rank, token)| FillCandidate {
            pos: lexicon.pos_of(&token),
            score: 1.0 / (rank + 1) as f64,
            token,
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct LexiconFiller {
    lexicon: Arc<Lexicon>,
}

impl LexiconFiller {
    pub fn new(lexicon: Arc<Lexicon>) -> Self {
        LexiconFiller { lexicon }
    }

    pub fn bundled() -> Self {
        LexiconFiller::new(Arc::new(Lexicon::bundled()))
    }
}

impl MaskFiller for LexiconFiller {
    fn fill(&self, q: &MaskQuery) -> Result<Vec<FillCandidate>> {
        lexicon_fill(
            &self.lexicon,
            &q.text_with_placeholder,
            &q.placeholder,
            &q.pivot.surface,
            q.top_k,
        )
    }

    fn id(&self) -> String {
        format!("lexicon:{}", self.lexicon.version())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub parent_id: String,
    pub augmented_text: String,
    pub action: String,
    pub precondition: String,
    pub pivot: String,
    pub replacement: String,
    pub rank: usize,
    pub label: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub per_mask: usize,
    pub per_statement: usize,
    /// Candidates requested per mask, leaving room for POS filtering.
    pub request_top_k: usize,
    pub placeholder: String,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            per_mask: 3,
            per_statement: 20,
            request_top_k: 10,
            placeholder: DEFAULT_PLACEHOLDER.to_string(),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_mask == 0 || self.per_statement == 0 {
            return Err(Error::Config("augmentation caps must be positive".into()));
        }
        if self.request_top_k < self.per_mask {
            return Err(Error::Config("request_top_k must be at least per_mask".into()));
        }
        if self.placeholder.is_empty() {
            return Err(Error::Config("placeholder must not be empty".into()));
        }
        Ok(())
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Noun and adjective tokens of `text`, in order, skipping any token that
/// overlaps an excluded span (the matched conjunction).
pub fn find_pivots(
    text: &str,
    tagger: &dyn Tagger,
    exclude: &[(usize, usize)],
) -> Result<Vec<TaggedToken>> {
    Ok(tagger
        .tag(text)?
        .into_iter()
        .filter(|t| matches!(t.pos, Pos::Noun | Pos::Adj))
        .filter(|t| !exclude.iter().any(|&e| overlaps(e, (t.start, t.end))))
        .collect())
}

fn within(outer: (usize, usize), inner: (usize, usize)) -> bool {
    outer.0 <= inner.0 && inner.1 <= outer.1
}

/// Pivots of an extracted record: those lying inside its action or
/// precondition slot, so the conjunction and template words never move.
pub fn record_pivots(rec: &ExtractionRecord, tagger: &dyn Tagger) -> Result<Vec<TaggedToken>> {
    Ok(find_pivots(&rec.text, tagger, &[])?
        .into_iter()
        .filter(|t| {
            let span = (t.start, t.end);
            within(rec.action_span, span) || within(rec.precondition_span, span)
        })
        .collect())
}

fn splice(text: &str, span: (usize, usize), with: &str) -> String {
    let mut out = String::with_capacity(text.len() + with.len());
    out.push_str(&text[..span.0]);
    out.push_str(with);
    out.push_str(&text[span.1..]);
    out
}

fn check_response(candidates: &[FillCandidate], context: &str) -> Result<()> {
    let malformed = |message: &str| Error::MalformedResponse {
        context: context.to_string(),
        message: message.to_string(),
    };
    if candidates.iter().any(|c| !c.score.is_finite()) {
        return Err(malformed("non-finite score"));
    }
    if candidates.windows(2).any(|w| w[1].score > w[0].score) {
        return Err(malformed("scores are not in non-increasing order"));
    }
    Ok(())
}

/// Keeps candidates that preserve the pivot's POS, differ from it, and are a
/// single token; best `per_mask` by score, ties broken by token.
fn select_candidates(
    pivot: &TaggedToken,
    mut candidates: Vec<FillCandidate>,
    placeholder: &str,
    per_mask: usize,
) -> Vec<FillCandidate> {
    candidates.retain(|c| {
        c.pos == pivot.pos
            && !c.token.is_empty()
            && !c.token.contains(char::is_whitespace)
            && !c.token.contains(placeholder)
            && c.token.to_lowercase() != pivot.surface.to_lowercase()
    });
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.token.cmp(&b.token)));
    let mut seen = std::collections::HashSet::new();
    candidates.retain(|c| seen.insert(c.token.clone()));
    candidates.truncate(per_mask);
    candidates
}

pub fn generate_augmentations(
    rec: &ExtractionRecord,
    pivots: &[TaggedToken],
    filler: &dyn MaskFiller,
    config: &AugmentConfig,
) -> Result<Vec<AugmentationRecord>> {
    config.validate()?;
    let mut out = Vec::new();
    for pivot in pivots {
        let span = (pivot.start, pivot.end);
        let query = MaskQuery {
            text_with_placeholder: splice(&rec.text, span, &config.placeholder),
            placeholder: config.placeholder.clone(),
            pivot: pivot.clone(),
            top_k: config.request_top_k,
        };
        let candidates = filler.fill(&query).map_err(|e| e.with_stmt(&rec.stmt_id))?;
        check_response(&candidates, &rec.stmt_id)?;
        for (rank, cand) in select_candidates(pivot, candidates, &config.placeholder, config.per_mask)
            .into_iter()
            .enumerate()
        {
            let shift = |slot: (usize, usize)| {
                let piece = &rec.text[slot.0..slot.1];
                if within(slot, span) {
                    splice(piece, (span.0 - slot.0, span.1 - slot.0), &cand.token)
                } else {
                    piece.to_string()
                }
            };
            out.push(AugmentationRecord {
                parent_id: rec.stmt_id.clone(),
                augmented_text: splice(&rec.text, span, &cand.token),
                action: shift(rec.action_span),
                precondition: shift(rec.precondition_span),
                pivot: pivot.surface.clone(),
                replacement: cand.token,
                rank: rank + 1,
                label: rec.label,
            });
        }
    }
    if out.len() > config.per_statement {
        let mut rng = keyed_rng(config.seed, &rec.stmt_id);
        let mut keep = sample(&mut rng, out.len(), config.per_statement).into_vec();
        keep.sort_unstable();
        let mut slots: Vec<Option<AugmentationRecord>> = out.into_iter().map(Some).collect();
        out = keep.into_iter().filter_map(|i| slots[i].take()).collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub parents: usize,
    pub pivots: usize,
    pub emitted: usize,
    pub capped_parents: usize,
}

/// Augments every record; output keeps parent order, then pivot order.
pub fn run_augmentation(
    records: &[ExtractionRecord],
    tagger: &dyn Tagger,
    filler: &dyn MaskFiller,
    config: &AugmentConfig,
) -> Result<(Vec<AugmentationRecord>, AugmentReport)> {
    config.validate()?;
    let per_parent: Vec<(usize, bool, Vec<AugmentationRecord>)> = records
        .par_iter()
        .map(|rec| {
            let pivots = record_pivots(rec, tagger).map_err(|e| e.with_stmt(&rec.stmt_id))?;
            let augs = generate_augmentations(rec, &pivots, filler, config)?;
            let capped = augs.len() == config.per_statement;
            Ok((pivots.len(), capped, augs))
        })
        .collect::<Result<_>>()?;
    let mut report = AugmentReport {
        parents: records.len(),
        ..AugmentReport::default()
    };
    let mut out = Vec::new();
    for (pivots, capped, augs) in per_parent {
        report.pivots += pivots;
        report.capped_parents += usize::from(capped);
        report.emitted += augs.len();
        out.extend(augs);
    }
    Ok((out, report))
}
