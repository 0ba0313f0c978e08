//! Conjunction-masked records for biased masked-language-model training.

use std::collections::HashMap;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Statement;
use crate::{Error, Polarity, Result};

const BUILTIN_CONJUNCTIONS: &str = include_str!("../data/conjunctions.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjunctionLists {
    pub allow: Vec<String>,
    pub prevent: Vec<String>,
}

fn canonical(surface: &str) -> String {
    surface.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl ConjunctionLists {
    /// The bundled lists, with repeated entries removed.
    pub fn builtin() -> Self {
        ConjunctionLists::parse(BUILTIN_CONJUNCTIONS, "builtin conjunctions")
            .expect("builtin conjunctions parse")
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let raw: ConjunctionLists =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        ConjunctionLists::new(raw.allow, raw.prevent)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&origin, e))?;
        ConjunctionLists::parse(&text, &origin)
    }

    pub fn new(allow: Vec<String>, prevent: Vec<String>) -> Result<Self> {
        let dedup = |list: Vec<String>| {
            let mut seen = std::collections::HashSet::new();
            list.into_iter()
                .map(|s| canonical(&s))
                .filter(|s| !s.is_empty() && seen.insert(s.clone()))
                .collect::<Vec<_>>()
        };
        let allow = dedup(allow);
        let prevent = dedup(prevent);
        if let Some(both) = allow.iter().find(|a| prevent.contains(a)) {
            return Err(Error::Config(format!("conjunction {both:?} is in both lists")));
        }
        Ok(ConjunctionLists { allow, prevent })
    }

    pub fn polarity(&self, surface: &str) -> Option<Polarity> {
        let key = canonical(surface);
        if self.allow.contains(&key) {
            Some(Polarity::Allow)
        } else if self.prevent.contains(&key) {
            Some(Polarity::Prevent)
        } else {
            None
        }
    }
}

/// Both lists compiled into one leftmost, longest-first alternation.
#[derive(Debug, Clone)]
pub struct ConjunctionFinder {
    regex: Regex,
    polarity: HashMap<String, Polarity>,
}

impl ConjunctionFinder {
    pub fn new(lists: &ConjunctionLists) -> Self {
        let mut all: Vec<(&String, Polarity)> = lists
            .allow
            .iter()
            .map(|s| (s, Polarity::Allow))
            .chain(lists.prevent.iter().map(|s| (s, Polarity::Prevent)))
            .collect();
        all.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(b.0)));
        let alternation = all
            .iter()
            .map(|(s, _)| s.split(' ').map(regex::escape).collect::<Vec<_>>().join(r"\s+"))
            .collect::<Vec<_>>()
            .join("|");
        let src = if alternation.is_empty() {
            r"[^\s\S]".to_string()
        } else {
            format!(r"(?i)\b(?:{alternation})\b")
        };
        ConjunctionFinder {
            regex: Regex::new(&src).expect("conjunction regex compiles"),
            polarity: all.into_iter().map(|(s, p)| (s.clone(), p)).collect(),
        }
    }

    pub fn find(&self, text: &str) -> Vec<ConjunctionSpan> {
        self.regex
            .find_iter(text)
            .map(|m| ConjunctionSpan {
                span: (m.start(), m.end()),
                surface: m.as_str().to_string(),
                polarity: self.polarity[&canonical(m.as_str())],
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjunctionSpan {
    pub span: (usize, usize),
    /// The conjunction as written in the text.
    pub surface: String,
    pub polarity: Polarity,
}

/// Whole-word conjunction occurrences, left to right, without overlap; at a
/// shared offset the longest conjunction wins.
pub fn find_conjunction_spans(text: &str, lists: &ConjunctionLists) -> Vec<ConjunctionSpan> {
    ConjunctionFinder::new(lists).find(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedTrainingRecord {
    pub stmt_id: String,
    pub masked_text: String,
    pub target: String,
    pub polarity: Polarity,
}

impl MaskedTrainingRecord {
    pub fn unmask(&self, placeholder: &str) -> String {
        self.masked_text.replacen(placeholder, &self.target, 1)
    }
}

/// One record per span. Texts that already contain the placeholder produce
/// nothing, since their records could not be unmasked unambiguously.
pub fn emit_masked_records(
    stmt_id: &str,
    text: &str,
    spans: &[ConjunctionSpan],
    placeholder: &str,
) -> Vec<MaskedTrainingRecord> {
    if placeholder.is_empty() || text.contains(placeholder) {
        return Vec::new();
    }
    spans
        .iter()
        .map(|c| MaskedTrainingRecord {
            stmt_id: stmt_id.to_string(),
            masked_text: format!("{}{}{}", &text[..c.span.0], placeholder, &text[c.span.1..]),
            target: text[c.span.0..c.span.1].to_string(),
            polarity: c.polarity,
        })
        .collect()
}

pub fn run_maskprep(
    statements: &[Statement],
    lists: &ConjunctionLists,
    placeholder: &str,
) -> Vec<MaskedTrainingRecord> {
    let finder = ConjunctionFinder::new(lists);
    statements
        .par_iter()
        .flat_map_iter(|s| emit_masked_records(&s.stmt_id, &s.text, &finder.find(&s.text), placeholder))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn targets(text: &str) -> Vec<(String, Polarity)> {
        find_conjunction_spans(text, &ConjunctionLists::builtin())
            .into_iter()
            .map(|c| (c.surface, c.polarity))
            .collect()
    }

    #[test]
    fn builtin_lists_deduplicated() {
        let lists = ConjunctionLists::builtin();
        assert_eq!(lists.allow.len(), 22);
        assert_eq!(lists.prevent.len(), 9);
        assert_eq!(lists.polarity("If  Not"), Some(Polarity::Prevent));
        assert_eq!(lists.polarity("so"), Some(Polarity::Allow));
        assert!(ConjunctionLists::new(vec!["if".into()], vec!["IF".into()]).is_err());
    }

    #[test]
    fn if_not_is_one_span() {
        assert_eq!(targets("Pears will rot if not refrigerated"), vec![("if not".into(), Polarity::Prevent)]);
        assert_eq!(targets("Dogs are pets unless they are wild"), vec![("unless".into(), Polarity::Prevent)]);
        assert!(targets("Dogs are pets").is_empty());
        assert!(targets("The sunless ifs").is_empty());
    }

    #[test]
    fn one_record_per_occurrence() {
        let text = "It rained so we stayed unless told otherwise";
        let spans = find_conjunction_spans(text, &ConjunctionLists::builtin());
        let recs = emit_masked_records("s", text, &spans, "[MASK]");
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].masked_text, "It rained [MASK] we stayed unless told otherwise");
        assert_eq!(recs[1].masked_text, "It rained so we stayed [MASK] told otherwise");
        for r in &recs {
            assert_eq!(r.unmask("[MASK]"), text);
        }
    }

    #[test]
    fn single_span_and_case() {
        let spans = find_conjunction_spans("A unless B", &ConjunctionLists::builtin());
        let recs = emit_masked_records("s", "A unless B", &spans, "[MASK]");
        assert_eq!(recs[0].masked_text, "A [MASK] B");
        assert_eq!(recs[0].target, "unless");
        let text = "Only if it rains, If Not then dry";
        let spans = find_conjunction_spans(text, &ConjunctionLists::builtin());
        let recs = emit_masked_records("s", text, &spans, "<mask>");
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].target, "If Not");
        assert!(recs.iter().all(|r| r.unmask("<mask>") == text));
    }

    #[test]
    fn placeholder_in_source_is_skipped() {
        let text = "A [MASK] unless B";
        let spans = find_conjunction_spans(text, &ConjunctionLists::builtin());
        assert!(emit_masked_records("s", text, &spans, "[MASK]").is_empty());
    }
}
