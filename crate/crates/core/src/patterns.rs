//! Labeling functions built from conjunction patterns, and the label matrix.
//!
//! Every labeling function (LF) looks for one conjunction in a fixed
//! position. Within a registry, an occurrence that lies inside a longer
//! occurrence found by another enabled LF is shadowed: in "rot if not
//! refrigerated" only `if not` fires, never `if`.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Statement;
use crate::{Error, Polarity, Result};

const BUILTIN_REGISTRY: &str = include_str!("../data/registry.toml");

pub const DEFAULT_PRECISION_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Template {
    /// `{action} <conj> {precondition}`
    Infix,
    /// `{precondition} makes {action} possible.`
    PrecondMakes,
    /// `The statement "{event}" is true because {precondition}.`
    WrapStatement,
    /// `To understand the event "{event}", it is important to know that {precondition}.`
    WrapUnderstand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub lf_id: String,
    pub surface: String,
    pub template: Template,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    pub enabled: bool,
}

impl PatternSpec {
    fn validate(&self) -> Result<()> {
        if self.surface.is_empty() || self.surface != self.surface.to_lowercase() {
            return Err(Error::Config(format!(
                "pattern {:?}: surface must be non-empty lowercase",
                self.lf_id
            )));
        }
        if let Some(p) = self.precision {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "pattern {:?}: precision {p} outside [0, 1]",
                    self.lf_id
                )));
            }
        }
        if self.template != Template::Infix && self.polarity != Polarity::Allow {
            return Err(Error::Config(format!(
                "pattern {:?}: {:?} templates are always ALLOW",
                self.lf_id, self.template
            )));
        }
        Ok(())
    }

    /// Precision used for priority; a missing score ranks below every present one.
    pub fn priority(&self) -> f64 {
        self.precision.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRegistry {
    #[serde(default = "default_threshold")]
    pub precision_threshold: f64,
    #[serde(rename = "pattern")]
    pub patterns: Vec<PatternSpec>,
}

fn default_threshold() -> f64 {
    DEFAULT_PRECISION_THRESHOLD
}

impl PatternRegistry {
    pub fn new(patterns: Vec<PatternSpec>, precision_threshold: f64) -> Result<Self> {
        let registry = PatternRegistry {
            precision_threshold,
            patterns,
        };
        registry.validate()?;
        Ok(registry)
    }

    /// The bundled conjunction table, as shipped (only LFs at or above 0.7 enabled).
    pub fn builtin() -> Self {
        PatternRegistry::parse(BUILTIN_REGISTRY, "builtin registry").expect("builtin registry parses")
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN_REGISTRY
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let registry: PatternRegistry = toml::from_str(text)
            .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&origin, e))?;
        PatternRegistry::parse(&text, &origin)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("registry serializes")
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.precision_threshold) {
            return Err(Error::Config(format!(
                "precision threshold {} outside [0, 1]",
                self.precision_threshold
            )));
        }
        let mut seen = HashSet::new();
        for p in &self.patterns {
            p.validate()?;
            if !seen.insert(p.lf_id.as_str()) {
                return Err(Error::Config(format!("duplicate lf_id {:?}", p.lf_id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, lf_id: &str) -> Option<&PatternSpec> {
        self.patterns.iter().find(|p| p.lf_id == lf_id)
    }

    pub fn enabled(&self) -> impl Iterator<Item = &PatternSpec> {
        self.patterns.iter().filter(|p| p.enabled)
    }

    pub fn enabled_ids(&self) -> Vec<&str> {
        self.enabled().map(|p| p.lf_id.as_str()).collect()
    }

    /// Force the named LFs on, whatever their precision.
    pub fn with_enabled<S: AsRef<str>>(mut self, lf_ids: &[S]) -> Result<Self> {
        for id in lf_ids {
            let id = id.as_ref();
            let p = self
                .patterns
                .iter_mut()
                .find(|p| p.lf_id == id)
                .ok_or_else(|| Error::Config(format!("unknown lf_id {id:?}")))?;
            p.enabled = true;
        }
        Ok(self)
    }
}

/// Enables exactly the LFs whose precision is present and at least `threshold`.
pub fn filter_registry(registry: &PatternRegistry, threshold: f64) -> Result<PatternRegistry> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
    }
    let patterns = registry
        .patterns
        .iter()
        .map(|p| PatternSpec {
            enabled: p.precision.is_some_and(|v| v >= threshold),
            ..p.clone()
        })
        .collect();
    Ok(PatternRegistry {
        precision_threshold: threshold,
        patterns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Vote {
    Allow,
    Prevent,
    Abstain,
}

impl From<Polarity> for Vote {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Allow => Vote::Allow,
            Polarity::Prevent => Vote::Prevent,
        }
    }
}

impl Vote {
    pub fn polarity(self) -> Option<Polarity> {
        match self {
            Vote::Allow => Some(Polarity::Allow),
            Vote::Prevent => Some(Polarity::Prevent),
            Vote::Abstain => None,
        }
    }

    pub fn is_abstain(self) -> bool {
        self == Vote::Abstain
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: Vote,
    pub match_span: Option<(usize, usize)>,
}

impl Verdict {
    pub const ABSTAIN: Verdict = Verdict {
        value: Vote::Abstain,
        match_span: None,
    };
}

/// A pattern compiled for matching. Template slots are exposed to extraction.
#[derive(Debug, Clone)]
pub struct CompiledPattern {
    pub spec: PatternSpec,
    regex: Regex,
}

fn surface_regex(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(regex::escape)
        .collect::<Vec<_>>()
        .join(r"\s+")
}

const OPEN_QUOTE: &str = "[\"\u{201C}]";
const CLOSE_QUOTE: &str = "[\"\u{201D}]";

impl CompiledPattern {
    pub fn new(spec: &PatternSpec) -> Self {
        let src = match spec.template {
            Template::Infix => format!(r"(?i)\b(?P<conj>{})\b", surface_regex(&spec.surface)),
            Template::PrecondMakes => format!(
                r"(?i)^(?P<pre>.*?\S)\s+(?P<conj>\b{}\b\s+(?P<act>.*?\S)\s+possible)\W*$",
                surface_regex(&spec.surface)
            ),
            Template::WrapStatement => format!(
                r#"(?i)^(?P<conj>the\s+statement\s+{OPEN_QUOTE}(?P<act>[^"”]*?\S)\s*{CLOSE_QUOTE}\s+is\s+true\s+because\s+(?P<pre>.*?\S))\.?$"#
            ),
            Template::WrapUnderstand => format!(
                r#"(?i)^(?P<conj>to\s+understand\s+the\s+event\s+{OPEN_QUOTE}(?P<act>[^"”]*?[^\s,]),?\s*{CLOSE_QUOTE}\s*,?\s+it\s+is\s+important\s+to\s+know\s+that\s+(?P<pre>.*?\S))\.?$"#
            ),
        };
        CompiledPattern {
            spec: spec.clone(),
            regex: Regex::new(&src).expect("pattern regex compiles"),
        }
    }

    /// All template-valid occurrences, left to right.
    pub fn occurrences(&self, text: &str) -> Vec<(usize, usize)> {
        match self.spec.template {
            Template::Infix => self
                .regex
                .captures_iter(text)
                .filter_map(|c| c.name("conj"))
                .filter(|m| {
                    text[..m.start()].chars().any(char::is_alphanumeric)
                        && text[m.end()..].chars().any(char::is_alphanumeric)
                })
                .map(|m| (m.start(), m.end()))
                .collect(),
            _ => self
                .regex
                .captures(text)
                .and_then(|c| c.name("conj"))
                .map(|m| vec![(m.start(), m.end())])
                .unwrap_or_default(),
        }
    }

    /// Slots of a template sentence: `(action, precondition)` byte spans.
    /// Only meaningful for non-infix templates.
    pub fn slots(&self, text: &str) -> Option<((usize, usize), (usize, usize))> {
        let caps = self.regex.captures(text)?;
        let act = caps.name("act")?;
        let pre = caps.name("pre")?;
        Some(((act.start(), act.end()), (pre.start(), pre.end())))
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// One non-abstaining LF on a statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    /// Index into the registry's full pattern list (registry order).
    pub pattern: usize,
    pub span: (usize, usize),
}

/// The enabled LFs of a registry, compiled.
#[derive(Debug, Clone)]
pub struct Matcher {
    registry: PatternRegistry,
    compiled: Vec<(usize, CompiledPattern)>,
}

impl Matcher {
    pub fn new(registry: &PatternRegistry) -> Self {
        let compiled = registry
            .patterns
            .iter()
            .enumerate()
            .filter(|(_, p)| p.enabled)
            .map(|(i, p)| (i, CompiledPattern::new(p)))
            .collect();
        Matcher {
            registry: registry.clone(),
            compiled,
        }
    }

    pub fn registry(&self) -> &PatternRegistry {
        &self.registry
    }

    pub fn lf_ids(&self) -> Vec<String> {
        self.compiled.iter().map(|(_, c)| c.spec.lf_id.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.compiled.is_empty()
    }

    pub fn compiled(&self, pattern: usize) -> Option<&CompiledPattern> {
        self.compiled
            .iter()
            .find(|(i, _)| *i == pattern)
            .map(|(_, c)| c)
    }

    /// One verdict per enabled LF, in registry order.
    pub fn verdicts(&self, text: &str) -> Vec<Verdict> {
        let occ: Vec<Vec<(usize, usize)>> =
            self.compiled.iter().map(|(_, c)| c.occurrences(text)).collect();
        (0..occ.len())
            .map(|j| {
                let shadowed = |span: (usize, usize)| {
                    occ.iter().enumerate().any(|(k, others)| {
                        k != j
                            && others
                                .iter()
                                .any(|&o| overlaps(o, span) && o.1 - o.0 > span.1 - span.0)
                    })
                };
                match occ[j].iter().copied().find(|&s| !shadowed(s)) {
                    Some(span) => Verdict {
                        value: self.compiled[j].1.spec.polarity.into(),
                        match_span: Some(span),
                    },
                    None => Verdict::ABSTAIN,
                }
            })
            .collect()
    }

    pub fn matches(&self, text: &str) -> Vec<Match> {
        self.verdicts(text)
            .into_iter()
            .zip(&self.compiled)
            .filter_map(|(v, (i, _))| {
                v.match_span.map(|span| Match {
                    pattern: *i,
                    span,
                })
            })
            .collect()
    }
}

/// Verdict of a single LF taken on its own, with no other pattern to shadow it.
pub fn apply_lf(pattern: &PatternSpec, stmt: &Statement) -> Verdict {
    let compiled = CompiledPattern::new(pattern);
    match compiled.occurrences(&stmt.text).first() {
        Some(&span) => Verdict {
            value: pattern.polarity.into(),
            match_span: Some(span),
        },
        None => Verdict::ABSTAIN,
    }
}

/// Statements × enabled LFs grid of votes, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    entries: Vec<Vote>,
}

impl LabelMatrix {
    pub fn from_rows(rows: Vec<String>, cols: Vec<String>, votes: Vec<Vec<Vote>>) -> Result<Self> {
        if votes.len() != rows.len() || votes.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::contract("label matrix dimensions do not match its ids"));
        }
        Ok(LabelMatrix {
            rows,
            cols,
            entries: votes.into_iter().flatten().collect(),
        })
    }

    /// A matrix with every entry abstaining.
    pub fn abstaining(rows: Vec<String>, cols: Vec<String>) -> Self {
        let entries = vec![Vote::Abstain; rows.len() * cols.len()];
        LabelMatrix {
            rows,
            cols,
            entries,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Vote {
        self.entries[i * self.cols.len() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, vote: Vote) {
        let n = self.cols.len();
        self.entries[i * n + j] = vote;
    }

    pub fn row(&self, i: usize) -> &[Vote] {
        let n = self.cols.len();
        &self.entries[i * n..(i + 1) * n]
    }
}

pub fn build_label_matrix(statements: &[Statement], registry: &PatternRegistry) -> Result<LabelMatrix> {
    let matcher = Matcher::new(registry);
    if matcher.is_empty() {
        return Err(Error::contract("registry has no enabled labeling functions"));
    }
    let mut seen = HashSet::new();
    for s in statements {
        if !seen.insert(s.stmt_id.as_str()) {
            return Err(Error::contract(format!("duplicate statement id {:?}", s.stmt_id)));
        }
    }
    let votes: Vec<Vec<Vote>> = statements
        .par_iter()
        .map(|s| matcher.verdicts(&s.text).into_iter().map(|v| v.value).collect())
        .collect();
    LabelMatrix::from_rows(
        statements.iter().map(|s| s.stmt_id.clone()).collect(),
        matcher.lf_ids(),
        votes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lf: &str, polarity: Polarity, precision: Option<f64>) -> PatternSpec {
        PatternSpec {
            lf_id: lf.into(),
            surface: lf.into(),
            template: Template::Infix,
            polarity,
            precision,
            enabled: true,
        }
    }

    fn stmt(text: &str) -> Statement {
        Statement::standalone("s", text)
    }

    #[test]
    fn unless_prevents() {
        let v = apply_lf(
            &spec("unless", Polarity::Prevent, Some(1.0)),
            &stmt("Swimming pools have cold water in the winter unless they are heated."),
        );
        assert_eq!(v.value, Vote::Prevent);
        assert_eq!(v.match_span, Some((45, 51)));
    }

    #[test]
    fn if_allows() {
        let v = apply_lf(
            &spec("if", Polarity::Allow, Some(0.52)),
            &stmt("Your feet might come into contact with something if it is on the floor."),
        );
        assert_eq!(v.value, Vote::Allow);
    }

    #[test]
    fn abstains_without_occurrence() {
        let lf = spec("unless", Polarity::Prevent, Some(1.0));
        assert_eq!(apply_lf(&lf, &stmt("Dogs are pets.")), Verdict::ABSTAIN);
        assert_eq!(apply_lf(&lf, &stmt("The sunless sky is grey.")), Verdict::ABSTAIN);
        // sentence-initial and trailing occurrences have an empty side
        assert_eq!(apply_lf(&lf, &stmt("Unless it rains.")), Verdict::ABSTAIN);
        assert_eq!(apply_lf(&lf, &stmt("Go home unless.")), Verdict::ABSTAIN);
    }

    #[test]
    fn case_insensitive_with_original_span() {
        let text = "It rots UNLESS cooled";
        let v = apply_lf(&spec("unless", Polarity::Prevent, None), &stmt(text));
        let (s, e) = v.match_span.unwrap();
        assert_eq!(&text[s..e], "UNLESS");
    }

    #[test]
    fn wrap_templates() {
        let reg = PatternRegistry::builtin();
        let st = CompiledPattern::new(reg.get("statement is true").unwrap());
        let text = "The statement \"glass can break\" is true because it is brittle.";
        let (act, pre) = st.slots(text).unwrap();
        assert_eq!(&text[act.0..act.1], "glass can break");
        assert_eq!(&text[pre.0..pre.1], "it is brittle");

        let und = CompiledPattern::new(reg.get("to understand event").unwrap());
        let text = "To understand the event \"PersonX eats\", it is important to know that PersonX is hungry.";
        let (act, pre) = und.slots(text).unwrap();
        assert_eq!(&text[act.0..act.1], "PersonX eats");
        assert_eq!(&text[pre.0..pre.1], "PersonX is hungry");

        let mk = CompiledPattern::new(reg.get("makes possible").unwrap());
        let text = "A key makes opening the door possible.";
        let (act, pre) = mk.slots(text).unwrap();
        assert_eq!(&text[act.0..act.1], "opening the door");
        assert_eq!(&text[pre.0..pre.1], "A key");
        assert!(mk.occurrences("A key makes noise.").is_empty());
    }

    #[test]
    fn longer_surface_shadows_prefix() {
        let reg = filter_registry(&PatternRegistry::builtin(), 0.0).unwrap();
        let m = Matcher::new(&reg);
        let ids: Vec<&str> = m
            .matches("Pears will rot if not refrigerated")
            .iter()
            .map(|x| reg.patterns[x.pattern].lf_id.as_str())
            .collect();
        assert_eq!(ids, vec!["if not"]);
        // a later bare `if` still fires
        let ids: Vec<&str> = m
            .matches("Pears rot if not cold if it is warm")
            .iter()
            .map(|x| reg.patterns[x.pattern].lf_id.as_str())
            .collect();
        assert_eq!(ids, vec!["if", "if not"]);
    }

    #[test]
    fn matrix_table_sentences_one_vote_per_row() {
        let reg = PatternRegistry::builtin();
        let reg = PatternRegistry::new(
            ["if", "only if", "if not", "unless"]
                .iter()
                .map(|id| PatternSpec {
                    enabled: true,
                    ..reg.get(id).unwrap().clone()
                })
                .collect(),
            0.7,
        )
        .unwrap();
        let stmts: Vec<Statement> = [
            "A drum makes noise only if you beat it.",
            "Your feet might come into contact with something if it is on the floor.",
            "Pears will rot if not refrigerated",
            "Swimming pools have cold water in the winter unless they are heated.",
        ]
        .iter()
        .enumerate()
        .map(|(i, t)| Statement::standalone(format!("t{i}"), t))
        .collect();
        let m = build_label_matrix(&stmts, &reg).unwrap();
        assert_eq!(m.cols, vec!["if", "only if", "if not", "unless"]);
        let expected = [
            [Vote::Abstain, Vote::Allow, Vote::Abstain, Vote::Abstain],
            [Vote::Allow, Vote::Abstain, Vote::Abstain, Vote::Abstain],
            [Vote::Abstain, Vote::Abstain, Vote::Prevent, Vote::Abstain],
            [Vote::Abstain, Vote::Abstain, Vote::Abstain, Vote::Prevent],
        ];
        for (i, row) in expected.iter().enumerate() {
            assert_eq!(m.row(i), row);
        }
    }

    #[test]
    fn matrix_two_by_two() {
        let reg = PatternRegistry::new(
            vec![
                spec("unless", Polarity::Prevent, Some(1.0)),
                spec("if", Polarity::Allow, Some(0.52)),
            ],
            0.7,
        )
        .unwrap();
        let stmts = vec![
            Statement::standalone("a", "Dogs bark unless they sleep."),
            Statement::standalone("b", "Dogs are pets."),
        ];
        let m = build_label_matrix(&stmts, &reg).unwrap();
        assert_eq!(m.row(0), &[Vote::Prevent, Vote::Abstain]);
        assert_eq!(m.row(1), &[Vote::Abstain, Vote::Abstain]);

        let empty = build_label_matrix(&[], &reg).unwrap();
        assert_eq!((empty.n_rows(), empty.n_cols()), (0, 2));

        let dup = vec![stmts[0].clone(), stmts[0].clone()];
        assert!(build_label_matrix(&dup, &reg).is_err());
    }

    #[test]
    fn empty_registry_rejected() {
        let reg = filter_registry(&PatternRegistry::builtin(), 1.0).unwrap();
        let none = PatternRegistry {
            patterns: reg.patterns.into_iter().map(|p| PatternSpec { enabled: false, ..p }).collect(),
            ..PatternRegistry::builtin()
        };
        assert!(build_label_matrix(&[], &none).is_err());
    }

    #[test]
    fn builtin_table_thresholds() {
        let reg = PatternRegistry::builtin();
        assert_eq!(reg.patterns.len(), 23);
        let at = |t: f64| filter_registry(&reg, t).unwrap().enabled_ids().iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(
            at(0.7),
            vec!["except", "if not", "in case", "makes possible", "statement is true", "to understand event", "unless"]
        );
        assert_eq!(reg.enabled_ids(), at(0.7));
        assert_eq!(at(1.0), vec!["statement is true", "unless"]);
        assert_eq!(at(0.0).len(), 17);
        assert!(filter_registry(&reg, 1.5).is_err());
    }

    #[test]
    fn registry_validation() {
        let mut bad = spec("Unless", Polarity::Prevent, None);
        assert!(PatternRegistry::new(vec![bad.clone()], 0.7).is_err());
        bad.surface = "unless".into();
        bad.precision = Some(1.2);
        assert!(PatternRegistry::new(vec![bad.clone()], 0.7).is_err());
        bad.precision = None;
        bad.template = Template::WrapStatement;
        assert!(PatternRegistry::new(vec![bad], 0.7).is_err());
        let a = spec("if", Polarity::Allow, None);
        assert!(PatternRegistry::new(vec![a.clone(), a], 0.7).is_err());
    }

    #[test]
    fn export_round_trips() {
        let reg = PatternRegistry::builtin();
        assert_eq!(PatternRegistry::parse(&reg.to_toml(), "export").unwrap(), reg);
    }
}
