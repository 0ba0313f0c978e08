//! Action/precondition extraction from statements matched by the labeling functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Pos, Statement, Tagger};
use crate::patterns::{CompiledPattern, Match, Matcher, PatternRegistry, Template};
use crate::{Error, Polarity, Result};

/// Sentence-initial words that mark a question.
pub const INTERROGATIVE_WORDS: [&str; 10] = [
    "Who", "What", "When", "Where", "Why", "How", "Is", "Can", "Does", "Do",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub stmt_id: String,
    pub action: String,
    pub precondition: String,
    pub label: Polarity,
    pub lf_id: String,
    pub precision: Option<f64>,
    pub source: String,
    /// The full statement, with the byte spans of both slots inside it.
    pub text: String,
    pub action_span: (usize, usize),
    pub precondition_span: (usize, usize),
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Picks one match among several on the same statement. Overlapping spans go
/// to the longest one first; the highest precision wins among the rest and
/// registry order breaks exact ties.
pub fn resolve_ambiguity(registry: &PatternRegistry, matches: &[Match]) -> Result<Match> {
    let len = |m: &Match| m.span.1 - m.span.0;
    matches
        .iter()
        .filter(|m| {
            !matches
                .iter()
                .any(|o| overlaps(o.span, m.span) && len(o) > len(m))
        })
        .max_by(|a, b| {
            let pa = registry.patterns[a.pattern].priority();
            let pb = registry.patterns[b.pattern].priority();
            pa.total_cmp(&pb).then(b.pattern.cmp(&a.pattern))
        })
        .copied()
        .ok_or_else(|| Error::contract("resolve_ambiguity needs at least one match"))
}

fn trimmed(text: &str, start: usize, end: usize) -> (usize, usize) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let s = start + lead;
    (s, s + text[s..end].trim_end().len())
}

/// Splits a statement at a match. Returns the action and precondition spans.
pub fn extract_spans(
    stmt: &Statement,
    pattern: &CompiledPattern,
    span: (usize, usize),
) -> Result<((usize, usize), (usize, usize))> {
    let text = &stmt.text;
    let fail = |message: &str| Error::Extraction {
        stmt_id: stmt.stmt_id.clone(),
        message: message.to_string(),
    };
    if span.0 >= span.1
        || span.1 > text.len()
        || !text.is_char_boundary(span.0)
        || !text.is_char_boundary(span.1)
    {
        return Err(fail("match span out of bounds"));
    }
    let (action, precondition) = match pattern.spec.template {
        Template::Infix => (trimmed(text, 0, span.0), trimmed(text, span.1, text.len())),
        _ => pattern
            .slots(text)
            .ok_or_else(|| fail("statement does not fit the pattern template"))?,
    };
    if action.0 == action.1 || precondition.0 == precondition.1 {
        return Err(fail("empty action or precondition"));
    }
    Ok((action, precondition))
}

pub fn extract_pair(
    stmt: &Statement,
    pattern: &CompiledPattern,
    span: (usize, usize),
) -> Result<(String, String)> {
    let (a, p) = extract_spans(stmt, pattern, span)?;
    Ok((stmt.text[a.0..a.1].to_string(), stmt.text[p.0..p.1].to_string()))
}

pub fn is_question(text: &str) -> bool {
    let text = text.trim();
    if text.ends_with('?') {
        return true;
    }
    let first = text
        .split(|c: char| c.is_whitespace() || (c.is_ascii_punctuation() && c != '\''))
        .find(|w| !w.is_empty());
    first.is_some_and(|w| INTERROGATIVE_WORDS.iter().any(|q| q.eq_ignore_ascii_case(w)))
}

pub fn precondition_has_verb(precondition: &str, tagger: &dyn Tagger) -> Result<bool> {
    if precondition.trim().is_empty() {
        return Err(Error::contract("precondition is empty"));
    }
    Ok(tagger.tag(precondition)?.iter().any(|t| t.pos == Pos::Verb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub drop_questions: bool,
    pub require_verb: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            drop_questions: true,
            require_verb: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub input: usize,
    pub matched: usize,
    pub dropped_question: usize,
    pub dropped_verb: usize,
    pub dropped_unextractable: usize,
    pub emitted: usize,
    pub allow: usize,
    pub prevent: usize,
}

impl std::ops::Add for RunReport {
    type Output = RunReport;

    fn add(self, o: RunReport) -> RunReport {
        RunReport {
            input: self.input + o.input,
            matched: self.matched + o.matched,
            dropped_question: self.dropped_question + o.dropped_question,
            dropped_verb: self.dropped_verb + o.dropped_verb,
            dropped_unextractable: self.dropped_unextractable + o.dropped_unextractable,
            emitted: self.emitted + o.emitted,
            allow: self.allow + o.allow,
            prevent: self.prevent + o.prevent,
        }
    }
}

enum Outcome {
    Unmatched,
    Question,
    Verbless,
    Unextractable,
    Emitted(Box<ExtractionRecord>),
}

impl Outcome {
    fn report(&self) -> RunReport {
        let mut r = RunReport {
            input: 1,
            ..RunReport::default()
        };
        match self {
            Outcome::Unmatched => {}
            Outcome::Question => {
                r.matched = 1;
                r.dropped_question = 1;
            }
            Outcome::Verbless => {
                r.matched = 1;
                r.dropped_verb = 1;
            }
            Outcome::Unextractable => {
                r.matched = 1;
                r.dropped_unextractable = 1;
            }
            Outcome::Emitted(rec) => {
                r.matched = 1;
                r.emitted = 1;
                match rec.label {
                    Polarity::Allow => r.allow = 1,
                    Polarity::Prevent => r.prevent = 1,
                }
            }
        }
        r
    }
}

fn process(
    stmt: &Statement,
    matcher: &Matcher,
    tagger: &dyn Tagger,
    config: &ExtractionConfig,
) -> Result<Outcome> {
    let matches = matcher.matches(&stmt.text);
    if matches.is_empty() {
        return Ok(Outcome::Unmatched);
    }
    let chosen = resolve_ambiguity(matcher.registry(), &matches)?;
    let compiled = matcher
        .compiled(chosen.pattern)
        .expect("matches come from enabled patterns");
    let Ok((action, precondition)) = extract_spans(stmt, compiled, chosen.span) else {
        return Ok(Outcome::Unextractable);
    };
    if config.drop_questions && is_question(&stmt.text) {
        return Ok(Outcome::Question);
    }
    let pre_text = &stmt.text[precondition.0..precondition.1];
    if config.require_verb
        && !precondition_has_verb(pre_text, tagger).map_err(|e| e.with_stmt(&stmt.stmt_id))?
    {
        return Ok(Outcome::Verbless);
    }
    let spec = &compiled.spec;
    Ok(Outcome::Emitted(Box::new(ExtractionRecord {
        stmt_id: stmt.stmt_id.clone(),
        action: stmt.text[action.0..action.1].to_string(),
        precondition: pre_text.to_string(),
        label: spec.polarity,
        lf_id: spec.lf_id.clone(),
        precision: spec.precision,
        source: stmt.source.clone(),
        text: stmt.text.clone(),
        action_span: action,
        precondition_span: precondition,
    })))
}

/// Runs the labeling functions over every statement and keeps the pairs that
/// survive the question and verb filters. Records come out in input order.
pub fn run_extraction(
    statements: &[Statement],
    registry: &PatternRegistry,
    tagger: &dyn Tagger,
    config: &ExtractionConfig,
) -> Result<(Vec<ExtractionRecord>, RunReport)> {
    let matcher = Matcher::new(registry);
    let outcomes: Vec<Outcome> = statements
        .par_iter()
        .map(|s| process(s, &matcher, tagger, config))
        .collect::<Result<_>>()?;
    let report = outcomes
        .iter()
        .map(Outcome::report)
        .fold(RunReport::default(), |a, b| a + b);
    let records = outcomes
        .into_iter()
        .filter_map(|o| match o {
            Outcome::Emitted(r) => Some(*r),
            _ => None,
        })
        .collect();
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LexiconTagger;
    use crate::patterns::filter_registry;

    fn all_scored() -> PatternRegistry {
        filter_registry(&PatternRegistry::builtin(), 0.0).unwrap()
    }

    fn chosen_lf(registry: &PatternRegistry, text: &str) -> String {
        let m = Matcher::new(registry);
        let chosen = resolve_ambiguity(registry, &m.matches(text)).unwrap();
        registry.patterns[chosen.pattern].lf_id.clone()
    }

    #[test]
    fn precision_priority_picks_except() {
        let reg = all_scored();
        let text = "Trees continue to grow for all their lives except in winter if they are not evergreen.";
        let m = Matcher::new(&reg);
        let ids: Vec<&str> = m
            .matches(text)
            .iter()
            .map(|x| reg.patterns[x.pattern].lf_id.as_str())
            .collect();
        assert_eq!(ids, vec!["except", "if"]);
        assert_eq!(chosen_lf(&reg, text), "except");
    }

    #[test]
    fn single_match_is_returned() {
        let reg = all_scored();
        assert_eq!(chosen_lf(&reg, "Dogs bark unless they sleep."), "unless");
        assert!(resolve_ambiguity(&reg, &[]).is_err());
    }

    #[test]
    fn longest_surface_wins_at_same_offset() {
        let reg = all_scored();
        let if_idx = reg.patterns.iter().position(|p| p.lf_id == "if").unwrap();
        let if_not = reg.patterns.iter().position(|p| p.lf_id == "if not").unwrap();
        let text = "Pears will rot if not refrigerated";
        let at = text.find("if").unwrap();
        let matches = [
            Match { pattern: if_idx, span: (at, at + 2) },
            Match { pattern: if_not, span: (at, at + 6) },
        ];
        assert_eq!(resolve_ambiguity(&reg, &matches).unwrap().pattern, if_not);
        // overlap beats precision even if the shorter surface scored higher
        let mut swapped = reg.clone();
        swapped.patterns[if_idx].precision = Some(1.0);
        swapped.patterns[if_not].precision = Some(0.1);
        assert_eq!(resolve_ambiguity(&swapped, &matches).unwrap().pattern, if_not);
    }

    #[test]
    fn registry_order_breaks_ties() {
        let mut reg = all_scored();
        let a = reg.patterns.iter().position(|p| p.lf_id == "unless").unwrap();
        let b = reg.patterns.iter().position(|p| p.lf_id == "if not").unwrap();
        reg.patterns[b].precision = Some(1.0);
        let matches = [
            Match { pattern: a, span: (20, 26) },
            Match { pattern: b, span: (5, 11) },
        ];
        assert_eq!(resolve_ambiguity(&reg, &matches).unwrap().pattern, a.min(b));
    }

    fn pair(text: &str, lf: &str) -> (String, String) {
        let reg = all_scored().with_enabled(&[lf]).unwrap();
        let stmt = Statement::standalone("x", text);
        let idx = reg.patterns.iter().position(|p| p.lf_id == lf).unwrap();
        let compiled = CompiledPattern::new(&reg.patterns[idx]);
        let span = compiled.occurrences(text)[0];
        extract_pair(&stmt, &compiled, span).unwrap()
    }

    #[test]
    fn infix_pairs() {
        assert_eq!(
            pair("A drum makes noise only if you beat it.", "only if"),
            ("A drum makes noise".into(), "you beat it.".into())
        );
        assert_eq!(
            pair("Pears will rot if not refrigerated", "if not"),
            ("Pears will rot".into(), "refrigerated".into())
        );
    }

    #[test]
    fn wrap_statement_pair_reinstantiates() {
        let text = "The statement \"glass can break\" is true because it is brittle.";
        let (action, pre) = pair(text, "statement is true");
        assert_eq!(action, "glass can break");
        assert_eq!(pre, "it is brittle");
        assert_eq!(
            format!("The statement \"{action}\" is true because {pre}."),
            text
        );
    }

    #[test]
    fn makes_possible_pair() {
        assert_eq!(
            pair("A key makes opening the door possible.", "makes possible"),
            ("opening the door".into(), "A key".into())
        );
    }

    #[test]
    fn bad_spans_are_errors() {
        let reg = all_scored();
        let compiled = CompiledPattern::new(reg.get("unless").unwrap());
        let stmt = Statement::standalone("bad", "X unless Y");
        assert!(matches!(
            extract_pair(&stmt, &compiled, (2, 40)),
            Err(Error::Extraction { stmt_id, .. }) if stmt_id == "bad"
        ));
        assert!(extract_pair(&stmt, &compiled, (0, 1)).is_err());
    }

    #[test]
    fn question_filter() {
        assert!(is_question("How do I know if he is sick?"));
        assert!(!is_question("Pears will rot if not refrigerated"));
        assert!(is_question("Do pears rot"));
        assert!(is_question("what, then"));
        assert!(!is_question("Doors open if pushed."));
    }

    #[test]
    fn verb_filter() {
        let tagger = LexiconTagger::bundled();
        assert!(precondition_has_verb("you beat it.", &tagger).unwrap());
        assert!(!precondition_has_verb("the red ball", &tagger).unwrap());
        assert!(precondition_has_verb("", &tagger).is_err());
    }

    #[test]
    fn question_is_dropped_and_counted() {
        let reg = all_scored();
        let stmts = vec![Statement::standalone("q", "How do I know if he is sick?")];
        let (recs, report) =
            run_extraction(&stmts, &reg, &LexiconTagger::bundled(), &ExtractionConfig::default())
                .unwrap();
        assert!(recs.is_empty());
        assert_eq!(report.dropped_question, 1);
        assert_eq!(report.matched, 1);
    }

    #[test]
    fn empty_corpus() {
        let (recs, report) = run_extraction(
            &[],
            &PatternRegistry::builtin(),
            &LexiconTagger::bundled(),
            &ExtractionConfig::default(),
        )
        .unwrap();
        assert!(recs.is_empty());
        assert_eq!(report, RunReport::default());
    }
}
