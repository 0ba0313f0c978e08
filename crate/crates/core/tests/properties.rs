//! Property tests for cross-module invariants.

use precondforge_core::augment::{run_augmentation, AugmentConfig, LexiconFiller};
use precondforge_core::corpus::{normalize, segment_sentences, Document, LexiconTagger, Statement};
use precondforge_core::extraction::{run_extraction, ExtractionConfig};
use precondforge_core::labelmodel::{compute_factors, compute_lf_stats, OneCoinEm};
use precondforge_core::maskprep::{run_maskprep, ConjunctionLists};
use precondforge_core::nliconvert::{split, split_sizes, NliLabel, NliRecord, Split};
use precondforge_core::patterns::{filter_registry, LabelMatrix, PatternRegistry, Vote};
use precondforge_core::Polarity;
use proptest::prelude::*;

fn vote() -> impl Strategy<Value = Vote> {
    prop_oneof![Just(Vote::Abstain), Just(Vote::Allow), Just(Vote::Prevent)]
}

fn matrix() -> impl Strategy<Value = LabelMatrix> {
    (1usize..25, 1usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec(vote(), c), r).prop_map(move |votes| {
            LabelMatrix::from_rows(
                (0..r).map(|i| format!("r{i}")).collect(),
                (0..c).map(|j| format!("lf{j}")).collect(),
                votes,
            )
            .unwrap()
        })
    })
}

const WORDS: [&str; 16] = [
    "dogs", "bark", "unless", "they", "sleep", "if", "not", "only", "the", "lake", "freezes", "in",
    "case", "except", "rains", "so",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..12).prop_map(|w| {
        let mut s = w.join(" ");
        s[..1].make_ascii_uppercase();
        s.push('.');
        s
    })
}

fn nli(n: usize) -> Vec<NliRecord> {
    (0..n)
        .map(|i| NliRecord {
            record_id: format!("r{i}"),
            hypothesis: "h".into(),
            premise: "p".into(),
            label: NliLabel::Entailment,
            source_task: "t".into(),
            split: None,
        })
        .collect()
}

proptest! {
    #[test]
    fn thresholds_are_antitone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let reg = PatternRegistry::builtin();
        let low = filter_registry(&reg, lo).unwrap();
        let high = filter_registry(&reg, hi).unwrap();
        for id in high.enabled_ids() {
            prop_assert!(low.enabled_ids().contains(&id));
        }
    }

    #[test]
    fn stats_are_ordered(m in matrix()) {
        let s = compute_lf_stats(&m).unwrap();
        for (_, c) in &s.per_lf {
            prop_assert!(c.conflicts <= c.overlaps && c.overlaps <= c.coverage && c.coverage <= 1.0);
        }
        prop_assert!(s.overall.conflicts <= s.overall.overlaps && s.overall.overlaps <= s.overall.coverage);
    }

    #[test]
    fn factor_indicators(m in matrix(), y in prop_oneof![Just(Polarity::Allow), Just(Polarity::Prevent)]) {
        for i in 0..m.n_rows() {
            for j in 0..m.n_cols() {
                let k = (m.n_cols() > 1).then(|| (j + 1) % m.n_cols());
                let f = compute_factors(&m, i, j, k, Some(y)).unwrap();
                let v = m.get(i, j);
                prop_assert_eq!(f.phi_lab == 1, v != Vote::Abstain);
                prop_assert_eq!(f.phi_acc == Some(1), v == Vote::from(y));
                if let Some(k) = k {
                    prop_assert_eq!(f.phi_corr == Some(1), v == m.get(i, k));
                }
            }
        }
    }

    #[test]
    fn em_likelihood_never_decreases(m in matrix()) {
        let any_vote = (0..m.n_rows()).any(|i| (0..m.n_cols()).any(|j| m.get(i, j) != Vote::Abstain));
        if !any_vote {
            prop_assert!(OneCoinEm::fit(&m, vec![OneCoinEm::DEFAULT_ACCURACY; m.n_cols()]).is_err());
            return Ok(());
        }
        let fit = OneCoinEm::fit(&m, vec![OneCoinEm::DEFAULT_ACCURACY; m.n_cols()]).unwrap();
        for w in fit.log_likelihood.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        for a in &fit.accuracies {
            prop_assert!((OneCoinEm::MIN_ACCURACY..=OneCoinEm::MAX_ACCURACY).contains(a));
        }
        prop_assert!(fit.iterations <= OneCoinEm::MAX_ITERATIONS);
    }

    #[test]
    fn split_partitions(n in 0usize..300, a in 0.0f64..1.0, b in 0.0f64..1.0, seed in any::<u64>()) {
        let (a, b) = if a + b > 1.0 { (a / 2.0, b / 2.0) } else { (a, b) };
        let ratios = [a, b, 1.0 - a - b];
        let mut recs = nli(n);
        let sizes = split(&mut recs, ratios, seed).unwrap();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert_eq!(sizes, split_sizes(n, ratios).unwrap());
        for (k, s) in [Split::Train, Split::Dev, Split::Test].into_iter().enumerate() {
            prop_assert_eq!(recs.iter().filter(|r| r.split == Some(s)).count(), sizes[k]);
        }
        // Floors lose less than one record per bucket; TEST absorbs the remainder.
        for k in 0..2 {
            let ideal = ratios[k] * n as f64;
            prop_assert!(sizes[k] as f64 <= ideal + 1e-9 && sizes[k] as f64 > ideal - 1.0 - 1e-9);
        }
        let excess = sizes[2] as f64 - ratios[2] * n as f64;
        prop_assert!(excess > -1.0 - 1e-9 && excess < 2.0 + 1e-9);
    }

    #[test]
    fn normalize_is_idempotent(s in "\\PC{0,60}") {
        let once = normalize(&s);
        prop_assert_eq!(normalize(&once), once.clone());
        prop_assert!(!once.starts_with(' ') && !once.contains("  "));
    }

    #[test]
    fn statements_are_ordered_slices(parts in prop::collection::vec(sentence(), 1..6)) {
        let doc = Document::new("d", &parts.join(" "), "test");
        let stmts = segment_sentences(&doc);
        prop_assert_eq!(stmts.len(), parts.len());
        let mut last = 0;
        for (k, s) in stmts.iter().enumerate() {
            prop_assert_eq!(&doc.text[s.char_span.0..s.char_span.1], s.text.as_str());
            prop_assert!(s.char_span.0 >= last);
            prop_assert_eq!(s.index, k);
            last = s.char_span.1;
        }
    }

    #[test]
    fn extraction_spans_slice_the_text(texts in prop::collection::vec(sentence(), 1..20)) {
        let stmts: Vec<Statement> = texts.iter().enumerate().map(|(i, t)| Statement::standalone(format!("s{i}"), t)).collect();
        let reg = PatternRegistry::builtin();
        let (records, report) = run_extraction(&stmts, &reg, &LexiconTagger::bundled(), &ExtractionConfig::default()).unwrap();
        prop_assert_eq!(report.emitted, records.len());
        prop_assert_eq!(report.allow + report.prevent, report.emitted);
        prop_assert_eq!(
            report.matched,
            report.dropped_question + report.dropped_verb + report.dropped_unextractable + report.emitted
        );
        for r in &records {
            prop_assert_eq!(&r.text[r.action_span.0..r.action_span.1], r.action.as_str());
            prop_assert_eq!(&r.text[r.precondition_span.0..r.precondition_span.1], r.precondition.as_str());
            prop_assert!(r.action_span.1 <= r.precondition_span.0 || r.precondition_span.1 <= r.action_span.0);
            prop_assert_eq!(reg.get(&r.lf_id).unwrap().polarity, r.label);
        }
    }

    #[test]
    fn masks_round_trip(texts in prop::collection::vec(sentence(), 1..20)) {
        let stmts: Vec<Statement> = texts.iter().enumerate().map(|(i, t)| Statement::standalone(format!("s{i}"), t)).collect();
        for r in run_maskprep(&stmts, &ConjunctionLists::builtin(), "[MASK]") {
            let src = &stmts.iter().find(|s| s.stmt_id == r.stmt_id).unwrap().text;
            prop_assert_eq!(&r.unmask("[MASK]"), src);
            prop_assert_eq!(r.masked_text.matches("[MASK]").count(), 1);
        }
    }

    #[test]
    fn augmentation_respects_any_caps(per_mask in 1usize..5, per_statement in 1usize..30, seed in any::<u64>()) {
        let stmt = "Big red dogs eat small green apples unless cold lakes freeze in winter";
        let (action, precondition) = stmt.split_once(" unless ").unwrap();
        let rec = precondforge_core::extraction::ExtractionRecord {
            stmt_id: "s#0".into(),
            action: action.into(),
            precondition: precondition.into(),
            label: Polarity::Prevent,
            lf_id: "unless".into(),
            precision: Some(1.0),
            source: "t".into(),
            text: stmt.into(),
            action_span: (0, action.len()),
            precondition_span: (stmt.len() - precondition.len(), stmt.len()),
        };
        let config = AugmentConfig { per_mask, per_statement, request_top_k: per_mask.max(10), seed, ..AugmentConfig::default() };
        let (augs, _) = run_augmentation(&[rec], &LexiconTagger::bundled(), &LexiconFiller::bundled(), &config).unwrap();
        prop_assert!(augs.len() <= per_statement);
        let mut per_pivot = std::collections::HashMap::<&str, usize>::new();
        for a in &augs {
            *per_pivot.entry(&a.pivot).or_default() += 1;
            prop_assert!(a.rank >= 1 && a.rank <= per_mask);
        }
        prop_assert!(per_pivot.values().all(|&c| c <= per_mask));
    }
}
