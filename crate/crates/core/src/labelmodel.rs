//! Factor values and coverage statistics over a label matrix, plus three ways
//! of collapsing a row of LF votes into one label.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::patterns::{LabelMatrix, PatternRegistry, Vote};
use crate::{Error, Polarity, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorValues {
    pub phi_lab: u8,
    pub phi_acc: Option<u8>,
    pub phi_corr: Option<u8>,
}

fn indicator(b: bool) -> u8 {
    u8::from(b)
}

/// Labeling-propensity, accuracy and pairwise-correlation indicators for
/// entry `(i, j)`. Accuracy is computed when `y` is given, correlation with
/// LF `k` when `k` is given.
pub fn compute_factors(
    m: &LabelMatrix,
    i: usize,
    j: usize,
    k: Option<usize>,
    y: Option<Polarity>,
) -> Result<FactorValues> {
    if i >= m.n_rows() || j >= m.n_cols() {
        return Err(Error::contract(format!(
            "entry ({i}, {j}) outside a {}x{} matrix",
            m.n_rows(),
            m.n_cols()
        )));
    }
    if let Some(k) = k {
        if k == j || k >= m.n_cols() {
            return Err(Error::contract(format!(
                "correlation partner {k} must be another column of {}",
                m.n_cols()
            )));
        }
    }
    let v = m.get(i, j);
    Ok(FactorValues {
        phi_lab: indicator(!v.is_abstain()),
        phi_acc: y.map(|y| indicator(v == Vote::from(y))),
        phi_corr: k.map(|k| indicator(v == m.get(i, k))),
    })
}

pub fn phi_acc(m: &LabelMatrix, i: usize, j: usize, y: Option<Polarity>) -> Result<u8> {
    let y = y.ok_or_else(|| Error::contract("accuracy factor needs the true label y_i"))?;
    Ok(compute_factors(m, i, j, None, Some(y))?.phi_acc.unwrap_or_default())
}

pub fn phi_corr(m: &LabelMatrix, i: usize, j: usize, k: Option<usize>) -> Result<u8> {
    let k = k.ok_or_else(|| Error::contract("correlation factor needs a second LF k"))?;
    Ok(compute_factors(m, i, j, Some(k), None)?.phi_corr.unwrap_or_default())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub coverage: f64,
    pub overlaps: f64,
    pub conflicts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfStats {
    pub rows: usize,
    pub per_lf: Vec<(String, Coverage)>,
    /// Fractions of rows with at least one vote, at least two votes, and
    /// disagreeing votes.
    pub overall: Coverage,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    coverage: usize,
    overlaps: usize,
    conflicts: usize,
}

pub fn compute_lf_stats(m: &LabelMatrix) -> Result<LfStats> {
    let n = m.n_rows();
    if n == 0 {
        return Err(Error::contract("statistics need at least one row"));
    }
    let cols = m.n_cols();
    let (per, overall) = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = m.row(i);
            let voters = row.iter().filter(|v| !v.is_abstain()).count();
            let has_allow = row.contains(&Vote::Allow);
            let has_prevent = row.contains(&Vote::Prevent);
            let mut per = vec![Counts::default(); cols];
            for (j, v) in row.iter().enumerate() {
                if v.is_abstain() {
                    continue;
                }
                per[j].coverage += 1;
                if voters >= 2 {
                    per[j].overlaps += 1;
                }
                let other = if *v == Vote::Allow { has_prevent } else { has_allow };
                if other {
                    per[j].conflicts += 1;
                }
            }
            let overall = Counts {
                coverage: usize::from(voters >= 1),
                overlaps: usize::from(voters >= 2),
                conflicts: usize::from(has_allow && has_prevent),
            };
            (per, overall)
        })
        .reduce(
            || (vec![Counts::default(); cols], Counts::default()),
            |(mut a, ao), (b, bo)| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.coverage += y.coverage;
                    x.overlaps += y.overlaps;
                    x.conflicts += y.conflicts;
                }
                let o = Counts {
                    coverage: ao.coverage + bo.coverage,
                    overlaps: ao.overlaps + bo.overlaps,
                    conflicts: ao.conflicts + bo.conflicts,
                };
                (a, o)
            },
        );
    let frac = |c: Counts| Coverage {
        coverage: c.coverage as f64 / n as f64,
        overlaps: c.overlaps as f64 / n as f64,
        conflicts: c.conflicts as f64 / n as f64,
    };
    Ok(LfStats {
        rows: n,
        per_lf: m.cols.iter().cloned().zip(per.into_iter().map(frac)).collect(),
        overall: frac(overall),
    })
}

/// Percentages with two decimals, keyed by LF id.
pub fn stats_report(stats: &LfStats) -> BTreeMap<String, BTreeMap<&'static str, String>> {
    let fmt = |c: &Coverage| {
        BTreeMap::from([
            ("coverage", format!("{:.2}", c.coverage * 100.0)),
            ("overlaps", format!("{:.2}", c.overlaps * 100.0)),
            ("conflicts", format!("{:.2}", c.conflicts * 100.0)),
        ])
    };
    stats
        .per_lf
        .iter()
        .map(|(id, c)| (id.clone(), fmt(c)))
        .chain(std::iter::once(("*".to_string(), fmt(&stats.overall))))
        .collect()
}

pub fn stats_table(stats: &LfStats) -> String {
    let width = stats.per_lf.iter().map(|(id, _)| id.len()).max().unwrap_or(0).max(7);
    let mut out = format!(
        "{:<width$}  {:>8}  {:>8}  {:>9}\n",
        "LF", "Coverage", "Overlaps", "Conflicts"
    );
    let rows = stats
        .per_lf
        .iter()
        .map(|(id, c)| (id.as_str(), c))
        .chain(std::iter::once(("overall", &stats.overall)));
    for (id, c) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>8.2}  {:>8.2}  {:>9.2}\n",
            id,
            c.coverage * 100.0,
            c.overlaps * 100.0,
            c.conflicts * 100.0
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    PrecisionPriority,
    Majority,
    OneCoinEm,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "precision_priority" => Ok(Strategy::PrecisionPriority),
            "majority" => Ok(Strategy::Majority),
            "one_coin_em" => Ok(Strategy::OneCoinEm),
            other => Err(Error::Config(format!("unknown aggregation strategy {other:?}"))),
        }
    }
}

/// Column precisions, looked up in the registry by LF id.
fn column_priorities(m: &LabelMatrix, registry: &PatternRegistry) -> Result<Vec<(f64, usize)>> {
    m.cols
        .iter()
        .map(|id| {
            registry
                .patterns
                .iter()
                .position(|p| &p.lf_id == id)
                .map(|pos| (registry.patterns[pos].priority(), pos))
                .ok_or_else(|| Error::contract(format!("column {id:?} is not in the registry")))
        })
        .collect()
}

fn precision_priority(row: &[Vote], prio: &[(f64, usize)]) -> Vote {
    row.iter()
        .zip(prio)
        .filter(|(v, _)| !v.is_abstain())
        .max_by(|(_, a), (_, b)| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
        .map_or(Vote::Abstain, |(v, _)| *v)
}

fn majority(row: &[Vote]) -> Vote {
    let allow = row.iter().filter(|v| **v == Vote::Allow).count();
    let prevent = row.iter().filter(|v| **v == Vote::Prevent).count();
    match allow.cmp(&prevent) {
        std::cmp::Ordering::Greater => Vote::Allow,
        std::cmp::Ordering::Less => Vote::Prevent,
        std::cmp::Ordering::Equal => Vote::Abstain,
    }
}

pub fn aggregate(m: &LabelMatrix, registry: &PatternRegistry, strategy: Strategy) -> Result<Vec<Vote>> {
    match strategy {
        Strategy::PrecisionPriority => {
            let prio = column_priorities(m, registry)?;
            Ok((0..m.n_rows()).map(|i| precision_priority(m.row(i), &prio)).collect())
        }
        Strategy::Majority => Ok((0..m.n_rows()).map(|i| majority(m.row(i))).collect()),
        Strategy::OneCoinEm => {
            let init = column_priorities(m, registry)?
                .into_iter()
                .map(|(p, _)| if p.is_finite() { p } else { OneCoinEm::DEFAULT_ACCURACY })
                .collect();
            Ok(OneCoinEm::fit(m, init)?.labels(m))
        }
    }
}

/// One-coin model: each LF is right with probability `a_j` whenever it votes,
/// the true label is uniform over {ALLOW, PREVENT}, and LFs are independent
/// given the label. Fitted by EM.
#[derive(Debug, Clone, PartialEq)]
pub struct OneCoinEm {
    pub accuracies: Vec<f64>,
    pub iterations: usize,
    /// Log-likelihood after initialization and after each iteration.
    pub log_likelihood: Vec<f64>,
}

impl OneCoinEm {
    pub const DEFAULT_ACCURACY: f64 = 0.7;
    pub const TOLERANCE: f64 = 1e-6;
    pub const MAX_ITERATIONS: usize = 100;
    /// Accuracies stay strictly better than chance and strictly below one.
    pub const MIN_ACCURACY: f64 = 0.501;
    pub const MAX_ACCURACY: f64 = 1.0 - 1e-6;

    fn clamp(a: f64) -> f64 {
        a.clamp(Self::MIN_ACCURACY, Self::MAX_ACCURACY)
    }

    /// Unnormalized `(P(y=ALLOW, row), P(y=PREVENT, row))`.
    fn joint(row: &[Vote], acc: &[f64]) -> (f64, f64) {
        row.iter().zip(acc).fold((0.5, 0.5), |(pa, pp), (v, a)| match v {
            Vote::Allow => (pa * a, pp * (1.0 - a)),
            Vote::Prevent => (pa * (1.0 - a), pp * a),
            Vote::Abstain => (pa, pp),
        })
    }

    pub fn log_likelihood(m: &LabelMatrix, acc: &[f64]) -> f64 {
        (0..m.n_rows())
            .into_par_iter()
            .map(|i| {
                let (a, p) = Self::joint(m.row(i), acc);
                (a + p).ln()
            })
            .sum()
    }

    pub fn fit(m: &LabelMatrix, init: Vec<f64>) -> Result<Self> {
        if init.len() != m.n_cols() {
            return Err(Error::contract("one initial accuracy per LF is required"));
        }
        if !(0..m.n_rows()).any(|i| m.row(i).iter().any(|v| !v.is_abstain())) {
            return Err(Error::contract("EM needs at least one non-abstain row"));
        }
        let mut acc: Vec<f64> = init.into_iter().map(Self::clamp).collect();
        let mut ll = vec![Self::log_likelihood(m, &acc)];
        let mut iterations = 0;
        while iterations < Self::MAX_ITERATIONS {
            iterations += 1;
            let cols = m.n_cols();
            // expected number of correct votes and number of votes per LF
            let (hits, votes) = (0..m.n_rows())
                .into_par_iter()
                .map(|i| {
                    let row = m.row(i);
                    let (a, p) = Self::joint(row, &acc);
                    let post_allow = a / (a + p);
                    let mut hits = vec![0.0; cols];
                    let mut votes = vec![0.0; cols];
                    for (j, v) in row.iter().enumerate() {
                        match v {
                            Vote::Allow => hits[j] += post_allow,
                            Vote::Prevent => hits[j] += 1.0 - post_allow,
                            Vote::Abstain => continue,
                        }
                        votes[j] += 1.0;
                    }
                    (hits, votes)
                })
                .reduce(
                    || (vec![0.0; cols], vec![0.0; cols]),
                    |(mut h, mut v), (h2, v2)| {
                        h.iter_mut().zip(h2).for_each(|(x, y)| *x += y);
                        v.iter_mut().zip(v2).for_each(|(x, y)| *x += y);
                        (h, v)
                    },
                );
            let next: Vec<f64> = acc
                .iter()
                .enumerate()
                .map(|(j, &a)| if votes[j] > 0.0 { Self::clamp(hits[j] / votes[j]) } else { a })
                .collect();
            let delta = next
                .iter()
                .zip(&acc)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            acc = next;
            ll.push(Self::log_likelihood(m, &acc));
            if delta < Self::TOLERANCE {
                break;
            }
        }
        Ok(OneCoinEm {
            accuracies: acc,
            iterations,
            log_likelihood: ll,
        })
    }

    pub fn labels(&self, m: &LabelMatrix) -> Vec<Vote> {
        (0..m.n_rows())
            .map(|i| {
                let (a, p) = Self::joint(m.row(i), &self.accuracies);
                if a > p {
                    Vote::Allow
                } else if p > a {
                    Vote::Prevent
                } else {
                    Vote::Abstain
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Vote::{Abstain as N, Allow as A, Prevent as P};

    fn matrix(cols: &[&str], rows: Vec<Vec<Vote>>) -> LabelMatrix {
        LabelMatrix::from_rows(
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            cols.iter().map(|s| s.to_string()).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn factor_definitions() {
        let m = matrix(&["a", "b"], vec![vec![P, A], vec![N, N]]);
        let f = compute_factors(&m, 0, 0, None, Some(Polarity::Prevent)).unwrap();
        assert_eq!((f.phi_lab, f.phi_acc), (1, Some(1)));
        assert_eq!(compute_factors(&m, 1, 0, None, None).unwrap().phi_lab, 0);
        assert_eq!(phi_corr(&m, 0, 1, Some(0)).unwrap(), 0);
        assert_eq!(phi_corr(&m, 1, 0, Some(1)).unwrap(), 1);
        assert!(phi_acc(&m, 0, 0, None).is_err());
        assert!(phi_corr(&m, 0, 0, None).is_err());
        assert!(compute_factors(&m, 0, 0, Some(0), None).is_err());
        assert!(compute_factors(&m, 2, 0, None, None).is_err());
    }

    #[test]
    fn stats_with_agreeing_overlap() {
        let m = matrix(&["A", "B"], vec![vec![A, N], vec![A, A], vec![N, N], vec![N, N]]);
        let s = compute_lf_stats(&m).unwrap();
        assert_eq!(s.per_lf[0].1, Coverage { coverage: 0.5, overlaps: 0.25, conflicts: 0.0 });
        assert_eq!(s.per_lf[1].1, Coverage { coverage: 0.25, overlaps: 0.25, conflicts: 0.0 });
        assert_eq!(s.overall, Coverage { coverage: 0.5, overlaps: 0.25, conflicts: 0.0 });
    }

    #[test]
    fn stats_with_conflict() {
        let m = matrix(&["A", "B"], vec![vec![A, N], vec![A, P], vec![N, N], vec![N, N]]);
        let s = compute_lf_stats(&m).unwrap();
        assert_eq!(s.per_lf[0].1.conflicts, 0.25);
        assert_eq!(s.per_lf[1].1.conflicts, 0.25);
        assert_eq!(stats_report(&s)["A"]["coverage"], "50.00");
    }

    #[test]
    fn single_lf_has_no_overlap() {
        let m = matrix(&["A"], vec![vec![A], vec![P], vec![N]]);
        let s = compute_lf_stats(&m).unwrap();
        assert_eq!(s.per_lf[0].1.overlaps, 0.0);
        assert_eq!(s.per_lf[0].1.conflicts, 0.0);
        assert!(stats_table(&s).contains("0.00"));
        assert!(compute_lf_stats(&matrix(&["A"], vec![])).is_err());
    }

    fn registry() -> PatternRegistry {
        crate::patterns::filter_registry(&PatternRegistry::builtin(), 0.0).unwrap()
    }

    #[test]
    fn priority_prefers_unless() {
        let m = matrix(&["if", "unless"], vec![vec![A, P], vec![N, N]]);
        for s in [Strategy::PrecisionPriority, Strategy::Majority, Strategy::OneCoinEm] {
            assert_eq!(aggregate(&m, &registry(), s).unwrap()[1], N, "{s:?}");
        }
        assert_eq!(aggregate(&m, &registry(), Strategy::PrecisionPriority).unwrap()[0], P);
    }

    #[test]
    fn majority_votes() {
        let m = matrix(&["if", "in case", "unless"], vec![vec![A, A, P], vec![A, N, P]]);
        assert_eq!(aggregate(&m, &registry(), Strategy::Majority).unwrap(), vec![A, N]);
    }

    #[test]
    fn em_requires_votes_and_known_columns() {
        let m = matrix(&["if"], vec![vec![N]]);
        assert!(aggregate(&m, &registry(), Strategy::OneCoinEm).is_err());
        let m = matrix(&["nope"], vec![vec![A]]);
        assert!(aggregate(&m, &registry(), Strategy::PrecisionPriority).is_err());
        assert!("bogus".parse::<Strategy>().is_err());
        assert_eq!("one-coin-em".parse::<Strategy>().unwrap(), Strategy::OneCoinEm);
    }

    #[test]
    fn em_learns_a_noisy_lf() {
        // LF c disagrees with a and b on half its votes
        let mut rows = Vec::new();
        for i in 0..40 {
            let y = if i % 4 == 0 { P } else { A };
            let flip = if y == A { P } else { A };
            rows.push(vec![y, y, if i % 2 == 0 { flip } else { y }]);
        }
        let m = matrix(&["if", "unless", "lest"], rows);
        let fit = OneCoinEm::fit(&m, vec![0.7, 0.7, 0.7]).unwrap();
        assert!(fit.accuracies[0] > 0.95 && fit.accuracies[1] > 0.95);
        assert!((fit.accuracies[2] - 0.5).abs() < 0.05);
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }
}
