//! Nonparametric significance testing over per-user metric and per-genre
//! share samples: Kruskal-Wallis across groups, pairwise Mann-Whitney U
//! with Holm correction, and Child-Set-vs-General-Set comparisons.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::domain::AgeGroup;
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, GroupCell, Metric, UserEvaluation};
use crate::recommenders::TrainingVariant;

/// Significance threshold used throughout the audit.
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

/// Outcome of one hypothesis test. `corrected_p` equals `p` until a
/// correction is applied; `significant` always reflects the corrected value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub comparison: Vec<String>,
    pub statistic: f64,
    pub p: f64,
    pub corrected_p: f64,
    pub significant: bool,
}

impl TestResult {
    fn new(comparison: Vec<String>, statistic: f64, p: f64) -> Self {
        Self {
            comparison,
            statistic,
            p,
            corrected_p: p,
            significant: p < SIGNIFICANCE_LEVEL,
        }
    }

    pub fn with_correction(mut self, corrected_p: f64) -> Self {
        self.corrected_p = corrected_p;
        self.significant = corrected_p < SIGNIFICANCE_LEVEL;
        self
    }
}

// ---------------------------------------------------------------------------
// Ranking utilities
// ---------------------------------------------------------------------------

/// Mid-ranks of the pooled values (1-based) plus the tie-group sizes.
fn mid_ranks(values: &[f64]) -> (Vec<f64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        ties.push((j - i) as u64);
        i = j;
    }
    (ranks, ties)
}

fn tie_term(ties: &[u64]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

// ---------------------------------------------------------------------------
// Kruskal-Wallis
// ---------------------------------------------------------------------------

/// Kruskal-Wallis H test across two or more labeled samples, with tie
/// correction and a chi-square approximation on `groups - 1` degrees of
/// freedom.
pub fn kruskal_wallis(samples: &[(&str, &[f64])]) -> Result<TestResult> {
    if samples.len() < 2 {
        return Err(Error::validation("Kruskal-Wallis needs at least two samples"));
    }
    if samples.iter().any(|(_, s)| s.is_empty()) {
        return Err(Error::validation("Kruskal-Wallis samples must be nonempty"));
    }
    let n_total: usize = samples.iter().map(|(_, s)| s.len()).sum();
    if n_total < 5 {
        return Err(Error::validation(
            "Kruskal-Wallis needs at least five observations in total",
        ));
    }
    let pooled: Vec<f64> = samples.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    let (ranks, ties) = mid_ranks(&pooled);
    let n = n_total as f64;
    let mut h = 0.0;
    let mut offset = 0;
    for (_, sample) in samples {
        let rank_sum: f64 = ranks[offset..offset + sample.len()].iter().sum();
        h += rank_sum * rank_sum / sample.len() as f64;
        offset += sample.len();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    let correction = 1.0 - tie_term(&ties) / (n * n * n - n);
    let labels: Vec<String> = samples.iter().map(|(l, _)| l.to_string()).collect();
    if correction <= 0.0 {
        // Every observation identical: no evidence of any group effect.
        return Ok(TestResult::new(labels, 0.0, 1.0));
    }
    let h = (h / correction).max(0.0);
    let df = (samples.len() - 1) as f64;
    let chi = ChiSquared::new(df).map_err(|e| Error::validation(e.to_string()))?;
    let p = chi.sf(h).clamp(0.0, 1.0);
    Ok(TestResult::new(labels, h, p))
}

// ---------------------------------------------------------------------------
// Mann-Whitney U
// ---------------------------------------------------------------------------

/// Exact two-sided p for the U statistic by enumeration of rank
/// arrangements. Only valid without ties; `None` when ties are present.
///
/// `ways[i][j][u]` counts arrangements of `i` first-sample and `j`
/// second-sample values with U = u; peeling the largest pooled value gives
/// `ways(i, j, u) = ways(i-1, j, u-j) + ways(i, j-1, u)`. Counts fit f64
/// exactly for the sizes this path handles (C(40, 20) < 2^53).
pub fn mann_whitney_exact_p(a: &[f64], b: &[f64]) -> Option<f64> {
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let (_, ties) = mid_ranks(&pooled);
    if ties.iter().any(|&t| t > 1) {
        return None;
    }
    let (n1, n2) = (a.len(), b.len());
    let u_max = n1 * n2;
    let mut ways = vec![vec![vec![0.0f64; u_max + 1]; n2 + 1]; n1 + 1];
    ways[0][0][0] = 1.0;
    for i in 0..=n1 {
        for j in 0..=n2 {
            if i == 0 && j == 0 {
                continue;
            }
            for u in 0..=i * j {
                let mut total = 0.0;
                if i > 0 && u >= j {
                    total += ways[i - 1][j][u - j];
                }
                if j > 0 {
                    total += ways[i][j - 1][u];
                }
                ways[i][j][u] = total;
            }
        }
    }
    let arrangements: f64 = ways[n1][n2].iter().sum();
    let u_a = u_statistic(a, b).round() as usize;
    let tail_max = u_a.min(u_max - u_a);
    let tail: f64 = ways[n1][n2][..=tail_max].iter().sum();
    Some((2.0 * tail / arrangements).min(1.0))
}

fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let (ranks, _) = mid_ranks(&pooled);
    let r_a: f64 = ranks[..a.len()].iter().sum();
    r_a - (a.len() * (a.len() + 1)) as f64 / 2.0
}

/// Two-sided p from the normal approximation with tie and continuity
/// correction.
pub fn mann_whitney_normal_p(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let (_, ties) = mid_ranks(&pooled);
    let u = u_statistic(a, b);
    let mean = n1 * n2 / 2.0;
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term(&ties) / (n * (n - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z)).clamp(0.0, 1.0)
}

/// Two-sided Mann-Whitney U test: exact enumeration for small tie-free
/// samples (both sizes at most 20), the corrected normal approximation
/// otherwise. The statistic is U of the first sample.
pub fn mann_whitney_u(label_a: &str, a: &[f64], label_b: &str, b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation("Mann-Whitney samples must be nonempty"));
    }
    let u = u_statistic(a, b);
    let p = if a.len() <= 20 && b.len() <= 20 {
        mann_whitney_exact_p(a, b).unwrap_or_else(|| mann_whitney_normal_p(a, b))
    } else {
        mann_whitney_normal_p(a, b)
    };
    Ok(TestResult::new(
        vec![label_a.to_string(), label_b.to_string()],
        u,
        p,
    ))
}

// ---------------------------------------------------------------------------
// Multiple-testing correction
// ---------------------------------------------------------------------------

/// Holm step-down correction: monotone, clipped at one, elementwise at least
/// the raw p-values.
pub fn holm(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut corrected = vec![0.0; m];
    let mut running_max = 0.0f64;
    for (step, &idx) in order.iter().enumerate() {
        let adjusted = ((m - step) as f64 * p_values[idx]).min(1.0);
        running_max = running_max.max(adjusted);
        corrected[idx] = running_max;
    }
    corrected
}

// ---------------------------------------------------------------------------
// Annotation of group tables
// ---------------------------------------------------------------------------

/// One row of the significance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRecord {
    /// Test family the correction ran within, e.g. `rp3beta:ndcg`.
    pub family: String,
    pub comparison: String,
    pub statistic: f64,
    pub p: f64,
    pub corrected_p: f64,
    pub significant: bool,
    /// Set when a comparison could not run (a cell below two users).
    pub skipped: bool,
}

impl SignificanceRecord {
    fn from_test(family: &str, test: &TestResult) -> Self {
        Self {
            family: family.to_string(),
            comparison: test.comparison.join("-vs-"),
            statistic: test.statistic,
            p: test.p,
            corrected_p: test.corrected_p,
            significant: test.significant,
            skipped: false,
        }
    }

    fn skipped(family: &str, comparison: String) -> Self {
        Self {
            family: family.to_string(),
            comparison,
            statistic: f64::NAN,
            p: f64::NAN,
            corrected_p: f64::NAN,
            significant: false,
            skipped: true,
        }
    }
}

/// A group cell with its pairwise-significance letters (one slot per metric
/// in [`Metric::ALL`] order) and Child-vs-General asterisks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedCell {
    pub cell: GroupCell,
    /// Letters of the groups this cell differs from significantly, per
    /// metric, e.g. `"m,n"`.
    pub letters: [String; 5],
    /// Per metric: the Child-Set row differs significantly from the General
    /// Set for Child users.
    pub asterisks: [bool; 5],
}

/// Runs the full annotation protocol over per-user evaluations: for each
/// (recommender, metric), the three pairwise group tests on the General Set
/// corrected as one family, plus the unpaired Child-vs-Child comparison
/// across training variants. A Kruskal-Wallis omnibus per family is recorded
/// alongside without gating the pairwise letters.
pub fn annotate(per_user: &[UserEvaluation]) -> (Vec<AnnotatedCell>, Vec<SignificanceRecord>) {
    let cells = aggregate(per_user);
    let mut annotated: Vec<AnnotatedCell> = cells
        .into_iter()
        .map(|cell| AnnotatedCell {
            cell,
            letters: Default::default(),
            asterisks: [false; 5],
        })
        .collect();
    let mut records = Vec::new();

    let mut recommenders: Vec<String> = per_user.iter().map(|e| e.recommender.clone()).collect();
    recommenders.sort();
    recommenders.dedup();

    let values_of = |rec: &str, variant: TrainingVariant, group: AgeGroup, metric: Metric| -> Vec<f64> {
        per_user
            .iter()
            .filter(|e| e.recommender == rec && e.variant == variant && e.group == group)
            .map(|e| metric.of(e))
            .collect()
    };

    for rec in &recommenders {
        for metric in Metric::ALL {
            let family = format!("{rec}:{metric}");
            let samples: BTreeMap<AgeGroup, Vec<f64>> = AgeGroup::ALL
                .iter()
                .map(|&g| (g, values_of(rec, TrainingVariant::General, g, metric)))
                .collect();

            // Omnibus across the populated groups.
            let populated: Vec<(&str, &[f64])> = AgeGroup::ALL
                .iter()
                .filter(|g| !samples[g].is_empty())
                .map(|g| (g.name(), samples[g].as_slice()))
                .collect();
            if populated.len() >= 2 {
                if let Ok(kw) = kruskal_wallis(&populated) {
                    records.push(SignificanceRecord::from_test(
                        &format!("{family}:omnibus"),
                        &kw,
                    ));
                }
            }

            // Pairwise family with Holm correction.
            let pairs = [
                (AgeGroup::Child, AgeGroup::Mainstream),
                (AgeGroup::Child, AgeGroup::Nma),
                (AgeGroup::Mainstream, AgeGroup::Nma),
            ];
            let mut tests: Vec<(usize, TestResult)> = Vec::new();
            for (idx, &(x, y)) in pairs.iter().enumerate() {
                let (sx, sy) = (&samples[&x], &samples[&y]);
                if sx.len() < 2 || sy.len() < 2 {
                    records.push(SignificanceRecord::skipped(
                        &family,
                        format!("{}-vs-{}", x.name(), y.name()),
                    ));
                    continue;
                }
                let test = match mann_whitney_u(x.name(), sx, y.name(), sy) {
                    Ok(t) => t,
                    Err(_) => continue,
                };
                tests.push((idx, test));
            }
            let corrected = holm(&tests.iter().map(|(_, t)| t.p).collect::<Vec<_>>());
            for ((idx, test), corrected_p) in tests.into_iter().zip(corrected) {
                let test = test.with_correction(corrected_p);
                records.push(SignificanceRecord::from_test(&family, &test));
                if test.significant {
                    let (x, y) = pairs[idx];
                    let slot = Metric::ALL.iter().position(|&m| m == metric).unwrap();
                    attach_letter(&mut annotated, rec, TrainingVariant::General, x, slot, y);
                    attach_letter(&mut annotated, rec, TrainingVariant::General, y, slot, x);
                }
            }

            // Child Set vs General Set for Child users (unpaired, one test).
            let general = values_of(rec, TrainingVariant::General, AgeGroup::Child, metric);
            let child_set = values_of(rec, TrainingVariant::Child, AgeGroup::Child, metric);
            let child_family = format!("{family}:child-set");
            if general.len() < 2 || child_set.len() < 2 {
                if !child_set.is_empty() {
                    records.push(SignificanceRecord::skipped(
                        &child_family,
                        "Children@General-vs-Children@ChildSet".into(),
                    ));
                }
            } else if let Ok(test) = mann_whitney_u(
                "Children@General",
                &general,
                "Children@ChildSet",
                &child_set,
            ) {
                records.push(SignificanceRecord::from_test(&child_family, &test));
                if test.significant {
                    let slot = Metric::ALL.iter().position(|&m| m == metric).unwrap();
                    for entry in annotated.iter_mut() {
                        if entry.cell.recommender == *rec
                            && entry.cell.variant == TrainingVariant::Child
                            && entry.cell.group == AgeGroup::Child
                        {
                            entry.asterisks[slot] = true;
                        }
                    }
                }
            }
        }
    }
    (annotated, records)
}

fn attach_letter(
    annotated: &mut [AnnotatedCell],
    rec: &str,
    variant: TrainingVariant,
    group: AgeGroup,
    metric_slot: usize,
    other: AgeGroup,
) {
    for entry in annotated.iter_mut() {
        if entry.cell.recommender == rec
            && entry.cell.variant == variant
            && entry.cell.group == group
        {
            let letters = &mut entry.letters[metric_slot];
            if !letters.is_empty() {
                letters.push(',');
            }
            letters.push(other.letter());
        }
    }
}

// ---------------------------------------------------------------------------
// Per-genre exploration tests
// ---------------------------------------------------------------------------

/// Test outcomes for one family member (a genre, or a popularity metric):
/// the omnibus plus the Holm-corrected pairwise family, with annotation
/// letters per group in [`AgeGroup::ALL`] order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyTestReport {
    pub name: String,
    pub kruskal_wallis: Option<TestResult>,
    pub pairwise: Vec<SignificanceRecord>,
    pub letters: [String; 3],
}

/// Group-difference protocol over per-group samples, one family per name:
/// Kruskal-Wallis across the populated groups, then the three pairwise
/// comparisons corrected within the name's family. Sample slots follow
/// [`AgeGroup::ALL`] order.
pub fn grouped_family_tests(
    prefix: &str,
    names: &[String],
    samples: &[[Vec<f64>; 3]],
) -> Result<Vec<FamilyTestReport>> {
    if samples.len() != names.len() {
        return Err(Error::config(format!(
            "{} sample sets for {} names",
            samples.len(),
            names.len()
        )));
    }
    let mut reports = Vec::with_capacity(samples.len());
    for (family_samples, name) in samples.iter().zip(names) {
        let family = format!("{prefix}:{name}");
        let populated: Vec<(&str, &[f64])> = AgeGroup::ALL
            .iter()
            .enumerate()
            .filter(|(slot, _)| !family_samples[*slot].is_empty())
            .map(|(slot, g)| (g.name(), family_samples[slot].as_slice()))
            .collect();
        let kw = if populated.len() >= 2 {
            kruskal_wallis(&populated).ok()
        } else {
            None
        };

        let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
        let mut tests: Vec<(usize, TestResult)> = Vec::new();
        let mut records = Vec::new();
        for (pair_idx, &(x, y)) in pairs.iter().enumerate() {
            let (gx, gy) = (AgeGroup::ALL[x], AgeGroup::ALL[y]);
            let (sx, sy) = (&family_samples[x], &family_samples[y]);
            if sx.is_empty() && sy.is_empty() {
                continue; // both groups absent from the data entirely
            }
            if sx.len() < 2 || sy.len() < 2 {
                records.push(SignificanceRecord::skipped(
                    &family,
                    format!("{}-vs-{}", gx.name(), gy.name()),
                ));
                continue;
            }
            let test = mann_whitney_u(gx.name(), sx, gy.name(), sy)?;
            tests.push((pair_idx, test));
        }
        let corrected = holm(&tests.iter().map(|(_, t)| t.p).collect::<Vec<_>>());
        let mut letters: [String; 3] = Default::default();
        for ((pair_idx, test), corrected_p) in tests.into_iter().zip(corrected) {
            let test = test.with_correction(corrected_p);
            records.push(SignificanceRecord::from_test(&family, &test));
            if test.significant {
                let (x, y) = pairs[pair_idx];
                for (slot, other) in [(x, AgeGroup::ALL[y]), (y, AgeGroup::ALL[x])] {
                    if !letters[slot].is_empty() {
                        letters[slot].push(',');
                    }
                    letters[slot].push(other.letter());
                }
            }
        }
        reports.push(FamilyTestReport {
            name: name.clone(),
            kruskal_wallis: kw,
            pairwise: records,
            letters,
        });
    }
    Ok(reports)
}

/// Per-genre group-difference tests over UGP share samples (one observation
/// per profile per genre).
pub fn per_genre_tests(
    samples: &[[Vec<f64>; 3]],
    genre_names: &[String],
) -> Result<Vec<FamilyTestReport>> {
    grouped_family_tests("genre", genre_names, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn kw_identical_samples() {
        let s = [1.0, 2.0, 3.0];
        let result = kruskal_wallis(&[("a", &s), ("b", &s), ("c", &s)]).unwrap();
        assert!((result.p - 1.0).abs() < 1e-9, "p = {}", result.p);
    }

    #[test]
    fn kw_worked_example() {
        // Ranks 1..9 without ties: H = 7.2, p = exp(-3.6) ~ 0.0273.
        let result = kruskal_wallis(&[
            ("a", &[1.0, 2.0, 3.0][..]),
            ("b", &[4.0, 5.0, 6.0][..]),
            ("c", &[7.0, 8.0, 9.0][..]),
        ])
        .unwrap();
        assert_abs_diff_eq!(result.statistic, 7.2, epsilon = 1e-9);
        assert_abs_diff_eq!(result.p, 0.027_323_722_447_2, epsilon = 1e-6);
    }

    #[test]
    fn kw_invariant_under_monotone_transform() {
        let a = [0.1, 0.5, 0.9, 0.2];
        let b = [0.3, 0.8, 0.4];
        let c = [0.6, 0.7, 0.05];
        let transformed: Vec<Vec<f64>> = [&a[..], &b[..], &c[..]]
            .iter()
            .map(|s| s.iter().map(|&x: &f64| (x * 3.0).exp()).collect())
            .collect();
        let r1 = kruskal_wallis(&[("a", &a), ("b", &b), ("c", &c)]).unwrap();
        let r2 = kruskal_wallis(&[
            ("a", &transformed[0]),
            ("b", &transformed[1]),
            ("c", &transformed[2]),
        ])
        .unwrap();
        assert_abs_diff_eq!(r1.statistic, r2.statistic, epsilon = 1e-12);
        assert_abs_diff_eq!(r1.p, r2.p, epsilon = 1e-12);
    }

    #[test]
    fn mwu_exact_worked_example() {
        let result =
            mann_whitney_u("a", &[1.0, 2.0, 3.0], "b", &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(result.statistic, 0.0);
        assert_abs_diff_eq!(result.p, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn mwu_identical_samples_p_one() {
        let s = [1.0, 2.0, 3.0];
        let result = mann_whitney_u("a", &s, "b", &s).unwrap();
        assert_abs_diff_eq!(result.p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mwu_two_sided_is_symmetric() {
        let a = [1.0, 5.0, 3.0, 9.0];
        let b = [2.0, 8.0, 4.0];
        let ab = mann_whitney_u("a", &a, "b", &b).unwrap();
        let ba = mann_whitney_u("b", &b, "a", &a).unwrap();
        assert_abs_diff_eq!(ab.p, ba.p, epsilon = 1e-12);
    }

    #[test]
    fn exact_and_normal_agree_in_calibration_band() {
        // Tie-free samples with 15 to 20 observations per side.
        let mut rng = crate::rng::sub_rng(4242, 0);
        for round in 0..50 {
            let n1 = rng.gen_range(15..=20);
            let n2 = rng.gen_range(15..=20);
            let shift: f64 = rng.gen_range(0.0..1.0);
            let a: Vec<f64> = (0..n1).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..n2).map(|_| rng.gen::<f64>() + shift).collect();
            let exact = mann_whitney_exact_p(&a, &b).expect("continuous draws never tie");
            let approx = mann_whitney_normal_p(&a, &b);
            assert!(
                (exact - approx).abs() <= 0.01,
                "round {round}: exact {exact} vs normal {approx}"
            );
        }
    }

    #[test]
    fn kw_two_groups_matches_mwu_decision() {
        let mut rng = crate::rng::sub_rng(777, 0);
        for _ in 0..40 {
            let n = rng.gen_range(30..60);
            let shift: f64 = rng.gen_range(0.0..0.8);
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + shift).collect();
            let kw = kruskal_wallis(&[("a", &a), ("b", &b)]).unwrap();
            let mwu = mann_whitney_u("a", &a, "b", &b).unwrap();
            assert_eq!(
                kw.p < SIGNIFICANCE_LEVEL,
                mwu.p < SIGNIFICANCE_LEVEL,
                "kw p {} vs mwu p {}",
                kw.p,
                mwu.p
            );
            if mwu.p > 0.001 && mwu.p < 0.1 {
                assert!((kw.p - mwu.p).abs() <= 1e-3, "kw {} mwu {}", kw.p, mwu.p);
            }
        }
    }

    #[test]
    fn holm_worked_values() {
        assert_eq!(holm(&[0.03]), vec![0.03]);
        let corrected = holm(&[0.01, 0.04]);
        assert_abs_diff_eq!(corrected[0], 0.02, epsilon = 1e-12);
        assert_abs_diff_eq!(corrected[1], 0.04, epsilon = 1e-12);
    }

    #[test]
    fn holm_never_below_raw() {
        let mut rng = crate::rng::sub_rng(1, 1);
        for _ in 0..50 {
            let ps: Vec<f64> = (0..rng.gen_range(1..8)).map(|_| rng.gen::<f64>()).collect();
            let corrected = holm(&ps);
            for (raw, adj) in ps.iter().zip(&corrected) {
                assert!(adj >= raw);
                assert!(*adj <= 1.0);
            }
        }
    }

    fn make_eval(
        rec: &str,
        variant: TrainingVariant,
        group: AgeGroup,
        user: u32,
        value: f64,
    ) -> UserEvaluation {
        UserEvaluation {
            user,
            group,
            recommender: rec.to_string(),
            variant,
            ndcg: value,
            mrr: value,
            map: value,
            gmc: value,
            pl: value,
        }
    }

    #[test]
    fn annotate_identical_cells_has_no_letters() {
        let mut evals = Vec::new();
        for group in AgeGroup::ALL {
            for user in 0..30 {
                evals.push(make_eval(
                    "mostpop",
                    TrainingVariant::General,
                    group,
                    user,
                    f64::from(user) / 30.0,
                ));
            }
        }
        let (cells, _) = annotate(&evals);
        for cell in cells {
            assert!(cell.letters.iter().all(|l| l.is_empty()), "{cell:?}");
        }
    }

    #[test]
    fn annotate_disjoint_cells_attach_all_letters_symmetrically() {
        let mut evals = Vec::new();
        let offsets = [0.0, 100.0, 200.0];
        for (slot, group) in AgeGroup::ALL.into_iter().enumerate() {
            for user in 0..50 {
                evals.push(make_eval(
                    "rp3beta",
                    TrainingVariant::General,
                    group,
                    user,
                    offsets[slot] + f64::from(user),
                ));
            }
        }
        let (cells, records) = annotate(&evals);
        for cell in &cells {
            for letters in &cell.letters {
                let expected: String = AgeGroup::ALL
                    .iter()
                    .filter(|&&g| g != cell.cell.group)
                    .map(|g| g.letter().to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                assert_eq!(letters, &expected);
            }
        }
        // Letter symmetry: Children carrying 'm' implies Mainstream carries 'c'.
        let child = cells.iter().find(|c| c.cell.group == AgeGroup::Child).unwrap();
        let ms = cells.iter().find(|c| c.cell.group == AgeGroup::Mainstream).unwrap();
        assert!(child.letters[0].contains('m'));
        assert!(ms.letters[0].contains('c'));
        assert!(records.iter().any(|r| r.family == "rp3beta:ndcg" && r.significant));
    }

    #[test]
    fn annotate_marks_child_set_asterisk() {
        let mut evals = Vec::new();
        for user in 0..40 {
            evals.push(make_eval(
                "ials",
                TrainingVariant::General,
                AgeGroup::Child,
                user,
                10.0 + f64::from(user),
            ));
            evals.push(make_eval(
                "ials",
                TrainingVariant::Child,
                AgeGroup::Child,
                user,
                f64::from(user) * 0.01,
            ));
        }
        let (cells, _) = annotate(&evals);
        let child_row = cells
            .iter()
            .find(|c| c.cell.variant == TrainingVariant::Child)
            .unwrap();
        assert!(child_row.asterisks.iter().all(|&a| a));
        let general_row = cells
            .iter()
            .find(|c| c.cell.variant == TrainingVariant::General)
            .unwrap();
        assert!(general_row.asterisks.iter().all(|&a| !a));
    }

    #[test]
    fn per_genre_tests_flag_divergent_genre() {
        // Genre 0 separates Children from the rest; genre 1 is pure noise.
        let n = 60;
        let child: Vec<f64> = (0..n).map(|i| 0.8 + f64::from(i) * 1e-4).collect();
        let other: Vec<f64> = (0..n).map(|i| 0.2 + f64::from(i) * 1e-4).collect();
        let noise: Vec<f64> = (0..n).map(|i| 0.5 + f64::from(i) * 1e-4).collect();
        let samples = vec![
            [child, other.clone(), other.clone()],
            [noise.clone(), noise.clone(), noise],
        ];
        let names = vec!["Action".to_string(), "Drama".to_string()];
        let reports = per_genre_tests(&samples, &names).unwrap();
        assert!(reports[0].kruskal_wallis.as_ref().unwrap().p < SIGNIFICANCE_LEVEL);
        assert!(reports[0].letters[0].contains('m'));
        assert!(reports[0].letters[1].contains('c'));
        assert!(reports[1].letters.iter().all(|l| l.is_empty()));
    }
}
