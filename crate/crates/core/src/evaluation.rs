//! Ranking-accuracy metrics, genre miscalibration, and popularity lift,
//! computed per user and aggregated per age group and training variant.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::domain::{jsd_with_base, AgeGroup, GenreDistribution, Interaction, JsdBase};
use crate::error::{Error, Result};
use crate::ingest::InteractionLog;
use crate::recommenders::{RecommendationTable, TrainingVariant};

/// Metrics reported per user and per group cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Ndcg,
    Mrr,
    Map,
    Gmc,
    Pl,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Ndcg, Metric::Mrr, Metric::Map, Metric::Gmc, Metric::Pl];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ndcg => "ndcg",
            Metric::Mrr => "mrr",
            Metric::Map => "map",
            Metric::Gmc => "gmc",
            Metric::Pl => "pl",
        }
    }

    pub fn of(self, eval: &UserEvaluation) -> f64 {
        match self {
            Metric::Ndcg => eval.ndcg,
            Metric::Mrr => eval.mrr,
            Metric::Map => eval.map,
            Metric::Gmc => eval.gmc,
            Metric::Pl => eval.pl,
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

/// Binary-gain nDCG with discount `1 / log2(rank + 1)`, normalized by the
/// ideal DCG over `min(k, |relevant|)` unit gains.
pub fn ndcg_at_k(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let ideal_hits = k.min(relevant.len());
    let idcg: f64 = (0..ideal_hits).map(|pos| 1.0 / ((pos + 2) as f64).log2()).sum();
    dcg / idcg
}

/// Reciprocal rank of the first relevant item within the top `k`, else 0.
pub fn mrr_at_k(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            return 1.0 / (pos + 1) as f64;
        }
    }
    0.0
}

/// Average precision within the top `k`, normalized by `min(k, |relevant|)`.
pub fn map_at_k(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            precision_sum += hits as f64 / (pos + 1) as f64;
        }
    }
    precision_sum / k.min(relevant.len()) as f64
}

// ---------------------------------------------------------------------------
// Genre miscalibration and popularity lift
// ---------------------------------------------------------------------------

/// Mean genre distribution of a user's recommended items, each item counted
/// once. `None` when the list is empty.
pub fn build_rgp(item_distributions: &[&GenreDistribution]) -> Option<GenreDistribution> {
    let first = item_distributions.first()?;
    let mut mass = vec![0.0f64; first.dim()];
    for dist in item_distributions {
        for (slot, &w) in mass.iter_mut().zip(dist.weights()) {
            *slot += w;
        }
    }
    GenreDistribution::normalized(mass)
}

/// Genre miscalibration: divergence between the user's training-set genre
/// profile and their recommendation genre profile.
pub fn gmc(
    ugp_train: &GenreDistribution,
    rgp: &GenreDistribution,
    base: JsdBase,
) -> Result<f64> {
    jsd_with_base(ugp_train, rgp, base)
}

/// Popularity lift: relative increase of mean recommended-item popularity
/// over the user's profile popularity.
pub fn popularity_lift(profile_pop: f64, rec_pop: f64) -> f64 {
    (rec_pop - profile_pop) / profile_pop
}

// ---------------------------------------------------------------------------
// Per-user evaluation
// ---------------------------------------------------------------------------

/// One user's metrics for one (recommender, variant) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEvaluation {
    pub user: u32,
    pub group: AgeGroup,
    pub recommender: String,
    pub variant: TrainingVariant,
    pub ndcg: f64,
    pub mrr: f64,
    pub map: f64,
    pub gmc: f64,
    pub pl: f64,
}

/// Distinct-user popularity of the training events, normalized by the most
/// interacted-with item, indexed by log item index. Items outside the
/// training set get popularity zero.
pub fn training_popularity(log: &InteractionLog, train: &[Interaction]) -> Vec<f64> {
    let mut pairs: Vec<(u32, u32)> = train.iter().map(|e| (e.item, e.user)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut counts = vec![0u64; log.items().len()];
    for &(item, _) in &pairs {
        counts[item as usize] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    counts.into_iter().map(|c| c as f64 / max).collect()
}

/// Inputs reused across every recommender and variant of one experiment:
/// training genre profiles, test relevance, and the General-Set popularity
/// table that keeps lifts comparable across variants.
pub struct EvaluationContext {
    /// Per log user: training-profile genre distribution.
    pub ugp_train: HashMap<u32, GenreDistribution>,
    /// Per log user: distinct training items.
    pub train_items: HashMap<u32, Vec<u32>>,
    /// Per log user: distinct test items (the relevant set).
    pub test_items: HashMap<u32, Vec<u32>>,
    /// Popularity per log item, computed on the General training set.
    pub popularity: Vec<f64>,
    pub base: JsdBase,
    pub k: usize,
}

impl EvaluationContext {
    pub fn new(
        log: &InteractionLog,
        general_train: &[Interaction],
        test: &[Interaction],
        base: JsdBase,
        k: usize,
    ) -> Result<Self> {
        let mut train_pairs: Vec<(u32, u32)> =
            general_train.iter().map(|e| (e.user, e.item)).collect();
        train_pairs.sort_unstable();
        train_pairs.dedup();
        let mut train_items: HashMap<u32, Vec<u32>> = HashMap::new();
        for &(user, item) in &train_pairs {
            train_items.entry(user).or_default().push(item);
        }
        let n_genres = log.vocabulary().len();
        let mut ugp_train = HashMap::new();
        for (&user, items) in &train_items {
            let mut mass = vec![0.0f64; n_genres];
            for &item in items {
                for (slot, &w) in mass.iter_mut().zip(log.items()[item as usize].genres.weights()) {
                    *slot += w;
                }
            }
            let dist = GenreDistribution::normalized(mass).ok_or_else(|| {
                Error::validation(format!("user {user} has an empty training genre profile"))
            })?;
            ugp_train.insert(user, dist);
        }
        let mut test_pairs: Vec<(u32, u32)> = test.iter().map(|e| (e.user, e.item)).collect();
        test_pairs.sort_unstable();
        test_pairs.dedup();
        let mut test_items: HashMap<u32, Vec<u32>> = HashMap::new();
        for &(user, item) in &test_pairs {
            test_items.entry(user).or_default().push(item);
        }
        Ok(Self {
            ugp_train,
            train_items,
            test_items,
            popularity: training_popularity(log, general_train),
            base,
            k,
        })
    }
}

/// Evaluates one recommendation table. Users without test items or without
/// recommendations are excluded from the output.
pub fn evaluate_table(
    log: &InteractionLog,
    ctx: &EvaluationContext,
    table: &RecommendationTable,
) -> Result<Vec<UserEvaluation>> {
    let mut out = Vec::with_capacity(table.lists.len());
    for rec in &table.lists {
        let Some(test) = ctx.test_items.get(&rec.user) else {
            continue;
        };
        if rec.items.is_empty() {
            continue; // flagged upstream by the shortfall marker
        }
        let ranked: Vec<u32> = rec.items.iter().map(|&(item, _)| item).collect();
        let relevant: HashSet<u32> = test.iter().copied().collect();
        let ndcg = ndcg_at_k(&ranked, &relevant, ctx.k);
        let mrr = mrr_at_k(&ranked, &relevant, ctx.k);
        let map = map_at_k(&ranked, &relevant, ctx.k);

        let dists: Vec<&GenreDistribution> = ranked
            .iter()
            .map(|&item| &log.items()[item as usize].genres)
            .collect();
        let rgp = build_rgp(&dists)
            .ok_or_else(|| Error::validation(format!("empty RGP for user {}", rec.user)))?;
        let ugp = ctx.ugp_train.get(&rec.user).ok_or_else(|| {
            Error::validation(format!("user {} missing a training profile", rec.user))
        })?;
        let gmc_value = gmc(ugp, &rgp, ctx.base)?;

        let profile_items = &ctx.train_items[&rec.user];
        let profile_pop: f64 = profile_items
            .iter()
            .map(|&i| ctx.popularity[i as usize])
            .sum::<f64>()
            / profile_items.len() as f64;
        let rec_pop: f64 =
            ranked.iter().map(|&i| ctx.popularity[i as usize]).sum::<f64>() / ranked.len() as f64;
        let pl = popularity_lift(profile_pop, rec_pop);

        out.push(UserEvaluation {
            user: rec.user,
            group: log.users()[rec.user as usize].group,
            recommender: table.recommender.clone(),
            variant: table.variant,
            ndcg,
            mrr,
            map,
            gmc: gmc_value,
            pl,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Unweighted per-user means for one (recommender, variant, group) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCell {
    pub recommender: String,
    pub variant: TrainingVariant,
    pub group: AgeGroup,
    pub n: usize,
    pub ndcg: f64,
    pub mrr: f64,
    pub map: f64,
    pub gmc: f64,
    pub pl: f64,
}

impl GroupCell {
    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Ndcg => self.ndcg,
            Metric::Mrr => self.mrr,
            Metric::Map => self.map,
            Metric::Gmc => self.gmc,
            Metric::Pl => self.pl,
        }
    }
}

/// Groups per-user evaluations into cell means. Empty cells are absent from
/// the output rather than reported as zero.
pub fn aggregate(per_user: &[UserEvaluation]) -> Vec<GroupCell> {
    let mut cells: BTreeMap<(String, TrainingVariant, AgeGroup), Vec<&UserEvaluation>> =
        BTreeMap::new();
    for eval in per_user {
        cells
            .entry((eval.recommender.clone(), eval.variant, eval.group))
            .or_default()
            .push(eval);
    }
    cells
        .into_iter()
        .map(|((recommender, variant, group), members)| {
            let n = members.len();
            let mean = |metric: Metric| -> f64 {
                members.iter().map(|e| metric.of(e)).sum::<f64>() / n as f64
            };
            GroupCell {
                recommender,
                variant,
                group,
                n,
                ndcg: mean(Metric::Ndcg),
                mrr: mean(Metric::Mrr),
                map: mean(Metric::Map),
                gmc: mean(Metric::Gmc),
                pl: mean(Metric::Pl),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn set(items: &[u32]) -> HashSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn ndcg_ideal_ranking_is_one() {
        let ranked = vec![1, 2, 3, 4];
        assert_abs_diff_eq!(ndcg_at_k(&ranked, &set(&[1, 2]), 4), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ndcg_worked_value() {
        // Relevant at ranks 1 and 3 of 5, |relevant| = 2:
        // (1 + 1/log2(4)) / (1 + 1/log2(3)) = 1.5 / 1.63093 = 0.91972.
        let ranked = vec![10, 11, 12, 13, 14];
        let relevant = set(&[10, 12]);
        assert_abs_diff_eq!(ndcg_at_k(&ranked, &relevant, 5), 0.919_72, epsilon = 1e-5);
    }

    #[test]
    fn ndcg_no_relevant_in_top_k_is_zero() {
        let ranked = vec![1, 2, 3];
        assert_eq!(ndcg_at_k(&ranked, &set(&[9]), 3), 0.0);
    }

    #[test]
    fn mrr_first_relevant_at_rank_four() {
        let ranked = vec![1, 2, 3, 4];
        assert_abs_diff_eq!(mrr_at_k(&ranked, &set(&[4]), 5), 0.25);
    }

    #[test]
    fn map_worked_value() {
        // Relevant at ranks 1 and 3: (1 + 2/3) / 2 = 0.8333.
        let ranked = vec![10, 11, 12];
        let relevant = set(&[10, 12]);
        assert_abs_diff_eq!(map_at_k(&ranked, &relevant, 3), 5.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn single_relevant_at_rank_one_scores_one_everywhere() {
        let ranked = vec![7, 8];
        let relevant = set(&[7]);
        assert_eq!(ndcg_at_k(&ranked, &relevant, 2), 1.0);
        assert_eq!(mrr_at_k(&ranked, &relevant, 2), 1.0);
        assert_eq!(map_at_k(&ranked, &relevant, 2), 1.0);
    }

    /// Direct-definition oracle used for the equivalence check: enumerates
    /// relevant ranks explicitly instead of streaming over the list.
    fn oracle_metrics(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> (f64, f64, f64) {
        let hits: Vec<usize> = ranked
            .iter()
            .take(k)
            .enumerate()
            .filter(|(_, item)| relevant.contains(item))
            .map(|(pos, _)| pos + 1)
            .collect();
        let dcg: f64 = hits.iter().map(|&r| 1.0 / ((r + 1) as f64).log2()).sum();
        let idcg: f64 = (1..=k.min(relevant.len()))
            .map(|r| 1.0 / ((r + 1) as f64).log2())
            .sum();
        let ndcg = if idcg > 0.0 { dcg / idcg } else { 0.0 };
        let mrr = hits.first().map_or(0.0, |&r| 1.0 / r as f64);
        let ap: f64 = hits
            .iter()
            .enumerate()
            .map(|(n_before, &r)| (n_before + 1) as f64 / r as f64)
            .sum::<f64>()
            / k.min(relevant.len()).max(1) as f64;
        (ndcg, mrr, ap)
    }

    #[test]
    fn metrics_match_enumeration_oracle() {
        let mut rng = crate::rng::sub_rng(99, 0);
        for _ in 0..200 {
            let n_items = rng.gen_range(1..=20u32);
            let mut ranked: Vec<u32> = (0..n_items).collect();
            for i in (1..ranked.len()).rev() {
                let j = rng.gen_range(0..=i);
                ranked.swap(i, j);
            }
            let relevant: HashSet<u32> =
                (0..n_items).filter(|_| rng.gen_bool(0.3)).collect();
            if relevant.is_empty() {
                continue;
            }
            let k = rng.gen_range(1..=20usize);
            let (ndcg_o, mrr_o, map_o) = oracle_metrics(&ranked, &relevant, k);
            assert_abs_diff_eq!(ndcg_at_k(&ranked, &relevant, k), ndcg_o, epsilon = 1e-12);
            assert_abs_diff_eq!(mrr_at_k(&ranked, &relevant, k), mrr_o, epsilon = 1e-12);
            assert_abs_diff_eq!(map_at_k(&ranked, &relevant, k), map_o, epsilon = 1e-12);
        }
    }

    #[test]
    fn gmc_trivial_and_worked_values() {
        let a = GenreDistribution::new(vec![0.5, 0.5]).unwrap();
        let b = GenreDistribution::new(vec![1.0, 0.0]).unwrap();
        let c = GenreDistribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(gmc(&a, &a, JsdBase::Two).unwrap(), 0.0);
        assert_abs_diff_eq!(gmc(&b, &c, JsdBase::Two).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            gmc(&a, &b, JsdBase::Two).unwrap(),
            0.311_278_124_459_133,
            epsilon = 1e-9
        );
    }

    #[test]
    fn popularity_lift_values() {
        assert_eq!(popularity_lift(0.3, 0.3), 0.0);
        assert_abs_diff_eq!(popularity_lift(0.2, 0.4), 1.0, epsilon = 1e-12);
        assert!(popularity_lift(0.5, 0.1) >= -1.0);
    }

    #[test]
    fn replaying_a_single_mix_profile_gives_zero_gmc() {
        // Hypothetical recommender that replays the user's own training
        // items with exclusion disabled: when every profile item shares one
        // genre mix and N covers the profile, the RGP equals the UGP.
        let mix = GenreDistribution::new(vec![0.6, 0.4]).unwrap();
        let profile = [&mix, &mix, &mix];
        let rgp = build_rgp(&profile).unwrap();
        let ugp = build_rgp(&profile).unwrap();
        assert_eq!(gmc(&ugp, &rgp, JsdBase::Two).unwrap(), 0.0);
    }

    #[test]
    fn rgp_is_unweighted_mean() {
        let a = GenreDistribution::new(vec![1.0, 0.0]).unwrap();
        let b = GenreDistribution::new(vec![0.0, 1.0]).unwrap();
        let rgp = build_rgp(&[&a, &b]).unwrap();
        assert_eq!(rgp.weights(), &[0.5, 0.5]);
        assert!(build_rgp(&[]).is_none());
    }

    fn eval(group: AgeGroup, ndcg: f64) -> UserEvaluation {
        UserEvaluation {
            user: 0,
            group,
            recommender: "mostpop".into(),
            variant: TrainingVariant::General,
            ndcg,
            mrr: 0.0,
            map: 0.0,
            gmc: 0.0,
            pl: 0.0,
        }
    }

    #[test]
    fn aggregate_means_and_order_insensitivity() {
        let evals = vec![
            eval(AgeGroup::Child, 0.2),
            eval(AgeGroup::Child, 0.4),
            eval(AgeGroup::Mainstream, 0.9),
        ];
        let cells = aggregate(&evals);
        let child = cells.iter().find(|c| c.group == AgeGroup::Child).unwrap();
        assert_abs_diff_eq!(child.ndcg, 0.3, epsilon = 1e-12);
        assert_eq!(child.n, 2);
        let ms = cells.iter().find(|c| c.group == AgeGroup::Mainstream).unwrap();
        assert_eq!(ms.n, 1);
        assert_abs_diff_eq!(ms.ndcg, 0.9, epsilon = 1e-12);

        let mut reversed = evals.clone();
        reversed.reverse();
        assert_eq!(aggregate(&reversed), cells);
    }
}
