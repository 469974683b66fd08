//! Random baseline: a uniform sample without replacement from the unseen
//! train-known items.
//!
//! Each (user, item) pair gets an independent pseudo-random score derived
//! from the seed; keeping the top N of i.i.d. uniform scores is exactly a
//! uniform sample without replacement, and the counter-based construction
//! makes lists independent per user and reproducible regardless of thread
//! schedule.

use crate::rng::splitmix64;

use super::{RecommenderModel, TrainMatrix};

#[derive(Debug, Clone)]
pub struct RandomModel {
    seed: u64,
}

impl RandomModel {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn unit_score(&self, user: u32, item: u32) -> f64 {
        let stream = (u64::from(user) << 32) | u64::from(item);
        let bits = splitmix64(self.seed ^ splitmix64(stream));
        // 53 high bits to a uniform double in [0, 1).
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RecommenderModel for RandomModel {
    fn name(&self) -> &'static str {
        "random"
    }

    fn score_user(&self, _matrix: &TrainMatrix, user: u32, scores: &mut [f64]) {
        for (item, slot) in scores.iter_mut().enumerate() {
            *slot = self.unit_score(user, item as u32);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy_log;
    use super::super::{recommend_topn, AlgoParams, TrainMatrix, TrainingVariant};
    use super::*;

    #[test]
    fn same_seed_same_tables() {
        let pairs: Vec<(u32, u32)> = (0..4u32).flat_map(|u| (0..5u32).map(move |i| (u, i))).collect();
        let log = toy_log(4, 5, &pairs[..12]);
        let matrix = TrainMatrix::from_events(&log, log.events()).unwrap();
        let params = AlgoParams::Random { seed: 5 };
        let a = recommend_topn(
            &RandomModel::new(5),
            &matrix,
            None,
            3,
            TrainingVariant::General,
            &params,
        );
        let b = recommend_topn(
            &RandomModel::new(5),
            &matrix,
            None,
            3,
            TrainingVariant::General,
            &params,
        );
        assert_eq!(a, b);
    }

    #[test]
    fn exhausted_candidates_return_short_list() {
        // User 0 has seen all but 2 of the items.
        let mut pairs: Vec<(u32, u32)> = (0..8u32).filter(|&i| i < 6).map(|i| (0u32, i)).collect();
        pairs.push((1, 6));
        pairs.push((1, 7));
        pairs.push((1, 0));
        let log = toy_log(2, 8, &pairs);
        let matrix = TrainMatrix::from_events(&log, log.events()).unwrap();
        let params = AlgoParams::Random { seed: 1 };
        let table = recommend_topn(
            &RandomModel::new(1),
            &matrix,
            None,
            50,
            TrainingVariant::General,
            &params,
        );
        let u0 = table.lists.iter().find(|r| r.user == 0).unwrap();
        assert_eq!(u0.items.len(), 2);
        assert!(u0.shortfall);
    }

    #[test]
    fn inclusion_frequency_is_uniform_within_three_sigma() {
        // 100 candidates, top 50 kept, 10,000 independent user streams: each
        // candidate's inclusion count is Binomial(10000, 0.5).
        let model = RandomModel::new(2);
        let n_items = 100u32;
        let draws = 10_000u32;
        let keep = 50usize;
        let mut inclusions = vec![0u32; n_items as usize];
        let mut scored: Vec<(u32, f64)> = Vec::with_capacity(n_items as usize);
        for user in 0..draws {
            scored.clear();
            scored.extend((0..n_items).map(|i| (i, model.unit_score(user, i))));
            scored.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(item, _) in &scored[..keep] {
                inclusions[item as usize] += 1;
            }
        }
        let mean = f64::from(draws) * 0.5;
        let sigma = (f64::from(draws) * 0.25).sqrt();
        for (item, &count) in inclusions.iter().enumerate() {
            let z = (f64::from(count) - mean) / sigma;
            assert!(
                z.abs() < 3.0,
                "item {item} included {count} times (z = {z:.2})"
            );
        }
    }
}
