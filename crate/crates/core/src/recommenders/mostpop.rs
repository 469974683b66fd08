//! MostPop baseline: items ranked by training interaction count. One global
//! ranking; per-user lists differ only by seen-item exclusion. Count ties
//! resolve by ascending item index through the shared top-N rule.

use super::{RecommenderModel, TrainMatrix};

#[derive(Debug, Clone)]
pub struct MostPopModel {
    counts: Vec<f64>,
}

impl MostPopModel {
    pub fn train(matrix: &TrainMatrix) -> Self {
        let counts = (0..matrix.n_items() as u32)
            .map(|i| matrix.item_degree(i) as f64)
            .collect();
        Self { counts }
    }

    pub fn count(&self, item: u32) -> f64 {
        self.counts[item as usize]
    }
}

impl RecommenderModel for MostPopModel {
    fn name(&self) -> &'static str {
        "mostpop"
    }

    fn score_user(&self, _matrix: &TrainMatrix, _user: u32, scores: &mut [f64]) {
        scores.copy_from_slice(&self.counts);
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy_log;
    use super::super::{recommend_topn, AlgoParams, TrainMatrix, TrainingVariant};
    use super::*;

    #[test]
    fn ranking_matches_counting_oracle() {
        // i0: 3 users, i1: 2, i2: 2 -> ranking i0, i1, i2 (tie by index).
        let log = toy_log(
            3,
            3,
            &[(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (1, 2), (2, 2)],
        );
        let matrix = TrainMatrix::from_events(&log, log.events()).unwrap();
        let model = MostPopModel::train(&matrix);
        assert_eq!(model.count(0), 3.0);
        assert_eq!(model.count(1), 2.0);
        assert_eq!(model.count(2), 2.0);
        // Fresh user view: use a user who has seen nothing relevant; user 2
        // has seen i0 and i2, so their list starts at i1.
        let params = AlgoParams::MostPop;
        let table = recommend_topn(&model, &matrix, None, 3, TrainingVariant::General, &params);
        let u2 = table.lists.iter().find(|r| r.user == 2).unwrap();
        let items: Vec<u32> = u2.items.iter().map(|&(i, _)| i).collect();
        assert_eq!(items, vec![1]);
    }

    #[test]
    fn exclusion_shifts_list_start() {
        let log = toy_log(2, 3, &[(0, 0), (1, 0), (1, 1), (1, 2), (0, 2)]);
        let matrix = TrainMatrix::from_events(&log, log.events()).unwrap();
        let model = MostPopModel::train(&matrix);
        let params = AlgoParams::MostPop;
        let table = recommend_topn(&model, &matrix, None, 3, TrainingVariant::General, &params);
        let u0 = table.lists.iter().find(|r| r.user == 0).unwrap();
        let items: Vec<u32> = u0.items.iter().map(|&(i, _)| i).collect();
        assert_eq!(items, vec![1]);
    }

    #[test]
    fn child_matrix_ignores_other_groups() {
        // Two matrices that differ only in a non-child user's events must
        // produce identical models when trained on the child-only events.
        let child_events = [(0u32, 0u32), (0, 1)];
        let log_a = toy_log(2, 3, &[child_events[0], child_events[1], (1, 2)]);
        let log_b = toy_log(2, 3, &[child_events[0], child_events[1], (1, 0), (1, 2)]);
        let child_only_a: Vec<_> = log_a.events().iter().filter(|e| e.user == 0).copied().collect();
        let child_only_b: Vec<_> = log_b.events().iter().filter(|e| e.user == 0).copied().collect();
        let ma = TrainMatrix::from_events(&log_a, &child_only_a).unwrap();
        let mb = TrainMatrix::from_events(&log_b, &child_only_b).unwrap();
        let model_a = MostPopModel::train(&ma);
        let model_b = MostPopModel::train(&mb);
        assert_eq!(model_a.counts, model_b.counts);
    }
}
