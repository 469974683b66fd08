//! The four recommendation algorithms and their top-N generation.
//!
//! Every model is a pure function of (training events, hyperparameters,
//! seed): retraining reproduces identical tables. Scoring is dense over the
//! training-item universe; ties are broken by ascending item index
//! everywhere.

pub mod ials;
pub mod mostpop;
pub mod random;
pub mod rp3beta;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Interaction;
use crate::error::{Error, Result};
use crate::evaluation::ndcg_at_k;
use crate::ingest::InteractionLog;

// ---------------------------------------------------------------------------
// Training matrix
// ---------------------------------------------------------------------------

/// Binary training interactions in compressed sparse form, with row and
/// column views and bijective maps between dense indices and the owning
/// log's catalog indices.
#[derive(Debug, Clone)]
pub struct TrainMatrix {
    user_log_idx: Vec<u32>,
    item_log_idx: Vec<u32>,
    user_of_log: HashMap<u32, u32>,
    item_of_log: HashMap<u32, u32>,
    row_ptr: Vec<usize>,
    row_items: Vec<u32>,
    col_ptr: Vec<usize>,
    col_users: Vec<u32>,
}

impl TrainMatrix {
    /// Builds the binary matrix over the distinct (user, item) pairs of the
    /// given training events.
    pub fn from_events(log: &InteractionLog, events: &[Interaction]) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::data("cannot build a training matrix from zero events"));
        }
        if events
            .iter()
            .any(|e| e.user as usize >= log.users().len() || e.item as usize >= log.items().len())
        {
            return Err(Error::validation(
                "training event references an index outside the log catalogs",
            ));
        }
        let mut pairs: Vec<(u32, u32)> = events.iter().map(|e| (e.user, e.item)).collect();
        pairs.sort_unstable();
        pairs.dedup();

        let mut user_log_idx: Vec<u32> = pairs.iter().map(|&(u, _)| u).collect();
        user_log_idx.dedup();
        let mut item_log_idx: Vec<u32> = pairs.iter().map(|&(_, i)| i).collect();
        item_log_idx.sort_unstable();
        item_log_idx.dedup();

        let user_of_log: HashMap<u32, u32> = user_log_idx
            .iter()
            .enumerate()
            .map(|(dense, &log_idx)| (log_idx, dense as u32))
            .collect();
        let item_of_log: HashMap<u32, u32> = item_log_idx
            .iter()
            .enumerate()
            .map(|(dense, &log_idx)| (log_idx, dense as u32))
            .collect();

        let n_users = user_log_idx.len();
        let n_items = item_log_idx.len();
        let mut row_ptr = vec![0usize; n_users + 1];
        let mut row_items = Vec::with_capacity(pairs.len());
        let mut col_counts = vec![0usize; n_items];
        for &(u, i) in &pairs {
            let du = user_of_log[&u] as usize;
            let di = item_of_log[&i];
            row_ptr[du + 1] += 1;
            row_items.push(di);
            col_counts[di as usize] += 1;
        }
        for u in 0..n_users {
            row_ptr[u + 1] += row_ptr[u];
        }
        // Row item lists are ascending because pairs are sorted.
        let mut col_ptr = vec![0usize; n_items + 1];
        for i in 0..n_items {
            col_ptr[i + 1] = col_ptr[i] + col_counts[i];
        }
        let mut cursor = col_ptr.clone();
        let mut col_users = vec![0u32; pairs.len()];
        for (du, _) in user_log_idx.iter().enumerate() {
            for &item in &row_items[row_ptr[du]..row_ptr[du + 1]] {
                let di = item as usize;
                col_users[cursor[di]] = du as u32;
                cursor[di] += 1;
            }
        }
        Ok(Self {
            user_log_idx,
            item_log_idx,
            user_of_log,
            item_of_log,
            row_ptr,
            row_items,
            col_ptr,
            col_users,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_log_idx.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_log_idx.len()
    }

    pub fn nnz(&self) -> usize {
        self.row_items.len()
    }

    /// Dense item indices of one user's profile, ascending.
    pub fn items_of(&self, user: u32) -> &[u32] {
        &self.row_items[self.row_ptr[user as usize]..self.row_ptr[user as usize + 1]]
    }

    /// Dense user indices of one item's consumers, ascending.
    pub fn users_of(&self, item: u32) -> &[u32] {
        &self.col_users[self.col_ptr[item as usize]..self.col_ptr[item as usize + 1]]
    }

    pub fn user_degree(&self, user: u32) -> usize {
        self.items_of(user).len()
    }

    pub fn item_degree(&self, item: u32) -> usize {
        self.users_of(item).len()
    }

    pub fn to_log_user(&self, user: u32) -> u32 {
        self.user_log_idx[user as usize]
    }

    pub fn to_log_item(&self, item: u32) -> u32 {
        self.item_log_idx[item as usize]
    }

    pub fn dense_user(&self, log_idx: u32) -> Option<u32> {
        self.user_of_log.get(&log_idx).copied()
    }

    pub fn dense_item(&self, log_idx: u32) -> Option<u32> {
        self.item_of_log.get(&log_idx).copied()
    }
}

// ---------------------------------------------------------------------------
// Models and parameters
// ---------------------------------------------------------------------------

/// Which training partition a model was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrainingVariant {
    General,
    Child,
}

impl std::fmt::Display for TrainingVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainingVariant::General => write!(f, "General"),
            TrainingVariant::Child => write!(f, "Child"),
        }
    }
}

/// A trained model able to score every training-universe item for a user.
pub trait RecommenderModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Fills `scores[j]` for every dense item `j`. `scores.len()` equals the
    /// matrix item count.
    fn score_user(&self, matrix: &TrainMatrix, user: u32, scores: &mut [f64]);
}

/// Hyperparameter point for one algorithm family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "algorithm")]
pub enum AlgoParams {
    Random { seed: u64 },
    MostPop,
    Rp3Beta {
        alpha: f64,
        beta: f64,
        top_k_neighbors: Option<usize>,
    },
    Ials {
        factors: usize,
        reg: f64,
        alpha: f64,
        epochs: usize,
        seed: u64,
    },
}

impl AlgoParams {
    pub fn family(&self) -> &'static str {
        match self {
            AlgoParams::Random { .. } => "random",
            AlgoParams::MostPop => "mostpop",
            AlgoParams::Rp3Beta { .. } => "rp3beta",
            AlgoParams::Ials { .. } => "ials",
        }
    }

    /// Key/value rendering for run manifests and table headers.
    pub fn describe(&self) -> Vec<(String, String)> {
        match self {
            AlgoParams::Random { seed } => vec![("seed".into(), seed.to_string())],
            AlgoParams::MostPop => vec![],
            AlgoParams::Rp3Beta {
                alpha,
                beta,
                top_k_neighbors,
            } => vec![
                ("alpha".into(), alpha.to_string()),
                ("beta".into(), beta.to_string()),
                (
                    "top_k_neighbors".into(),
                    top_k_neighbors.map_or("off".into(), |k| k.to_string()),
                ),
            ],
            AlgoParams::Ials {
                factors,
                reg,
                alpha,
                epochs,
                seed,
            } => vec![
                ("factors".into(), factors.to_string()),
                ("reg".into(), reg.to_string()),
                ("alpha".into(), alpha.to_string()),
                ("epochs".into(), epochs.to_string()),
                ("seed".into(), seed.to_string()),
            ],
        }
    }

    /// Trains this point on the given matrix.
    pub fn train(&self, matrix: &TrainMatrix) -> Result<Box<dyn RecommenderModel>> {
        Ok(match self {
            AlgoParams::Random { seed } => Box::new(random::RandomModel::new(*seed)),
            AlgoParams::MostPop => Box::new(mostpop::MostPopModel::train(matrix)),
            AlgoParams::Rp3Beta {
                alpha,
                beta,
                top_k_neighbors,
            } => Box::new(rp3beta::Rp3BetaModel::train(
                matrix,
                *alpha,
                *beta,
                *top_k_neighbors,
            )?),
            AlgoParams::Ials {
                factors,
                reg,
                alpha,
                epochs,
                seed,
            } => Box::new(ials::IalsModel::train(
                matrix, *factors, *reg, *alpha, *epochs, *seed,
            )?),
        })
    }

    /// Default tuning grid for each family. The unpersonalized baselines
    /// have nothing to tune.
    pub fn default_grid(family: &str, seed: u64) -> Result<Vec<AlgoParams>> {
        match family {
            "random" => Ok(vec![AlgoParams::Random { seed }]),
            "mostpop" => Ok(vec![AlgoParams::MostPop]),
            "rp3beta" => {
                let alphas = [0.3, 0.6, 0.9, 1.2, 1.5];
                let betas = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
                Ok(alphas
                    .iter()
                    .flat_map(|&alpha| {
                        betas.iter().map(move |&beta| AlgoParams::Rp3Beta {
                            alpha,
                            beta,
                            top_k_neighbors: None,
                        })
                    })
                    .collect())
            }
            "ials" => {
                let factors = [32usize, 64, 128];
                let regs = [1e-3, 1e-2, 1e-1];
                let alphas = [1.0, 10.0, 40.0];
                let mut grid = Vec::new();
                for &f in &factors {
                    for &reg in &regs {
                        for &alpha in &alphas {
                            grid.push(AlgoParams::Ials {
                                factors: f,
                                reg,
                                alpha,
                                epochs: 15,
                                seed,
                            });
                        }
                    }
                }
                Ok(grid)
            }
            other => Err(Error::config(format!("unknown recommender family '{other}'"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Top-N generation
// ---------------------------------------------------------------------------

/// One user's ranked recommendations; item indices refer to the owning log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecommendations {
    pub user: u32,
    /// Ranked (item, score) pairs, scores non-increasing.
    pub items: Vec<(u32, f64)>,
    /// Set when the candidate pool was smaller than N.
    pub shortfall: bool,
}

/// Per-user ranked top-N lists for one (recommender, variant) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationTable {
    pub recommender: String,
    pub variant: TrainingVariant,
    pub hyperparameters: Vec<(String, String)>,
    pub n: usize,
    pub lists: Vec<UserRecommendations>,
}

fn top_n_from_scores(
    scores: &[f64],
    excluded: &[bool],
    n: usize,
) -> (Vec<(u32, f64)>, bool) {
    let mut candidates: Vec<(u32, f64)> = scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| !excluded[j])
        .map(|(j, &s)| (j as u32, s))
        .collect();
    let shortfall = candidates.len() < n;
    candidates.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    candidates.truncate(n);
    (candidates, shortfall)
}

/// Scores every matrix user and keeps the `n` best candidates after
/// excluding the user's training profile and any extra per-user exclusions
/// (dense item indices). Full-candidate scoring, no sampled negatives.
pub fn recommend_topn(
    model: &dyn RecommenderModel,
    matrix: &TrainMatrix,
    extra_exclusions: Option<&HashMap<u32, Vec<u32>>>,
    n: usize,
    variant: TrainingVariant,
    params: &AlgoParams,
) -> RecommendationTable {
    let lists: Vec<UserRecommendations> = (0..matrix.n_users() as u32)
        .into_par_iter()
        .map_init(
            || vec![0.0f64; matrix.n_items()],
            |scores, user| {
                let mut excluded = vec![false; matrix.n_items()];
                for &item in matrix.items_of(user) {
                    excluded[item as usize] = true;
                }
                if let Some(extra) = extra_exclusions {
                    if let Some(items) = extra.get(&user) {
                        for &item in items {
                            excluded[item as usize] = true;
                        }
                    }
                }
                scores.iter_mut().for_each(|s| *s = 0.0);
                model.score_user(matrix, user, scores);
                let (dense_items, shortfall) = top_n_from_scores(scores, &excluded, n);
                UserRecommendations {
                    user: matrix.to_log_user(user),
                    items: dense_items
                        .into_iter()
                        .map(|(j, s)| (matrix.to_log_item(j), s))
                        .collect(),
                    shortfall,
                }
            },
        )
        .collect();
    RecommendationTable {
        recommender: params.family().to_string(),
        variant,
        hyperparameters: params.describe(),
        n,
        lists,
    }
}

// ---------------------------------------------------------------------------
// Tuning
// ---------------------------------------------------------------------------

/// One evaluated grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunePoint {
    pub params: AlgoParams,
    /// Mean nDCG@N over validation users; NaN marks a skipped point.
    pub objective: f64,
    pub evaluated_users: usize,
}

/// Winner plus the full trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: AlgoParams,
    pub best_objective: f64,
    pub trace: Vec<TunePoint>,
}

/// Exhaustive grid evaluation against the validation partition: argmax of
/// mean nDCG@N, ties resolved to the first grid point. `validation` maps a
/// dense user to their relevant dense items.
pub fn tune(
    grid: &[AlgoParams],
    matrix: &TrainMatrix,
    validation: &HashMap<u32, Vec<u32>>,
    n: usize,
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return Err(Error::config("empty tuning grid"));
    }
    let mut trace = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (pos, params) in grid.iter().enumerate() {
        let model = params.train(matrix)?;
        let objective = validation_ndcg(model.as_ref(), matrix, validation, n);
        let evaluated_users = validation.len();
        trace.push(TunePoint {
            params: params.clone(),
            objective,
            evaluated_users,
        });
        if objective.is_nan() {
            continue; // skipped, kept in the trace
        }
        if best.is_none_or(|(_, obj)| objective > obj) {
            best = Some((pos, objective));
        }
    }
    let (pos, best_objective) =
        best.ok_or_else(|| Error::data("every grid point produced a NaN objective"))?;
    Ok(TuneOutcome {
        best: grid[pos].clone(),
        best_objective,
        trace,
    })
}

/// Mean nDCG@N of a model over the validation users. Training items are
/// excluded from candidacy; validation items are not.
pub fn validation_ndcg(
    model: &dyn RecommenderModel,
    matrix: &TrainMatrix,
    validation: &HashMap<u32, Vec<u32>>,
    n: usize,
) -> f64 {
    if validation.is_empty() {
        return f64::NAN;
    }
    let mut users: Vec<u32> = validation.keys().copied().collect();
    users.sort_unstable();
    let scores_per_user: Vec<f64> = users
        .par_iter()
        .map_init(
            || vec![0.0f64; matrix.n_items()],
            |scores, &user| {
                let mut excluded = vec![false; matrix.n_items()];
                for &item in matrix.items_of(user) {
                    excluded[item as usize] = true;
                }
                scores.iter_mut().for_each(|s| *s = 0.0);
                model.score_user(matrix, user, scores);
                let (top, _) = top_n_from_scores(scores, &excluded, n);
                let ranked: Vec<u32> = top.iter().map(|&(j, _)| j).collect();
                let relevant: std::collections::HashSet<u32> =
                    validation[&user].iter().copied().collect();
                ndcg_at_k(&ranked, &relevant, n)
            },
        )
        .collect();
    scores_per_user.iter().sum::<f64>() / scores_per_user.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AgeGrouping, GenreDistribution, GenreVocabulary, ItemRecord, UserRecord};

    pub(crate) fn toy_log(n_users: usize, n_items: usize, pairs: &[(u32, u32)]) -> InteractionLog {
        let grouping = AgeGrouping::new(17, 49, None).unwrap();
        let vocab = GenreVocabulary::new(vec!["A".into()]).unwrap();
        let users = (0..n_users)
            .map(|u| UserRecord::new(format!("u{u}"), 20, &grouping).unwrap())
            .collect();
        let items = (0..n_items)
            .map(|i| ItemRecord {
                id: format!("i{i}"),
                genres: GenreDistribution::equal_weights(&[0], 1).unwrap(),
            })
            .collect();
        let events = pairs
            .iter()
            .map(|&(user, item)| Interaction {
                user,
                item,
                weight: 1,
                rating: None,
                timestamp: None,
            })
            .collect();
        InteractionLog::from_parts(users, items, events, vocab, grouping).unwrap()
    }

    #[test]
    fn matrix_views_are_consistent() {
        let log = toy_log(3, 4, &[(0, 0), (0, 2), (1, 0), (1, 1), (2, 3), (1, 2)]);
        let matrix = TrainMatrix::from_events(&log, log.events()).unwrap();
        assert_eq!(matrix.n_users(), 3);
        assert_eq!(matrix.n_items(), 4);
        assert_eq!(matrix.nnz(), 6);
        assert_eq!(matrix.items_of(1), &[0, 1, 2]);
        assert_eq!(matrix.users_of(0), &[0, 1]);
        assert_eq!(matrix.user_degree(0), 2);
        assert_eq!(matrix.item_degree(2), 2);
        // Round trip between dense and log indices.
        for u in 0..matrix.n_users() as u32 {
            assert_eq!(matrix.dense_user(matrix.to_log_user(u)), Some(u));
        }
    }

    #[test]
    fn top_n_breaks_ties_by_ascending_index() {
        let scores = [1.0, 3.0, 3.0, 2.0];
        let excluded = [false, false, false, false];
        let (top, shortfall) = top_n_from_scores(&scores, &excluded, 3);
        assert!(!shortfall);
        let items: Vec<u32> = top.iter().map(|&(j, _)| j).collect();
        assert_eq!(items, vec![1, 2, 3]);
    }

    #[test]
    fn top_n_flags_shortfall() {
        let scores = [1.0, 2.0];
        let excluded = [true, false];
        let (top, shortfall) = top_n_from_scores(&scores, &excluded, 5);
        assert!(shortfall);
        assert_eq!(top.len(), 1);
    }

    #[test]
    fn recommended_items_never_include_training_profile() {
        let pairs: Vec<(u32, u32)> = (0..4u32)
            .flat_map(|u| (0..6u32).filter(move |i| (u + i) % 3 != 0).map(move |i| (u, i)))
            .collect();
        let log = toy_log(4, 6, &pairs);
        let matrix = TrainMatrix::from_events(&log, log.events()).unwrap();
        for params in [
            AlgoParams::Random { seed: 7 },
            AlgoParams::MostPop,
            AlgoParams::Rp3Beta { alpha: 1.0, beta: 0.0, top_k_neighbors: None },
            AlgoParams::Ials { factors: 2, reg: 0.01, alpha: 10.0, epochs: 5, seed: 7 },
        ] {
            let model = params.train(&matrix).unwrap();
            let table = recommend_topn(&*model, &matrix, None, 3, TrainingVariant::General, &params);
            for rec in &table.lists {
                let dense_user = matrix.dense_user(rec.user).unwrap();
                let profile: std::collections::HashSet<u32> = matrix
                    .items_of(dense_user)
                    .iter()
                    .map(|&j| matrix.to_log_item(j))
                    .collect();
                for &(item, _) in &rec.items {
                    assert!(!profile.contains(&item), "{} leaked a seen item", params.family());
                }
                for w in rec.items.windows(2) {
                    assert!(w[0].1 >= w[1].1, "scores must be non-increasing");
                }
            }
        }
    }

    #[test]
    fn retraining_reproduces_identical_tables() {
        let pairs: Vec<(u32, u32)> = (0..5u32)
            .flat_map(|u| (0..8u32).filter(move |i| (u * 7 + i * 3) % 4 != 0).map(move |i| (u, i)))
            .collect();
        let log = toy_log(5, 8, &pairs);
        let matrix = TrainMatrix::from_events(&log, log.events()).unwrap();
        for params in [
            AlgoParams::Random { seed: 99 },
            AlgoParams::Rp3Beta { alpha: 0.6, beta: 0.4, top_k_neighbors: None },
            AlgoParams::Ials { factors: 3, reg: 0.01, alpha: 5.0, epochs: 4, seed: 99 },
        ] {
            let t1 = recommend_topn(
                &*params.train(&matrix).unwrap(),
                &matrix,
                None,
                4,
                TrainingVariant::General,
                &params,
            );
            let t2 = recommend_topn(
                &*params.train(&matrix).unwrap(),
                &matrix,
                None,
                4,
                TrainingVariant::General,
                &params,
            );
            assert_eq!(t1, t2, "{} is not deterministic", params.family());
        }
    }

    #[test]
    fn singleton_grid_tunes_to_itself() {
        let log = toy_log(3, 5, &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (2, 0)]);
        let matrix = TrainMatrix::from_events(&log, log.events()).unwrap();
        let mut validation = HashMap::new();
        validation.insert(0u32, vec![2u32]);
        validation.insert(1u32, vec![3u32]);
        let grid = vec![AlgoParams::MostPop];
        let outcome = tune(&grid, &matrix, &validation, 3).unwrap();
        assert_eq!(outcome.best, AlgoParams::MostPop);
        assert_eq!(outcome.trace.len(), 1);
    }

    #[test]
    fn tuning_is_deterministic() {
        let pairs: Vec<(u32, u32)> = (0..6u32)
            .flat_map(|u| (0..7u32).filter(move |i| (u + 2 * i) % 3 != 0).map(move |i| (u, i)))
            .collect();
        let log = toy_log(6, 7, &pairs);
        let matrix = TrainMatrix::from_events(&log, log.events()).unwrap();
        let mut validation = HashMap::new();
        validation.insert(0u32, vec![0u32]);
        validation.insert(3u32, vec![1u32]);
        let grid = AlgoParams::default_grid("rp3beta", 0).unwrap();
        let a = tune(&grid, &matrix, &validation, 5).unwrap();
        let b = tune(&grid, &matrix, &validation, 5).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.trace.len(), b.trace.len());
    }
}
