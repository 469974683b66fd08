//! RP3beta: three-step random-walk item scoring with a popularity penalty.
//!
//! The walk runs user -> item -> user -> item over the binary bipartite
//! graph. With every transition probability raised to `alpha`, the score is
//!
//! ```text
//! score(u, j) = sum_{i in profile(u)} sum_{v} p(u->i)^a p(i->v)^a p(v->j)^a / pop(j)^b
//! ```
//!
//! with `p(u->i) = 1/deg(u)`, `p(i->v) = 1/deg(i)` and `pop(j)` the training
//! interaction count of `j`. The model assembles the item-item similarity
//! (the two inner steps) once; per-user scoring then accumulates the rows of
//! the user's profile items. Summation order is fixed by index so results
//! are bit-stable.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{RecommenderModel, TrainMatrix};

#[derive(Debug, Clone)]
pub struct Rp3BetaModel {
    /// Sparse item-item similarity rows: `sim_rows[i]` holds ascending
    /// `(j, sum_v p(i->v)^a p(v->j)^a)` entries.
    sim_rows: Vec<Vec<(u32, f64)>>,
    /// `(1/deg(u))^alpha` per user.
    inv_user_deg_alpha: Vec<f64>,
    /// `deg(j)^(-beta)` per item.
    inv_pop_beta: Vec<f64>,
}

impl Rp3BetaModel {
    pub fn train(
        matrix: &TrainMatrix,
        alpha: f64,
        beta: f64,
        top_k_neighbors: Option<usize>,
    ) -> Result<Self> {
        if alpha < 0.0 || beta < 0.0 {
            return Err(Error::config("rp3beta exponents must be non-negative"));
        }
        if top_k_neighbors == Some(0) {
            return Err(Error::config("top_k_neighbors must be at least 1"));
        }
        let n_items = matrix.n_items();
        let inv_user_deg_alpha: Vec<f64> = (0..matrix.n_users() as u32)
            .map(|u| (1.0 / matrix.user_degree(u) as f64).powf(alpha))
            .collect();
        let inv_item_deg_alpha: Vec<f64> = (0..n_items as u32)
            .map(|i| (1.0 / matrix.item_degree(i) as f64).powf(alpha))
            .collect();
        let inv_pop_beta: Vec<f64> = (0..n_items as u32)
            .map(|i| (matrix.item_degree(i) as f64).powf(-beta))
            .collect();

        let sim_rows: Vec<Vec<(u32, f64)>> = (0..n_items as u32)
            .into_par_iter()
            .map_init(
                || vec![0.0f64; n_items],
                |acc, i| {
                    acc.iter_mut().for_each(|v| *v = 0.0);
                    for &v in matrix.users_of(i) {
                        let w = inv_user_deg_alpha[v as usize];
                        for &j in matrix.items_of(v) {
                            acc[j as usize] += w;
                        }
                    }
                    let scale = inv_item_deg_alpha[i as usize];
                    let mut row: Vec<(u32, f64)> = acc
                        .iter()
                        .enumerate()
                        .filter(|&(_, &v)| v > 0.0)
                        .map(|(j, &v)| (j as u32, v * scale))
                        .collect();
                    if let Some(k) = top_k_neighbors {
                        if row.len() > k {
                            row.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                            row.truncate(k);
                            row.sort_unstable_by_key(|&(j, _)| j);
                        }
                    }
                    row
                },
            )
            .collect();
        Ok(Self {
            sim_rows,
            inv_user_deg_alpha,
            inv_pop_beta,
        })
    }
}

impl RecommenderModel for Rp3BetaModel {
    fn name(&self) -> &'static str {
        "rp3beta"
    }

    fn score_user(&self, matrix: &TrainMatrix, user: u32, scores: &mut [f64]) {
        for &i in matrix.items_of(user) {
            for &(j, w) in &self.sim_rows[i as usize] {
                scores[j as usize] += w;
            }
        }
        let user_factor = self.inv_user_deg_alpha[user as usize];
        for (j, slot) in scores.iter_mut().enumerate() {
            *slot *= user_factor * self.inv_pop_beta[j];
        }
    }
}

/// Dense brute-force oracle: enumerates every three-step path explicitly.
/// Kept public for the acceptance suite; quadratic in the catalog, only for
/// small instances.
pub fn brute_force_scores(matrix: &TrainMatrix, alpha: f64, beta: f64) -> Vec<Vec<f64>> {
    let n_users = matrix.n_users();
    let n_items = matrix.n_items();
    let mut scores = vec![vec![0.0f64; n_items]; n_users];
    for u in 0..n_users as u32 {
        let p_u = (1.0 / matrix.user_degree(u) as f64).powf(alpha);
        for &i in matrix.items_of(u) {
            let p_i = (1.0 / matrix.item_degree(i) as f64).powf(alpha);
            for &v in matrix.users_of(i) {
                let p_v = (1.0 / matrix.user_degree(v) as f64).powf(alpha);
                for &j in matrix.items_of(v) {
                    scores[u as usize][j as usize] += p_u * p_i * p_v;
                }
            }
        }
        for j in 0..n_items as u32 {
            scores[u as usize][j as usize] /= (matrix.item_degree(j) as f64).powf(beta);
        }
    }
    scores
}
