//! Soft semantic clustering of unit embeddings.
//!
//! Embeddings are reduced (PCA by default), then a full-covariance Gaussian
//! mixture is fitted for increasing K and the smallest K whose BIC gain is
//! not negligible is kept. Hard k-means is available for comparison.

mod gmm;
mod kmeans;
mod reduce;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use gmm::{bic, bic_value, fit_gmm, GmmFit, GmmParams};
pub use kmeans::{kmeans_fit, kmeans_hard, kmeanspp_indices, kmeanspp_init, KMeansFit};
pub use reduce::{embedding_matrix, fit_pca, reduce, Pca, PcaFit, Reducer};

use crate::error::ClusteringError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub k_limit: usize,
    pub bic_epsilon: f64,
    pub cov_reg: f64,
    /// Stop when the mean per-point log-likelihood gain falls below this.
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub n_init: usize,
    pub seed: u64,
    pub target_dim: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k_limit: 15,
            bic_epsilon: 0.01,
            cov_reg: 1e-5,
            em_tol: 1e-4,
            em_max_iter: 200,
            n_init: 3,
            seed: 0,
            target_dim: 32,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k_limit < 2 {
            return Err(format!("k_limit must be at least 2, got {}", self.k_limit));
        }
        for (name, v) in [
            ("bic_epsilon", self.bic_epsilon),
            ("cov_reg", self.cov_reg),
            ("em_tol", self.em_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.em_max_iter == 0 || self.n_init == 0 || self.target_dim == 0 {
            return Err("em_max_iter, n_init and target_dim must be positive".into());
        }
        Ok(())
    }

    /// Largest K tried for `n` points.
    pub fn k_max(&self, n: usize) -> usize {
        let density = (n / 3).max(2);
        let log = n.max(1).ilog2() as usize + 1;
        self.k_limit.min(density).min(log)
    }
}

/// N×K soft membership matrix; each row is a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    gamma: DMatrix<f64>,
}

impl Responsibilities {
    pub fn from_matrix(gamma: DMatrix<f64>) -> Self {
        Self { gamma }
    }

    /// Validate rows: entries in [0, 1], each row summing to 1 within 1e-9.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ClusteringError> {
        let k = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(ClusteringError::InvalidInput(format!("row {i} has {} entries, expected {k}", r.len())));
            }
            if r.iter().any(|v| !(0.0..=1.0).contains(v)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(ClusteringError::InvalidInput(format!("row {i} is not a probability vector")));
            }
        }
        Ok(Self {
            gamma: DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]),
        })
    }

    pub fn one_hot(assignments: &[usize], k: usize) -> Self {
        let mut gamma = DMatrix::zeros(assignments.len(), k);
        for (i, &a) in assignments.iter().enumerate() {
            gamma[(i, a)] = 1.0;
        }
        Self { gamma }
    }

    /// Everything in a single cluster.
    pub fn single(n: usize) -> Self {
        Self {
            gamma: DMatrix::from_element(n, 1, 1.0),
        }
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn k(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.gamma.row(i).iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// Restrict to the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            gamma: self.gamma.select_rows(rows),
        }
    }
}

/// The chosen mixture plus the search trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub k: usize,
    /// `None` for the trivial single-cluster case.
    pub params: Option<GmmParams>,
    pub responsibilities: Responsibilities,
    /// `(K, BIC)` for every K fitted, in search order.
    pub bic_trace: Vec<(usize, f64)>,
    /// EM log-likelihood trace of the chosen model.
    pub ll_trace: Vec<f64>,
}

/// Search K = 2..K_max, keeping a larger K only while it improves BIC by
/// more than `bic_epsilon` of the previous value. N <= 2 is a single cluster.
pub fn select_k(data: &DMatrix<f64>, config: &ClusteringConfig) -> Result<Selection, ClusteringError> {
    let n = data.nrows();
    if n == 0 {
        return Err(ClusteringError::InvalidInput("no points to cluster".into()));
    }
    if n <= 2 {
        return Ok(Selection {
            k: 1,
            params: None,
            responsibilities: Responsibilities::single(n),
            bic_trace: Vec::new(),
            ll_trace: Vec::new(),
        });
    }
    let k_max = config.k_max(n);
    let mut best = fit_gmm(data, 2, config)?;
    let mut last = bic(&best.params, data, best.log_likelihood);
    let mut trace = vec![(2, last)];
    for k in 3..=k_max {
        let fit = fit_gmm(data, k, config)?;
        let current = bic(&fit.params, data, fit.log_likelihood);
        trace.push((k, current));
        if current < last - config.bic_epsilon * last.abs() {
            best = fit;
            last = current;
        } else {
            break;
        }
    }
    Ok(Selection {
        k: best.params.k(),
        params: Some(best.params),
        responsibilities: best.responsibilities,
        bic_trace: trace,
        ll_trace: best.ll_trace,
    })
}

/// Per-prompt clustering dump for debugging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDebug {
    pub unit_ids: Vec<String>,
    pub reduced: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub k: usize,
    pub bic_trace: Vec<(usize, f64)>,
    pub ll_trace: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn three_blobs(seed: u64, per: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let mut v = Vec::new();
        for (cx, cy) in centers {
            for _ in 0..per {
                let dx: f64 = StandardNormal.sample(&mut rng);
                let dy: f64 = StandardNormal.sample(&mut rng);
                v.extend_from_slice(&[cx + dx, cy + dy]);
            }
        }
        DMatrix::from_row_slice(3 * per, 2, &v)
    }

    #[test]
    fn k_max_heuristic() {
        let c = ClusteringConfig::default();
        assert_eq!(c.k_max(10), 3);
        assert_eq!(c.k_max(180), 8);
        assert_eq!(c.k_max(3), 2);
        assert_eq!(c.k_max(100_000), 15);
    }

    #[test]
    fn two_points_are_one_cluster() {
        let data = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let s = select_k(&data, &ClusteringConfig::default()).unwrap();
        assert_eq!(s.k, 1);
        assert_eq!(s.responsibilities.to_rows(), vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn three_blobs_select_three() {
        let data = three_blobs(7, 60);
        let s = select_k(&data, &ClusteringConfig::default()).unwrap();
        assert_eq!(s.k, 3);
        assert_eq!(s.bic_trace.len(), 3);
    }

    #[test]
    fn select_k_is_deterministic() {
        let data = three_blobs(1, 20);
        let cfg = ClusteringConfig { seed: 9, ..Default::default() };
        assert_eq!(select_k(&data, &cfg).unwrap(), select_k(&data, &cfg).unwrap());
    }

    #[test]
    fn from_rows_rejects_non_simplex() {
        assert!(Responsibilities::from_rows(&[vec![0.5, 0.6]]).is_err());
        assert!(Responsibilities::from_rows(&[vec![0.5, 0.5], vec![1.0]]).is_err());
        assert!(Responsibilities::from_rows(&[vec![0.25, 0.75]]).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn em_invariants(seed in 0u64..1000, k in 1usize..5) {
            let data = three_blobs(seed, 8);
            let cfg = ClusteringConfig { seed, ..Default::default() };
            let fit = fit_gmm(&data, k, &cfg).unwrap();
            for i in 1..fit.ll_trace.len() {
                if !fit.reseeded_at.contains(&i) {
                    prop_assert!(fit.ll_trace[i] >= fit.ll_trace[i - 1] - 1e-8, "LL decreased at {}", i);
                }
            }
            for row in fit.responsibilities.to_rows() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            }
            prop_assert!((fit.params.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for cov in &fit.params.covariances {
                prop_assert!(nalgebra::Cholesky::new(cov.clone()).is_some());
                let min_eig = cov.clone().symmetric_eigenvalues().min();
                prop_assert!(min_eig >= cfg.cov_reg * (1.0 - 1e-6));
            }
        }
    }
}
