use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::{kmeanspp_indices, nearest};
use super::{ClusteringConfig, Responsibilities};
use crate::error::ClusteringError;

/// Mixture weights, means and full covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

impl GmmParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    /// Free parameters of a full-covariance mixture.
    pub fn n_parameters(&self) -> usize {
        let (k, d) = (self.k(), self.dim());
        (k - 1) + k * d + k * d * (d + 1) / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub params: GmmParams,
    pub responsibilities: Responsibilities,
    pub log_likelihood: f64,
    /// Total log-likelihood after each E-step of the winning restart.
    pub ll_trace: Vec<f64>,
    /// Trace indices whose preceding M-step re-seeded an empty component.
    pub reseeded_at: Vec<usize>,
    pub converged: bool,
}

struct EStep {
    gamma: DMatrix<f64>,
    point_ll: Vec<f64>,
    total: f64,
}

fn e_step(data: &DMatrix<f64>, params: &GmmParams, iteration: usize) -> Result<EStep, ClusteringError> {
    let (n, d) = data.shape();
    let k = params.k();
    let mut log_p = DMatrix::zeros(n, k);
    for c in 0..k {
        let chol = Cholesky::new(params.covariances[c].clone())
            .ok_or(ClusteringError::NotPositiveDefinite { component: c })?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mut diff = data.transpose();
        for mut col in diff.column_iter_mut() {
            col -= &params.means[c];
        }
        let z = l
            .solve_lower_triangular(&diff)
            .ok_or(ClusteringError::NotPositiveDefinite { component: c })?;
        let log_w = params.weights[c].ln();
        let norm = d as f64 * (2.0 * PI).ln() + log_det;
        for i in 0..n {
            log_p[(i, c)] = log_w - 0.5 * (norm + z.column(i).norm_squared());
        }
    }
    let mut gamma = DMatrix::zeros(n, k);
    let mut point_ll = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        let row = log_p.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(ClusteringError::NonFinite { iteration, k });
        }
        let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + s.ln();
        for c in 0..k {
            gamma[(i, c)] = (log_p[(i, c)] - lse).exp();
        }
        point_ll.push(lse);
        total += lse;
    }
    if !total.is_finite() {
        return Err(ClusteringError::NonFinite { iteration, k });
    }
    Ok(EStep { gamma, point_ll, total })
}

fn covariance(data: &DMatrix<f64>, weights: &[f64], mean: &DVector<f64>, mass: f64, reg: f64) -> DMatrix<f64> {
    let d = data.ncols();
    let mut cov = DMatrix::zeros(d, d);
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let x = data.row(i).transpose() - mean;
        cov += w * &x * x.transpose();
    }
    cov /= mass;
    cov = (&cov + cov.transpose()) * 0.5;
    for j in 0..d {
        cov[(j, j)] += reg;
    }
    cov
}

/// M-step. A component with mass below 1e-10 is re-seeded at the
/// not-yet-used point ranked lowest by `point_ll`.
fn m_step(data: &DMatrix<f64>, gamma: &DMatrix<f64>, point_ll: &[f64], reg: f64) -> (GmmParams, bool) {
    let (n, d) = data.shape();
    let k = gamma.ncols();
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| point_ll[a].total_cmp(&point_ll[b]).then(a.cmp(&b)));
    let mut reseeds = ranked.into_iter();
    let mut reseeded = false;
    for c in 0..k {
        let col: Vec<f64> = gamma.column(c).iter().copied().collect();
        let mass: f64 = col.iter().sum();
        if mass < 1e-10 {
            let at = reseeds.next().unwrap_or(0);
            let all = vec![1.0; n];
            let global_mean = DVector::from_fn(d, |j, _| data.column(j).sum() / n as f64);
            log::debug!("re-seeding empty component {c} at point {at}");
            reseeded = true;
            weights.push(1.0 / n as f64);
            means.push(data.row(at).transpose());
            covariances.push(covariance(data, &all, &global_mean, n as f64, reg));
            continue;
        }
        let mut mean = DVector::zeros(d);
        for (i, &w) in col.iter().enumerate() {
            mean += w * data.row(i).transpose();
        }
        mean /= mass;
        covariances.push(covariance(data, &col, &mean, mass, reg));
        means.push(mean);
        weights.push(mass / n as f64);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (
        GmmParams {
            weights,
            means,
            covariances,
        },
        reseeded,
    )
}

fn fit_once(
    data: &DMatrix<f64>,
    k: usize,
    config: &ClusteringConfig,
    rng: &mut ChaCha8Rng,
) -> Result<GmmFit, ClusteringError> {
    let n = data.nrows();
    let seeds = kmeanspp_indices(data, k, rng);
    let centers: Vec<Vec<f64>> = seeds.iter().map(|&i| data.row(i).iter().copied().collect()).collect();
    let mut init = DMatrix::zeros(n, k);
    let mut closeness = Vec::with_capacity(n);
    for i in 0..n {
        let (c, dist) = nearest(data, i, &centers);
        init[(i, c)] = 1.0;
        closeness.push(-dist);
    }
    let (mut params, _) = m_step(data, &init, &closeness, config.cov_reg);

    // The regularized M-step is not an exact likelihood maximizer, so a
    // step can lose a little likelihood near convergence. Such a step ends
    // the run and is discarded, unless it re-seeded an empty component.
    let mut trace = Vec::new();
    let mut reseeded_at = Vec::new();
    let mut just_reseeded = false;
    let mut accepted: Option<(GmmParams, EStep)> = None;
    let mut iteration = 0;
    let converged = loop {
        let e = e_step(data, &params, iteration)?;
        if let Some((_, prev)) = &accepted {
            let gain = (e.total - prev.total) / n as f64;
            if gain < 0.0 && !just_reseeded {
                break true;
            }
            if just_reseeded {
                reseeded_at.push(trace.len());
            }
            trace.push(e.total);
            accepted = Some((params.clone(), e));
            if gain < config.em_tol && !just_reseeded {
                break true;
            }
        } else {
            trace.push(e.total);
            accepted = Some((params.clone(), e));
        }
        iteration += 1;
        if iteration >= config.em_max_iter {
            break false;
        }
        let (_, last) = accepted.as_ref().expect("set above");
        let (next, reseeded) = m_step(data, &last.gamma, &last.point_ll, config.cov_reg);
        params = next;
        just_reseeded = reseeded;
    };
    let (params, e) = accepted.expect("at least one E-step");
    Ok(GmmFit {
        params,
        responsibilities: Responsibilities::from_matrix(e.gamma),
        log_likelihood: e.total,
        ll_trace: trace,
        reseeded_at,
        converged,
    })
}

/// Full-covariance EM, best of `n_init` k-means++ restarts by final
/// log-likelihood. Seeded from `config.seed` and `k`.
pub fn fit_gmm(data: &DMatrix<f64>, k: usize, config: &ClusteringConfig) -> Result<GmmFit, ClusteringError> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(ClusteringError::InvalidInput(format!("K={k} with N={n}")));
    }
    if data.ncols() == 0 {
        return Err(ClusteringError::InvalidInput("zero-dimensional data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(k as u64);
    let mut best: Option<GmmFit> = None;
    for _ in 0..config.n_init.max(1) {
        let fit = fit_once(data, k, config, &mut rng)?;
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// `p ln N - 2 LL` with full-covariance parameter counting.
pub fn bic(params: &GmmParams, data: &DMatrix<f64>, log_likelihood: f64) -> f64 {
    bic_value(params.n_parameters(), data.nrows(), log_likelihood)
}

pub fn bic_value(n_parameters: usize, n: usize, log_likelihood: f64) -> f64 {
    n_parameters as f64 * (n as f64).ln() - 2.0 * log_likelihood
}
