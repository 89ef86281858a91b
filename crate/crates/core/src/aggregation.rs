//! Theme-weighted aggregation of unit uncertainties into one score.
//!
//! `literal` follows the printed mass, cluster-uncertainty and weight
//! definitions over anchor units only; it always collapses to the mean of
//! the unit uncertainties. `global` takes cluster mass over every clustered
//! unit (anchor and reference) while cluster uncertainty stays anchor-only,
//! so clustering actually moves the score.

use serde::{Deserialize, Serialize};

use crate::clustering::Responsibilities;
use crate::error::Error;

/// Clusters with less anchor mass than this are excluded in global mode.
pub const MASS_FLOOR: f64 = 1e-6;
/// Clusters with less mass than this are dropped in literal mode.
pub const LITERAL_MASS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Literal,
    #[default]
    Global,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub mass: f64,
    /// Absent when the cluster holds too little anchor mass.
    pub uncertainty: Option<f64>,
    /// Zero for excluded clusters.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalScore {
    pub u_final: f64,
    pub mode: AggregationMode,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub score: FinalScore,
    pub clusters: Vec<ClusterSummary>,
}

fn check_rows(gamma: &Responsibilities, rows: usize) -> Result<(), Error> {
    if gamma.n() != rows {
        return Err(Error::InvalidInput(format!(
            "{} responsibility rows for {rows} units",
            gamma.n()
        )));
    }
    Ok(())
}

fn check_uncertainties(u: &[f64]) -> Result<(), Error> {
    if u.is_empty() {
        return Err(Error::InvalidInput("no anchor units to aggregate".into()));
    }
    if let Some(bad) = u.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!("unit uncertainty {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Weighted sum over retained clusters given per-cluster
/// `(mass, anchor mass, anchor-weighted uncertainty sum)`.
fn combine(stats: &[(f64, f64, f64)], floor: f64, floor_on_anchor: bool, mode: AggregationMode) -> Result<Aggregation, Error> {
    let retained: Vec<bool> = stats
        .iter()
        .map(|&(mass, anchor, _)| if floor_on_anchor { anchor >= floor } else { mass >= floor })
        .collect();
    let total: f64 = stats
        .iter()
        .zip(&retained)
        .filter(|(_, &r)| r)
        .map(|(s, _)| s.0)
        .sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("no cluster retains anchor mass".into()));
    }
    let mut u_final = 0.0;
    let clusters = stats
        .iter()
        .zip(&retained)
        .enumerate()
        .map(|(k, (&(mass, anchor, weighted), &keep))| {
            if !keep || anchor <= 0.0 {
                return ClusterSummary {
                    k,
                    mass,
                    uncertainty: None,
                    weight: 0.0,
                };
            }
            let weight = mass / total;
            let uncertainty = weighted / anchor;
            u_final += weight * uncertainty;
            ClusterSummary {
                k,
                mass,
                uncertainty: Some(uncertainty),
                weight,
            }
        })
        .collect();
    Ok(Aggregation {
        score: FinalScore {
            u_final: u_final.clamp(0.0, 1.0),
            mode,
            fallback_used: false,
        },
        clusters,
    })
}

/// Mass, cluster uncertainty and weights over anchor units only.
pub fn aggregate_literal(gamma_anchor: &Responsibilities, u: &[f64]) -> Result<Aggregation, Error> {
    check_uncertainties(u)?;
    check_rows(gamma_anchor, u.len())?;
    let g = gamma_anchor.gamma();
    let stats: Vec<(f64, f64, f64)> = (0..g.ncols())
        .map(|k| {
            let mut mass = 0.0;
            let mut weighted = 0.0;
            for (h, &uh) in u.iter().enumerate() {
                mass += g[(h, k)];
                weighted += g[(h, k)] * uh;
            }
            (mass, mass, weighted)
        })
        .collect();
    combine(&stats, LITERAL_MASS_FLOOR, false, AggregationMode::Literal)
}

/// Cluster mass over all clustered units; cluster uncertainty over the
/// anchor rows (`anchor_mask`), whose uncertainties are `u` in row order.
pub fn aggregate_global(gamma_all: &Responsibilities, anchor_mask: &[bool], u: &[f64]) -> Result<Aggregation, Error> {
    check_uncertainties(u)?;
    check_rows(gamma_all, anchor_mask.len())?;
    let anchors = anchor_mask.iter().filter(|&&a| a).count();
    if anchors != u.len() {
        return Err(Error::InvalidInput(format!(
            "{anchors} anchor rows for {} uncertainties",
            u.len()
        )));
    }
    let g = gamma_all.gamma();
    let stats: Vec<(f64, f64, f64)> = (0..g.ncols())
        .map(|k| {
            let mut mass = 0.0;
            let mut anchor = 0.0;
            let mut weighted = 0.0;
            let mut next_u = u.iter();
            for (row, &is_anchor) in anchor_mask.iter().enumerate() {
                let gk = g[(row, k)];
                mass += gk;
                if is_anchor {
                    let uh = next_u.next().expect("counted above");
                    anchor += gk;
                    weighted += gk * uh;
                }
            }
            (mass, anchor, weighted)
        })
        .collect();
    combine(&stats, MASS_FLOOR, true, AggregationMode::Global)
}

/// Unweighted mean over anchor units.
pub fn aggregate_uniform(u: &[f64]) -> Result<Aggregation, Error> {
    check_uncertainties(u)?;
    Ok(Aggregation {
        score: FinalScore {
            u_final: mean(u).clamp(0.0, 1.0),
            mode: AggregationMode::Uniform,
            fallback_used: false,
        },
        clusters: Vec::new(),
    })
}

/// Score for an anchor whose every sentence was skipped: the mean of the
/// sentence-level uncertainties.
pub fn all_skip_fallback(sentence_u: &[f64], mode: AggregationMode) -> Result<FinalScore, Error> {
    if sentence_u.is_empty() {
        return Err(Error::InvalidInput("anchor has no sentences".into()));
    }
    Ok(FinalScore {
        u_final: mean(sentence_u).clamp(0.0, 1.0),
        mode,
        fallback_used: true,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rows(r: &[&[f64]]) -> Responsibilities {
        Responsibilities::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn literal_collapses_to_mean() {
        let g = rows(&[&[0.9, 0.1], &[0.2, 0.8]]);
        let a = aggregate_literal(&g, &[0.2, 0.6]).unwrap();
        assert_abs_diff_eq!(a.score.u_final, 0.4, epsilon = 1e-12);
        let single = aggregate_literal(&rows(&[&[1.0]]), &[0.7]).unwrap();
        assert_abs_diff_eq!(single.score.u_final, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn global_hand_example() {
        let g = rows(&[&[0.9, 0.1], &[0.2, 0.8], &[1.0, 0.0], &[0.9, 0.1], &[0.8, 0.2]]);
        let mask = [true, true, false, false, false];
        let a = aggregate_global(&g, &mask, &[0.2, 0.6]).unwrap();
        assert_abs_diff_eq!(a.clusters[0].mass, 3.8, epsilon = 1e-12);
        assert_abs_diff_eq!(a.clusters[1].mass, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(a.clusters[0].weight, 0.76, epsilon = 1e-12);
        assert_abs_diff_eq!(a.clusters[1].weight, 0.24, epsilon = 1e-12);
        assert_abs_diff_eq!(a.clusters[0].uncertainty.unwrap(), 0.3 / 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(a.clusters[1].uncertainty.unwrap(), 0.5 / 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(a.score.u_final, 0.3406, epsilon = 5e-5);
    }

    #[test]
    fn global_with_uniform_references_is_mean() {
        let g = rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5], &[0.5, 0.5]]);
        let a = aggregate_global(&g, &[true, true, false, false], &[0.1, 0.5]).unwrap();
        assert_abs_diff_eq!(a.score.u_final, 0.3, epsilon = 1e-12);
        let one = aggregate_global(&rows(&[&[1.0], &[1.0], &[1.0]]), &[true, false, true], &[0.2, 0.4]).unwrap();
        assert_abs_diff_eq!(one.score.u_final, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn global_excludes_clusters_without_anchor_mass() {
        let g = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let a = aggregate_global(&g, &[true, false], &[0.8]).unwrap();
        assert_eq!(a.clusters[1].weight, 0.0);
        assert_eq!(a.clusters[1].uncertainty, None);
        assert_abs_diff_eq!(a.score.u_final, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn uniform_and_fallback() {
        assert_eq!(aggregate_uniform(&[0.0, 1.0]).unwrap().score.u_final, 0.5);
        assert_eq!(aggregate_uniform(&[0.25]).unwrap().score.u_final, 0.25);
        assert!(aggregate_uniform(&[]).is_err());
        let f = all_skip_fallback(&[0.4, 0.6], AggregationMode::Global).unwrap();
        assert_abs_diff_eq!(f.u_final, 0.5, epsilon = 1e-15);
        assert!(f.fallback_used);
        assert!(all_skip_fallback(&[], AggregationMode::Global).is_err());
    }

    fn simplex_rows(n: usize, k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(0.001..1.0f64, k), n).prop_map(|rows| {
            rows.into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    let mut r: Vec<f64> = r.iter().map(|v| v / s).collect();
                    // Absorb rounding so the row sums to one.
                    let rest: f64 = r[1..].iter().sum();
                    r[0] = 1.0 - rest;
                    r
                })
                .collect()
        })
    }

    fn fixture() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<bool>)> {
        (1usize..8, 1usize..5, 0usize..6).prop_flat_map(|(n, k, refs)| {
            (
                simplex_rows(n + refs, k),
                proptest::collection::vec(0.0..=1.0f64, n),
                Just((0..n + refs).map(|i| i < n).collect::<Vec<bool>>()),
            )
        })
    }

    proptest! {
        #[test]
        fn literal_equals_mean((g, u, mask) in fixture()) {
            let anchor_rows: Vec<Vec<f64>> = g.iter().zip(&mask).filter(|(_, &m)| m).map(|(r, _)| r.clone()).collect();
            let a = aggregate_literal(&Responsibilities::from_rows(&anchor_rows).unwrap(), &u).unwrap();
            let mean = u.iter().sum::<f64>() / u.len() as f64;
            prop_assert!((a.score.u_final - mean).abs() < 1e-9);
            prop_assert_eq!(a.score.u_final, aggregate_literal(&Responsibilities::from_rows(&anchor_rows).unwrap(), &u).unwrap().score.u_final);
        }

        #[test]
        fn global_is_bounded_and_weights_are_simplex((g, u, mask) in fixture()) {
            let a = aggregate_global(&Responsibilities::from_rows(&g).unwrap(), &mask, &u).unwrap();
            prop_assert!((0.0..=1.0).contains(&a.score.u_final));
            let w: f64 = a.clusters.iter().map(|c| c.weight).sum();
            prop_assert!((w - 1.0).abs() < 1e-9);
        }

        #[test]
        fn global_is_monotone_in_each_unit((g, u, mask) in fixture(), pick in 0usize..8, bump in 0.0..1.0f64) {
            let gamma = Responsibilities::from_rows(&g).unwrap();
            let i = pick % u.len();
            let mut raised = u.clone();
            raised[i] = (raised[i] + bump).min(1.0);
            let lo = aggregate_global(&gamma, &mask, &u).unwrap().score.u_final;
            let hi = aggregate_global(&gamma, &mask, &raised).unwrap().score.u_final;
            prop_assert!(hi >= lo - 1e-12);
        }

        #[test]
        fn cluster_permutation_is_irrelevant((g, u, mask) in fixture()) {
            let reversed: Vec<Vec<f64>> = g.iter().map(|r| r.iter().rev().copied().collect()).collect();
            let a = aggregate_global(&Responsibilities::from_rows(&g).unwrap(), &mask, &u).unwrap();
            let b = aggregate_global(&Responsibilities::from_rows(&reversed).unwrap(), &mask, &u).unwrap();
            prop_assert!((a.score.u_final - b.score.u_final).abs() < 1e-12);
        }
    }
}
