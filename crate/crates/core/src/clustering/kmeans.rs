use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Responsibilities;

pub(crate) fn sq_dist(data: &DMatrix<f64>, i: usize, center: &[f64]) -> f64 {
    data.row(i)
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Index of the nearest center; ties go to the lower index.
pub(crate) fn nearest(data: &DMatrix<f64>, i: usize, centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(data, i, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding driven by `rng`. Returns the chosen row indices.
pub fn kmeanspp_indices(data: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.nrows();
    assert!(k >= 1 && k <= n, "k-means++ needs 1 <= K <= N (K={k}, N={n})");
    let mut chosen = vec![rng.random_range(0..n)];
    let row = |i: usize| data.row(i).iter().copied().collect::<Vec<f64>>();
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data, i, &row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total has a positive weight")
        } else {
            // Every remaining point coincides with a center.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        let c = row(next);
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(data, i, &c));
        }
    }
    chosen
}

/// k-means++ initial means for `k` clusters, fully determined by `seed`.
pub fn kmeanspp_init(data: &DMatrix<f64>, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kmeanspp_indices(data, k, &mut rng)
        .into_iter()
        .map(|i| data.row(i).iter().copied().collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

/// Lloyd's algorithm from k-means++ seeding, until the assignment stops
/// changing or 200 iterations. An emptied cluster keeps its old center.
pub fn kmeans_fit(data: &DMatrix<f64>, k: usize, seed: u64) -> KMeansFit {
    let (n, d) = data.shape();
    let mut centers = kmeanspp_init(data, k, seed);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..200 {
        iterations += 1;
        let next: Vec<usize> = (0..n).map(|i| nearest(data, i, &centers).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(data.row(i).iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    KMeansFit {
        centers,
        assignments,
        iterations,
    }
}

/// Hard k-means responsibilities (one-hot rows).
pub fn kmeans_hard(data: &DMatrix<f64>, k: usize, seed: u64) -> Responsibilities {
    let fit = kmeans_fit(data, k, seed);
    Responsibilities::one_hot(&fit.assignments, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            6,
            2,
            &[0.0, 0.0, 0.1, 0.0, 5.0, 5.0, 5.1, 5.0, 10.0, 0.0, 10.0, 0.1],
        )
    }

    #[test]
    fn k_equals_n_picks_every_point_once() {
        let data = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut idx = kmeanspp_indices(&data, 6, &mut rng);
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn duplicate_points_give_equal_centers() {
        let data = DMatrix::from_element(4, 3, 2.5);
        let centers = kmeanspp_init(&data, 3, 11);
        assert!(centers.iter().all(|c| c == &vec![2.5; 3]));
    }

    #[test]
    fn golden_indices_are_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let first = kmeanspp_indices(&fixture(), 3, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        assert_eq!(first, kmeanspp_indices(&fixture(), 3, &mut rng));
        assert_eq!(first, GOLDEN_SEED42_K3);
        // One center per well-separated pair.
        let mut groups: Vec<usize> = first.iter().map(|i| i / 2).collect();
        groups.sort();
        assert_eq!(groups, vec![0, 1, 2]);
    }

    const GOLDEN_SEED42_K3: [usize; 3] = [1, 2, 5];

    #[test]
    fn single_cluster_takes_everything() {
        let g = kmeans_hard(&fixture(), 1, 0);
        assert!(g.to_rows().iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn separated_blobs_match_nearest_center_oracle() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.extend_from_slice(&[(i as f64) * 0.01, 0.0]);
        }
        for i in 0..10 {
            rows.extend_from_slice(&[20.0 + (i as f64) * 0.01, 0.0]);
        }
        let data = DMatrix::from_row_slice(20, 2, &rows);
        let fit = kmeans_fit(&data, 2, 5);
        for i in 0..20 {
            assert_eq!(fit.assignments[i], nearest(&data, i, &fit.centers).0);
            assert_eq!(fit.assignments[i], fit.assignments[if i < 10 { 0 } else { 10 }]);
        }
        assert_ne!(fit.assignments[0], fit.assignments[10]);
        let g = kmeans_hard(&data, 2, 5);
        for row in g.to_rows() {
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }
}
