use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::ClusteringError;
use crate::providers::EmbeddingVector;

/// A dimensionality-reduction stage applied before clustering.
pub trait Reducer: Send + Sync {
    fn name(&self) -> &'static str;
    /// Map an N×D data matrix to N×D′.
    fn reduce(&self, data: &DMatrix<f64>) -> DMatrix<f64>;
}

/// Principal component projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pca {
    pub target_dim: usize,
}

impl Reducer for Pca {
    fn name(&self) -> &'static str {
        "pca"
    }

    fn reduce(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        if data.ncols() <= self.target_dim {
            return center(data).0;
        }
        fit_pca(data, self.target_dim).transform(data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub mean: DVector<f64>,
    /// r×D, one principal direction per row, strongest first.
    pub components: DMatrix<f64>,
    /// All singular values of the centered data, descending.
    pub singular_values: Vec<f64>,
}

impl PcaFit {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// Share of total variance captured by each retained component.
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        self.singular_values[..self.n_components()]
            .iter()
            .map(|s| if total > 0.0 { s * s / total } else { 0.0 })
            .collect()
    }

    pub fn transform(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        centered * self.components.transpose()
    }
}

fn center(data: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = data.nrows().max(1) as f64;
    let mean = DVector::from_fn(data.ncols(), |j, _| data.column(j).iter().sum::<f64>() / n);
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    (centered, mean)
}

/// Fit the top `min(target_dim, D, N-1)` principal directions. Each
/// direction's largest-magnitude loading is made positive.
///
/// Uses a symmetric eigendecomposition of the smaller of the Gram and
/// scatter matrices; nalgebra's SVD is inaccurate on rank-deficient input.
pub fn fit_pca(data: &DMatrix<f64>, target_dim: usize) -> PcaFit {
    let (n, d) = data.shape();
    let (centered, mean) = center(data);
    let gram_side = n < d;
    let small = if gram_side {
        &centered * centered.transpose()
    } else {
        centered.transpose() * &centered
    };
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let singular_values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let r = target_dim.min(d).min(n.saturating_sub(1)).max(1).min(order.len());
    let floor = singular_values.first().copied().unwrap_or(0.0) * 1e-12;

    let mut components = DMatrix::zeros(r, d);
    for (out, &src) in order[..r].iter().enumerate() {
        let s = singular_values[out];
        if s <= floor {
            // Direction carries no variance; leave it at zero.
            continue;
        }
        let v = eig.eigenvectors.column(src);
        let mut row = if gram_side {
            (centered.transpose() * v / s).transpose()
        } else {
            v.transpose().into_owned()
        };
        let mut pivot = 0;
        for j in 1..d {
            if row[j].abs() > row[pivot].abs() {
                pivot = j;
            }
        }
        if row[pivot] < 0.0 {
            row = -row;
        }
        components.set_row(out, &row);
    }
    PcaFit {
        mean,
        components,
        singular_values,
    }
}

/// Stack embeddings into an N×D matrix, checking for a common dimension.
pub fn embedding_matrix(embeddings: &[EmbeddingVector]) -> Result<DMatrix<f64>, ClusteringError> {
    let d = embeddings.first().map_or(0, EmbeddingVector::dim);
    if let Some(bad) = embeddings.iter().position(|e| e.dim() != d) {
        return Err(ClusteringError::InvalidInput(format!(
            "embedding {bad} has dimension {}, expected {d}",
            embeddings[bad].dim()
        )));
    }
    if embeddings.iter().any(|e| e.values().iter().any(|v| !v.is_finite())) {
        return Err(ClusteringError::InvalidInput("non-finite embedding value".into()));
    }
    Ok(DMatrix::from_fn(embeddings.len(), d, |i, j| embeddings[i].values()[j]))
}

/// PCA reduction of raw embeddings to at most `target_dim` dimensions.
pub fn reduce(embeddings: &[EmbeddingVector], target_dim: usize) -> Result<DMatrix<f64>, ClusteringError> {
    if embeddings.is_empty() {
        return Err(ClusteringError::InvalidInput("no embeddings to reduce".into()));
    }
    Ok(Pca { target_dim }.reduce(&embedding_matrix(embeddings)?))
}
