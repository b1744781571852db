use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{channel_points, Embedding, Method, MethodParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PcaParams {
    /// Emit a zero second column instead of failing on rank-1 data.
    #[serde(default)]
    pub allow_rank_deficient: bool,
}

/// Relative eigenvalue floor below which the covariance counts as rank-deficient.
const RANK_TOL: f64 = 1e-10;

/// `R × R` covariance between channels, treating channels as observations in
/// `R^T`: each time coordinate is centred across channels, `X_c X_cᵀ / (R − 1)`.
pub fn channel_covariance(signal: ArrayView2<f64>) -> Array2<f64> {
    let mut x = channel_points(signal);
    let r = x.nrows();
    let mean = x.mean_axis(ndarray::Axis(0)).expect("non-empty");
    for mut row in x.rows_mut() {
        row -= &mean;
    }
    let mut cov = x.dot(&x.t());
    cov /= (r as f64 - 1.0).max(1.0);
    cov
}

pub fn pca_embed(signal: ArrayView2<f64>) -> Result<Embedding> {
    pca_embed_with(signal, PcaParams::default())
}

/// Projects the channels onto the top two principal axes.
///
/// The score vector of component `k` is `sqrt((R − 1) λ_k) e_k` where `e_k` is
/// the unit eigenvector of the channel covariance, so its sample variance is
/// exactly `λ_k`. Each component is oriented so its largest-magnitude entry is
/// positive (first index wins ties).
pub fn pca_embed_with(signal: ArrayView2<f64>, params: PcaParams) -> Result<Embedding> {
    let r = signal.ncols();
    if r < 3 {
        return Err(Error::InvalidParameter(format!("PCA needs at least 3 channels, got {r}")));
    }
    let cov = channel_covariance(signal);
    let m = DMatrix::from_fn(r, r, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let l1 = eig.eigenvalues[order[0]].max(0.0);
    let l2 = eig.eigenvalues[order[1]].max(0.0);
    let deficient = l1 <= 0.0 || l2 <= RANK_TOL * l1;
    if deficient && !params.allow_rank_deficient {
        return Err(Error::RankDeficient(l2));
    }
    let mut coords = Array2::zeros((r, 2));
    for (k, &idx) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        if k == 1 && deficient {
            break;
        }
        let v = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for i in 1..r {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * ((r as f64 - 1.0) * lambda).sqrt();
        for i in 0..r {
            coords[[i, k]] = scale * v[i];
        }
    }
    Embedding::new(coords, Method::Pca, MethodParams::Pca(params), 0)
}
