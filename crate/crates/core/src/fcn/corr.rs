use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::BoldRecording;
use crate::error::{Error, Result};

/// Clipping margin applied before `atanh` so `|r| = 1` maps to a finite value.
pub const FISHER_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CorrKind {
    Pearson,
    FisherZ,
}

/// Symmetric `R × R` correlation-derived matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    pub values: Array2<f64>,
    pub kind: CorrKind,
}

impl CorrMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

pub fn pearson_matrix(rec: &BoldRecording) -> Result<CorrMatrix> {
    pearson_from_signal(rec.signal().view())
}

/// Sample Pearson correlation between every pair of columns of a `T × R` signal.
pub fn pearson_from_signal(signal: ArrayView2<f64>) -> Result<CorrMatrix> {
    let (t, r) = signal.dim();
    if t < 3 {
        return Err(Error::Shape(format!("need at least 3 time points, got {t}")));
    }
    // Unit-norm centred columns; their Gram matrix is the correlation matrix.
    let mut unit = signal.to_owned();
    for (c, mut col) in unit.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / t as f64;
        col.mapv_inplace(|v| v - mean);
        let norm = col.dot(&col).sqrt();
        if !(norm > 0.0) || norm < 1e-12 * (mean.abs() + 1.0) * (t as f64).sqrt() {
            return Err(Error::DegenerateChannel(format!("#{}", c + 1)));
        }
        col.mapv_inplace(|v| v / norm);
    }
    let mut values = unit.t().dot(&unit);
    for i in 0..r {
        values[[i, i]] = 1.0;
        for j in (i + 1)..r {
            let v = values[[i, j]].clamp(-1.0, 1.0);
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(CorrMatrix {
        values,
        kind: CorrKind::Pearson,
    })
}

/// Fisher z-transform of a Pearson matrix; the diagonal is stored as 0.
pub fn fisher_z(corr: &CorrMatrix) -> Result<CorrMatrix> {
    if corr.kind != CorrKind::Pearson {
        return Err(Error::InvalidParameter("fisher_z expects a Pearson matrix".into()));
    }
    let n = corr.len();
    let values = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            fisher_z_scalar(corr.values[[i, j]])
        }
    });
    Ok(CorrMatrix {
        values,
        kind: CorrKind::FisherZ,
    })
}

pub fn fisher_z_scalar(r: f64) -> f64 {
    // Evaluated on |r| so the result is exactly odd.
    r.signum() * r.abs().min(1.0 - FISHER_CLIP).atanh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_anticorrelation() {
        let s = array![[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]];
        let c = pearson_from_signal(s.view()).unwrap();
        assert!((c.values[[0, 1]] + 1.0).abs() < 1e-15);
        assert_eq!(c.values[[0, 0]], 1.0);
    }

    #[test]
    fn constant_channel() {
        let s = array![[1.0, 3.0], [2.0, 3.0], [3.0, 3.0]];
        assert!(matches!(pearson_from_signal(s.view()), Err(Error::DegenerateChannel(n)) if n == "#2"));
    }

    #[test]
    fn fisher_values() {
        assert_eq!(fisher_z_scalar(0.0), 0.0);
        assert_eq!(fisher_z_scalar(1.0), (1.0 - 1e-7f64).atanh());
        assert!(fisher_z_scalar(1.0).is_finite());
        let c = CorrMatrix {
            values: array![[1.0, 0.5], [0.5, 1.0]],
            kind: CorrKind::Pearson,
        };
        let z = fisher_z(&c).unwrap();
        assert_eq!(z.values[[0, 0]], 0.0);
        assert!(fisher_z(&z).is_err());
    }
}
