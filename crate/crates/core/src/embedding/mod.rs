//! Two-dimensional embeddings of channels.
//!
//! Each channel's `T`-length signal is one point in `R^T`; the three methods
//! below place the `R` points in the plane.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::RoiAtlas;
use crate::error::{Error, Result};

pub mod pca;
pub mod tsne;
pub mod umap;

pub use pca::{pca_embed, pca_embed_with, PcaParams};
pub use tsne::{tsne_embed, tsne_run, TsneParams, TsneRun};
pub use umap::{umap_embed, umap_run, UmapParams, UmapRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Pca,
    Tsne,
    Umap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodParams {
    Pca(PcaParams),
    Tsne(TsneParams),
    Umap(UmapParams),
}

/// `R × 2` latent coordinates, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Array2<f64>,
    pub method: Method,
    pub params: MethodParams,
    pub seed: u64,
}

impl Embedding {
    pub fn new(coords: Array2<f64>, method: Method, params: MethodParams, seed: u64) -> Result<Self> {
        if coords.ncols() != 2 {
            return Err(Error::Shape(format!("embedding has {} columns", coords.ncols())));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow("embedding coordinates"));
        }
        Ok(Self {
            coords,
            method,
            params,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        [self.coords[[i, 0]], self.coords[[i, 1]]]
    }

    pub fn to_export(&self, atlas: &RoiAtlas) -> EmbeddingExport {
        EmbeddingExport {
            method: self.method,
            params: self.params.clone(),
            seed: self.seed,
            labels: atlas.labels().to_vec(),
            coords: self.coords.rows().into_iter().map(|r| [r[0], r[1]]).collect(),
        }
    }
}

/// On-disk JSON form of an [`Embedding`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingExport {
    pub method: Method,
    pub params: MethodParams,
    pub seed: u64,
    pub labels: Vec<String>,
    pub coords: Vec<[f64; 2]>,
}

impl EmbeddingExport {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Channel points: the transpose of a `T × R` signal, as an owned `R × T` matrix.
pub(crate) fn channel_points(signal: ArrayView2<f64>) -> Array2<f64> {
    signal.t().to_owned()
}

/// Dense matrix of squared Euclidean distances between rows.
pub(crate) fn squared_distances(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    d
}
