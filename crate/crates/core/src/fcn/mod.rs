//! Functional connectivity graphs: thresholded correlations and Mapper over
//! channel embeddings.

pub mod corr;
pub mod graph;
pub mod mapper;

use serde::{Deserialize, Serialize};

pub use corr::{fisher_z, fisher_z_scalar, pearson_from_signal, pearson_matrix, CorrKind, CorrMatrix, FISHER_CLIP};
pub use graph::{adjacency, threshold_graph, AdjacencyMatrix, FcnGraph, GraphExport, Provenance};
pub use mapper::{distance_percentile, mapper_complex, mapper_graph, MapperCluster, MapperComplex, MapperParams};

use crate::data::BoldRecording;
use crate::embedding::{pca_embed_with, tsne_embed, umap_embed, Embedding, PcaParams, TsneParams, UmapParams};
use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.5;

/// The five graph constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FcnMethod {
    Pearson,
    Fisher,
    Pca,
    Tsne,
    Umap,
}

impl FcnMethod {
    pub const ALL: [FcnMethod; 5] = [
        FcnMethod::Pearson,
        FcnMethod::Fisher,
        FcnMethod::Pca,
        FcnMethod::Tsne,
        FcnMethod::Umap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FcnMethod::Pearson => "pearson",
            FcnMethod::Fisher => "fisher",
            FcnMethod::Pca => "pca",
            FcnMethod::Tsne => "tsne",
            FcnMethod::Umap => "umap",
        }
    }

    pub fn is_mapper(self) -> bool {
        matches!(self, FcnMethod::Pca | FcnMethod::Tsne | FcnMethod::Umap)
    }
}

impl std::fmt::Display for FcnMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FcnMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == lower || (lower == "fisher_z" && *m == FcnMethod::Fisher))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown FCN method '{s}'")))
    }
}

/// Everything needed to turn a standardized recording into a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcnConfig {
    pub method: FcnMethod,
    pub tau: f64,
    pub pca: PcaParams,
    pub tsne: TsneParams,
    pub umap: UmapParams,
    pub mapper: MapperParams,
}

impl FcnConfig {
    pub fn new(method: FcnMethod) -> Self {
        Self {
            method,
            tau: DEFAULT_TAU,
            pca: PcaParams::default(),
            tsne: TsneParams::default(),
            umap: UmapParams::default(),
            mapper: MapperParams::default(),
        }
    }
}

pub fn embed(rec: &BoldRecording, config: &FcnConfig, seed: u64) -> Result<Option<Embedding>> {
    let signal = rec.signal().view();
    Ok(match config.method {
        FcnMethod::Pearson | FcnMethod::Fisher => None,
        FcnMethod::Pca => Some(pca_embed_with(signal, config.pca)?),
        FcnMethod::Tsne => Some(tsne_embed(signal, &config.tsne, seed)?),
        FcnMethod::Umap => Some(umap_embed(signal, &config.umap, seed)?),
    })
}

/// Build one subject's graph. `seed` only matters for the stochastic embeddings.
pub fn build_fcn(rec: &BoldRecording, config: &FcnConfig, seed: u64) -> Result<FcnGraph> {
    match config.method {
        FcnMethod::Pearson => threshold_graph(&pearson_matrix(rec)?, config.tau),
        FcnMethod::Fisher => threshold_graph(&fisher_z(&pearson_matrix(rec)?)?, config.tau),
        _ => {
            let emb = embed(rec, config, seed)?.expect("mapper method has an embedding");
            mapper_graph(&emb, &config.mapper)
        }
    }
}
