//! Interpretable classification of multichannel signals through functional
//! connectivity networks.
//!
//! The crate is organised along the analysis pipeline:
//!
//! 1. [`data`]: atlas, recordings, z-scoring and a synthetic cohort generator.
//! 2. [`embedding`] and [`fcn`]: per-subject connectivity graphs, either by
//!    thresholding correlations or by embedding channels in the plane and
//!    running Mapper over the embedding.
//! 3. [`classifier`]: a multi-head self-attention model over adjacency rows,
//!    trained with Adam under stratified k-fold cross-validation, exposing
//!    per-subject attention distributions.
//! 4. [`featsel`]: group attention, KL-divergence ranking and ROI selection.
//! 5. [`lsirm`]: a continuous latent space item response model fitted by
//!    Metropolis-within-Gibbs.

pub mod classifier;
pub mod data;
pub mod embedding;
pub mod error;
pub mod fcn;
pub mod featsel;
pub mod lsirm;
pub mod rng;

pub use data::{BoldRecording, CohortSpec, Group, RoiAtlas};
pub use error::{Error, Result};
