//! End-to-end pipeline over a cohort of BOLD recordings: functional
//! connectivity networks, attention classifier, ROI selection and latent
//! space modelling, with every intermediate artifact checksummed in a run
//! manifest.

pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod stages;
pub mod synth;

pub use config::{parse_pair, PipelineConfig, OUTPUT_ROOT_ENV};
pub use error::{PipelineError, Result};
pub use manifest::{ArtifactRef, RunManifest, StageRecord};
pub use report::{report, ReportBundle, ReportOutput, ARTIFACT_KINDS, BUNDLE_FILE};
pub use stages::{classify, fcn, ingest, lsirm, run_all, select, Outcome, Run};
pub use synth::{load_cohort_spec, synth};
