//! Atlas, recordings and synthetic cohorts.

pub mod atlas;
pub mod recording;
pub mod synth;

pub use atlas::{load_atlas, AtlasSource, RoiAtlas};
pub use recording::{
    ingest_bold, ingest_bold_as, read_bold, read_cohort_manifest, standardize, write_bold,
    write_cohort_manifest, BoldRecording, CohortEntry, Group,
};
pub use synth::{synth_cohort, CohortSpec};
