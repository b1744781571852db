//! Shared inputs for the benchmarks.

use ndarray::Array2;
use roinet::data::{standardize, synth_cohort, BoldRecording, CohortSpec};
use roinet::RoiAtlas;

/// One standardized synthetic recording with `rois` channels and `t` timepoints.
pub fn recording(rois: usize, t: usize) -> BoldRecording {
    let spec = CohortSpec::two_group(1, rois, 4, t, 0.5, 1);
    let rec = synth_cohort(&spec).expect("synthetic cohort").remove(0);
    let atlas = if rois == 116 { RoiAtlas::aal116() } else { RoiAtlas::numbered(rois).expect("atlas") };
    standardize(&rec, &atlas).expect("standardize")
}

/// Deterministic sparse binary adjacency.
pub fn adjacency(r: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, r), |(i, j)| if i != j && (i * 7 + j * 7) % 5 == 0 { 1.0 } else { 0.0 })
}
