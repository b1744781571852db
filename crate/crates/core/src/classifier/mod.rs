//! Multi-head self-attention classifier over adjacency rows.

pub mod cv;
pub mod model;
pub mod tape;

pub use cv::{
    extract_attention, held_out_attention, read_attention_set, sha256_hex, stratified_folds, train_cv,
    write_attention_set, AttentionDistribution, AttentionEntry, CvOutcome, CvReport, FoldModel, Sample,
    SubjectPrediction, ATTENTION_MANIFEST,
};
pub use model::{
    attention_forward, encode_input, loss_and_grads, predict_proba, Adam, Forward, ModelConfig, ModelParams,
    BLOCK_NAMES, N_CLASSES,
};
