#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use roinet::data::CohortSpec;
use roinet_cli::{synth, PipelineConfig};

/// 2 × `per_group` subjects, 16 channels in 4 blocks.
pub fn small_spec(per_group: usize, noise_sd: f64, seed: u64) -> CohortSpec {
    CohortSpec::two_group(per_group, 16, 4, 60, noise_sd, seed)
}

pub const SMALL_INI: &str = "\
[data]
manifest = cohort/manifest.json
atlas = cohort/atlas.txt

[run]
seed = 11
pairs = SYNTH_A:SYNTH_B

[fcn]
method = tsne
tsne.perplexity = 4
tsne.iterations = 300

[classifier]
n_heads = 2
d_model = 8
d_head = 4
folds = 5
epochs = 10

[featsel]
k = 4

[lsirm]
n_iter = 3000
burn_in = 1000
thin = 10
";

/// Writes the cohort and `run.ini` into `dir`; returns the config path.
pub fn fixture(dir: &Path, spec: &CohortSpec, ini: &str) -> PathBuf {
    synth(spec, &dir.join("cohort")).unwrap();
    let path = dir.join("run.ini");
    fs::write(&path, ini).unwrap();
    path
}

pub fn small_config(dir: &Path) -> PipelineConfig {
    let path = fixture(dir, &small_spec(10, 0.5, 3), SMALL_INI);
    PipelineConfig::load(&path).unwrap()
}
