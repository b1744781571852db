//! Synthetic cohort export: one BOLD CSV per subject plus a cohort manifest.

use std::fs;
use std::path::{Path, PathBuf};

use roinet::data::{synth_cohort, write_bold, write_cohort_manifest, CohortEntry, CohortSpec};
use roinet::RoiAtlas;

use crate::error::{PipelineError, Result};

pub const COHORT_MANIFEST: &str = "manifest.json";
pub const ATLAS_FILE: &str = "atlas.txt";

/// Reads a JSON cohort spec.
pub fn load_cohort_spec(path: &Path) -> Result<CohortSpec> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub atlas: PathBuf,
    pub entries: Vec<CohortEntry>,
}

/// Writes the cohort under `out_dir`. A 116-channel cohort uses the AAL
/// labels; any other width uses `ROI_1 .. ROI_n`. The labels are also
/// written to `atlas.txt`.
pub fn synth(spec: &CohortSpec, out_dir: &Path) -> Result<SynthOutput> {
    let recordings = synth_cohort(spec)?;
    let r = spec.channel_count();
    let atlas = if r == 116 { RoiAtlas::aal116() } else { RoiAtlas::numbered(r)? };
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(recordings.len());
    for rec in &recordings {
        let file = format!("{}.csv", rec.subject_id);
        write_bold(rec, &atlas, &out_dir.join(&file))?;
        entries.push(CohortEntry { subject_id: rec.subject_id.clone(), group: rec.group, csv_path: file.into() });
    }
    let atlas_path = out_dir.join(ATLAS_FILE);
    fs::write(&atlas_path, atlas.labels().join("\n") + "\n").map_err(|e| PipelineError::io(&atlas_path, e))?;
    let manifest = out_dir.join(COHORT_MANIFEST);
    write_cohort_manifest(&entries, &manifest)?;
    Ok(SynthOutput { manifest, atlas: atlas_path, entries })
}
