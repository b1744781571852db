//! Run manifest: every stage lists the artifacts it consumed and produced,
//! each with a SHA-256 checksum, so any edited file breaks verification of
//! itself and of every stage downstream of it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// A file and its checksum. Paths inside the run directory are stored
/// relative to it with `/` separators; external inputs keep their own path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub path: String,
    pub sha256: String,
}

impl ArtifactRef {
    pub fn is_internal(&self) -> bool {
        !Path::new(&self.path).is_absolute()
    }

    pub fn resolve(&self, run_dir: &Path) -> PathBuf {
        if self.is_internal() { run_dir.join(&self.path) } else { PathBuf::from(&self.path) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectFailure {
    pub subject_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    #[serde(default)]
    pub failures: Vec<SubjectFailure>,
    /// Named seeds handed to stochastic routines.
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl StageRecord {
    pub fn new() -> Self {
        Self {
            inputs: Vec::new(),
            outputs: Vec::new(),
            failures: Vec::new(),
            seeds: BTreeMap::new(),
            started_unix: unix_now(),
            finished_unix: 0,
        }
    }

    pub fn output(&self, path: &str) -> Option<&ArtifactRef> {
        self.outputs.iter().find(|a| a.path == path)
    }
}

impl Default for StageRecord {
    fn default() -> Self {
        Self::new()
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: PipelineConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(run_id: String, config: PipelineConfig) -> Self {
        Self { run_id, config, stages: BTreeMap::new() }
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))
    }

    pub fn stage(&self, key: &str) -> Result<&StageRecord> {
        self.stages.get(key).ok_or_else(|| PipelineError::StageMissing(key.to_string()))
    }

    /// Recomputes every checksum. Each output must match its file, each input
    /// must match its file, and each internal input must be the current
    /// output of some stage.
    pub fn verify(&self, run_dir: &Path) -> Result<()> {
        let mut produced: BTreeMap<&str, &str> = BTreeMap::new();
        for rec in self.stages.values() {
            for a in &rec.outputs {
                produced.insert(&a.path, &a.sha256);
            }
        }
        let mut problems = Vec::new();
        let mut cache: BTreeMap<PathBuf, Option<String>> = BTreeMap::new();
        let mut check = |a: &ArtifactRef, role: &str, stage: &str, problems: &mut Vec<String>| {
            let path = a.resolve(run_dir);
            let actual = cache.entry(path.clone()).or_insert_with(|| sha256_file(&path).ok());
            match actual {
                None => problems.push(format!("{stage}: {role} {} is missing", a.path)),
                Some(h) if *h != a.sha256 => problems.push(format!("{stage}: {role} {} was modified", a.path)),
                _ => {}
            }
        };
        for (stage, rec) in &self.stages {
            for a in &rec.outputs {
                check(a, "output", stage, &mut problems);
            }
            for a in &rec.inputs {
                check(a, "input", stage, &mut problems);
                if a.is_internal() && produced.get(a.path.as_str()) != Some(&a.sha256.as_str()) {
                    problems.push(format!("{stage}: input {} no longer matches its producing stage", a.path));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Verify(problems))
        }
    }
}
