//! Pipeline configuration: an INI file of `key = value` sections.
//!
//! ```ini
//! [data]
//! manifest = cohort/manifest.json
//! atlas = builtin
//!
//! [run]
//! seed = 7
//! pairs = AD:MCI, AD:CN
//!
//! [fcn]
//! method = tsne
//! mapper.n_intervals = 4,4
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};

use roinet::classifier::ModelConfig;
use roinet::featsel::{KldDirection, DEFAULT_EPSILON, DEFAULT_K};
use roinet::fcn::{FcnConfig, FcnMethod};
use roinet::lsirm::SamplerConfig;
use roinet::Group;

use crate::error::{PipelineError, Result};
use crate::manifest::sha256_file;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "ROINET_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatselConfig {
    pub k: usize,
    pub epsilon: f64,
    pub kld: KldDirection,
}

impl Default for FeatselConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, epsilon: DEFAULT_EPSILON, kld: KldDirection::Symmetric }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Cohort manifest (JSON array of subject entries).
    pub manifest: PathBuf,
    /// `builtin` or a label file.
    pub atlas: String,
    pub standardize: bool,
    pub seed: u64,
    pub pairs: Vec<[Group; 2]>,
    pub fcn: FcnConfig,
    pub classifier: ModelConfig,
    pub featsel: FeatselConfig,
    pub lsirm: SamplerConfig,
    /// Worker threads, 0 for one per core. Does not affect results.
    pub jobs: usize,
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            atlas: "builtin".into(),
            standardize: true,
            seed: 0,
            pairs: Vec::new(),
            fcn: FcnConfig::new(FcnMethod::Tsne),
            classifier: ModelConfig::default(),
            featsel: FeatselConfig::default(),
            lsirm: SamplerConfig::default(),
            jobs: 0,
            output_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| Path::new("."));
        let base = std::fs::canonicalize(parent).map_err(|e| PipelineError::io(parent, e))?;
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut cfg = Self::new(PathBuf::new());
        let mut have_manifest = false;
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                let value = value.trim();
                if section == "data" && key == "manifest" {
                    have_manifest = true;
                }
                cfg.set(section, key, value, base)
                    .map_err(|m| PipelineError::Config(format!("[{section}] {key} = {value}: {m}")))?;
            }
        }
        if !have_manifest {
            return Err(PipelineError::Config("[data] manifest is required".into()));
        }
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str, base: &Path) -> std::result::Result<(), String> {
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_relative() { base.join(p) } else { p }
        };
        let f = &mut self.fcn;
        let c = &mut self.classifier;
        let l = &mut self.lsirm;
        match (section, key) {
            ("data", "manifest") => self.manifest = resolve(v),
            ("data", "atlas") => self.atlas = if v == "builtin" { v.to_string() } else { resolve(v).display().to_string() },
            ("data", "standardize") => self.standardize = num(v)?,
            ("run", "seed") => self.seed = num(v)?,
            ("run", "pairs") => self.pairs = parse_pairs(v)?,
            ("run", "jobs") => self.jobs = num(v)?,
            ("run", "output_dir") => self.output_dir = Some(resolve(v)),
            ("fcn", "method") => f.method = num(v)?,
            ("fcn", "tau") => f.tau = num(v)?,
            ("fcn", "pca.allow_rank_deficient") => f.pca.allow_rank_deficient = num(v)?,
            ("fcn", "tsne.perplexity") => f.tsne.perplexity = num(v)?,
            ("fcn", "tsne.iterations") => f.tsne.iterations = num(v)?,
            ("fcn", "tsne.learning_rate") => f.tsne.learning_rate = num(v)?,
            ("fcn", "tsne.early_exaggeration") => f.tsne.early_exaggeration = num(v)?,
            ("fcn", "tsne.exaggeration_iterations") => f.tsne.exaggeration_iterations = num(v)?,
            ("fcn", "tsne.initial_momentum") => f.tsne.initial_momentum = num(v)?,
            ("fcn", "tsne.final_momentum") => f.tsne.final_momentum = num(v)?,
            ("fcn", "umap.n_neighbors") => f.umap.n_neighbors = num(v)?,
            ("fcn", "umap.min_dist") => f.umap.min_dist = num(v)?,
            ("fcn", "umap.epochs") => f.umap.epochs = num(v)?,
            ("fcn", "umap.negative_sample_rate") => f.umap.negative_sample_rate = num(v)?,
            ("fcn", "mapper.n_intervals") => {
                let parts: Vec<usize> = v.split(',').map(|s| num(s.trim())).collect::<std::result::Result<_, _>>()?;
                f.mapper.n_intervals = match parts[..] {
                    [n] => [n, n],
                    [a, b] => [a, b],
                    _ => return Err("expected one or two integers".into()),
                };
            }
            ("fcn", "mapper.overlap") => f.mapper.overlap = num(v)?,
            ("fcn", "mapper.cluster_eps") => f.mapper.cluster_eps = Some(num(v)?),
            ("fcn", "mapper.eps_percentile") => f.mapper.eps_percentile = num(v)?,
            ("classifier", "n_heads") => c.n_heads = num(v)?,
            ("classifier", "d_model") => c.d_model = num(v)?,
            ("classifier", "d_head") => c.d_head = num(v)?,
            ("classifier", "learning_rate") => c.learning_rate = num(v)?,
            ("classifier", "batch_size") => c.batch_size = num(v)?,
            ("classifier", "folds") => c.folds = num(v)?,
            ("classifier", "epochs") => c.epochs = num(v)?,
            ("featsel", "k") => self.featsel.k = num(v)?,
            ("featsel", "epsilon") => self.featsel.epsilon = num(v)?,
            ("featsel", "kld") => {
                self.featsel.kld = match v {
                    "symmetric" => KldDirection::Symmetric,
                    "forward" => KldDirection::Forward,
                    _ => return Err("expected `symmetric` or `forward`".into()),
                }
            }
            ("lsirm", "n_iter") => l.n_iter = num(v)?,
            ("lsirm", "burn_in") => l.burn_in = num(v)?,
            ("lsirm", "thin") => l.thin = num(v)?,
            ("lsirm", "sd_theta") => l.sd_theta = num(v)?,
            ("lsirm", "sd_beta") => l.sd_beta = num(v)?,
            ("lsirm", "sd_u") => l.sd_u = num(v)?,
            ("lsirm", "sd_v") => l.sd_v = num(v)?,
            ("lsirm", "tau2_beta") => l.tau2_beta = num(v)?,
            ("lsirm", "a") => l.a = num(v)?,
            ("lsirm", "b") => l.b = num(v)?,
            ("lsirm", "a_sigma") => l.a_sigma = num(v)?,
            ("lsirm", "b_sigma") => l.b_sigma = num(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Checks parameters and that every referenced input path exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !self.manifest.is_file() {
            return bad(format!("cohort manifest {} does not exist", self.manifest.display()));
        }
        if self.atlas != "builtin" && !Path::new(&self.atlas).is_file() {
            return bad(format!("atlas file {} does not exist", self.atlas));
        }
        if !(self.fcn.tau.is_finite()) {
            return bad("fcn tau must be finite".into());
        }
        self.fcn.mapper.validate()?;
        self.classifier.validate()?;
        self.lsirm.validate()?;
        if self.featsel.k == 0 || !(self.featsel.epsilon > 0.0) {
            return bad("featsel k and epsilon must be positive".into());
        }
        if let Some(p) = self.pairs.iter().find(|p| p[0] == p[1]) {
            return bad(format!("pair {}:{} repeats a group", p[0], p[1]));
        }
        Ok(())
    }

    /// Content hash identifying the run. Covers every result-affecting
    /// setting and the cohort manifest's bytes, but not where the manifest or
    /// outputs live.
    pub fn run_id(&self) -> Result<String> {
        let mut snapshot = self.clone();
        snapshot.manifest = PathBuf::from(sha256_file(&self.manifest)?);
        snapshot.output_dir = None;
        snapshot.jobs = 0;
        if self.atlas != "builtin" {
            snapshot.atlas = sha256_file(Path::new(&self.atlas))?;
        }
        let json = serde_json::to_vec(&snapshot)?;
        Ok(crate::manifest::sha256_hex(&json)[..16].to_string())
    }

    /// Output root: explicit override, then config, then the environment, then `./roinet-runs`.
    pub fn output_root(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("roinet-runs"))
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

/// `A:B[, C:D ...]`
pub fn parse_pairs(v: &str) -> std::result::Result<Vec<[Group; 2]>, String> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_pair(s.trim())).collect()
}

pub fn parse_pair(s: &str) -> std::result::Result<[Group; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("pair `{s}` must look like A:B"))?;
    let a: Group = a.trim().parse().map_err(|e: roinet::Error| e.to_string())?;
    let b: Group = b.trim().parse().map_err(|e: roinet::Error| e.to_string())?;
    if a == b {
        return Err(format!("pair `{s}` repeats a group"));
    }
    Ok([a, b])
}

pub fn pair_name(pair: [Group; 2]) -> String {
    format!("{}_{}", pair[0], pair[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let text = "[data]\nmanifest = m.json\n[run]\nseed = 9\npairs = AD:MCI, SYNTH_A:SYNTH_B\n\
                    [fcn]\nmethod = umap\nmapper.n_intervals = 3,5\n[featsel]\nkld = forward\n";
        let c = PipelineConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(c.manifest, PathBuf::from("/base/m.json"));
        assert_eq!(c.seed, 9);
        assert_eq!(c.pairs, vec![[Group::Ad, Group::Mci], [Group::SynthA, Group::SynthB]]);
        assert_eq!(c.fcn.method, FcnMethod::Umap);
        assert_eq!(c.fcn.mapper.n_intervals, [3, 5]);
        assert_eq!(c.featsel.kld, KldDirection::Forward);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_manifest() {
        assert!(PipelineConfig::parse("[data]\nmanifest=a\n[fcn]\nbogus=1\n", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("[run]\nseed=1\n", Path::new(".")).is_err());
        assert!(parse_pair("AD:AD").is_err());
        assert!(parse_pair("AD").is_err());
    }
}
