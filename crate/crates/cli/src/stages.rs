//! Pipeline stages. Each stage reads upstream artifacts through the run
//! manifest (checksums verified on read), writes its own artifacts, and
//! records both sides in a single manifest update at the end.
//!
//! Layout of a run directory:
//!
//! ```text
//! <root>/<run_id>/manifest.json
//!                 ingest/  fcn/<subject>/  classify/<A_B>/  select/<A_B>/  lsirm/<A_B>/  report/
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use roinet::classifier::{
    held_out_attention, read_attention_set, train_cv, write_attention_set, AttentionDistribution, CvReport, Sample,
    ATTENTION_MANIFEST,
};
use roinet::data::{load_atlas, read_bold, read_cohort_manifest, standardize, AtlasSource, CohortEntry};
use roinet::fcn::{adjacency, build_fcn, embed, mapper_graph, AdjacencyMatrix, FcnGraph, GraphExport};
use roinet::featsel::{
    build_patient_roi_matrix, group_mean_attention, rank_rois_kld, select_rois, PatientRoiMatrix, SelectedRoiExport,
    SelectedRoiSet,
};
use roinet::lsirm::{mcmc_run, posterior_summary, significant_rois, LsirmData, PosteriorSummary, RoiCategorization};
use roinet::rng::derive_seed;
use roinet::{Group, RoiAtlas};

use crate::config::{pair_name, PipelineConfig};
use crate::error::{PipelineError, Result};
use crate::manifest::{sha256_hex, ArtifactRef, RunManifest, StageRecord, SubjectFailure, MANIFEST_FILE};
use crate::report::{consensus_graph, overlay, Overlay};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    /// Some subjects failed; the rest were processed.
    Partial,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Complete => 0,
            Outcome::Partial => 2,
        }
    }

    pub fn worst(self, other: Outcome) -> Outcome {
        if self == Outcome::Partial || other == Outcome::Partial { Outcome::Partial } else { Outcome::Complete }
    }
}

/// An open run directory.
pub struct Run {
    pub dir: PathBuf,
    pub config: PipelineConfig,
    pub atlas: RoiAtlas,
    pub manifest: RunManifest,
    pool: rayon::ThreadPool,
}

impl Run {
    /// Validates `config` and opens (or creates) `<root>/<run_id>`.
    pub fn open(config: PipelineConfig, out_root: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let run_id = config.run_id()?;
        let dir = config.output_root(out_root).join(&run_id);
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        let manifest = if dir.join(MANIFEST_FILE).is_file() {
            let mut m = RunManifest::load(&dir)?;
            m.config = config.clone();
            m
        } else {
            RunManifest::new(run_id, config.clone())
        };
        manifest.save(&dir)?;
        Self::with_manifest(dir, manifest)
    }

    /// Opens an existing run directory using the config stored in its manifest.
    pub fn open_existing(dir: &Path) -> Result<Self> {
        let manifest = RunManifest::load(dir)?;
        Self::with_manifest(dir.to_path_buf(), manifest)
    }

    fn with_manifest(dir: PathBuf, manifest: RunManifest) -> Result<Self> {
        let config = manifest.config.clone();
        let atlas = load_atlas(&AtlasSource::parse(&config.atlas))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self { dir, config, atlas, manifest, pool })
    }

    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn verify(&self) -> Result<()> {
        self.manifest.verify(&self.dir)
    }

    pub(crate) fn write(&self, rel: &str, bytes: &[u8]) -> Result<ArtifactRef> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        Ok(ArtifactRef { path: rel.to_string(), sha256: sha256_hex(bytes) })
    }

    /// Checksum of a file some library routine already wrote.
    fn track(&self, rel: &str) -> Result<ArtifactRef> {
        let path = self.dir.join(rel);
        let bytes = fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(ArtifactRef { path: rel.to_string(), sha256: sha256_hex(&bytes) })
    }

    /// Reads an output of `stage`, failing if the file no longer matches the
    /// recorded checksum.
    pub(crate) fn read_output(&self, stage: &str, rel: &str) -> Result<(String, ArtifactRef)> {
        let rec = self.manifest.stage(stage)?;
        let a = rec
            .output(rel)
            .ok_or_else(|| PipelineError::StageMissing(format!("{stage} (no artifact {rel})")))?;
        let path = self.dir.join(rel);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        if sha256_hex(text.as_bytes()) != a.sha256 {
            return Err(PipelineError::Checksum(rel.to_string()));
        }
        Ok((text, a.clone()))
    }

    pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(
        &self,
        stage: &str,
        rel: &str,
        rec: &mut StageRecord,
    ) -> Result<T> {
        let (text, a) = self.read_output(stage, rel)?;
        rec.inputs.push(a);
        Ok(serde_json::from_str(&text)?)
    }

    pub(crate) fn commit(&mut self, key: &str, mut rec: StageRecord) -> Result<()> {
        rec.finished_unix = crate::manifest::unix_now();
        self.manifest.stages.insert(key.to_string(), rec);
        self.manifest.save(&self.dir)
    }

    pub(crate) fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

/// Per-subject status shared by the ingest and fcn indexes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectStatus {
    pub subject_id: String,
    pub group: Group,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
}

pub const FCN_INDEX: &str = "fcn/subjects.json";
const INGEST_INDEX: &str = "ingest/subjects.json";

fn external(path: &Path) -> Result<ArtifactRef> {
    let abs = fs::canonicalize(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(ArtifactRef { path: abs.display().to_string(), sha256: crate::manifest::sha256_file(&abs)? })
}

fn checked_id(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        Err(format!("subject id `{id}` is not usable as a file name"))
    } else {
        Ok(())
    }
}

struct Loaded {
    input: ArtifactRef,
    rec: roinet::BoldRecording,
}

fn load_subject(run: &Run, e: &CohortEntry) -> std::result::Result<Loaded, String> {
    checked_id(&e.subject_id)?;
    let bytes = fs::read(&e.csv_path).map_err(|err| format!("{}: {err}", e.csv_path.display()))?;
    let rec = read_bold(bytes.as_slice(), &run.atlas, e.group, e.subject_id.clone()).map_err(|err| err.to_string())?;
    let rec = if run.config.standardize { standardize(&rec, &run.atlas).map_err(|err| err.to_string())? } else { rec };
    let path = fs::canonicalize(&e.csv_path).unwrap_or_else(|_| e.csv_path.clone());
    Ok(Loaded { input: ArtifactRef { path: path.display().to_string(), sha256: sha256_hex(&bytes) }, rec })
}

/// Parses and validates every recording in the cohort manifest.
pub fn ingest(run: &mut Run) -> Result<Outcome> {
    let mut rec = StageRecord::new();
    let entries = read_cohort_manifest(&run.config.manifest)?;
    if entries.is_empty() {
        return Err(PipelineError::Config("cohort manifest lists no subjects".into()));
    }
    rec.inputs.push(external(&run.config.manifest)?);
    let loaded: Vec<_> = run.install(|| entries.par_iter().map(|e| load_subject(run, e)).collect());
    let mut index = Vec::with_capacity(entries.len());
    for (e, l) in entries.iter().zip(loaded) {
        let mut s = SubjectStatus {
            subject_id: e.subject_id.clone(),
            group: e.group,
            ok: l.is_ok(),
            error: None,
            t_count: None,
            seed: None,
            edges: None,
        };
        match l {
            Ok(l) => {
                s.t_count = Some(l.rec.t_count());
                rec.inputs.push(l.input);
            }
            Err(msg) => {
                log::warn!("{}: {msg}", e.subject_id);
                rec.failures.push(SubjectFailure { subject_id: e.subject_id.clone(), error: msg.clone() });
                s.error = Some(msg);
            }
        }
        index.push(s);
    }
    rec.outputs.push(run.write(INGEST_INDEX, (serde_json::to_string_pretty(&index)? + "\n").as_bytes())?);
    rec.outputs.push(run.write("ingest/atlas.txt", (run.atlas.labels().join("\n") + "\n").as_bytes())?);
    finish_subject_stage(run, "ingest", rec, &index)
}

fn finish_subject_stage(run: &mut Run, key: &str, rec: StageRecord, index: &[SubjectStatus]) -> Result<Outcome> {
    let failed = rec.failures.len();
    run.commit(key, rec)?;
    if failed == index.len() {
        return Err(PipelineError::IncompleteInputs { stage: key.into(), subjects: "all".into() });
    }
    Ok(if failed > 0 { Outcome::Partial } else { Outcome::Complete })
}

struct FcnArtifacts {
    input: ArtifactRef,
    outputs: Vec<ArtifactRef>,
    edges: usize,
}

fn fcn_subject(run: &Run, e: &CohortEntry, seed: u64) -> std::result::Result<FcnArtifacts, String> {
    let l = load_subject(run, e)?;
    let cfg = &run.config.fcn;
    let err = |x: roinet::Error| x.to_string();
    let emb = embed(&l.rec, cfg, seed).map_err(err)?;
    let graph = match &emb {
        Some(emb) => mapper_graph(emb, &cfg.mapper).map_err(err)?,
        None => build_fcn(&l.rec, cfg, seed).map_err(err)?,
    };
    let base = format!("fcn/{}", e.subject_id);
    let io = |x: PipelineError| x.to_string();
    let mut outputs = vec![
        run.write(&format!("{base}/graph.json"), json_bytes(&graph.to_json()).map_err(io)?.as_slice()).map_err(io)?,
        run.write(&format!("{base}/graph.dot"), graph.to_dot(&e.subject_id, &run.atlas).as_bytes()).map_err(io)?,
        run.write(&format!("{base}/adjacency.csv"), adjacency(&graph).to_csv().as_bytes()).map_err(io)?,
    ];
    if let Some(emb) = emb {
        let export = emb.to_export(&run.atlas);
        outputs.push(run.write(&format!("{base}/embedding.json"), json_bytes(&export).map_err(io)?.as_slice()).map_err(io)?);
    }
    Ok(FcnArtifacts { input: l.input, outputs, edges: graph.edge_count() })
}

pub(crate) fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes())
}

/// One graph per subject. A subject that fails is recorded and skipped.
pub fn fcn(run: &mut Run) -> Result<Outcome> {
    let mut rec = StageRecord::new();
    let entries = read_cohort_manifest(&run.config.manifest)?;
    if entries.is_empty() {
        return Err(PipelineError::Config("cohort manifest lists no subjects".into()));
    }
    rec.inputs.push(external(&run.config.manifest)?);
    let seeds: Vec<u64> = (0..entries.len()).map(|i| derive_seed(run.config.seed, "fcn", i as u64)).collect();
    let results: Vec<_> = run.install(|| {
        entries.par_iter().zip(&seeds).map(|(e, &seed)| fcn_subject(run, e, seed)).collect()
    });
    let mut index = Vec::with_capacity(entries.len());
    for ((e, r), &seed) in entries.iter().zip(results).zip(&seeds) {
        let mut s = SubjectStatus {
            subject_id: e.subject_id.clone(),
            group: e.group,
            ok: r.is_ok(),
            error: None,
            t_count: None,
            seed: Some(seed),
            edges: None,
        };
        match r {
            Ok(a) => {
                s.edges = Some(a.edges);
                rec.inputs.push(a.input);
                rec.outputs.extend(a.outputs);
                rec.seeds.insert(format!("fcn/{}", e.subject_id), seed);
            }
            Err(msg) => {
                log::warn!("{}: {msg}", e.subject_id);
                rec.failures.push(SubjectFailure { subject_id: e.subject_id.clone(), error: msg.clone() });
                s.error = Some(msg);
            }
        }
        index.push(s);
    }
    rec.outputs.push(run.write(FCN_INDEX, &json_bytes(&index)?)?);
    finish_subject_stage(run, "fcn", rec, &index)
}

/// Subjects of `groups` from the fcn index; later stages refuse partial input.
pub(crate) fn fcn_members(run: &Run, groups: &[Group], stage: &str, rec: &mut StageRecord) -> Result<Vec<SubjectStatus>> {
    let index: Vec<SubjectStatus> = run.read_json("fcn", FCN_INDEX, rec)?;
    let members: Vec<SubjectStatus> = index.into_iter().filter(|s| groups.contains(&s.group)).collect();
    let failed: Vec<&str> = members.iter().filter(|s| !s.ok).map(|s| s.subject_id.as_str()).collect();
    if !failed.is_empty() {
        return Err(PipelineError::IncompleteInputs { stage: stage.into(), subjects: failed.join(", ") });
    }
    Ok(members)
}

pub(crate) fn load_graph(run: &Run, subject: &str, rec: &mut StageRecord) -> Result<FcnGraph> {
    let export: GraphExport = run.read_json("fcn", &format!("fcn/{subject}/graph.json"), rec)?;
    Ok(FcnGraph::from_json(&export)?)
}

pub fn classify_key(pair: [Group; 2]) -> String {
    format!("classify/{}", pair_name(pair))
}

pub fn select_key(pair: [Group; 2]) -> String {
    format!("select/{}", pair_name(pair))
}

pub fn lsirm_key(pair: [Group; 2]) -> String {
    format!("lsirm/{}", pair_name(pair))
}

/// Cross-validated classifier plus each subject's held-out attention.
pub fn classify(run: &mut Run, pair: [Group; 2]) -> Result<CvReport> {
    let key = classify_key(pair);
    let mut rec = StageRecord::new();
    let members = fcn_members(run, &pair, &key, &mut rec)?;
    let mut samples = Vec::with_capacity(members.len());
    for s in &members {
        let (text, a) = run.read_output("fcn", &format!("fcn/{}/adjacency.csv", s.subject_id))?;
        rec.inputs.push(a);
        samples.push(Sample {
            subject_id: s.subject_id.clone(),
            group: s.group,
            adjacency: AdjacencyMatrix::from_csv(&text)?,
        });
    }
    let mut model = run.config.classifier.clone();
    model.seed = derive_seed(run.config.seed, &key, 0);
    rec.seeds.insert("classifier".into(), model.seed);
    let (outcome, attention) = run.install(|| -> Result<_> {
        let outcome = train_cv(&samples, (pair[0], pair[1]), &model)?;
        let attention = held_out_attention(&outcome, &samples)?;
        Ok((outcome, attention))
    })?;
    rec.outputs.push(run.write(&format!("{key}/cv_report.json"), outcome.report.to_json()?.as_bytes())?);
    let dir = format!("{key}/attention");
    for e in write_attention_set(&run.dir.join(&dir), &attention)? {
        rec.outputs.push(ArtifactRef { path: format!("{dir}/{}", e.file), sha256: e.checksum });
    }
    rec.outputs.push(run.track(&format!("{dir}/{ATTENTION_MANIFEST}"))?);
    run.commit(&key, rec)?;
    Ok(outcome.report)
}

pub(crate) fn matrix_csv(m: &ndarray::Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn mean_attention_file(pair: [Group; 2], g: Group) -> String {
    format!("{}/mean_attention_{g}.csv", select_key(pair))
}

pub fn patient_matrix_file(pair: [Group; 2], g: Group) -> String {
    format!("{}/patient_roi_{g}.csv", select_key(pair))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldBar {
    pub roi: usize,
    pub label: String,
    pub kld: f64,
}

/// KLD ranking, selected ROIs and patient-by-ROI matrices.
pub fn select(run: &mut Run, pair: [Group; 2]) -> Result<SelectedRoiSet> {
    let key = select_key(pair);
    let ckey = classify_key(pair);
    let mut rec = StageRecord::new();
    let (_, manifest_ref) = run.read_output(&ckey, &format!("{ckey}/attention/{ATTENTION_MANIFEST}"))?;
    let prefix = format!("{ckey}/attention/");
    rec.inputs.extend(run.manifest.stage(&ckey)?.outputs.iter().filter(|a| a.path.starts_with(&prefix)).cloned());
    debug_assert!(rec.inputs.contains(&manifest_ref));
    let items = read_attention_set(&run.dir.join(&ckey).join("attention"))?;
    let side = |g: Group| -> Vec<AttentionDistribution> {
        items.iter().filter(|(_, a)| a.group == g).map(|(_, a)| a.clone()).collect()
    };
    let (sa, sb) = (side(pair[0]), side(pair[1]));
    let (ga, gb) = (group_mean_attention(&sa)?, group_mean_attention(&sb)?);
    let fs = &run.config.featsel;
    let ranking = rank_rois_kld(&ga, &gb, fs.kld, fs.epsilon)?;
    let selected = select_rois(&ga, &gb, &sa, &sb, fs.k)?;

    rec.outputs.push(run.write(&format!("{key}/kld_ranking.csv"), ranking.to_csv(&run.atlas).as_bytes())?);
    let bars: Vec<KldBar> = ranking
        .entries
        .iter()
        .map(|&(roi, kld)| KldBar { roi: roi + 1, label: run.atlas.label(roi).to_string(), kld })
        .collect();
    rec.outputs.push(run.write(&format!("{key}/kld_ranking.json"), &json_bytes(&bars)?)?);
    rec.outputs.push(run.write(&format!("{key}/selected_rois.json"), &json_bytes(&selected.to_export(&run.atlas))?)?);
    for (g, ga, subjects, rois) in [(pair[0], &ga, &sa, &selected.rois[0]), (pair[1], &gb, &sb, &selected.rois[1])] {
        rec.outputs.push(run.write(&mean_attention_file(pair, g), matrix_csv(&ga.mean_attn).as_bytes())?);
        let m = build_patient_roi_matrix(subjects, rois)?;
        rec.outputs.push(run.write(&patient_matrix_file(pair, g), m.to_csv(&run.atlas).as_bytes())?);
    }
    run.commit(&key, rec)?;
    Ok(selected)
}

pub fn summary_file(pair: [Group; 2], g: Group) -> String {
    format!("{}/{g}/summary.json", lsirm_key(pair))
}

pub fn categories_file(pair: [Group; 2]) -> String {
    format!("{}/categories.json", lsirm_key(pair))
}

pub fn overlay_file(pair: [Group; 2]) -> String {
    format!("{}/overlay.json", lsirm_key(pair))
}

pub(crate) fn load_patient_matrix(run: &Run, pair: [Group; 2], g: Group, rec: &mut StageRecord) -> Result<PatientRoiMatrix> {
    let (text, a) = run.read_output(&select_key(pair), &patient_matrix_file(pair, g))?;
    rec.inputs.push(a);
    Ok(PatientRoiMatrix::from_csv(&text, &run.atlas, g)?)
}

/// Posterior fit for each side of the pair, ROI categories, and the
/// categories joined onto each group's consensus network.
pub fn lsirm(run: &mut Run, pair: [Group; 2]) -> Result<Vec<RoiCategorization>> {
    let key = lsirm_key(pair);
    let mut rec = StageRecord::new();
    let sel: SelectedRoiExport = run.read_json(&select_key(pair), &format!("{}/selected_rois.json", select_key(pair)), &mut rec)?;
    let selected = SelectedRoiSet::from_export(&sel)?;
    let mut data = Vec::with_capacity(2);
    for g in pair {
        let m = load_patient_matrix(run, pair, g, &mut rec)?;
        let mut cfg = run.config.lsirm.clone();
        cfg.seed = derive_seed(run.config.seed, &format!("{key}/{g}"), 0);
        rec.seeds.insert(format!("lsirm/{g}"), cfg.seed);
        data.push((LsirmData::from_patient_matrix(&m)?, cfg));
    }
    let (pa, pb) = run.install(|| rayon::join(|| mcmc_run(&data[0].0, &data[0].1), || mcmc_run(&data[1].0, &data[1].1)));
    let mut summaries: Vec<PosteriorSummary> = Vec::with_capacity(2);
    for (g, post) in pair.into_iter().zip([pa?, pb?]) {
        let dir = format!("{key}/{g}");
        post.write_chains(&run.dir.join(&dir))?;
        for f in ["theta.csv", "beta.csv", "u.csv", "v.csv", "variances.csv"] {
            rec.outputs.push(run.track(&format!("{dir}/{f}"))?);
        }
        let s = posterior_summary(&post)?;
        rec.outputs.push(run.write(&summary_file(pair, g), &json_bytes(&s)?)?);
        summaries.push(s);
    }
    let categories = significant_rois(&summaries[0], &summaries[1], &selected.rois[0], &selected.rois[1], None)?;
    rec.outputs.push(run.write(&categories_file(pair), &json_bytes(&categories)?)?);

    let mut groups = Vec::with_capacity(2);
    for (side, g) in pair.into_iter().enumerate() {
        let (graph, n) = consensus_graph(run, g, &key, &mut rec)?;
        groups.push(overlay(&graph, n, g, side, &categories, &run.atlas));
    }
    let ov = Overlay { pair, groups };
    rec.outputs.push(run.write(&overlay_file(pair), &json_bytes(&ov)?)?);
    run.commit(&key, rec)?;
    Ok(categories)
}

/// Every stage in order for every configured pair, then the report.
pub fn run_all(run: &mut Run) -> Result<Outcome> {
    if run.config.pairs.is_empty() {
        return Err(PipelineError::Config("no pairs configured ([run] pairs)".into()));
    }
    let mut outcome = ingest(run)?;
    outcome = outcome.worst(fcn(run)?);
    for pair in run.config.pairs.clone() {
        classify(run, pair)?;
        select(run, pair)?;
        lsirm(run, pair)?;
    }
    crate::report::report(run)?;
    Ok(outcome)
}
