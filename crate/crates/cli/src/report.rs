//! Consolidated report bundle: the data behind every figure of a run in one
//! JSON file, plus Graphviz renderings of the group networks.
//!
//! The bundle holds no timestamps and only run-relative paths, so two runs of
//! the same config and seed produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use roinet::classifier::CvReport;
use roinet::fcn::{FcnGraph, Provenance};
use roinet::lsirm::{AcceptanceRates, PosteriorSummary, RoiCategorization, RoiCategory};
use roinet::{Group, RoiAtlas};

use crate::config::pair_name;
use crate::error::{PipelineError, Result};
use crate::manifest::{sha256_hex, ArtifactRef, StageRecord};
use crate::stages::{
    categories_file, classify_key, fcn_members, json_bytes, load_graph, load_patient_matrix, lsirm_key,
    mean_attention_file, overlay_file, select_key, summary_file, KldBar, Run,
};

pub const BUNDLE_FILE: &str = "report/bundle.json";
pub const ARTIFACT_KINDS: [&str; 6] =
    ["fcn_graphs", "classification", "attention_heatmaps", "kld_bars", "latent_positions", "roi_categories"];

/// Edges present in at least half of the group's subject networks.
pub fn consensus_graph(run: &Run, group: Group, stage: &str, rec: &mut StageRecord) -> Result<(FcnGraph, usize)> {
    let members = fcn_members(run, &[group], stage, rec)?;
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut provenance = Provenance::Manual;
    for (k, s) in members.iter().enumerate() {
        let g = load_graph(run, &s.subject_id, rec)?;
        if k == 0 {
            provenance = g.provenance.clone();
        }
        for &e in g.edges() {
            *counts.entry(e).or_default() += 1;
        }
    }
    let n = members.len();
    let edges: Vec<(usize, usize)> = counts.into_iter().filter(|&(_, c)| 2 * c >= n).map(|(e, _)| e).collect();
    let mut graph = FcnGraph::new(run.atlas.len(), provenance);
    for (i, j) in edges {
        graph.add_edge(i, j)?;
    }
    Ok((graph, n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayNode {
    /// One-based ROI number.
    pub roi: usize,
    pub label: String,
    pub category: Option<RoiCategory>,
    pub theta: Option<f64>,
    pub degree: usize,
    /// Adjacent to at least one categorised ROI.
    pub near_category: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayGroup {
    pub group: Group,
    pub n_subjects: usize,
    pub nodes: Vec<OverlayNode>,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub pair: [Group; 2],
    pub groups: Vec<OverlayGroup>,
}

/// Joins ROI categories onto one group's consensus graph. `side` is 0 for
/// the first group of the pair.
pub fn overlay(
    graph: &FcnGraph,
    n_subjects: usize,
    group: Group,
    side: usize,
    categories: &[RoiCategorization],
    atlas: &RoiAtlas,
) -> OverlayGroup {
    let by_roi: BTreeMap<usize, &RoiCategorization> = categories.iter().map(|c| (c.roi, c)).collect();
    let nodes = (0..graph.n_nodes())
        .map(|i| {
            let c = by_roi.get(&i);
            let neighbors = graph.neighbors(i);
            OverlayNode {
                roi: i + 1,
                label: atlas.label(i).to_string(),
                category: c.map(|c| c.category),
                theta: c.and_then(|c| if side == 0 { c.theta_a } else { c.theta_b }),
                degree: neighbors.len(),
                near_category: neighbors.iter().any(|n| by_roi.contains_key(n)),
            }
        })
        .collect();
    OverlayGroup { group, n_subjects, nodes, edges: graph.to_json().edges }
}

fn category_color(c: RoiCategory) -> &'static str {
    match c {
        RoiCategory::OnlyA => "tomato",
        RoiCategory::OnlyB => "steelblue",
        RoiCategory::Both => "gold",
        RoiCategory::StrongerInA => "salmon",
        RoiCategory::StrongerInB => "lightblue",
    }
}

pub fn overlay_dot(name: &str, g: &OverlayGroup) -> String {
    let mut out = format!("graph \"{name}\" {{\n  node [style=filled, fillcolor=white];\n");
    for n in &g.nodes {
        let _ = write!(out, "  n{} [label=\"{}\"", n.roi, n.label.replace('"', "\\\""));
        if let Some(c) = n.category {
            let _ = write!(out, ", fillcolor={}", category_color(c));
        } else if n.near_category {
            out.push_str(", fillcolor=gray90");
        }
        out.push_str("];\n");
    }
    for [i, j] in &g.edges {
        let _ = writeln!(out, "  n{i} -- n{j};");
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGraph {
    pub group: Group,
    pub n_subjects: usize,
    pub provenance: Provenance,
    pub edges: Vec<[usize; 2]>,
    pub dot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub pair: [Group; 2],
    pub group: Group,
    pub csv: String,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldBars {
    pub pair: [Group; 2],
    pub bars: Vec<KldBar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRoi {
    pub roi: usize,
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub theta_sd: f64,
    pub centrality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPatient {
    pub subject_id: String,
    pub x: f64,
    pub y: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentScatter {
    pub pair: [Group; 2],
    pub group: Group,
    pub rois: Vec<LatentRoi>,
    pub patients: Vec<LatentPatient>,
    pub sigma2: f64,
    pub sigma_theta2: f64,
    pub acceptance: AcceptanceRates,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub pair: [Group; 2],
    pub categories: Vec<RoiCategorization>,
    pub overlay: Overlay,
    pub dot: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleArtifacts {
    pub fcn_graphs: Vec<GroupGraph>,
    pub classification: Vec<CvReport>,
    pub attention_heatmaps: Vec<Heatmap>,
    pub kld_bars: Vec<KldBars>,
    pub latent_positions: Vec<LatentScatter>,
    pub roi_categories: Vec<CategoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub run_id: String,
    pub method: String,
    pub atlas: Vec<String>,
    pub artifacts: BundleArtifacts,
    /// Every run artifact the bundle was built from.
    pub inputs: Vec<ArtifactRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub bundle: PathBuf,
    pub sha256: String,
}

fn parse_matrix(text: &str, rel: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().map_err(|_| PipelineError::Checksum(format!("{rel}: unparsable cell `{v}`"))))
                .collect()
        })
        .collect()
}

fn latent(run: &Run, pair: [Group; 2], g: Group, rec: &mut StageRecord) -> Result<LatentScatter> {
    let s: PosteriorSummary = run.read_json(&lsirm_key(pair), &summary_file(pair, g), rec)?;
    let m = load_patient_matrix(run, pair, g, rec)?;
    let rois = m
        .rois
        .iter()
        .enumerate()
        .map(|(k, &r)| LatentRoi {
            roi: r + 1,
            label: run.atlas.label(r).to_string(),
            x: s.u[k][0],
            y: s.u[k][1],
            theta: s.theta[k],
            theta_sd: s.theta_sd[k],
            centrality: s.centrality[k],
        })
        .collect();
    let patients = m
        .subject_ids
        .iter()
        .enumerate()
        .map(|(i, id)| LatentPatient { subject_id: id.clone(), x: s.v[i][0], y: s.v[i][1], beta: s.beta[i] })
        .collect();
    Ok(LatentScatter {
        pair,
        group: g,
        rois,
        patients,
        sigma2: s.sigma2,
        sigma_theta2: s.sigma_theta2,
        acceptance: s.acceptance,
        n_samples: s.n_samples,
    })
}

/// Builds `report/bundle.json` from completed stages.
pub fn report(run: &mut Run) -> Result<ReportOutput> {
    let pairs = run.config.pairs.clone();
    if pairs.is_empty() {
        return Err(PipelineError::Config("no pairs configured ([run] pairs)".into()));
    }
    let mut required = vec!["fcn".to_string()];
    for &p in &pairs {
        required.extend([classify_key(p), select_key(p), lsirm_key(p)]);
    }
    if let Some(missing) = required.iter().find(|k| !run.manifest.stages.contains_key(k.as_str())) {
        return Err(PipelineError::StageMissing(missing.clone()));
    }

    let mut rec = StageRecord::new();
    let mut dots: Vec<(String, String)> = Vec::new();
    let mut groups: Vec<Group> = pairs.iter().flatten().copied().collect();
    groups.sort();
    groups.dedup();

    let mut fcn_graphs = Vec::new();
    for &g in &groups {
        let (graph, n) = consensus_graph(run, g, "report", &mut rec)?;
        let dot = format!("report/fcn_{g}.dot");
        dots.push((dot.clone(), graph.to_dot(&format!("{g} consensus"), &run.atlas)));
        fcn_graphs.push(GroupGraph {
            group: g,
            n_subjects: n,
            provenance: graph.provenance.clone(),
            edges: graph.to_json().edges,
            dot,
        });
    }

    let mut art = BundleArtifacts {
        fcn_graphs,
        classification: Vec::new(),
        attention_heatmaps: Vec::new(),
        kld_bars: Vec::new(),
        latent_positions: Vec::new(),
        roi_categories: Vec::new(),
    };
    for &pair in &pairs {
        let ck = classify_key(pair);
        art.classification.push(run.read_json(&ck, &format!("{ck}/cv_report.json"), &mut rec)?);
        for g in pair {
            let rel = mean_attention_file(pair, g);
            let (text, a) = run.read_output(&select_key(pair), &rel)?;
            rec.inputs.push(a);
            art.attention_heatmaps.push(Heatmap { pair, group: g, matrix: parse_matrix(&text, &rel)?, csv: rel });
        }
        let sk = select_key(pair);
        let bars: Vec<KldBar> = run.read_json(&sk, &format!("{sk}/kld_ranking.json"), &mut rec)?;
        art.kld_bars.push(KldBars { pair, bars });
        for g in pair {
            art.latent_positions.push(latent(run, pair, g, &mut rec)?);
        }
        let lk = lsirm_key(pair);
        let categories: Vec<RoiCategorization> = run.read_json(&lk, &categories_file(pair), &mut rec)?;
        let overlay: Overlay = run.read_json(&lk, &overlay_file(pair), &mut rec)?;
        let mut dot_files = Vec::new();
        for og in &overlay.groups {
            let rel = format!("report/overlay_{}_{}.dot", pair_name(pair), og.group);
            dots.push((rel.clone(), overlay_dot(&format!("{} in {}", og.group, pair_name(pair)), og)));
            dot_files.push(rel);
        }
        art.roi_categories.push(CategoryEntry { pair, categories, overlay, dot: dot_files });
    }

    rec.inputs.sort();
    rec.inputs.dedup();
    let bundle = ReportBundle {
        run_id: run.run_id().to_string(),
        method: run.config.fcn.method.to_string(),
        atlas: run.atlas.labels().to_vec(),
        artifacts: art,
        inputs: rec.inputs.clone(),
    };
    for (rel, text) in &dots {
        rec.outputs.push(run.write(rel, text.as_bytes())?);
    }
    let bytes = json_bytes(&bundle)?;
    let sha = sha256_hex(&bytes);
    rec.outputs.push(run.write(BUNDLE_FILE, &bytes)?);
    rec.outputs.push(run.write("report/bundle.sha256", format!("{sha}  bundle.json\n").as_bytes())?);
    run.commit("report", rec)?;
    Ok(ReportOutput { bundle: run.dir.join(BUNDLE_FILE), sha256: sha })
}
