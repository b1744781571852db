mod common;

use std::fs;
use std::process::Command;

use roinet::classifier::sha256_hex;
use roinet::data::read_cohort_manifest;
use roinet::fcn::{FcnMethod, GraphExport};
use roinet_cli::stages::{classify, fcn, ingest, lsirm, run_all, select, Outcome, Run};
use roinet_cli::{report, synth, PipelineConfig, PipelineError, ReportBundle, ARTIFACT_KINDS, BUNDLE_FILE};

use common::{fixture, small_config, small_spec, SMALL_INI};

fn checksums(dir: &std::path::Path) -> Vec<(String, String)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), sha256_hex(&fs::read(&p).unwrap()))
        })
        .collect();
    out.sort();
    out
}

#[test]
fn synth_writes_one_csv_per_subject() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(10, 0.5, 3);
    let out = synth(&spec, &dir.path().join("a")).unwrap();
    assert_eq!(out.entries.len(), 20);
    assert_eq!(read_cohort_manifest(&out.manifest).unwrap().len(), 20);
    let csvs = fs::read_dir(dir.path().join("a")).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv")
    });
    assert_eq!(csvs.count(), 20);

    synth(&spec, &dir.path().join("b")).unwrap();
    assert_eq!(checksums(&dir.path().join("a")), checksums(&dir.path().join("b")));

    let mut empty = spec.clone();
    empty.group_sizes.clear();
    assert!(synth(&empty, &dir.path().join("c")).is_err());
}

#[test]
fn full_run_is_reproducible_and_verifiable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());

    let mut a = Run::open(cfg.clone(), Some(&dir.path().join("out1"))).unwrap();
    assert_eq!(run_all(&mut a).unwrap(), Outcome::Complete);
    let mut b = Run::open(cfg.clone(), Some(&dir.path().join("out2"))).unwrap();
    run_all(&mut b).unwrap();
    assert_eq!(a.run_id(), b.run_id());
    let ba = fs::read(a.dir.join(BUNDLE_FILE)).unwrap();
    assert_eq!(ba, fs::read(b.dir.join(BUNDLE_FILE)).unwrap());

    let bundle: ReportBundle = serde_json::from_slice(&ba).unwrap();
    let value: serde_json::Value = serde_json::from_slice(&ba).unwrap();
    let kinds: Vec<&String> = value["artifacts"].as_object().unwrap().keys().collect();
    assert_eq!(kinds.len(), 6);
    for k in ARTIFACT_KINDS {
        assert!(value["artifacts"].get(k).is_some(), "{k}");
    }
    assert!(bundle.inputs.iter().all(|i| i.is_internal()));
    let text = String::from_utf8(ba.clone()).unwrap();
    assert!(!text.contains(dir.path().to_str().unwrap()));

    // Re-reporting leaves the bundle untouched.
    let r = report(&mut a).unwrap();
    assert_eq!(r.sha256, sha256_hex(&ba));
    a.verify().unwrap();

    // A different seed gives a different run.
    let mut other = cfg;
    other.seed += 1;
    assert_ne!(other.run_id().unwrap(), a.run_id());
}

#[test]
fn tampering_breaks_verification_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut run = Run::open(cfg, Some(&dir.path().join("out"))).unwrap();
    run_all(&mut run).unwrap();
    run.verify().unwrap();

    let target = run.dir.join("fcn/SYNTH_A_001/adjacency.csv");
    let mut text = fs::read_to_string(&target).unwrap();
    text.replace_range(0..1, if text.starts_with('0') { "1" } else { "0" });
    fs::write(&target, text).unwrap();

    let Err(PipelineError::Verify(problems)) = run.verify() else { panic!("tampering went unnoticed") };
    assert!(problems.iter().any(|p| p.starts_with("fcn:") && p.contains("adjacency.csv")));
    assert!(problems.iter().any(|p| p.starts_with("classify/SYNTH_A_SYNTH_B:") && p.contains("adjacency.csv")));
    // Downstream stages refuse to read it as well.
    assert!(matches!(classify(&mut run, [roinet::Group::SynthA, roinet::Group::SynthB]), Err(PipelineError::Checksum(_))));
}

#[test]
fn report_before_classify_is_stage_missing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut run = Run::open(cfg, Some(&dir.path().join("out"))).unwrap();
    assert!(matches!(report(&mut run), Err(PipelineError::StageMissing(s)) if s == "fcn"));
    fcn(&mut run).unwrap();
    assert!(matches!(report(&mut run), Err(PipelineError::StageMissing(s)) if s.starts_with("classify")));
    let pair = [roinet::Group::SynthA, roinet::Group::SynthB];
    assert!(matches!(select(&mut run, pair), Err(PipelineError::StageMissing(_))));
    assert!(matches!(lsirm(&mut run, pair), Err(PipelineError::StageMissing(_))));
}

#[test]
fn missing_csv_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    fs::remove_file(dir.path().join("cohort/SYNTH_B_004.csv")).unwrap();
    let mut run = Run::open(cfg, Some(&dir.path().join("out"))).unwrap();
    assert_eq!(ingest(&mut run).unwrap(), Outcome::Partial);
    assert_eq!(fcn(&mut run).unwrap(), Outcome::Partial);
    let rec = run.manifest.stage("fcn").unwrap();
    assert_eq!(rec.failures.len(), 1);
    assert_eq!(rec.failures[0].subject_id, "SYNTH_B_004");
    assert!(run.dir.join("fcn/SYNTH_B_003/graph.json").is_file());
    let pair = [roinet::Group::SynthA, roinet::Group::SynthB];
    assert!(matches!(classify(&mut run, pair), Err(PipelineError::IncompleteInputs { .. })));
}

#[test]
fn embedding_methods_record_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.fcn.umap.n_neighbors = 5;
    let mut graphs = Vec::new();
    for m in [FcnMethod::Tsne, FcnMethod::Umap] {
        cfg.fcn.method = m;
        let mut run = Run::open(cfg.clone(), Some(&dir.path().join("out"))).unwrap();
        fcn(&mut run).unwrap();
        let text = fs::read_to_string(run.dir.join("fcn/SYNTH_A_001/graph.json")).unwrap();
        let g: GraphExport = serde_json::from_str(&text).unwrap();
        assert_eq!(g.provenance.method_name(), m.as_str());
        assert!(run.dir.join("fcn/SYNTH_A_001/embedding.json").is_file());
        graphs.push(run.dir);
    }
    assert_ne!(graphs[0], graphs[1]);
}

#[test]
fn pearson_on_clean_blocks_gives_block_cliques() {
    let dir = tempfile::tempdir().unwrap();
    let ini = SMALL_INI.replace("method = tsne", "method = pearson\ntau = 0.9");
    let path = fixture(dir.path(), &small_spec(3, 1e-4, 5), &ini);
    let cfg = PipelineConfig::load(&path).unwrap();
    let mut run = Run::open(cfg, Some(&dir.path().join("out"))).unwrap();
    fcn(&mut run).unwrap();
    // Group A keeps the contiguous blocks {1..4}, {5..8}, ...
    let text = fs::read_to_string(run.dir.join("fcn/SYNTH_A_002/graph.json")).unwrap();
    let g: GraphExport = serde_json::from_str(&text).unwrap();
    let mut expected = Vec::new();
    for b in 0..4 {
        for i in 1..=4 {
            for j in i + 1..=4 {
                expected.push([4 * b + i, 4 * b + j]);
            }
        }
    }
    assert_eq!(g.edges, expected);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = fixture(dir.path(), &small_spec(10, 0.5, 3), SMALL_INI);
    let bin = env!("CARGO_BIN_EXE_roinet");
    let status = |args: &[&str]| {
        Command::new(bin).args(args).env_remove("ROINET_OUTPUT_ROOT").status().unwrap().code().unwrap()
    };
    let out = dir.path().join("out");
    let cfg = path.to_str().unwrap();
    let out = out.to_str().unwrap();
    assert_eq!(status(&["ingest", "--config", cfg, "--out", out]), 0);
    fs::remove_file(dir.path().join("cohort/SYNTH_A_001.csv")).unwrap();
    assert_eq!(status(&["fcn", "--config", cfg, "--out", out]), 2);
    assert_eq!(status(&["classify", "--config", cfg, "--out", out]), 1);
    assert_eq!(status(&["fcn", "--config", "/nonexistent.ini", "--out", out]), 1);
    assert_eq!(status(&["report", "--config", cfg, "--out", out]), 1);
}

#[test]
fn output_root_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = fixture(dir.path(), &small_spec(10, 0.5, 3), SMALL_INI);
    let root = dir.path().join("env-root");
    let code = Command::new(env!("CARGO_BIN_EXE_roinet"))
        .args(["ingest", "--config", path.to_str().unwrap()])
        .env("ROINET_OUTPUT_ROOT", &root)
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(0));
    let cfg = PipelineConfig::load(&path).unwrap();
    assert!(root.join(cfg.run_id().unwrap()).join("manifest.json").is_file());
}

#[test]
fn run_id_ignores_output_location_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut moved = cfg.clone();
    moved.output_dir = Some("/elsewhere".into());
    moved.jobs = 3;
    assert_eq!(cfg.run_id().unwrap(), moved.run_id().unwrap());
    let mut k = cfg.clone();
    k.featsel.k = 3;
    assert_ne!(cfg.run_id().unwrap(), k.run_id().unwrap());
}

#[test]
fn config_validation_checks_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.validate().unwrap();
    cfg.manifest = dir.path().join("missing.json");
    assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
}
