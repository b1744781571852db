use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roinet::fcn::FcnMethod;
use roinet::Group;
use roinet_cli::stages::{classify, fcn, ingest, lsirm, run_all, select, Outcome, Run};
use roinet_cli::{load_cohort_spec, parse_pair, report, synth, PipelineConfig, PipelineError, OUTPUT_ROOT_ENV};

#[derive(Parser)]
#[command(name = "roinet", version, about = "ROI connectivity, attention and latent space pipeline")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config (INI).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// pearson, fisher, pca, tsne or umap.
    #[arg(long)]
    method: Option<FcnMethod>,
    /// Output root; defaults to the config, then $ROINET_OUTPUT_ROOT.
    #[arg(long, env = OUTPUT_ROOT_ENV)]
    out: Option<PathBuf>,
    /// Number of ROIs to select per group.
    #[arg(long)]
    k: Option<usize>,
    /// Correlation threshold for pearson/fisher networks.
    #[arg(long)]
    tau: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Clone)]
struct PairArgs {
    #[command(flatten)]
    common: Common,
    /// Group pair, e.g. AD:MCI. Defaults to every pair in the config.
    #[arg(long, value_parser = parse_pair_arg)]
    pair: Option<[Group; 2]>,
}

fn parse_pair_arg(s: &str) -> Result<[Group; 2], String> {
    parse_pair(s)
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort from a JSON cohort spec.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the cohort file's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate every recording in the cohort.
    Ingest(Common),
    /// Build one connectivity network per subject.
    Fcn(Common),
    /// Cross-validate the attention classifier and export attention.
    Classify(PairArgs),
    /// Rank and select ROIs from attention.
    Select(PairArgs),
    /// Fit the latent space model to the selected ROIs.
    Lsirm(PairArgs),
    /// Build the report bundle. With RUN_ID, reads that run from the output root.
    Report {
        run_id: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = OUTPUT_ROOT_ENV)]
        out: Option<PathBuf>,
    },
    /// Run every stage and the report.
    Run(Common),
    /// Recheck every checksum recorded in a run manifest.
    Verify {
        run_dir: PathBuf,
    },
}

fn load(c: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.method {
        cfg.fcn.method = m;
    }
    if let Some(k) = c.k {
        cfg.featsel.k = k;
    }
    if let Some(t) = c.tau {
        cfg.fcn.tau = t;
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn open(c: &Common) -> Result<Run, PipelineError> {
    let run = Run::open(load(c)?, c.out.as_deref())?;
    eprintln!("run {} in {}", run.run_id(), run.dir.display());
    Ok(run)
}

fn pairs(run: &Run, p: &PairArgs) -> Result<Vec<[Group; 2]>, PipelineError> {
    match p.pair {
        Some(pair) => Ok(vec![pair]),
        None if run.config.pairs.is_empty() => Err(PipelineError::Config("no --pair given and none configured".into())),
        None => Ok(run.config.pairs.clone()),
    }
}

fn execute(command: Command) -> Result<Outcome, PipelineError> {
    match command {
        Command::Synth { spec, out, seed } => {
            let mut spec = load_cohort_spec(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let o = synth(&spec, &out)?;
            println!("{} subjects, manifest {}", o.entries.len(), o.manifest.display());
            Ok(Outcome::Complete)
        }
        Command::Ingest(c) => ingest(&mut open(&c)?),
        Command::Fcn(c) => fcn(&mut open(&c)?),
        Command::Classify(p) => {
            let mut run = open(&p.common)?;
            for pair in pairs(&run, &p)? {
                let r = classify(&mut run, pair)?;
                println!("{}:{} mean accuracy {:.4}", pair[0], pair[1], r.mean_accuracy);
            }
            Ok(Outcome::Complete)
        }
        Command::Select(p) => {
            let mut run = open(&p.common)?;
            for pair in pairs(&run, &p)? {
                let s = select(&mut run, pair)?;
                println!("{}:{} selected {} ROIs per group", pair[0], pair[1], s.k);
            }
            Ok(Outcome::Complete)
        }
        Command::Lsirm(p) => {
            let mut run = open(&p.common)?;
            for pair in pairs(&run, &p)? {
                let c = lsirm(&mut run, pair)?;
                println!("{}:{} categorised {} ROIs", pair[0], pair[1], c.len());
            }
            Ok(Outcome::Complete)
        }
        Command::Report { run_id, config, out } => {
            let mut run = match (run_id, config) {
                (Some(id), cfg) => {
                    let root = match cfg {
                        Some(path) => PipelineConfig::load(&path)?.output_root(out.as_deref()),
                        None => out.unwrap_or_else(|| PathBuf::from("roinet-runs")),
                    };
                    Run::open_existing(&root.join(id))?
                }
                (None, Some(path)) => Run::open(PipelineConfig::load(&path)?, out.as_deref())?,
                (None, None) => return Err(PipelineError::Config("report needs a RUN_ID or --config".into())),
            };
            let r = report(&mut run)?;
            println!("{}  {}", r.sha256, r.bundle.display());
            Ok(Outcome::Complete)
        }
        Command::Run(c) => {
            let mut run = open(&c)?;
            let outcome = run_all(&mut run)?;
            println!("{}", run.dir.join(roinet_cli::BUNDLE_FILE).display());
            Ok(outcome)
        }
        Command::Verify { run_dir } => {
            Run::open_existing(Path::new(&run_dir))?.verify()?;
            println!("ok");
            Ok(Outcome::Complete)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
