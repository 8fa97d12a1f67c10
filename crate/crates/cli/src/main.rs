use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mcfusion::io::{self, Artifacts, Dataset, IngestOptions};
use mcfusion::RunConfig;

/// Moisture-content prediction experiments: simulate, ingest, train, evaluate, report.
#[derive(Parser, Debug)]
#[command(name = "mcfusion", version)]
struct Cli {
    /// Master seed (simulation, fold shuffles and model initialization).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML file layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Omit wall-clock fields so repeated runs give byte-identical reports.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Root for checkpoints and reports.
    #[arg(long, global = true, env = "MCFUSION_ARTIFACTS", default_value = "artifacts")]
    artifacts: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset manifest (CSV).
    manifest: PathBuf,

    /// Drop invalid rows instead of refusing the dataset.
    #[arg(long)]
    lenient: bool,

    /// Also require the 3x2 factorial levels and the 70-250 min time window.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset (manifest.csv + images/).
    Simulate {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        /// Number of runs; replaces the factorial design with its first condition.
        #[arg(long)]
        runs: Option<usize>,
        /// Slices per run for the reduced design.
        #[arg(long)]
        slices: Option<usize>,
    },
    /// Validate a manifest and its images.
    Ingest(DataArgs),
    /// Segment every image; write simple features and mask previews.
    Preprocess(DataArgs),
    /// Train the fusion model on the whole dataset and save a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epochs: Option<usize>,
        /// Tabular:image ratio, e.g. 8:1.
        #[arg(long, value_parser = parse_ratio)]
        ratio: Option<(u32, u32)>,
    },
    /// Score a saved checkpoint on a dataset.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Defaults to <artifacts>/models/fusion.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Cross-validate the four ablation arms.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Cross-validate the fusion model at several tabular:image ratios.
    SweepRatio {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated ratios, e.g. 1:1,8:1; defaults to the configured list.
        #[arg(long, value_delimiter = ',', value_parser = parse_ratio)]
        ratios: Option<Vec<(u32, u32)>>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Cross-validate linear regression, GP and NN baselines against the fusion model.
    Baselines {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Print saved reports as tables and render plots.
    Report,
}

fn parse_ratio(s: &str) -> std::result::Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a ratio like 8:1, got {s}"))?;
    let a: u32 = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    let b: u32 = b.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    if a == 0 || b == 0 {
        return Err(format!("ratio parts must be positive, got {s}"));
    }
    Ok((a, b))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut layers = vec!["defaults".to_string()];
    let mut cfg = match &cli.config {
        Some(p) => {
            layers.push(format!("file {}", p.display()));
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        layers.push(format!("--seed {seed}"));
        cfg = cfg.with_seed(seed);
    }
    if cli.deterministic {
        layers.push("--deterministic".into());
        cfg.deterministic = true;
    }
    eprintln!("config: {} (hash {})", layers.join(" < "), &cfg.hash()[..12]);
    Ok(cfg)
}

fn ingest(data: &DataArgs) -> Result<Dataset> {
    let ds = io::cmd_ingest(&data.manifest, IngestOptions { strict: data.strict, lenient: data.lenient })?;
    for issue in &ds.issues {
        eprintln!("dropped {issue}");
    }
    eprintln!("{}", ds.summary());
    Ok(ds)
}

fn with_epochs(mut cfg: RunConfig, epochs: Option<usize>) -> Result<RunConfig> {
    if let Some(e) = epochs {
        cfg.training.epochs = e;
        cfg.sweep.epochs = Some(e);
        cfg.validate()?;
    }
    Ok(cfg)
}

fn progress(msg: &str) {
    eprintln!("{msg}");
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let artifacts = Artifacts::new(&cli.artifacts);
    let clean = |ds: &Dataset| ds.issues.is_empty();
    match &cli.command {
        Command::Simulate { out, runs, slices } => {
            let s = io::cmd_simulate(&cfg, out, *runs, *slices)?;
            println!("wrote {} records to {}", s.records, s.manifest.display());
            println!("dataset hash {}", s.dataset_hash);
            Ok(true)
        }
        Command::Ingest(data) => {
            let ds = ingest(data)?;
            println!("{}", ds.summary());
            println!("dataset hash {}", ds.hash);
            Ok(clean(&ds))
        }
        Command::Preprocess(data) => {
            let ds = ingest(data)?;
            let path = io::cmd_preprocess(&ds, &cfg, &artifacts)?;
            println!("wrote {}", path.display());
            Ok(clean(&ds))
        }
        Command::Train { data, epochs, ratio } => {
            let ds = ingest(data)?;
            let mut cfg = with_epochs(cfg, *epochs)?;
            if let Some(r) = ratio {
                cfg.fusion.ratio = *r;
                cfg.validate()?;
            }
            let path = io::cmd_train(&ds, &cfg, &artifacts, &progress)?;
            println!("saved {}", path.display());
            Ok(clean(&ds))
        }
        Command::Evaluate { data, checkpoint } => {
            let ck = checkpoint.clone().unwrap_or_else(|| artifacts.fusion_checkpoint());
            if !Path::new(&ck).exists() {
                bail!("checkpoint not found: {} (run `mcfusion train` first)", ck.display());
            }
            let ds = ingest(data)?;
            let report = io::cmd_evaluate(&ds, &cfg, &ck, &artifacts)?;
            print!("{}", report.table.to_text());
            Ok(clean(&ds))
        }
        Command::Ablate { data, epochs } => {
            let ds = ingest(data)?;
            let cfg = with_epochs(cfg, *epochs)?;
            let report = io::cmd_ablate(&ds, &cfg, &artifacts, &progress)?;
            print!("{}", report.table.to_text());
            Ok(clean(&ds))
        }
        Command::SweepRatio { data, ratios, epochs } => {
            let ds = ingest(data)?;
            let cfg = with_epochs(cfg, *epochs)?;
            let report = io::cmd_sweep_ratio(&ds, &cfg, ratios.as_deref(), &artifacts, &progress)?;
            print!("{}", report.table.to_text());
            Ok(clean(&ds))
        }
        Command::Baselines { data, epochs } => {
            let ds = ingest(data)?;
            let cfg = with_epochs(cfg, *epochs)?;
            let report = io::cmd_baselines(&ds, &cfg, &artifacts, &progress)?;
            print!("{}", report.table.to_text());
            Ok(clean(&ds))
        }
        Command::Report => {
            print!("{}", io::cmd_report(&artifacts).context("rendering reports")?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("finished, but some rows failed validation");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
