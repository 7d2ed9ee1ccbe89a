//! `samm2d`: synthetic data generation, preprocessing, training,
//! cross-validation, calibration and Grad-CAM reports from one binary.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numeric failure. Set `SAMM2D_WORKERS` to bound the worker pool.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use samm2d::imaging::RegimeId;
use samm2d::Error;

#[derive(Parser)]
#[command(
    name = "samm2d",
    version,
    about = "Aneurysm-screening MIP classifier toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic angiography volumes and a manifest.
    Gen {
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// Overrides `gen.prevalence` from the config.
        #[arg(long)]
        prevalence: Option<f32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project, normalise, crop and augment every study into MIP2 samples.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Augmentation regime, A1 to A6.
        #[arg(long, default_value = "A1")]
        regime: RegimeId,
        /// Defaults to `train.seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model; writes the best checkpoint and the epoch history.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Separate validation manifest; otherwise a stratified holdout of
        /// `train.val_fraction` is used.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Shuffle training labels (leakage control).
        #[arg(long)]
        permute_labels: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified k-fold cross-validation.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate all six augmentation regimes.
    Ablation {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold sweep, operating modes and cost projection.
    Calibrate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the config stored in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grad-CAM heatmaps and attention statistics for true positives.
    Gradcam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        /// 1-based encoder stage; defaults to the config value.
        #[arg(long)]
        stage: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Consolidate every report under a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Data(_)
        | Error::Io { .. }
        | Error::Format(_)
        | Error::Shape { .. }
        | Error::SingleClass(_) => 3,
        Error::Numeric(_) | Error::NonFinite(_) | Error::NotScalar(_) => 4,
    }
}

fn configure_workers() -> samm2d::Result<()> {
    let Ok(raw) = std::env::var("SAMM2D_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "SAMM2D_WORKERS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn run(cli: Cli) -> samm2d::Result<()> {
    use commands::*;
    configure_workers()?;
    match cli.command {
        Command::Gen {
            n,
            prevalence,
            seed,
            config,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            gen(&mut cfg, n, prevalence, seed, &out)
        }
        Command::Preprocess {
            manifest,
            config,
            regime,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let seed = seed.unwrap_or(cfg.train.seed);
            preprocess(&cfg, &manifest, regime, seed, &out)
        }
        Command::Train {
            data,
            val,
            config,
            permute_labels,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            train(&cfg, &data, val.as_deref(), permute_labels, &out)
        }
        Command::Cv {
            data,
            config,
            folds,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cv(&mut cfg, &data, folds, &out)
        }
        Command::Ablation { data, config, out } => {
            let cfg = load_config(config.as_deref())?;
            ablation(&cfg, &data, &out)
        }
        Command::Calibrate {
            checkpoint,
            data,
            config,
            out,
        } => calibrate_cmd(&checkpoint, config.as_deref(), &data, &out),
        Command::Gradcam {
            checkpoint,
            data,
            n,
            stage,
            config,
            out,
        } => gradcam_cmd(&checkpoint, config.as_deref(), &data, n, stage, &out),
        Command::Report { run_dir } => report(&run_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("samm2d: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
