//! `nlos`: dataset generation, fast-scan distortion, reconstruction,
//! training and evaluation from the command line.
//!
//! Exit codes are listed in [`error::exit`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod store;
pub mod tcube;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "nlos", version, about = "Fast-scan NLOS simulation, reconstruction and training")]
pub struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override every seed in the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true, value_name = "N", env = "TRANSIT_THREADS")]
    pub threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CubeChoice {
    Dense,
    Distorted,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into --out.
    MakeDataset,

    /// Apply the fast-scan distortion to dense cubes.
    Distort {
        /// Dense TCUBE files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },

    /// Reconstruct one image per frame.
    Reconstruct {
        /// TCUBE files, cube directories or dataset directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,

        /// lct, backprojection or transit.
        #[arg(long, default_value = "lct")]
        method: String,

        /// Trained model, required by `transit`.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,

        /// Which cube of a dataset frame to read.
        #[arg(long, value_enum, default_value = "distorted")]
        cube: CubeChoice,
    },

    /// Train stage 1 (imaging loss) or stage 2 (plus domain alignment).
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,

        /// Labeled dataset directory.
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,

        /// Starting weights; required for stage 2.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,

        /// Unlabeled target-domain cubes (dataset or cube directories); stage 2.
        #[arg(long, value_name = "DIR")]
        target: Vec<PathBuf>,

        /// Continue an interrupted run from the checkpoint in --out.
        #[arg(long)]
        resume: bool,

        /// Save and stop once this many epochs are complete.
        #[arg(long, value_name = "EPOCHS")]
        stop_after: Option<usize>,
    },

    /// Compare reconstructions with ground truth.
    Eval {
        recon: PathBuf,
        gt: PathBuf,

        /// Method label for the report.
        #[arg(long, default_value = "recon")]
        method: String,

        /// Report path; defaults to <out>/metrics.csv.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },

    /// Describe a TCUBE file, checkpoint or dataset; with no path, print
    /// the effective configuration.
    Info { path: Option<PathBuf> },
}

/// Load the configuration and run the selected command.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
        cfg.validate()?;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli.out.as_path();
    match cli.command {
        Command::MakeDataset => commands::make_dataset(&cfg, out),
        Command::Distort { inputs } => commands::distort(&cfg, &inputs, out),
        Command::Reconstruct {
            inputs,
            method,
            checkpoint,
            cube,
        } => commands::reconstruct(&cfg, &inputs, &method, checkpoint.as_deref(), cube, out),
        Command::Train {
            stage,
            dataset,
            checkpoint,
            target,
            resume,
            stop_after,
        } => commands::train(
            &cfg,
            &commands::TrainArgs {
                stage,
                dataset: &dataset,
                checkpoint: checkpoint.as_deref(),
                target: &target,
                resume,
                stop_after,
            },
            out,
        ),
        Command::Eval { recon, gt, method, csv } => {
            let csv = csv.unwrap_or_else(|| out.join("metrics.csv"));
            commands::eval(&cfg, &recon, &gt, &method, &csv)
        }
        Command::Info { path } => commands::info(&cfg, path.as_deref()),
    }
}
