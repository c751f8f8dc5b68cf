//! `lsqmm` command-line driver.
//!
//! Every subcommand prints one JSON line on stdout; diagnostics go to
//! stderr. Exit codes: 0 ok, 1 usage, 2 I/O, 3 validation, 4 numeric.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use lsqmm::trainer::TrainConfig;
use lsqmm::Error;

#[derive(Parser)]
#[command(name = "lsqmm", version, about = "Low-rank support quaternion matrix machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it to --out.
    Train {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a manifest with a saved model and write a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Expected image size; must match the model when given.
        #[arg(long, value_name = "MxN")]
        target_size: Option<Size>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated k-fold cross-validation.
    Cv {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        cv: CvFlags,
        /// Evaluate the vectorized linear SVM instead of LSQMM.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate every (C, lambda) pair on shared folds.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        cv: CvFlags,
        #[arg(long, value_delimiter = ',', required = true)]
        c_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        lambda_grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate on noisy copies of the data for each ratio.
    NoiseSweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        cv: CvFlags,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        ratios: Vec<f64>,
        /// Seed of the noise draws (defaults to --seed).
        #[arg(long)]
        noise_seed: Option<u64>,
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset as PNGs plus a manifest.
    Synth {
        #[command(flatten)]
        synth: SynthFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the per-iteration objective and residual as CSV.
    Trace {
        /// Read the trace of a saved model instead of training.
        #[arg(long, conflicts_with_all = ["manifest", "synth"])]
        model: Option<PathBuf>,
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `MxN` image size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Size(pub usize, pub usize);

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (m, n) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected MxN, got `{s}`"))?;
        let parse = |v: &str| match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected positive dimensions, got `{s}`")),
            Ok(d) => Ok(d),
        };
        Ok(Size(parse(m)?, parse(n)?))
    }
}

#[derive(Args, Clone)]
pub struct SynthFlags {
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    #[arg(long, value_name = "MxN", default_value = "16x16")]
    pub size: Size,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long = "seed", default_value_t = 0)]
    pub seed: u64,
}

/// Either a manifest of images or a synthetic dataset.
#[derive(Args, Clone)]
pub struct Source {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Image size the manifest is resized to.
    #[arg(long, value_name = "MxN", requires = "manifest")]
    pub target_size: Option<Size>,
    /// Use a synthetic low-rank dataset instead of a manifest.
    #[arg(long, conflicts_with = "manifest")]
    pub synth: bool,
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    #[arg(long, value_name = "MxN", default_value = "16x16")]
    pub size: Size,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.05)]
    pub sigma: f64,
}

#[derive(Args, Clone)]
pub struct TrainFlags {
    #[arg(long, allow_negative_numbers = true, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long = "soft-margin-c", allow_negative_numbers = true, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Write zero instead of wall-clock times so outputs are reproducible.
    #[arg(long)]
    pub no_timing: bool,
    /// Seed for synthetic data and fold assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainFlags {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            c: self.c,
            lambda: self.lambda,
            rho: self.rho,
            tau: self.tau,
            tol: self.tol,
            max_iter: self.max_iter,
            record_time: !self.no_timing,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Clone)]
pub struct CvFlags {
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// F1 positive class.
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub positive: i8,
}

/// Why a subcommand failed.
pub enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Io { .. } | Error::Decode { .. } => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
