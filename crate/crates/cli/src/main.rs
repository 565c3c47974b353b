mod commands;
mod generator;
mod output;
mod rotfile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use generator::Generator;
use stein_rotations::experiments::Method;
use stein_rotations::Family;

/// Kernel Stein discrepancy tools for rotation data.
#[derive(Debug, Parser)]
#[command(name = "stein-rotations", version, about)]
pub struct Cli {
    /// Worker threads; also the number of independent sampling streams for generated data.
    /// Without it, sampling uses one stream and numerical work uses every core.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a family to rotation data.
    Estimate {
        #[arg(long, value_parser = parse_family)]
        family: Family,
        /// mksde, mle-smallF or mle-numeric (the MLE baselines are vMF only).
        #[arg(long, default_value = "mksde", value_parser = parse_method)]
        method: Method,
        /// Haar draws for the Monte Carlo normalizing constant of mle-numeric.
        #[arg(long, default_value_t = 20_000, value_parser = clap::value_parser!(u64).range(1000..))]
        mc_size: u64,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Minimum-KSD goodness-of-fit test.
    Gof {
        #[arg(long, value_parser = parse_family)]
        family: Family,
        /// Significance level in (0, 1).
        #[arg(long, default_value_t = 0.05, value_parser = parse_level)]
        beta: f64,
        /// Null draws (at least 100).
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(100..))]
        m: u64,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Draw samples from a generator and write them as a rotation file.
    Sample {
        #[arg(long)]
        gen: Generator,
        #[arg(long)]
        n: usize,
        /// Matrix size for generators that do not imply one.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..))]
        dim: u64,
        #[arg(long, env = "STEIN_ROTATIONS_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduction experiments.
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Estimator error against ground truth for six vMF parameters.
    Fig1 {
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        /// Sample sizes.
        #[arg(long, value_delimiter = ',', default_value = "100,500,1000")]
        n: Vec<usize>,
        /// Methods to compare.
        #[arg(long, value_delimiter = ',', default_value = "mksde,mle_smallF,mle_numeric", value_parser = parse_method)]
        method: Vec<Method>,
        #[arg(long, default_value_t = 20_000, value_parser = clap::value_parser!(u64).range(1000..))]
        mc_size: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Goodness-of-fit statistics for Cayley data tested against the vMF family.
    Table1 {
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(100..))]
        m: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,1.0,1.5,2.0")]
        kappa: Vec<f64>,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..))]
        dim: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Where the samples come from: a rotation file or a generator.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct DataArgs {
    /// Rotation file (one sample per line, N² row-major entries).
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Generator spec, e.g. vmf:F=5*I3, cayley:kappa=1, rn:sigma=0.3, haar.
    #[arg(long, requires = "n")]
    pub gen: Option<Generator>,
}

#[derive(Debug, Args)]
pub struct SizeArgs {
    /// Number of generated samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Matrix size for generators that do not imply one.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..))]
    pub dim: u64,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Base kernel temperature.
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    pub tau: f64,
    #[arg(long, env = "STEIN_ROTATIONS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: stein_rotations::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: stein_rotations::Error| e.to_string())
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
