//! `gradstop`: train outlier detectors with and without GradStop, write
//! telemetry and summaries, and probe the inlier-priority condition.

mod config;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gradstop_core::{Mode, Preset, TieMode};

use config::{parse_seeds, RunConfig};

/// Default output directory when neither `--out` nor the config sets one.
pub const OUT_ENV: &str = "GRADSTOP_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<gradstop_core::Error> for CliError {
    fn from(e: gradstop_core::Error) -> Self {
        use gradstop_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidArgument(_) => CliError::Config(msg),
            E::NonFinite(_) | E::ZeroNorm | E::LearningRateUnderflow { .. } | E::NonMonotoneEpoch { .. } => {
                CliError::Numeric(msg)
            }
            _ => CliError::Data(msg),
        }
    }
}

#[derive(Parser)]
#[command(name = "gradstop", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed × mode, writing telemetry, scores and summaries.
    Run(RunArgs),
    /// Probe class-conditional gradient dynamics along training and check the
    /// sufficient condition for inlier priority.
    Verify(RunArgs),
    /// Print the named hyperparameter profiles.
    Presets {
        /// Only this profile.
        name: Option<String>,
    },
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

#[derive(Args)]
struct RunArgs {
    /// TOML config; without it a small synthetic autoencoder run is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_parser = |s: &str| parse_seeds(s).map(SeedList))]
    seed: Option<SeedList>,
    /// Output directory [default: config `out`, then $GRADSTOP_OUT, then ./gradstop-out].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    auc_ties: Option<TiesArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TiesArg {
    Strict,
    Half,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Vanilla,
    Gradstop,
    Both,
}

fn resolve(args: RunArgs) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default_synthetic(),
    };
    if let Some(SeedList(seeds)) = args.seed {
        cfg.seeds = seeds;
    }
    if let Some(t) = args.auc_ties {
        cfg.ties = match t {
            TiesArg::Strict => TieMode::Strict,
            TiesArg::Half => TieMode::Half,
        };
    }
    if let Some(m) = args.mode {
        cfg.modes = match m {
            ModeArg::Vanilla => vec![Mode::Vanilla],
            ModeArg::Gradstop => vec![Mode::Gradstop],
            ModeArg::Both => vec![Mode::Vanilla, Mode::Gradstop],
        };
    }
    cfg.validate()?;
    let out = experiment::default_out_dir(args.out, &cfg);
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = resolve(args)?;
            experiment::run(&cfg, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Verify(args) => {
            let (cfg, out) = resolve(args)?;
            experiment::verify(&cfg, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Presets { name } => {
            let only = match name {
                Some(n) => Some(Preset::from_name(&n).ok_or_else(|| CliError::Config(format!("unknown profile {n:?}")))?),
                None => None,
            };
            print!("{}", experiment::presets_toml(only));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors count as config errors; clap's own code 2 would collide with data errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
