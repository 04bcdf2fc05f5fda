//! `collapsescope` command-line front end.
//!
//! Exit codes: 0 success, 1 computational error, 2 config or I/O error,
//! 3 a check ran and failed.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Compute(#[from] collapsescope::Error),
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Compute(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Compute(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "collapsescope", version, about = "Neural-collapse and fine-grained structure experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a Gaussian-mixture dataset.
    Generate(Common),
    /// Train a two-layer network by full-batch gradient descent.
    Train(Common),
    /// NC1, NC2, class-distance matrix and MSDR of a representation file.
    Metrics(Common),
    /// Cluster-and-linear-probe on a coarse-trained network.
    Clp(Common),
    /// Hidden-layer cluster separation in the four-cluster setting.
    Theorem {
        #[command(flatten)]
        common: Common,
        /// Exit 3 without training when a parameter condition fails.
        #[arg(long)]
        require_conditions: bool,
    },
    /// MSDR or similarity sweep over one axis.
    Sweep(Common),
    /// NC metrics at training checkpoints.
    Trajectory(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// KEY=VALUE override, dotted keys, value parsed as JSON when possible.
    #[arg(long = "set", value_name = "K=V")]
    set: Vec<String>,
}

fn context(common: &Common, require_conditions: bool) -> Result<commands::Context, CliError> {
    let cfg = config::load(&common.config, &common.set)?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))?;
    if common.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    Ok(commands::Context {
        cfg,
        config_dir: common.config.parent().map(Path::to_path_buf).unwrap_or_default(),
        out,
        jobs: common.jobs,
        require_conditions,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(c) => commands::generate(&context(c, false)?),
        Command::Train(c) => commands::train(&context(c, false)?),
        Command::Metrics(c) => commands::metrics(&context(c, false)?),
        Command::Clp(c) => commands::clp(&context(c, false)?),
        Command::Theorem { common, require_conditions } => commands::theorem(&context(common, *require_conditions)?),
        Command::Sweep(c) => commands::sweep(&context(c, false)?),
        Command::Trajectory(c) => commands::trajectory(&context(c, false)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
