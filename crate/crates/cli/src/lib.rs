//! Command-line front end: `generate`, `train`, `evaluate`, `predict`,
//! `analyze`, `stats` and `gradcheck`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or format
//! error, 3 numeric failure (non-finite loss, failed gradient check).

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Missing(String),
    #[error("gradient check failed for {0} combinations")]
    GradcheckFailed(usize),
    #[error(transparent)]
    Core(#[from] milkit::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Missing(_) => 2,
            CliError::GradcheckFailed(_) => 3,
            CliError::Core(e) => match e {
                milkit::Error::Config(_) => 1,
                milkit::Error::NonFiniteLoss { .. } => 3,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "milkit",
    version,
    about = "Multiple instance learning with attention pooling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the `out` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        config.apply_overrides(&self.overrides)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model file or checkpoint glob; a glob evaluates the ensemble of its matches.
    #[arg(long)]
    model: Option<String>,
    /// Dataset file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Keep only the last N glob matches.
    #[arg(long)]
    last: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic train/eval datasets and the class vocabulary.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write checkpoints and the loss log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training dataset file.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a model or checkpoint ensemble; write JSON and per-class CSV reports.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Write per-bag class probabilities as CSV.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Correlate per-class AP with training-bag counts and label quality.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Evaluation report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Training dataset the counts come from.
        #[arg(long)]
        data: Option<PathBuf>,
        /// class_name,quality CSV.
        #[arg(long)]
        quality: Option<PathBuf>,
    },
    /// Write the labels-per-bag histogram and sorted per-class counts.
    Stats {
        #[command(flatten)]
        common: Common,
        /// Dataset file.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Check tape gradients against central differences for every head, gate and topology.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Corrupt one backward rule to confirm the check can fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn command() -> clap::Command {
    let keys = config::keys_help();
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    for name in names {
        let keys = keys.clone();
        cmd = cmd.mut_subcommand(name, move |s| s.after_help(keys));
    }
    cmd
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Generate { common } => commands::generate(&common.resolve()?, out).map(drop),
        Command::Train { common, data } => {
            commands::train_cmd(&common.resolve()?, data.as_deref(), out).map(drop)
        }
        Command::Evaluate { common, model } => commands::evaluate_cmd(
            &common.resolve()?,
            model.model.as_deref(),
            model.data.as_deref(),
            model.last,
            out,
        )
        .map(drop),
        Command::Predict { common, model } => commands::predict_cmd(
            &common.resolve()?,
            model.model.as_deref(),
            model.data.as_deref(),
            model.last,
            out,
        )
        .map(drop),
        Command::Analyze {
            common,
            report,
            data,
            quality,
        } => commands::analyze_cmd(
            &common.resolve()?,
            report.as_deref(),
            data.as_deref(),
            quality.as_deref(),
            out,
        )
        .map(drop),
        Command::Stats { common, data } => {
            commands::stats_cmd(&common.resolve()?, data.as_deref(), out).map(drop)
        }
        Command::Gradcheck {
            common,
            inject_fault,
        } => commands::gradcheck_cmd(&common.resolve()?, inject_fault, out).map(drop),
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                out.write_all(text.as_bytes()).ok();
            } else {
                err.write_all(text.as_bytes()).ok();
            }
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            writeln!(err, "{e}").ok();
            return 1;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            writeln!(err, "error: {e}").ok();
            e.exit_code()
        }
    }
}
