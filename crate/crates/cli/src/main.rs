use std::path::PathBuf;
use std::process::ExitCode;

use censored_gp_cli::{emit_results, run_experiment_grid, CliError, ExperimentConfig, Model};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
        }
    }
}

/// Run NCGP / NCGP-A / CGP over a censoring grid and write result tables.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of ncgp, ncgp_a, cgp.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<Model>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, value_enum, default_value = "info")]
    log_level: LogLevel,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(models) = args.models {
        cfg.models = models;
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    cfg.validate()?;

    let output = run_experiment_grid(&cfg)?;
    let files = emit_results(&output, &cfg.output_dir)?;
    let failed = output.records.iter().filter(|r| r.failed()).count();
    log::info!("{} records ({failed} failed), wrote {} files to {}", output.records.len(), files.len(), cfg.output_dir.display());
    if output.all_failed() {
        return Err(CliError::AllCellsFailed);
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new().filter_level(args.log_level.into()).format_timestamp(None).init();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
