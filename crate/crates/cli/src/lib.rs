//! Command-line pipeline: fixture, rasterize, train, generate, stitch,
//! evaluate and serve.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime error.

pub mod args;
mod commands;
pub mod config;
pub mod serve;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use thiserror::Error;
use tilesynth_core::metrics::MetricsError;
use tilesynth_core::raster::RasterError;
use tilesynth_core::stitch::StitchError;
use tilesynth_nn::gan::GanError;

pub use args::Cli;
pub use config::PipelineConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn from_gan(e: GanError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }

    fn from_raster(e: RasterError) -> Self {
        match e {
            RasterError::Palette(_)
            | RasterError::Options(_)
            | RasterError::EmptyDataset { .. }
            | RasterError::NoExtent
            | RasterError::Manifest { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }

    fn from_metrics(e: MetricsError) -> Self {
        match e {
            MetricsError::EmptyDirectory(_)
            | MetricsError::Unpaired(_)
            | MetricsError::Extractor(_)
            | MetricsError::FeatureFile { .. }
            | MetricsError::TooFewSamples(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }

    fn from_stitch(e: StitchError) -> Self {
        match e {
            StitchError::NoTiles { .. } | StitchError::EmptyRegion => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn init_logging(quiet: bool, verbose: u8) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(log::LevelFilter::Trace)
        .format(|buf, record| writeln!(buf, "level={} target={} {}", record.level().as_str().to_ascii_lowercase(), record.target(), record.args()))
        .target(env_logger::Target::Stderr)
        .try_init();
    log::set_max_level(level);
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.quiet, cli.verbose);
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("event=failed error={:?}", e.to_string());
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_cli(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cfg.train.seed != 0 && cfg.train.seed != cfg.seed && cli.seed.is_none() {
        log::warn!("event=config_note message=\"train.seed is replaced by the top-level seed\"");
    }
    cli.apply(&mut cfg).map_err(CliError::Validation)?;
    cfg.validate()?;
    log::info!("event=config resolved={}", serde_json::to_string(&cfg).expect("config serializes"));
    commands::execute(&cli.command, &cfg, cli.jobs)
}
