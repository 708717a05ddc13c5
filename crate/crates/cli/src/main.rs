//! `lkas`: ingest drive logs, score LKAS settings against a reference,
//! look for steering tremor and relate scores to driver ratings.

mod commands;
mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{AnalysisFlags, RunConfig, SpectrumFlags};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lkas_core::Error),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 bad input, 3 I/O failure, 4 schema version mismatch.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(lkas_core::Error::SchemaVersion { .. }) => 4,
            CliError::Core(lkas_core::Error::Io(_)) | CliError::Io { .. } => 3,
            CliError::Core(_) | CliError::Input(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lkas", version, about = "Intrusiveness scoring for lane keeping assistance drive logs")]
struct Cli {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resample and filter a CSV log into frames.bin and summary.json.
    Ingest {
        log: PathBuf,
        #[arg(long, short, default_value = ".")]
        out: PathBuf,
        /// Setting identifier recorded with the frames (default: file stem).
        #[arg(long)]
        setting_id: Option<String>,
        #[arg(long, value_parser = ["grip", "non_grip"])]
        grip: Option<String>,
        #[arg(long)]
        vehicle: Option<String>,
        /// Driver rating of this setting, 0 to 100.
        #[arg(long)]
        rating: Option<f64>,
        #[command(flatten)]
        analysis: AnalysisFlags,
    },
    /// Score a candidate setting against a reference setting.
    Score {
        reference: PathBuf,
        candidate: PathBuf,
        #[arg(long, short, default_value = ".")]
        out: PathBuf,
        /// Fixed histogram bin width instead of Freedman-Diaconis.
        #[arg(long)]
        bin_width: Option<f64>,
        #[command(flatten)]
        analysis: AnalysisFlags,
    },
    /// Spectrogram of the filtered steering angle and tremor episodes.
    Spectrum {
        frames: PathBuf,
        #[arg(long, short, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        analysis: AnalysisFlags,
        #[command(flatten)]
        spectrum: SpectrumFlags,
    },
    /// Generate a synthetic drive log (or a severity family of logs).
    Synth {
        /// Setting JSON; defaults to the built-in well-tuned setting.
        setting: Option<PathBuf>,
        /// Output CSV, or a directory when `--family` is given.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_parser = ["good", "bad"])]
        preset: Option<String>,
        /// Comma-separated ascending severities.
        #[arg(long, value_delimiter = ',')]
        family: Option<Vec<f64>>,
    },
    /// Correlate indicator scores with driver ratings.
    Correlate {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// CSV with columns `setting_id,rating`.
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, short, default_value = "correlation.json")]
        out: PathBuf,
    },
    /// Render a score report as a readable table.
    Report {
        report: PathBuf,
        /// Also write the rendered text here.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Input("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let mut config = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest {
            log,
            out,
            setting_id,
            grip,
            vehicle,
            rating,
            analysis,
        } => {
            analysis.apply(&mut config)?;
            let meta = commands::setting_meta(&log, setting_id, grip, vehicle, rating)?;
            commands::ingest(&config, &log, &out, meta)
        }
        Command::Score {
            reference,
            candidate,
            out,
            bin_width,
            analysis,
        } => {
            analysis.apply(&mut config)?;
            if let Some(w) = bin_width {
                config.bins = lkas_core::scoring::BinPolicy::fixed_width(w);
            }
            commands::score(&config, &reference, &candidate, &out)
        }
        Command::Spectrum {
            frames,
            out,
            analysis,
            spectrum,
        } => {
            analysis.apply(&mut config)?;
            spectrum.apply(&mut config)?;
            commands::spectrum(&config, &frames, &out)
        }
        Command::Synth {
            setting,
            out,
            preset,
            family,
        } => commands::synth(setting.as_deref(), preset.as_deref(), cli.seed, family, &out),
        Command::Correlate { reports, ratings, out } => commands::correlate(&reports, &ratings, &out),
        Command::Report { report, out } => commands::report(&report, out.as_deref()),
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
