//! Run configuration: a JSON file, then command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use lkas_core::ingest::{CsvSchema, SignalMap};
use lkas_core::scoring::BinPolicy;
use lkas_core::spectral::StftSpec;
use lkas_core::{AnalysisConfig, SectionKind, DEFAULT_PERIOD};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// JSON file mapping signal roles to column names; overrides
    /// `analysis.signals` when set.
    pub signal_map_path: Option<PathBuf>,
    pub csv: CsvSchema,
    pub period: f64,
    pub analysis: AnalysisConfig,
    pub bins: BinPolicy,
    pub weights: BTreeMap<SectionKind, f64>,
    pub stft: StftSpec,
    pub tremor_band: [f64; 2],
    /// Single-sided amplitude (deg) above which a column counts as tremor.
    pub tremor_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            signal_map_path: None,
            csv: CsvSchema::default(),
            period: DEFAULT_PERIOD,
            analysis: AnalysisConfig::default(),
            bins: BinPolicy::default(),
            weights: lkas_core::scoring::default_weights(),
            stft: StftSpec::default(),
            tremor_band: [1.0, 10.0],
            tremor_threshold: 0.05,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut config: RunConfig = match path {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        if let Some(map_path) = &config.signal_map_path {
            // Relative paths are taken from the config file's directory.
            let map_path = match path.and_then(Path::parent) {
                Some(dir) if map_path.is_relative() => dir.join(map_path),
                _ => map_path.clone(),
            };
            let map: SignalMap = read_json(&map_path)?;
            config.analysis.signals = map;
        }
        Ok(config)
    }
}

/// Knobs shared by the commands that segment and derive.
#[derive(Debug, Clone, Default, Args)]
pub struct AnalysisFlags {
    /// Frame period in seconds.
    #[arg(long)]
    pub period: Option<f64>,
    /// Radius (m) at or above which road counts as straight.
    #[arg(long)]
    pub straight_threshold: Option<f64>,
    /// Radius (m) below which a curve counts as high curvature.
    #[arg(long)]
    pub high_threshold: Option<f64>,
    /// High-pass cutoff (Hz) for the filtered steering angle.
    #[arg(long)]
    pub hp_cutoff: Option<f64>,
    /// Driver torque (Nm) treated as zero in the interference rule.
    #[arg(long)]
    pub it_deadband: Option<f64>,
    /// Moving-average window (frames) before differencing lateral position.
    #[arg(long)]
    pub ls_smooth: Option<usize>,
}

impl AnalysisFlags {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), CliError> {
        if let Some(p) = self.period {
            config.period = p;
        }
        let a = &mut config.analysis;
        if let Some(x) = self.straight_threshold {
            a.curvature.straight_threshold_m = x;
        }
        if let Some(x) = self.high_threshold {
            a.curvature.high_threshold_m = x;
        }
        if let Some(x) = self.hp_cutoff {
            a.high_pass.cutoff_hz = x;
        }
        if let Some(x) = self.it_deadband {
            a.interference.deadband = x;
        }
        if let Some(x) = self.ls_smooth {
            a.ls_smooth = x;
        }
        a.curvature.check()?;
        a.filter_policy().check()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SpectrumFlags {
    /// STFT window length in frames.
    #[arg(long)]
    pub stft_window: Option<usize>,
    /// STFT hop in frames.
    #[arg(long)]
    pub stft_hop: Option<usize>,
    /// Tremor search band as `LO,HI` in Hz.
    #[arg(long, value_delimiter = ',')]
    pub tremor_band: Option<Vec<f64>>,
    /// Amplitude (deg) above which a column counts as tremor.
    #[arg(long)]
    pub tremor_threshold: Option<f64>,
}

impl SpectrumFlags {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), CliError> {
        if let Some(n) = self.stft_window {
            config.stft.window_len = n;
        }
        if let Some(h) = self.stft_hop {
            config.stft.hop = h;
        }
        if let Some(b) = &self.tremor_band {
            let [lo, hi] = b[..] else {
                return Err(CliError::Input("--tremor-band takes LO,HI".into()));
            };
            config.tremor_band = [lo, hi];
        }
        if let Some(t) = self.tremor_threshold {
            config.tremor_threshold = t;
        }
        config.stft.check()?;
        if !(config.tremor_threshold.is_finite() && config.tremor_threshold >= 0.0) {
            return Err(CliError::Input("tremor threshold must be >= 0".into()));
        }
        Ok(())
    }
}
