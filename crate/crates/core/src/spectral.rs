//! Short-time Fourier analysis of the filtered steering angle and
//! detection of steering-wheel tremor episodes.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::model::IndicatorSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftSpec {
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftSpec {
    fn default() -> Self {
        Self {
            window_len: 256,
            hop: 128,
            window: WindowKind::Hann,
        }
    }
}

impl StftSpec {
    pub fn check(&self) -> Result<()> {
        if self.window_len < 2 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::InvalidArgument(format!(
                "need 0 < hop ({}) <= window_len ({}) and window_len >= 2",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => hann_window(self.window_len).expect("checked length"),
        }
    }

    /// Number of non-negative frequency bins kept per column.
    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Number of full windows that fit into `len` samples.
    pub fn n_columns(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }
}

/// Symmetric Hann window, zero at both ends.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Hann window needs n >= 2, got {n}")));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / denom).cos()))
        .collect())
}

/// Plans and runs windowed DFTs of a fixed length.
pub struct FrameTransformer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    scratch: Vec<Complex64>,
    buffer: Vec<Complex64>,
}

impl FrameTransformer {
    pub fn new(spec: &StftSpec) -> Result<Self> {
        spec.check()?;
        let fft = FftPlanner::new().plan_fft_forward(spec.window_len);
        Ok(Self {
            scratch: vec![Complex64::default(); fft.get_inplace_scratch_len()],
            buffer: vec![Complex64::default(); spec.window_len],
            window: spec.window(),
            fft,
        })
    }

    /// Non-negative half of the DFT of `frame` multiplied by the window.
    pub fn transform(&mut self, frame: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(frame.len(), self.window.len());
        for ((b, x), w) in self.buffer.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex64::new(x * w, 0.0);
        }
        self.fft
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        self.buffer[..self.window.len() / 2 + 1].to_vec()
    }
}

/// STFT columns of one gap-free signal.
pub fn stft_frames(x: &[f64], spec: &StftSpec) -> Result<Vec<Vec<Complex64>>> {
    let mut tf = FrameTransformer::new(spec)?;
    Ok((0..spec.n_columns(x.len()))
        .map(|j| tf.transform(&x[j * spec.hop..j * spec.hop + spec.window_len]))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftColumn {
    /// Frame index of the first windowed sample.
    pub start: usize,
    /// Index of the valid run this column belongs to.
    pub run: usize,
    pub bins: Vec<Complex64>,
}

/// A valid run too short for a single window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkippedRun {
    pub start: usize,
    pub len: usize,
}

/// Complex STFT of a series, one column per window position in every
/// sufficiently long valid run.
#[derive(Debug, Clone, PartialEq)]
pub struct Stft {
    pub spec: StftSpec,
    pub period: f64,
    pub columns: Vec<StftColumn>,
    pub skipped: Vec<SkippedRun>,
    pub window_sum: f64,
}

pub fn stft(x: &IndicatorSeries, spec: &StftSpec) -> Result<Stft> {
    let mut tf = FrameTransformer::new(spec)?;
    let mut columns = Vec::new();
    let mut skipped = Vec::new();
    for (run_index, run) in x.valid_runs().into_iter().enumerate() {
        if run.len() < spec.window_len {
            skipped.push(SkippedRun {
                start: run.start,
                len: run.len(),
            });
            continue;
        }
        let data = &x.samples[run.clone()];
        for j in 0..spec.n_columns(data.len()) {
            let offset = j * spec.hop;
            columns.push(StftColumn {
                start: run.start + offset,
                run: run_index,
                bins: tf.transform(&data[offset..offset + spec.window_len]),
            });
        }
    }
    Ok(Stft {
        spec: *spec,
        period: x.period,
        columns,
        skipped,
        window_sum: spec.window().iter().sum(),
    })
}

/// Magnitude of the STFT, time columns by frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `magnitudes[j][k]` = |X| of column `j`, bin `k`.
    pub magnitudes: Vec<Vec<f64>>,
    pub freq_axis: Vec<f64>,
    /// Centre time of each column's window, seconds from series start.
    pub time_axis: Vec<f64>,
    /// Window start/end times of each column.
    pub spans: Vec<(f64, f64)>,
    pub runs: Vec<usize>,
    pub window_len: usize,
    pub window_sum: f64,
}

pub fn spectrogram(x: &Stft) -> Spectrogram {
    let n = x.spec.window_len;
    let sample_rate = 1.0 / x.period;
    Spectrogram {
        magnitudes: x
            .columns
            .iter()
            .map(|c| c.bins.iter().map(|z| z.norm()).collect())
            .collect(),
        freq_axis: (0..x.spec.n_bins())
            .map(|k| k as f64 * sample_rate / n as f64)
            .collect(),
        time_axis: x
            .columns
            .iter()
            .map(|c| (c.start as f64 + n as f64 / 2.0) * x.period)
            .collect(),
        spans: x
            .columns
            .iter()
            .map(|c| (c.start as f64 * x.period, (c.start + n) as f64 * x.period))
            .collect(),
        runs: x.columns.iter().map(|c| c.run).collect(),
        window_len: n,
        window_sum: x.window_sum,
    }
}

impl Spectrogram {
    pub fn n_columns(&self) -> usize {
        self.magnitudes.len()
    }

    /// Single-sided amplitude of bin `k`: a sinusoid of amplitude A at a bin
    /// frequency reads as A.
    pub fn amplitude(&self, column: usize, k: usize) -> f64 {
        let edge = k == 0 || (self.window_len.is_multiple_of(2) && k == self.window_len / 2);
        let scale = if edge { 1.0 } else { 2.0 };
        scale * self.magnitudes[column][k] / self.window_sum
    }

    pub fn bin_width(&self) -> f64 {
        self.freq_axis.get(1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TremorEpisode {
    pub start_s: f64,
    pub end_s: f64,
    pub peak_freq_hz: f64,
    /// Single-sided amplitude at the peak, in the series' unit.
    pub peak_amplitude: f64,
}

/// Groups consecutive columns whose in-band peak amplitude exceeds
/// `threshold` into episodes.
pub fn tremor_report(
    sg: &Spectrogram,
    band: (f64, f64),
    threshold: f64,
) -> Result<Vec<TremorEpisode>> {
    let (lo, hi) = band;
    let nyquist = sg.freq_axis.last().copied().unwrap_or(0.0);
    if !(lo >= 0.0 && lo < hi && hi <= nyquist + 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "tremor band [{lo}, {hi}] Hz must satisfy 0 <= lo < hi <= {nyquist}"
        )));
    }
    let bins: Vec<usize> = (0..sg.freq_axis.len())
        .filter(|&k| sg.freq_axis[k] >= lo && sg.freq_axis[k] <= hi)
        .collect();
    if bins.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "tremor band [{lo}, {hi}] Hz contains no frequency bin"
        )));
    }
    let mut episodes: Vec<TremorEpisode> = Vec::new();
    let mut prev: Option<usize> = None;
    for j in 0..sg.n_columns() {
        let (peak_bin, peak) = bins
            .iter()
            .map(|&k| (k, sg.amplitude(j, k)))
            .fold((bins[0], f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if peak <= threshold {
            prev = None;
            continue;
        }
        let continues = prev.is_some_and(|p| p + 1 == j && sg.runs[p] == sg.runs[j]);
        match episodes.last_mut() {
            Some(ep) if continues => {
                ep.end_s = sg.spans[j].1;
                if peak > ep.peak_amplitude {
                    ep.peak_amplitude = peak;
                    ep.peak_freq_hz = sg.freq_axis[peak_bin];
                }
            }
            _ => episodes.push(TremorEpisode {
                start_s: sg.spans[j].0,
                end_s: sg.spans[j].1,
                peak_freq_hz: sg.freq_axis[peak_bin],
                peak_amplitude: peak,
            }),
        }
        prev = Some(j);
    }
    Ok(episodes)
}
