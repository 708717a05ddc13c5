//! Shared domain types: raw logs, the dense frame grid, curve sections,
//! derived indicator series and the score report.
//!
//! Everything here is plain data. Values are immutable once a pipeline
//! stage hands them on, so they can be shared freely between workers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Version tag written into every persisted report and frame store.
pub const SCHEMA_VERSION: u32 = 1;

/// Default frame period of the resampling grid (100 Hz).
pub const DEFAULT_PERIOD: f64 = 0.01;

/// Index of a signal inside [`RawLog::signal_names`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignalId(pub u32);

impl SignalId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One observation of one signal, as written by an independent sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    /// Seconds relative to log start.
    pub timestamp: f64,
    pub signal: SignalId,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripCondition {
    #[default]
    Grip,
    NonGrip,
}

/// Describes which LKAS parameter setting a log was recorded with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SettingMeta {
    pub setting_id: String,
    #[serde(default)]
    pub grip_condition: GripCondition,
    #[serde(default)]
    pub vehicle_model: String,
    /// Driver rating on a 0..=100 scale, when one was collected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subjective_rating: Option<f64>,
}

impl SettingMeta {
    pub fn new(setting_id: impl Into<String>) -> Self {
        Self {
            setting_id: setting_id.into(),
            ..Self::default()
        }
    }

    pub fn check(&self) -> crate::Result<()> {
        match self.subjective_rating {
            Some(r) if !(0.0..=100.0).contains(&r) => Err(crate::Error::InvalidArgument(format!(
                "subjective rating {r} outside [0, 100]"
            ))),
            _ => Ok(()),
        }
    }
}

/// Sparse multi-rate record stream, sorted by timestamp (ties keep input order).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawLog {
    pub records: Vec<RawRecord>,
    pub signal_names: Vec<String>,
    pub meta: SettingMeta,
}

impl RawLog {
    pub fn signal_id(&self, name: &str) -> Option<SignalId> {
        self.signal_names
            .iter()
            .position(|n| n == name)
            .map(|i| SignalId(i as u32))
    }

    pub fn signal_name(&self, id: SignalId) -> &str {
        &self.signal_names[id.index()]
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one signal, in log order.
    pub fn records_of(&self, id: SignalId) -> impl Iterator<Item = &RawRecord> {
        self.records.iter().filter(move |r| r.signal == id)
    }
}

/// One named column of the dense frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
    /// `false` before the signal's first observation or where a filter
    /// removed the sample. `values[k]` is meaningless when `present[k]` is false.
    pub present: Vec<bool>,
}

impl Channel {
    pub fn new(name: impl Into<String>, values: Vec<f64>, present: Vec<bool>) -> Self {
        Self {
            name: name.into(),
            values,
            present,
        }
    }

    /// Builds a fully present channel.
    pub fn dense(name: impl Into<String>, values: Vec<f64>) -> Self {
        let present = vec![true; values.len()];
        Self::new(name, values, present)
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        if self.present[k] {
            Some(self.values[k])
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Dense, uniformly sampled table of signal channels.
///
/// Frame `k` sits at `start_time + k * period`. `frame_valid` carries
/// frame-level filtering (LKAS off, lane changes); channel-level presence
/// lives on each [`Channel`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTable {
    pub period: f64,
    pub start_time: f64,
    pub frame_valid: Vec<bool>,
    pub channels: Vec<Channel>,
    pub meta: SettingMeta,
}

impl FrameTable {
    pub fn n_frames(&self) -> usize {
        self.frame_valid.len()
    }

    pub fn time_of(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.period
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn channel_mut(&mut self, name: &str) -> Option<&mut Channel> {
        self.channels.iter_mut().find(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> crate::Result<&Channel> {
        self.channel(name)
            .ok_or_else(|| crate::Error::MissingChannel(name.to_string()))
    }

    /// Channel value at frame `k`, honoring both frame validity and presence.
    pub fn value(&self, channel: &Channel, k: usize) -> Option<f64> {
        if self.frame_valid[k] {
            channel.get(k)
        } else {
            None
        }
    }

    /// Combined validity mask of one channel.
    pub fn mask_of(&self, channel: &Channel) -> Vec<bool> {
        self.frame_valid
            .iter()
            .zip(&channel.present)
            .map(|(&f, &p)| f && p)
            .collect()
    }

    pub fn valid_frames(&self) -> usize {
        self.frame_valid.iter().filter(|v| **v).count()
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Straight,
    LowCurve,
    HighCurve,
}

impl SectionKind {
    pub const ALL: [SectionKind; 3] = [
        SectionKind::Straight,
        SectionKind::LowCurve,
        SectionKind::HighCurve,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionKind::Straight => "straight",
            SectionKind::LowCurve => "low_curve",
            SectionKind::HighCurve => "high_curve",
        }
    }

    /// Ordering used by the curvature monotonicity property: straight is the
    /// gentlest, high curve the sharpest.
    pub fn gentleness(self) -> u8 {
        match self {
            SectionKind::HighCurve => 0,
            SectionKind::LowCurve => 1,
            SectionKind::Straight => 2,
        }
    }
}

impl fmt::Display for SectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SectionKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "straight" | "str" => Ok(SectionKind::Straight),
            "low_curve" | "low" => Ok(SectionKind::LowCurve),
            "high_curve" | "high" => Ok(SectionKind::HighCurve),
            _ => Err(crate::Error::InvalidArgument(format!(
                "unknown section kind `{s}`"
            ))),
        }
    }
}

/// Half-open frame interval `[start, end)` of one kind of road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveSection {
    pub kind: SectionKind,
    pub start: usize,
    pub end: usize,
}

impl CurveSection {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// The four intrusiveness indicators.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    /// Lateral position in the lane.
    LaneKeeping,
    /// Lateral speed.
    DynamicStability,
    /// High-passed steering angle.
    SteeringStability,
    /// Interference torque.
    NonInterference,
}

impl Indicator {
    pub const ALL: [Indicator; 4] = [
        Indicator::LaneKeeping,
        Indicator::DynamicStability,
        Indicator::SteeringStability,
        Indicator::NonInterference,
    ];

    pub fn unit(self) -> &'static str {
        match self {
            Indicator::LaneKeeping => "m",
            Indicator::DynamicStability => "m/s",
            Indicator::SteeringStability => "deg",
            Indicator::NonInterference => "Nm",
        }
    }

    /// Short name of the derived variable.
    pub fn variable(self) -> &'static str {
        match self {
            Indicator::LaneKeeping => "LP",
            Indicator::DynamicStability => "LS",
            Indicator::SteeringStability => "FSA",
            Indicator::NonInterference => "IT",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Indicator::LaneKeeping => "lane_keeping",
            Indicator::DynamicStability => "dynamic_stability",
            Indicator::SteeringStability => "steering_stability",
            Indicator::NonInterference => "non_interference",
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A derived variable sampled on the frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub indicator: Indicator,
    pub period: f64,
    pub samples: Vec<f64>,
    pub valid: Vec<bool>,
}

impl IndicatorSeries {
    pub fn new(indicator: Indicator, period: f64, samples: Vec<f64>, valid: Vec<bool>) -> Self {
        Self {
            indicator,
            period,
            samples,
            valid,
        }
    }

    pub fn unit(&self) -> &'static str {
        self.indicator.unit()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        if self.valid[k] {
            Some(self.samples[k])
        } else {
            None
        }
    }

    /// Valid samples in frame range `range`.
    pub fn valid_in(&self, range: std::ops::Range<usize>) -> impl Iterator<Item = f64> + '_ {
        let end = range.end.min(self.samples.len());
        let start = range.start.min(end);
        self.samples[start..end]
            .iter()
            .zip(&self.valid[start..end])
            .filter(|(_, v)| **v)
            .map(|(x, _)| *x)
    }

    /// Maximal runs of consecutive valid samples as half-open ranges.
    pub fn valid_runs(&self) -> Vec<std::ops::Range<usize>> {
        valid_runs(&self.valid)
    }
}

pub(crate) fn valid_runs(mask: &[bool]) -> Vec<std::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, &v) in mask.iter().enumerate() {
        match (v, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push(s..k);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(s..mask.len());
    }
    runs
}

/// Sample mean, sample standard deviation (n - 1 denominator) and count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Levene statistic and its F-distribution p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeveneResult {
    /// Infinite when within-group deviations are all equal but group
    /// means differ; serialized as the string `"inf"` in that case.
    #[serde(with = "extended_float")]
    pub w: f64,
    pub p_value: f64,
}

/// Descriptive statistics of one report cell for both settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub reference: Option<Descriptive>,
    pub candidate: Option<Descriptive>,
}

/// Result of scoring a candidate setting against a reference setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub schema_version: u32,
    pub reference_id: String,
    pub candidate_id: String,
    /// Intersection similarity per indicator and section, in [0, 100].
    pub per_section: BTreeMap<Indicator, BTreeMap<SectionKind, f64>>,
    pub weights: BTreeMap<SectionKind, f64>,
    /// Weighted mean of the per-section similarities, in [0, 100].
    pub indicator_scores: BTreeMap<Indicator, f64>,
    pub stats: BTreeMap<Indicator, BTreeMap<SectionKind, CellStats>>,
    pub levene: BTreeMap<Indicator, BTreeMap<SectionKind, LeveneResult>>,
    /// Indicators that could not be scored, with the reason.
    #[serde(default)]
    pub omitted: BTreeMap<Indicator, String>,
}

impl ScoreReport {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let report: ScoreReport = serde_json::from_str(text)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(crate::Error::SchemaVersion {
                found: report.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(report)
    }
}

mod extended_float {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    _ => Err(E::custom(format!("unexpected float string `{v}`"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// One breach of a [`FrameTable`] or [`IndicatorSeries`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BadPeriod(f64),
    BadStartTime(f64),
    LengthMismatch {
        channel: String,
        expected: usize,
        found: usize,
    },
    DuplicateChannel(String),
    NonFinite {
        channel: String,
        index: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadPeriod(p) => write!(f, "period {p} is not positive and finite"),
            Violation::BadStartTime(t) => write!(f, "start time {t} is negative or non-finite"),
            Violation::LengthMismatch {
                channel,
                expected,
                found,
            } => write!(f, "`{channel}` has length {found}, expected {expected}"),
            Violation::DuplicateChannel(name) => write!(f, "channel `{name}` appears twice"),
            Violation::NonFinite { channel, index } => {
                write!(f, "`{channel}` holds a non-finite value at frame {index}")
            }
        }
    }
}

/// Checks every [`FrameTable`] invariant. Never fails; an empty result means
/// the table is well formed.
pub fn validate_frame_table(table: &FrameTable) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(table.period.is_finite() && table.period > 0.0) {
        out.push(Violation::BadPeriod(table.period));
    }
    if !(table.start_time.is_finite() && table.start_time >= 0.0) {
        out.push(Violation::BadStartTime(table.start_time));
    }
    let expected = table.frame_valid.len();
    let mut seen = std::collections::HashSet::new();
    for ch in &table.channels {
        if !seen.insert(ch.name.as_str()) {
            out.push(Violation::DuplicateChannel(ch.name.clone()));
        }
        for found in [ch.values.len(), ch.present.len()] {
            if found != expected {
                out.push(Violation::LengthMismatch {
                    channel: ch.name.clone(),
                    expected,
                    found,
                });
                break;
            }
        }
        if let Some(index) = ch
            .values
            .iter()
            .zip(&ch.present)
            .position(|(v, p)| *p && !v.is_finite())
        {
            out.push(Violation::NonFinite {
                channel: ch.name.clone(),
                index,
            });
        }
    }
    out
}

/// Checks the [`IndicatorSeries`] invariants.
pub fn validate_series(series: &IndicatorSeries) -> Vec<Violation> {
    let mut out = Vec::new();
    let name = series.indicator.variable().to_string();
    if !(series.period.is_finite() && series.period > 0.0) {
        out.push(Violation::BadPeriod(series.period));
    }
    if series.valid.len() != series.samples.len() {
        out.push(Violation::LengthMismatch {
            channel: name.clone(),
            expected: series.samples.len(),
            found: series.valid.len(),
        });
    }
    if let Some(index) = series
        .samples
        .iter()
        .zip(&series.valid)
        .position(|(v, ok)| *ok && !v.is_finite())
    {
        out.push(Violation::NonFinite {
            channel: name,
            index,
        });
    }
    out
}
