//! Turns a filtered frame table into the per-section indicator series that
//! scoring consumes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::derive::{
    channel_series, filtered_steering_angle, interference_torque_series, lateral_position_series,
    lateral_speed, moving_average, HighPassSpec, InterferencePolicy,
};
use crate::ingest::{remove_channel_outliers, FilterPolicy, SignalMap};
use crate::model::{CurveSection, FrameTable, Indicator, IndicatorSeries, SectionKind, SettingMeta};
use crate::segmentation::{segment, CurvatureRule};
use crate::{Error, Result};

/// Everything needed to go from frames to indicator series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub signals: SignalMap,
    pub filter: FilterPolicy,
    pub curvature: CurvatureRule,
    pub high_pass: HighPassSpec,
    pub interference: InterferencePolicy,
    /// Moving-average window (frames) applied to lateral position before
    /// differencing; 0 or 1 disables it.
    pub ls_smooth: usize,
    /// Channels screened for outliers. Defaults to the two lane-distance
    /// channels.
    pub outlier_channels: Option<Vec<String>>,
}

impl AnalysisConfig {
    pub fn outlier_channels(&self) -> Vec<String> {
        self.outlier_channels.clone().unwrap_or_else(|| {
            vec![
                self.signals.distance_left.clone(),
                self.signals.distance_right.clone(),
            ]
        })
    }

    /// Frame filter policy with signal names resolved through the signal map.
    pub fn filter_policy(&self) -> FilterPolicy {
        FilterPolicy {
            lkas_status_signal: self.signals.lkas_status.clone(),
            turn_signal_signal: self.signals.turn_signal.clone(),
            ..self.filter.clone()
        }
    }
}

/// Indicator series of one drive, segmented into curve sections.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveAnalysis {
    pub meta: SettingMeta,
    pub period: f64,
    pub sections: Vec<CurveSection>,
    pub series: BTreeMap<Indicator, IndicatorSeries>,
    /// Indicators that could not be derived, with the reason.
    pub missing: BTreeMap<Indicator, String>,
}

impl DriveAnalysis {
    /// Valid samples of `indicator` pooled over every section of `kind`.
    pub fn cell_samples(&self, indicator: Indicator, kind: SectionKind) -> Vec<f64> {
        let Some(series) = self.series.get(&indicator) else {
            return Vec::new();
        };
        self.sections
            .iter()
            .filter(|s| s.kind == kind)
            .flat_map(|s| series.valid_in(s.frames()))
            .collect()
    }

    pub fn duration(&self, kind: SectionKind) -> f64 {
        self.sections
            .iter()
            .filter(|s| s.kind == kind)
            .map(CurveSection::len)
            .sum::<usize>() as f64
            * self.period
    }
}

fn missing_reason(err: &Error) -> String {
    match err {
        Error::MissingChannel(name) => format!("channel `{name}` not in log"),
        other => other.to_string(),
    }
}

/// Screens outliers, segments the drive and derives the four indicators.
///
/// `table` is expected to have gone through [`crate::ingest::filter_frames`].
/// A missing input channel drops only the indicators that need it.
pub fn analyze(table: &FrameTable, config: &AnalysisConfig) -> Result<DriveAnalysis> {
    let s = &config.signals;
    let mut wanted = vec![
        &s.distance_left,
        &s.distance_right,
        &s.steering_angle,
        &s.lkas_torque,
        &s.driver_torque,
        &s.curvature_radius,
    ];
    let screened = config.outlier_channels();
    wanted.extend(&screened);
    // Only the channels read below are copied; wide logs carry many more.
    let mut table = FrameTable {
        period: table.period,
        start_time: table.start_time,
        frame_valid: table.frame_valid.clone(),
        channels: table
            .channels
            .iter()
            .filter(|c| wanted.contains(&&c.name))
            .cloned()
            .collect(),
        meta: table.meta.clone(),
    };
    for name in &screened {
        if table.channel(name).is_none() {
            continue;
        }
        // Too few valid samples to screen is not an error here; the
        // derivations below decide what is usable.
        match remove_channel_outliers(&mut table, name, config.filter.outlier_k) {
            Ok(_) | Err(Error::Empty(_)) | Err(Error::InvalidArgument(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let sections = segment(&table, &config.signals.curvature_radius, &config.curvature)?;

    let mut series = BTreeMap::new();
    let mut missing = BTreeMap::new();
    let mut record = |ind: Indicator, result: Result<IndicatorSeries>| -> Result<()> {
        match result {
            Ok(x) => {
                series.insert(ind, x);
            }
            Err(e @ Error::MissingChannel(_)) => {
                missing.insert(ind, missing_reason(&e));
            }
            Err(e) => return Err(e),
        }
        Ok(())
    };

    let lp = lateral_position_series(&table, &s.distance_left, &s.distance_right);
    let ls = match &lp {
        Ok(lp) => lateral_speed(&moving_average(lp, config.ls_smooth), table.period),
        Err(Error::MissingChannel(name)) => Err(Error::MissingChannel(name.clone())),
        Err(e) => Err(Error::InvalidArgument(e.to_string())),
    };
    record(Indicator::LaneKeeping, lp)?;
    record(Indicator::DynamicStability, ls)?;

    let fsa = channel_series(&table, &s.steering_angle, Indicator::SteeringStability)
        .and_then(|raw| filtered_steering_angle(&raw, &config.high_pass));
    record(Indicator::SteeringStability, fsa)?;

    let it = channel_series(&table, &s.lkas_torque, Indicator::NonInterference).and_then(|l| {
        let d = channel_series(&table, &s.driver_torque, Indicator::NonInterference)?;
        interference_torque_series(&l, &d, &config.interference)
    });
    record(Indicator::NonInterference, it)?;

    Ok(DriveAnalysis {
        meta: table.meta.clone(),
        period: table.period,
        sections,
        series,
        missing,
    })
}
