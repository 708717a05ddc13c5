//! CSV log parsing, resampling onto the frame grid, and frame filters.
//!
//! Raw logs are sparse: every sensor writes on its own clock, so most cells
//! of a row are empty. The resampler merges them onto a fixed grid by
//! carrying the most recent observation of each signal forward. Values are
//! never interpolated.

use std::collections::VecDeque;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::model::{
    Channel, FrameTable, IndicatorSeries, RawLog, RawRecord, SettingMeta, SignalId,
};
use crate::{Error, Result};

/// Layout of an input CSV log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub time_column: String,
    /// Rows may step back in time by at most this much (seconds); such rows
    /// are stably reordered. Larger steps are rejected.
    pub time_tolerance: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time_column: "time".to_string(),
            time_tolerance: 0.001,
        }
    }
}

/// Maps logical signal roles to the physical column names of a vehicle's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalMap {
    pub distance_left: String,
    pub distance_right: String,
    pub steering_angle: String,
    pub lkas_torque: String,
    pub driver_torque: String,
    pub curvature_radius: String,
    pub lkas_status: String,
    pub turn_signal: Option<String>,
}

impl Default for SignalMap {
    fn default() -> Self {
        Self {
            distance_left: "distance_left".into(),
            distance_right: "distance_right".into(),
            steering_angle: "steering_angle".into(),
            lkas_torque: "lkas_torque".into(),
            driver_torque: "driver_torque".into(),
            curvature_radius: "curvature_radius".into(),
            lkas_status: "lkas_status".into(),
            turn_signal: Some("turn_signal".into()),
        }
    }
}

/// One CSV row after parsing: a timestamp and its non-empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub line: u64,
    pub time: f64,
    pub cells: Vec<(SignalId, f64)>,
}

/// Streaming reader yielding rows of a sparse CSV log in time order.
pub struct RowReader<R: Read> {
    reader: csv::Reader<R>,
    record: csv::ByteRecord,
    time_col: usize,
    /// Signal id of each CSV column; `None` for the time column.
    column_ids: Vec<Option<SignalId>>,
    signal_names: Vec<String>,
    tolerance: f64,
    max_time: f64,
    pending: VecDeque<RawRow>,
    exhausted: bool,
}

impl<R: Read> RowReader<R> {
    pub fn new(source: R, schema: &CsvSchema) -> Result<Self> {
        if !(schema.time_tolerance >= 0.0) {
            return Err(Error::InvalidArgument(
                "time tolerance must be non-negative".into(),
            ));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers = reader.headers()?.clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(Error::Parse {
                line: 1,
                message: "missing header row".into(),
            });
        }
        let time_col = headers
            .iter()
            .position(|h| h == schema.time_column)
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("no `{}` column in header", schema.time_column),
            })?;
        let mut column_ids = Vec::with_capacity(headers.len());
        let mut signal_names = Vec::with_capacity(headers.len().saturating_sub(1));
        for (i, h) in headers.iter().enumerate() {
            if i == time_col {
                column_ids.push(None);
                continue;
            }
            if h.is_empty() || signal_names.iter().any(|n| n == h) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("empty or duplicate column name `{h}`"),
                });
            }
            column_ids.push(Some(SignalId(signal_names.len() as u32)));
            signal_names.push(h.to_string());
        }
        if signal_names.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "no signal columns".into(),
            });
        }
        Ok(Self {
            reader,
            record: csv::ByteRecord::new(),
            time_col,
            column_ids,
            signal_names,
            tolerance: schema.time_tolerance,
            max_time: f64::NEG_INFINITY,
            pending: VecDeque::new(),
            exhausted: false,
        })
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signal_names
    }

    fn parse_cell(&self, line: u64, col: usize, raw: &[u8]) -> Result<Option<f64>> {
        if raw.is_empty() {
            return Ok(None);
        }
        let column = || self.column_name(col);
        let text = std::str::from_utf8(raw).map_err(|_| Error::BadNumber {
            line,
            column: column(),
            value: String::from_utf8_lossy(raw).into_owned(),
        })?;
        let value: f64 = text.parse().map_err(|_| Error::BadNumber {
            line,
            column: column(),
            value: text.to_string(),
        })?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                line,
                column: column(),
                value: text.to_string(),
            });
        }
        Ok(Some(value))
    }

    fn column_name(&self, col: usize) -> String {
        match self.column_ids[col] {
            Some(id) => self.signal_names[id.index()].clone(),
            None => "time".to_string(),
        }
    }

    fn read_row(&mut self) -> Result<Option<RawRow>> {
        if !self.reader.read_byte_record(&mut self.record)? {
            return Ok(None);
        }
        let line = self.record.position().map(|p| p.line()).unwrap_or(0);
        let time = self
            .parse_cell(line, self.time_col, &self.record[self.time_col])?
            .ok_or_else(|| Error::Parse {
                line,
                message: "empty time cell".into(),
            })?;
        if time < 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("negative time {time}"),
            });
        }
        let mut cells = Vec::new();
        for (col, raw) in self.record.iter().enumerate() {
            if let Some(id) = self.column_ids[col] {
                if let Some(v) = self.parse_cell(line, col, raw)? {
                    cells.push((id, v));
                }
            }
        }
        Ok(Some(RawRow { line, time, cells }))
    }

    /// Next row in time order, or `None` at end of input.
    pub fn next_row(&mut self) -> Result<Option<RawRow>> {
        loop {
            if let Some(front) = self.pending.front() {
                if self.exhausted || front.time < self.max_time - self.tolerance {
                    return Ok(self.pending.pop_front());
                }
            } else if self.exhausted {
                return Ok(None);
            }
            match self.read_row()? {
                None => self.exhausted = true,
                Some(row) => {
                    if row.time < self.max_time - self.tolerance {
                        return Err(Error::NonMonotoneTime {
                            line: row.line,
                            time: row.time,
                            back: self.max_time - row.time,
                            tolerance: self.tolerance,
                        });
                    }
                    self.max_time = self.max_time.max(row.time);
                    // stable insert: after every pending row with time <= row.time
                    let at = self.pending.partition_point(|r| r.time <= row.time);
                    self.pending.insert(at, row);
                }
            }
        }
    }
}

/// Parses a sparse CSV log into a time-ordered [`RawLog`].
pub fn parse_raw_log<R: Read>(source: R, schema: &CsvSchema) -> Result<RawLog> {
    let mut rows = RowReader::new(source, schema)?;
    let mut records = Vec::new();
    while let Some(row) = rows.next_row()? {
        records.extend(row.cells.iter().map(|&(signal, value)| RawRecord {
            timestamp: row.time,
            signal,
            value,
        }));
    }
    Ok(RawLog {
        records,
        signal_names: rows.signal_names.clone(),
        meta: SettingMeta::default(),
    })
}

/// Incremental last-observation-carried-forward resampler.
///
/// Records must be pushed in non-decreasing time order. Frame `k` of the
/// output holds, per signal, the latest value recorded at or before its
/// grid time.
pub struct Resampler {
    period: f64,
    eps: f64,
    current: Vec<f64>,
    seen: Vec<bool>,
    start_index: Option<u64>,
    next_index: u64,
    last_time: f64,
    values: Vec<Vec<f64>>,
    present: Vec<Vec<bool>>,
}

impl Resampler {
    pub fn new(n_signals: usize, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "period must be positive, got {period}"
            )));
        }
        Ok(Self {
            period,
            eps: period * 1e-6,
            current: vec![0.0; n_signals],
            seen: vec![false; n_signals],
            start_index: None,
            next_index: 0,
            last_time: f64::NEG_INFINITY,
            values: vec![Vec::new(); n_signals],
            present: vec![Vec::new(); n_signals],
        })
    }

    fn grid_time(&self, index: u64) -> f64 {
        index as f64 * self.period
    }

    fn emit(&mut self) {
        for (c, (values, present)) in self.values.iter_mut().zip(&mut self.present).enumerate() {
            values.push(self.current[c]);
            present.push(self.seen[c]);
        }
        self.next_index += 1;
    }

    /// Emits every frame strictly before `time`, then makes `time` current.
    fn advance_to(&mut self, time: f64) {
        debug_assert!(time >= self.last_time - self.eps, "records out of order");
        if self.start_index.is_none() {
            let first = (time / self.period - 1e-6).ceil().max(0.0) as u64;
            self.start_index = Some(first);
            self.next_index = first;
        }
        while self.grid_time(self.next_index) < time - self.eps {
            self.emit();
        }
        self.last_time = self.last_time.max(time);
    }

    pub fn push(&mut self, time: f64, signal: SignalId, value: f64) {
        self.advance_to(time);
        self.current[signal.index()] = value;
        self.seen[signal.index()] = true;
    }

    pub fn push_row(&mut self, row: &RawRow) {
        self.advance_to(row.time);
        for &(signal, value) in &row.cells {
            self.current[signal.index()] = value;
            self.seen[signal.index()] = true;
        }
    }

    /// Closes the table at the first grid point at or after the last record.
    pub fn finish(mut self, names: &[String], meta: SettingMeta) -> Result<FrameTable> {
        let start_index = self
            .start_index
            .ok_or_else(|| Error::Empty("log has no records".into()))?;
        let last = self.last_time;
        while self.grid_time(self.next_index) < last - self.eps {
            self.emit();
        }
        self.emit();
        let n = (self.next_index - start_index) as usize;
        let channels = names
            .iter()
            .zip(self.values.into_iter().zip(self.present))
            .map(|(name, (values, present))| Channel::new(name.clone(), values, present))
            .collect();
        Ok(FrameTable {
            period: self.period,
            start_time: start_index as f64 * self.period,
            frame_valid: vec![true; n],
            channels,
            meta,
        })
    }
}

/// Resamples a raw log onto a uniform grid with carry-forward.
pub fn resample(log: &RawLog, period: f64) -> Result<FrameTable> {
    if log.is_empty() {
        return Err(Error::Empty("log has no records".into()));
    }
    let mut resampler = Resampler::new(log.signal_names.len(), period)?;
    for r in &log.records {
        resampler.push(r.timestamp, r.signal, r.value);
    }
    resampler.finish(&log.signal_names, log.meta.clone())
}

/// Parses and resamples in one streaming pass, without materializing the
/// raw record list. Equivalent to `resample(&parse_raw_log(..)?, period)`.
pub fn ingest_csv<R: Read>(
    source: R,
    schema: &CsvSchema,
    period: f64,
    meta: SettingMeta,
) -> Result<FrameTable> {
    let mut rows = RowReader::new(source, schema)?;
    let mut resampler = Resampler::new(rows.signal_names().len(), period)?;
    let mut any = false;
    while let Some(row) = rows.next_row()? {
        if !row.cells.is_empty() {
            resampler.push_row(&row);
            any = true;
        }
    }
    if !any {
        return Err(Error::Empty("log has no records".into()));
    }
    let names = rows.signal_names().to_vec();
    resampler.finish(&names, meta)
}

impl FrameTable {
    /// Re-expresses present, valid samples as raw records at their grid times.
    pub fn to_raw_log(&self) -> RawLog {
        let mut records = Vec::new();
        for k in 0..self.n_frames() {
            let t = self.time_of(k);
            for (c, ch) in self.channels.iter().enumerate() {
                if let Some(v) = self.value(ch, k) {
                    records.push(RawRecord {
                        timestamp: t,
                        signal: SignalId(c as u32),
                        value: v,
                    });
                }
            }
        }
        RawLog {
            records,
            signal_names: self.channels.iter().map(|c| c.name.clone()).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Which frames are dropped before analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    pub lkas_status_signal: String,
    /// Status value meaning "LKAS engaged".
    pub active_value: f64,
    pub turn_signal_signal: Option<String>,
    /// Seconds excluded before and after every turn-signal activation.
    pub lane_change_exclusion_window: f64,
    /// Robust z-score threshold for outlier removal.
    pub outlier_k: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            lkas_status_signal: "lkas_status".into(),
            active_value: 1.0,
            turn_signal_signal: Some("turn_signal".into()),
            lane_change_exclusion_window: 2.0,
            outlier_k: 5.0,
        }
    }
}

impl FilterPolicy {
    pub fn check(&self) -> Result<()> {
        if !(self.lane_change_exclusion_window >= 0.0) {
            return Err(Error::InvalidArgument(
                "lane change exclusion window must be >= 0".into(),
            ));
        }
        if !(self.outlier_k > 0.0) {
            return Err(Error::InvalidArgument("outlier k must be > 0".into()));
        }
        Ok(())
    }
}

/// Invalidates frames recorded with LKAS off and frames around lane changes.
/// Sample values are left untouched.
pub fn filter_frames(table: &FrameTable, policy: &FilterPolicy) -> Result<FrameTable> {
    policy.check()?;
    let status = table.require(&policy.lkas_status_signal)?;
    let n = table.n_frames();
    let mut valid = table.frame_valid.clone();
    for (k, ok) in valid.iter_mut().enumerate() {
        let engaged = status
            .get(k)
            .is_some_and(|s| (s - policy.active_value).abs() <= 1e-9);
        if !engaged {
            *ok = false;
        }
    }
    if let Some(name) = &policy.turn_signal_signal {
        let turn = table.require(name)?;
        let half = (policy.lane_change_exclusion_window / table.period + 1e-6).floor() as usize;
        // +1 at window start, -1 one past window end
        let mut delta = vec![0i64; n + 1];
        for k in 0..n {
            if turn.get(k).is_some_and(|v| v != 0.0) {
                delta[k.saturating_sub(half)] += 1;
                delta[(k + half + 1).min(n)] -= 1;
            }
        }
        let mut depth = 0i64;
        for (k, ok) in valid.iter_mut().enumerate() {
            depth += delta[k];
            if depth > 0 {
                *ok = false;
            }
        }
    }
    Ok(FrameTable {
        frame_valid: valid,
        ..table.clone()
    })
}

pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    debug_assert!(n > 0);
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + upper)
    }
}

/// Scale factor making the MAD a consistent estimator of a normal sigma.
pub const MAD_SCALE: f64 = 1.4826;

/// Flags samples farther than `k` scaled MADs from the median.
///
/// Returns the new validity mask. When the MAD is zero, every sample that
/// differs from the median is an outlier.
pub fn outlier_mask(values: &[f64], valid: &[bool], k: f64) -> Result<Vec<bool>> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("outlier k must be > 0, got {k}")));
    }
    if values.len() != valid.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: valid.len(),
        });
    }
    let mut kept: Vec<f64> = values
        .iter()
        .zip(valid)
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| *v)
        .collect();
    if kept.is_empty() {
        return Err(Error::Empty("series has no valid samples".into()));
    }
    if kept.len() < 2 {
        return Err(Error::InvalidArgument(
            "outlier removal needs at least 2 valid samples".into(),
        ));
    }
    let median = median_in_place(&mut kept);
    for v in kept.iter_mut() {
        *v = (*v - median).abs();
    }
    let mad = MAD_SCALE * median_in_place(&mut kept);
    let limit = k * mad;
    Ok(values
        .iter()
        .zip(valid)
        .map(|(&v, &ok)| {
            if !ok {
                return false;
            }
            let dev = (v - median).abs();
            if mad == 0.0 {
                dev == 0.0
            } else {
                dev <= limit
            }
        })
        .collect())
}

/// Marks robust-z outliers invalid; sample values are unchanged.
pub fn remove_outliers(series: &IndicatorSeries, k: f64) -> Result<IndicatorSeries> {
    let valid = outlier_mask(&series.samples, &series.valid, k)?;
    Ok(IndicatorSeries {
        valid,
        ..series.clone()
    })
}

/// Applies [`outlier_mask`] to one channel of a frame table, considering
/// only frames that are currently valid.
pub fn remove_channel_outliers(table: &mut FrameTable, name: &str, k: f64) -> Result<usize> {
    let mask = {
        let ch = table.require(name)?;
        let current = table.mask_of(ch);
        outlier_mask(&ch.values, &current, k)?
    };
    let frame_valid = table.frame_valid.clone();
    let ch = table.channel_mut(name).expect("checked above");
    let mut removed = 0;
    for ((p, keep), fv) in ch.present.iter_mut().zip(mask).zip(frame_valid) {
        if fv && *p && !keep {
            *p = false;
            removed += 1;
        }
    }
    Ok(removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Indicator, DEFAULT_PERIOD};

    /// Raw fragment of the sparse layout from the preprocessing figure:
    /// each sensor writes on its own clock.
    pub(crate) const FIGURE_FRAGMENT: &str = "\
time,var1,var2,var3
0.0015,2,,
0.0034,,,
0.0053,,,5
0.0072,,,
0.0091,,3,
0.0101,,,
0.0115,3,,
0.0134,,,
0.0153,,,6
0.0172,,,
0.0191,,,
0.0201,,,
0.0215,3.5,,
0.0234,,,
0.0253,,,7
0.0272,,,
0.0291,,6,
0.0301,,,
0.0315,,3,
";

    fn parse(text: &str) -> Result<RawLog> {
        parse_raw_log(text.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn figure_fragment_parses_one_record_per_cell() {
        let log = parse(FIGURE_FRAGMENT).unwrap();
        assert_eq!(log.records.len(), 9);
        assert_eq!(log.signal_names, ["var1", "var2", "var3"]);
        assert!(log
            .records
            .windows(2)
            .all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn figure_fragment_resamples_to_dense_table() {
        let table = resample(&parse(FIGURE_FRAGMENT).unwrap(), DEFAULT_PERIOD).unwrap();
        assert!((table.start_time - 0.01).abs() < 1e-12);
        let col = |n: &str| table.channel(n).unwrap().clone();
        let (v1, v2, v3) = (col("var1"), col("var2"), col("var3"));
        // 0.01, 0.02, 0.03 and the closing frame at 0.04
        assert_eq!(table.n_frames(), 4);
        assert_eq!(v1.get(0), Some(2.0));
        assert_eq!(v2.get(0), Some(3.0));
        assert_eq!(v3.get(0), Some(5.0));
        // value of variable 2 at 0.02 s comes from 0.0091 s
        assert_eq!(v2.get(1), Some(3.0));
        assert_eq!(v1.get(1), Some(3.0));
        assert_eq!(v3.get(1), Some(6.0));
        assert_eq!(v1.get(2), Some(3.5));
        assert_eq!(v2.get(2), Some(6.0));
        assert_eq!(v3.get(2), Some(7.0));
    }

    #[test]
    fn header_only_file_is_empty_log() {
        let log = parse("time,a,b\n").unwrap();
        assert!(log.records.is_empty());
        assert_eq!(log.signal_names, ["a", "b"]);
        assert!(matches!(
            resample(&log, DEFAULT_PERIOD),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn bad_number_names_row_and_column() {
        let err = parse("time,a,b\n0.0,1,2\n0.01,abc,3\n").unwrap_err();
        match err {
            Error::BadNumber {
                line,
                column,
                value,
            } => {
                assert_eq!(line, 3);
                assert_eq!(column, "a");
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_cell_rejected() {
        assert!(matches!(
            parse("time,a\n0.0,NaN\n"),
            Err(Error::NonFinite { line: 2, .. })
        ));
        assert!(matches!(
            parse("time,a\n0.0,inf\n"),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn ragged_row_rejected_with_line() {
        match parse("time,a\n0.0,1\n0.1,2,3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn small_time_reversal_is_reordered_stably() {
        let log = parse("time,a,b\n0.0100,1,\n0.0095,,2\n0.0095,3,\n0.0200,4,\n").unwrap();
        let times: Vec<_> = log.records.iter().map(|r| r.timestamp).collect();
        assert_eq!(times, [0.0095, 0.0095, 0.01, 0.02]);
        let values: Vec<_> = log.records.iter().map(|r| r.value).collect();
        assert_eq!(values, [2.0, 3.0, 1.0, 4.0]);
    }

    #[test]
    fn large_time_reversal_is_an_error() {
        assert!(matches!(
            parse("time,a\n0.5,1\n0.4,2\n"),
            Err(Error::NonMonotoneTime { line: 3, .. })
        ));
    }

    #[test]
    fn missing_time_column() {
        assert!(matches!(parse("t,a\n0,1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn single_record_carries_forward() {
        let log = parse("time,x\n0.004,7\n").unwrap();
        let table = resample(&log, 0.01).unwrap();
        assert!((table.start_time - 0.01).abs() < 1e-12);
        let x = table.channel("x").unwrap();
        assert!(x.present.iter().all(|p| *p));
        assert!(x.values.iter().all(|v| *v == 7.0));
        assert_eq!(table.n_frames(), 1);
    }

    #[test]
    fn signal_on_grid_is_identity() {
        let mut text = String::from("time,x\n");
        for k in 0..50 {
            text.push_str(&format!("{},{}\n", k as f64 * 0.01, k * k));
        }
        let table = resample(&parse(&text).unwrap(), 0.01).unwrap();
        assert_eq!(table.start_time, 0.0);
        let x = table.channel("x").unwrap();
        assert_eq!(x.values, (0..50).map(|k| (k * k) as f64).collect::<Vec<_>>());
    }

    #[test]
    fn frames_before_first_observation_are_missing() {
        let table = resample(&parse("time,a,b\n0.0,1,\n0.05,,2\n0.1,3,\n").unwrap(), 0.01).unwrap();
        let b = table.channel("b").unwrap();
        assert_eq!(&b.present[..6], &[false, false, false, false, false, true]);
        assert_eq!(b.get(10), Some(2.0));
    }

    #[test]
    fn streaming_ingest_matches_two_step_path() {
        let two_step = resample(&parse(FIGURE_FRAGMENT).unwrap(), 0.01).unwrap();
        let streamed = ingest_csv(
            FIGURE_FRAGMENT.as_bytes(),
            &CsvSchema::default(),
            0.01,
            SettingMeta::default(),
        )
        .unwrap();
        assert_eq!(two_step, streamed);
    }

    fn status_table(n: usize, status: impl Fn(usize) -> f64, turn: impl Fn(usize) -> f64) -> FrameTable {
        FrameTable {
            period: 0.01,
            start_time: 0.0,
            frame_valid: vec![true; n],
            channels: vec![
                Channel::dense("lkas_status", (0..n).map(&status).collect()),
                Channel::dense("turn_signal", (0..n).map(&turn).collect()),
                Channel::dense("x", (0..n).map(|k| k as f64).collect()),
            ],
            meta: SettingMeta::default(),
        }
    }

    #[test]
    fn always_active_no_turns_is_identity() {
        let t = status_table(500, |_| 1.0, |_| 0.0);
        assert_eq!(filter_frames(&t, &FilterPolicy::default()).unwrap(), t);
    }

    #[test]
    fn inactive_status_frames_are_invalidated() {
        let t = status_table(400, |k| if (100..200).contains(&k) { 0.0 } else { 1.0 }, |_| 0.0);
        let f = filter_frames(&t, &FilterPolicy::default()).unwrap();
        for k in 0..400 {
            assert_eq!(f.frame_valid[k], !(100..200).contains(&k), "frame {k}");
        }
        assert_eq!(f.channels, t.channels);
    }

    #[test]
    fn turn_signal_pulse_excludes_window() {
        let t = status_table(2000, |_| 1.0, |k| if k == 1000 { 1.0 } else { 0.0 });
        let f = filter_frames(&t, &FilterPolicy::default()).unwrap();
        for k in 0..2000 {
            let time = k as f64 * 0.01;
            let inside = (8.0 - 1e-9..=12.0 + 1e-9).contains(&time);
            assert_eq!(f.frame_valid[k], !inside, "frame {k}");
        }
    }

    #[test]
    fn missing_status_channel_errors() {
        let mut t = status_table(10, |_| 1.0, |_| 0.0);
        t.channels.remove(0);
        assert!(matches!(
            filter_frames(&t, &FilterPolicy::default()),
            Err(Error::MissingChannel(_))
        ));
    }

    fn series(values: Vec<f64>) -> IndicatorSeries {
        let n = values.len();
        IndicatorSeries::new(Indicator::LaneKeeping, 0.01, values, vec![true; n])
    }

    #[test]
    fn constant_series_has_no_outliers() {
        let s = series(vec![3.0; 20]);
        assert_eq!(remove_outliers(&s, 5.0).unwrap(), s);
    }

    #[test]
    fn zero_mad_flags_any_departure() {
        let s = remove_outliers(&series(vec![0.0, 0.0, 0.0, 0.0, 100.0]), 5.0).unwrap();
        assert_eq!(s.valid, [true, true, true, true, false]);
        assert_eq!(s.samples, [0.0, 0.0, 0.0, 0.0, 100.0]);
    }

    #[test]
    fn normal_sample_loses_almost_nothing() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = remove_outliers(&series(values), 5.0).unwrap();
        // P(|z| > 5) is about 5.7e-7 for a normal, far below the 0.1% bound
        assert!(s.valid.iter().filter(|v| !**v).count() < 10);
    }

    #[test]
    fn all_invalid_series_errors() {
        let s = IndicatorSeries::new(Indicator::LaneKeeping, 0.01, vec![1.0; 3], vec![false; 3]);
        assert!(matches!(remove_outliers(&s, 5.0), Err(Error::Empty(_))));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
