//! Derived intrusiveness variables: lateral position, lateral speed,
//! high-passed steering angle and interference torque.

use serde::{Deserialize, Serialize};

use crate::model::{FrameTable, Indicator, IndicatorSeries};
use crate::{Error, Result};

/// Signed offset of the vehicle centre from the lane centre, metres.
/// Negative when the vehicle sits left of centre.
pub fn lateral_position(distance_left: f64, distance_right: f64) -> Result<f64> {
    for d in [distance_left, distance_right] {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lane distance must be finite and >= 0, got {d}"
            )));
        }
    }
    Ok((distance_left - distance_right) / 2.0)
}

/// Lateral position series from the two lane-distance channels.
pub fn lateral_position_series(table: &FrameTable, left: &str, right: &str) -> Result<IndicatorSeries> {
    let (l, r) = (table.require(left)?, table.require(right)?);
    let n = table.n_frames();
    let mut samples = vec![0.0; n];
    let mut valid = vec![false; n];
    for k in 0..n {
        if let (Some(dl), Some(dr)) = (table.value(l, k), table.value(r, k)) {
            samples[k] = lateral_position(dl, dr).map_err(|e| {
                Error::InvalidArgument(format!("frame {k}: {e}"))
            })?;
            valid[k] = true;
        }
    }
    Ok(IndicatorSeries::new(Indicator::LaneKeeping, table.period, samples, valid))
}

/// Centred moving average over each valid run; the window shrinks at run edges.
pub fn moving_average(series: &IndicatorSeries, window: usize) -> IndicatorSeries {
    let mut out = series.clone();
    if window <= 1 {
        return out;
    }
    let half_lo = (window - 1) / 2;
    let half_hi = window / 2;
    for run in series.valid_runs() {
        let x = &series.samples[run.clone()];
        let mut prefix = Vec::with_capacity(x.len() + 1);
        prefix.push(0.0);
        for v in x {
            prefix.push(prefix.last().unwrap() + v);
        }
        for i in 0..x.len() {
            let lo = i.saturating_sub(half_lo);
            let hi = (i + half_hi + 1).min(x.len());
            out.samples[run.start + i] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        }
    }
    out
}

/// Backward first difference of lateral position, m/s.
///
/// A sample is valid only when both it and its predecessor are valid; the
/// first frame is always invalid.
pub fn lateral_speed(lp: &IndicatorSeries, dt: f64) -> Result<IndicatorSeries> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let n = lp.len();
    let mut samples = vec![0.0; n];
    let mut valid = vec![false; n];
    for k in 1..n {
        if lp.valid[k] && lp.valid[k - 1] {
            samples[k] = (lp.samples[k] - lp.samples[k - 1]) / dt;
            valid[k] = true;
        }
    }
    Ok(IndicatorSeries::new(Indicator::DynamicStability, lp.period, samples, valid))
}

/// High-pass stage applied to steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighPassSpec {
    pub cutoff_hz: f64,
    pub order: usize,
    /// Run forward and backward so the output has no group delay.
    pub zero_phase: bool,
}

impl Default for HighPassSpec {
    fn default() -> Self {
        Self {
            cutoff_hz: 1.0,
            order: 2,
            zero_phase: true,
        }
    }
}

impl HighPassSpec {
    pub fn check(&self, sample_rate: f64) -> Result<()> {
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < sample_rate / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "cutoff {} Hz must lie in (0, {}) Hz",
                self.cutoff_hz,
                sample_rate / 2.0
            )));
        }
        if self.order == 0 {
            return Err(Error::InvalidArgument("filter order must be >= 1".into()));
        }
        Ok(())
    }

    /// Samples needed to settle the filter; also the reflection pad length.
    pub fn warmup_len(&self, sample_rate: f64) -> usize {
        (sample_rate / self.cutoff_hz).ceil() as usize
    }
}

/// Normalized second-order section (a0 = 1), transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that holds the output steady for a constant input `x`.
    fn steady_state(&self, x: f64) -> [f64; 2] {
        let y = self.dc_gain() * x;
        let z2 = self.b[2] * x - self.a[1] * y;
        let z1 = self.b[1] * x - self.a[0] * y + z2;
        [z1, z2]
    }

    fn run(&self, data: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for x in data.iter_mut() {
            let input = *x;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *x = y;
        }
    }
}

/// Digital Butterworth high-pass as a cascade of second-order sections
/// (bilinear transform, prewarped at the cutoff).
pub fn butterworth_highpass(order: usize, cutoff_hz: f64, sample_rate: f64) -> Vec<Biquad> {
    use std::f64::consts::PI;
    let mut sections = Vec::new();
    let w0 = 2.0 * PI * cutoff_hz / sample_rate;
    let (sin_w, cos_w) = w0.sin_cos();
    for k in 0..order / 2 {
        let q = 1.0 / (2.0 * ((2 * k + 1) as f64 * PI / (2 * order) as f64).sin());
        let alpha = sin_w / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b0 = (1.0 + cos_w) / 2.0 / a0;
        sections.push(Biquad {
            b: [b0, -2.0 * b0, b0],
            a: [-2.0 * cos_w / a0, (1.0 - alpha) / a0],
        });
    }
    if order % 2 == 1 {
        let kk = (PI * cutoff_hz / sample_rate).tan();
        let b0 = 1.0 / (1.0 + kk);
        sections.push(Biquad {
            b: [b0, -b0, 0.0],
            a: [(kk - 1.0) / (kk + 1.0), 0.0],
        });
    }
    sections
}

fn cascade(sections: &[Biquad], data: &mut [f64]) {
    let Some(&x0) = data.first() else { return };
    let mut input = x0;
    for s in sections {
        let z = s.steady_state(input);
        s.run(data, z);
        input *= s.dc_gain();
    }
}

/// Filters one gap-free run, reflecting `pad` samples at each end about the
/// end points (odd extension) and trimming them afterwards.
fn filter_run(sections: &[Biquad], x: &[f64], pad: usize, zero_phase: bool) -> Vec<f64> {
    let n = x.len();
    let pad = pad.min(n.saturating_sub(1));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    cascade(sections, &mut ext);
    if zero_phase {
        ext.reverse();
        cascade(sections, &mut ext);
        ext.reverse();
    }
    ext[pad..pad + n].to_vec()
}

/// Steering angle with slow components removed, degrees.
///
/// Each maximal valid run is filtered independently. Runs shorter than the
/// warm-up length come out invalid.
pub fn filtered_steering_angle(steering: &IndicatorSeries, spec: &HighPassSpec) -> Result<IndicatorSeries> {
    let sample_rate = 1.0 / steering.period;
    spec.check(sample_rate)?;
    let sections = butterworth_highpass(spec.order, spec.cutoff_hz, sample_rate);
    let warmup = spec.warmup_len(sample_rate);
    let n = steering.len();
    let mut samples = vec![0.0; n];
    let mut valid = vec![false; n];
    for run in steering.valid_runs() {
        if run.len() < warmup {
            continue;
        }
        let y = filter_run(&sections, &steering.samples[run.clone()], warmup, spec.zero_phase);
        samples[run.clone()].copy_from_slice(&y);
        valid[run].fill(true);
    }
    Ok(IndicatorSeries::new(
        Indicator::SteeringStability,
        steering.period,
        samples,
        valid,
    ))
}

/// Three-way sign: -1, 0 or +1.
pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// LKAS torque counted only when it opposes the driver torque.
///
/// Negative torque turns the wheel clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorquePair {
    pub lkas: f64,
    pub driver: f64,
}

/// `l` when `sign(l) != sign(d)`, otherwise 0.
pub fn interference_torque(pair: TorquePair) -> f64 {
    if sign(pair.lkas) != sign(pair.driver) {
        pair.lkas
    } else {
        0.0
    }
}

/// Knobs for the per-frame interference-torque rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterferencePolicy {
    /// Driver torque with `|d| <= deadband` is treated as sign 0.
    pub deadband: f64,
    /// When false, frames where the driver torque has sign 0 never count as
    /// interference.
    pub zero_driver_interferes: bool,
}

impl Default for InterferencePolicy {
    fn default() -> Self {
        Self {
            deadband: 0.0,
            zero_driver_interferes: true,
        }
    }
}

/// Per-frame interference torque from aligned LKAS and driver torque series.
pub fn interference_torque_series(
    lkas: &IndicatorSeries,
    driver: &IndicatorSeries,
    policy: &InterferencePolicy,
) -> Result<IndicatorSeries> {
    if lkas.len() != driver.len() {
        return Err(Error::LengthMismatch {
            left: lkas.len(),
            right: driver.len(),
        });
    }
    if !(policy.deadband >= 0.0) {
        return Err(Error::InvalidArgument("deadband must be >= 0".into()));
    }
    let n = lkas.len();
    let mut samples = vec![0.0; n];
    let mut valid = vec![false; n];
    for k in 0..n {
        let (Some(l), Some(d)) = (lkas.get(k), driver.get(k)) else {
            continue;
        };
        let d_zero = d.abs() <= policy.deadband;
        let d = if d_zero { 0.0 } else { d };
        samples[k] = if d_zero && !policy.zero_driver_interferes {
            0.0
        } else {
            interference_torque(TorquePair { lkas: l, driver: d })
        };
        valid[k] = true;
    }
    Ok(IndicatorSeries::new(Indicator::NonInterference, lkas.period, samples, valid))
}

/// Wraps one table channel as a series, honoring frame validity.
pub fn channel_series(table: &FrameTable, name: &str, indicator: Indicator) -> Result<IndicatorSeries> {
    let ch = table.require(name)?;
    Ok(IndicatorSeries::new(
        indicator,
        table.period,
        ch.values.clone(),
        table.mask_of(ch),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> IndicatorSeries {
        let n = values.len();
        IndicatorSeries::new(Indicator::LaneKeeping, 0.01, values, vec![true; n])
    }

    #[test]
    fn lateral_position_examples() {
        assert_eq!(lateral_position(1.65, 1.65).unwrap(), 0.0);
        assert_eq!(lateral_position(1.2, 2.0).unwrap(), -0.4);
        assert_eq!(lateral_position(2.0, 1.2).unwrap(), 0.4);
        assert!(lateral_position(-0.1, 1.0).is_err());
        assert!(lateral_position(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn lateral_speed_examples() {
        let ls = lateral_speed(&series(vec![0.3; 5]), 0.01).unwrap();
        assert!(!ls.valid[0]);
        assert!(ls.valid_in(0..5).all(|v| v == 0.0));

        let ls = lateral_speed(&series(vec![0.0, 0.01]), 0.01).unwrap();
        assert_eq!(ls.get(1), Some(1.0));

        let lp = IndicatorSeries::new(
            Indicator::LaneKeeping,
            0.01,
            vec![0.0, 1.0, 2.0],
            vec![true, false, true],
        );
        let ls = lateral_speed(&lp, 0.01).unwrap();
        assert_eq!(ls.valid, [false, false, false]);
        assert!(lateral_speed(&lp, 0.0).is_err());
    }

    #[test]
    fn moving_average_shrinks_at_edges() {
        let s = moving_average(&series(vec![0.0, 3.0, 6.0, 9.0]), 3);
        assert_eq!(s.samples, [1.5, 3.0, 6.0, 7.5]);
    }

    #[test]
    fn interference_examples() {
        let it = |l, d| interference_torque(TorquePair { lkas: l, driver: d });
        assert_eq!(it(-0.5, 0.3), -0.5);
        assert_eq!(it(0.2, 0.5), 0.0);
        assert_eq!(it(0.0, 0.7), 0.0);
        assert_eq!(it(0.0, -0.7), 0.0);
        assert_eq!(it(0.0, 0.0), 0.0);
    }

    fn torque(values: Vec<f64>) -> IndicatorSeries {
        let n = values.len();
        IndicatorSeries::new(Indicator::NonInterference, 0.01, values, vec![true; n])
    }

    #[test]
    fn interference_series_follows_literal_rule_by_default() {
        let l = torque(vec![0.4; 6]);
        let d = torque(vec![0.0; 6]);
        let it = interference_torque_series(&l, &d, &InterferencePolicy::default()).unwrap();
        assert!(it.samples.iter().all(|v| *v == 0.4));

        let loose = InterferencePolicy {
            deadband: 0.1,
            zero_driver_interferes: true,
        };
        assert_eq!(interference_torque_series(&l, &d, &loose).unwrap(), it);

        let strict = InterferencePolicy {
            deadband: 0.1,
            zero_driver_interferes: false,
        };
        let quiet = interference_torque_series(&l, &d, &strict).unwrap();
        assert!(quiet.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identical_torques_never_interfere() {
        let l = torque(vec![0.3, -0.2, 0.0, 1.5, -4.0]);
        let it = interference_torque_series(&l, &l, &InterferencePolicy::default()).unwrap();
        assert!(it.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn interference_length_mismatch() {
        let r = interference_torque_series(&torque(vec![0.0; 3]), &torque(vec![0.0; 4]), &Default::default());
        assert!(matches!(r, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn highpass_zero_in_zero_out() {
        let s = series(vec![0.0; 500]);
        let f = filtered_steering_angle(&s, &HighPassSpec::default()).unwrap();
        assert!(f.samples.iter().all(|v| *v == 0.0));
        assert!(f.valid.iter().all(|v| *v));
    }

    #[test]
    fn short_runs_come_out_invalid() {
        let mut s = series(vec![1.0; 300]);
        s.valid[50] = false;
        let f = filtered_steering_angle(&s, &HighPassSpec::default()).unwrap();
        assert!(f.valid[..50].iter().all(|v| !v));
        assert!(f.valid[51..].iter().all(|v| *v));
    }

    #[test]
    fn second_order_coefficients_match_closed_form() {
        // bilinear-transform Butterworth, K = tan(pi fc / fs)
        let k = (std::f64::consts::PI * 1.0 / 100.0).tan();
        let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * k + k * k);
        let s = butterworth_highpass(2, 1.0, 100.0);
        assert_eq!(s.len(), 1);
        let tol = 1e-12;
        assert!((s[0].b[0] - norm).abs() < tol);
        assert!((s[0].b[1] + 2.0 * norm).abs() < tol);
        assert!((s[0].a[0] - 2.0 * (k * k - 1.0) * norm).abs() < tol);
        assert!((s[0].a[1] - (1.0 - std::f64::consts::SQRT_2 * k + k * k) * norm).abs() < tol);
    }

    proptest! {
        #[test]
        fn lp_is_antisymmetric(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            prop_assert_eq!(lateral_position(a, b).unwrap(), -lateral_position(b, a).unwrap());
            prop_assert_eq!(lateral_position(a, a).unwrap(), 0.0);
        }

        #[test]
        fn it_is_zero_or_lkas(l in -5.0f64..5.0, d in -5.0f64..5.0) {
            let it = interference_torque(TorquePair { lkas: l, driver: d });
            prop_assert!(it == 0.0 || it == l);
        }

        #[test]
        fn ls_of_ramp_is_slope(slope_num in -4096i32..4096, start in -64i32..64, n in 2usize..300, shift in 5u32..10) {
            // dyadic slope and dt keep every operation exact
            let dt = 2f64.powi(-(shift as i32));
            let slope = slope_num as f64 / 1024.0;
            let lp: Vec<f64> = (0..n).map(|k| start as f64 + slope * dt * k as f64).collect();
            let ls = lateral_speed(&series(lp), dt).unwrap();
            for v in ls.valid_in(0..n) {
                prop_assert_eq!(v, slope);
            }
        }

        #[test]
        fn ls_integrates_back_to_lp(steps in prop::collection::vec(-1000i32..1000, 2..300), shift in 5u32..10) {
            let dt = 2f64.powi(-(shift as i32));
            let mut lp = vec![0.0];
            for s in &steps {
                lp.push(lp.last().unwrap() + *s as f64 / 65536.0);
            }
            let n = lp.len();
            let ls = lateral_speed(&series(lp.clone()), dt).unwrap();
            let integral: f64 = ls.valid_in(0..n).map(|v| v * dt).sum();
            prop_assert_eq!(integral, lp[n - 1] - lp[0]);
        }

        #[test]
        fn highpass_is_linear(
            x in prop::collection::vec(-10.0f64..10.0, 150..400),
            y_seed in prop::collection::vec(-10.0f64..10.0, 400),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let n = x.len();
            let y = &y_seed[..n];
            let spec = HighPassSpec::default();
            let combo: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
            let fx = filtered_steering_angle(&series(x.clone()), &spec).unwrap();
            let fy = filtered_steering_angle(&series(y.to_vec()), &spec).unwrap();
            let fc = filtered_steering_angle(&series(combo), &spec).unwrap();
            for k in 0..n {
                let expect = a * fx.samples[k] + b * fy.samples[k];
                prop_assert!((fc.samples[k] - expect).abs() < 1e-9);
            }
        }
    }
}
