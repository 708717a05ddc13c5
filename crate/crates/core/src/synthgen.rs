//! Synthetic drive logs with controllable intrusiveness.
//!
//! Lateral position is a critically damped, mean-reverting Gaussian process
//! whose position and velocity standard deviations are set independently
//! per section kind. Steering is a slow track-following term plus white
//! jitter and optional tremor; LKAS torque opposes an independent driver
//! torque half of the time. Every signal is emitted at 100 Hz on its own
//! sub-millisecond offset so the resampler does real work.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{RawLog, RawRecord, SectionKind, SettingMeta, SignalId, DEFAULT_PERIOD};
use crate::{Error, Result};

/// Radius emitted for each section kind, metres.
pub const STRAIGHT_RADIUS: f64 = 20_000.0;
pub const LOW_CURVE_RADIUS: f64 = 2_000.0;
pub const HIGH_CURVE_RADIUS: f64 = 500.0;

/// Steering-wheel angle (deg) times radius (m) needed to follow a curve:
/// steering ratio 15, wheelbase 2.8 m.
const TRACK_GAIN: f64 = 15.0 * 2.8 * 180.0 / std::f64::consts::PI;
/// Seconds over which the track-following steering eases into a new section.
const TRACK_BLEND_S: f64 = 4.0;
const TREMOR_RAMP_S: f64 = 0.25;
const DAMPING: f64 = 1.0;
/// How close to a lane line the centre may get when departures are allowed.
const LINE_MARGIN: f64 = 0.05;
const LKAS_TORQUE_TAU_S: f64 = 0.1;
const DRIVER_TORQUE_TAU_S: f64 = 0.5;

/// Column names written by the generator, in CSV order.
pub const SIGNALS: [&str; 8] = [
    "distance_left",
    "distance_right",
    "steering_angle",
    "curvature_radius",
    "lkas_torque",
    "driver_torque",
    "lkas_status",
    "turn_signal",
];
/// Per-signal timestamp offsets, in units of 0.1 ms.
const OFFSETS: [u64; 8] = [10, 20, 40, 30, 60, 70, 5, 8];
/// Status channels are sampled once a second.
const SLOW_EVERY: [usize; 8] = [1, 1, 1, 1, 1, 1, 100, 100];

/// One value per section kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerSection {
    pub straight: f64,
    pub low_curve: f64,
    pub high_curve: f64,
}

impl PerSection {
    pub const fn new(straight: f64, low_curve: f64, high_curve: f64) -> Self {
        Self {
            straight,
            low_curve,
            high_curve,
        }
    }

    pub const fn uniform(x: f64) -> Self {
        Self::new(x, x, x)
    }

    pub fn get(&self, kind: SectionKind) -> f64 {
        match kind {
            SectionKind::Straight => self.straight,
            SectionKind::LowCurve => self.low_curve,
            SectionKind::HighCurve => self.high_curve,
        }
    }

    fn scaled(&self, s: f64) -> Self {
        Self::new(self.straight * s, self.low_curve * s, self.high_curve * s)
    }

    fn values(&self) -> [f64; 3] {
        [self.straight, self.low_curve, self.high_curve]
    }
}

impl Default for PerSection {
    fn default() -> Self {
        Self::uniform(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TremorSpec {
    pub freq_hz: f64,
    pub amplitude_deg: f64,
    /// `[start, end]` in seconds from the start of the drive.
    pub episodes: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteLeg {
    pub kind: SectionKind,
    pub duration_s: f64,
}

impl RouteLeg {
    pub fn new(kind: SectionKind, duration_s: f64) -> Self {
        Self { kind, duration_s }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSetting {
    pub setting_id: String,
    pub seed: u64,
    /// Consecutive curve legs read back as one section of the sharper
    /// kind, so separate curves of different kinds with a straight.
    pub route: Vec<RouteLeg>,
    pub lp_sd_target: PerSection,
    pub ls_sd_target: PerSection,
    pub fsa_sd_target: PerSection,
    pub it_sd_target: PerSection,
    /// Mean lateral position per section kind.
    pub lp_mean: PerSection,
    pub tremor: Option<TremorSpec>,
    pub lane_width: f64,
    pub vehicle_width: f64,
    /// Lets the vehicle body cross the lane lines; the centre still stays
    /// inside the lane.
    pub allow_departure: bool,
    /// Standard deviation of the driver's own torque, Nm.
    pub driver_torque_sd: f64,
}

impl Default for SyntheticSetting {
    /// The well-tuned setting from the road trials.
    fn default() -> Self {
        Self {
            setting_id: "synthetic".into(),
            seed: 0,
            route: vec![
                RouteLeg::new(SectionKind::Straight, 240.0),
                RouteLeg::new(SectionKind::LowCurve, 120.0),
                RouteLeg::new(SectionKind::Straight, 60.0),
                RouteLeg::new(SectionKind::HighCurve, 180.0),
            ],
            lp_sd_target: PerSection::new(0.081, 0.075, 0.268),
            ls_sd_target: PerSection::new(0.122, 0.119, 0.108),
            fsa_sd_target: PerSection::uniform(0.001),
            it_sd_target: PerSection::new(0.007, 0.006, 0.005),
            lp_mean: PerSection::default(),
            tremor: None,
            lane_width: 3.3,
            vehicle_width: 1.8,
            allow_departure: false,
            driver_torque_sd: 1.0,
        }
    }
}

impl SyntheticSetting {
    /// The badly tuned setting from the road trials.
    pub fn bad() -> Self {
        Self {
            setting_id: "synthetic-bad".into(),
            lp_sd_target: PerSection::new(0.554, 0.580, 0.765),
            ls_sd_target: PerSection::new(0.275, 0.335, 0.329),
            fsa_sd_target: PerSection::new(0.213, 0.258, 0.304),
            it_sd_target: PerSection::new(0.564, 0.638, 0.842),
            allow_departure: true,
            ..Self::default()
        }
    }

    pub fn duration(&self) -> f64 {
        self.route.iter().map(|l| l.duration_s).sum()
    }

    /// Largest |LP| the generator will produce.
    pub fn lp_limit(&self) -> f64 {
        if self.allow_departure {
            self.lane_width / 2.0 - LINE_MARGIN
        } else {
            (self.lane_width - self.vehicle_width) / 2.0
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.route.is_empty() {
            return bad("route is empty".into());
        }
        if let Some(leg) = self.route.iter().find(|l| !(l.duration_s.is_finite() && l.duration_s > 0.0)) {
            return bad(format!("route leg duration must be > 0, got {}", leg.duration_s));
        }
        if !(self.lane_width.is_finite() && self.lane_width > 2.0 * LINE_MARGIN) {
            return bad(format!("lane width {} is not usable", self.lane_width));
        }
        if !(self.vehicle_width.is_finite() && self.vehicle_width > 0.0 && self.vehicle_width < self.lane_width) {
            return bad(format!(
                "vehicle width must lie in (0, lane width), got {}",
                self.vehicle_width
            ));
        }
        for (name, t) in [
            ("lp_sd_target", &self.lp_sd_target),
            ("ls_sd_target", &self.ls_sd_target),
            ("fsa_sd_target", &self.fsa_sd_target),
            ("it_sd_target", &self.it_sd_target),
        ] {
            if t.values().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad(format!("{name} values must be > 0"));
            }
        }
        if self.lp_sd_target.values().iter().any(|v| *v >= self.lane_width) {
            return bad("lp_sd_target must be below the lane width".into());
        }
        let limit = self.lp_limit();
        if self.lp_mean.values().iter().any(|m| !(m.is_finite() && m.abs() < limit)) {
            return bad(format!("lp_mean values must lie within +-{limit} m"));
        }
        if !(self.driver_torque_sd.is_finite() && self.driver_torque_sd > 0.0) {
            return bad("driver_torque_sd must be > 0".into());
        }
        if let Some(t) = &self.tremor {
            if !(t.freq_hz.is_finite() && t.freq_hz > 1.0 && t.freq_hz < 0.5 / DEFAULT_PERIOD) {
                return bad(format!("tremor frequency must lie in (1, 50) Hz, got {}", t.freq_hz));
            }
            if !(t.amplitude_deg.is_finite() && t.amplitude_deg >= 0.0) {
                return bad("tremor amplitude must be >= 0".into());
            }
            if t.episodes.iter().any(|[a, b]| !(a.is_finite() && b.is_finite() && a < b)) {
                return bad("tremor episodes need start < end".into());
            }
        }
        Ok(())
    }

    fn at_severity(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.lp_sd_target = self.lp_sd_target.scaled(s);
        out.ls_sd_target = self.ls_sd_target.scaled(s);
        out.fsa_sd_target = self.fsa_sd_target.scaled(s);
        out.it_sd_target = self.it_sd_target.scaled(s);
        if let Some(t) = &mut out.tremor {
            t.amplitude_deg *= s;
        }
        if s != 1.0 {
            out.setting_id = format!("{}@{s}", self.setting_id);
        }
        out
    }
}

/// Stationary covariance `(var x, cov xv, var v)` of the discretised damped
/// oscillator driven by unit-variance noise.
fn stationary_cov(omega: f64, dt: f64) -> Option<(f64, f64, f64)> {
    let c = 1.0 - 2.0 * DAMPING * omega * dt;
    let a = [[1.0 - omega * omega * dt * dt, dt * c], [-omega * omega * dt, c]];
    let b = [dt * dt.sqrt(), dt.sqrt()];
    // P = A P A' + b b' written as M p = q for p = (pxx, pxv, pvv).
    let m = [
        [1.0 - a[0][0] * a[0][0], -2.0 * a[0][0] * a[0][1], -a[0][1] * a[0][1]],
        [-a[0][0] * a[1][0], 1.0 - (a[0][0] * a[1][1] + a[0][1] * a[1][0]), -a[0][1] * a[1][1]],
        [-a[1][0] * a[1][0], -2.0 * a[1][0] * a[1][1], 1.0 - a[1][1] * a[1][1]],
    ];
    let q = [b[0] * b[0], b[0] * b[1], b[1] * b[1]];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    let p: Vec<f64> = (0..3)
        .map(|j| {
            let mut mj = m;
            for (row, qi) in mj.iter_mut().zip(q) {
                row[j] = qi;
            }
            det3(&mj) / d
        })
        .collect();
    (p[0] > 0.0 && p[2] > 0.0 && p[0] * p[2] > p[1] * p[1] && d.is_finite()).then_some((p[0], p[1], p[2]))
}

/// Oscillator parameters hitting a position and a velocity sd.
#[derive(Debug, Clone, Copy)]
struct Oscillator {
    omega: f64,
    sigma: f64,
    cov: (f64, f64, f64),
}

impl Oscillator {
    fn fit(lp_sd: f64, ls_sd: f64, dt: f64) -> Result<Self> {
        let ratio = |w: f64| stationary_cov(w, dt).map(|(xx, _, vv)| (vv / xx).sqrt());
        let target = ls_sd / lp_sd;
        let (mut lo, mut hi) = (1e-6, 0.5 / dt);
        if !(ratio(lo).is_some_and(|r| r <= target) && ratio(hi).is_some_and(|r| r >= target)) {
            return Err(Error::InvalidArgument(format!(
                "cannot reach LS/LP sd ratio {target} at {dt} s sampling"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid).is_some_and(|r| r < target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let omega = 0.5 * (lo + hi);
        let cov = stationary_cov(omega, dt).expect("checked above");
        Ok(Self {
            omega,
            sigma: lp_sd / cov.0.sqrt(),
            cov,
        })
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Frame index ranges of each route leg.
fn leg_frames(setting: &SyntheticSetting, dt: f64) -> Vec<(SectionKind, usize, usize)> {
    let mut out = Vec::with_capacity(setting.route.len());
    let mut t = 0.0;
    for leg in &setting.route {
        let start = (t / dt).round() as usize;
        t += leg.duration_s;
        out.push((leg.kind, start, (t / dt).round() as usize));
    }
    out
}

fn radius(kind: SectionKind) -> f64 {
    match kind {
        SectionKind::Straight => STRAIGHT_RADIUS,
        SectionKind::LowCurve => LOW_CURVE_RADIUS,
        SectionKind::HighCurve => HIGH_CURVE_RADIUS,
    }
}

fn tremor_envelope(t: f64, [a, b]: [f64; 2]) -> f64 {
    if t < a || t > b {
        return 0.0;
    }
    let ramp = TREMOR_RAMP_S.min((b - a) / 2.0);
    let edge = (t - a).min(b - t);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (std::f64::consts::PI * edge / ramp).cos()
    }
}

/// Dense per-frame values of every generated signal.
struct Tracks {
    lp: Vec<f64>,
    steering: Vec<f64>,
    radius: Vec<f64>,
    lkas: Vec<f64>,
    driver: Vec<f64>,
}

fn simulate(setting: &SyntheticSetting, dt: f64) -> Result<Tracks> {
    let legs = leg_frames(setting, dt);
    let n = legs.last().map_or(0, |l| l.2);
    if n == 0 {
        return Err(Error::InvalidArgument("route is shorter than one frame".into()));
    }
    let mut osc = Vec::with_capacity(3);
    for kind in SectionKind::ALL {
        osc.push(Oscillator::fit(
            setting.lp_sd_target.get(kind),
            setting.ls_sd_target.get(kind),
            dt,
        )?);
    }
    let kind_index = |k: SectionKind| SectionKind::ALL.iter().position(|x| *x == k).unwrap();

    let mut lp = Vec::with_capacity(n);
    let mut r = rng(setting.seed, 1);
    let limit = setting.lp_limit();
    let first = legs[0].0;
    let o = osc[kind_index(first)];
    let (z1, z2) = (normal(&mut r), normal(&mut r));
    let sx = o.cov.0.sqrt();
    let rho = o.cov.1 / (sx * o.cov.2.sqrt());
    let mut x = setting.lp_mean.get(first) + o.sigma * sx * z1;
    let mut v = o.sigma * o.cov.2.sqrt() * (rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * z2);
    x = x.clamp(-limit, limit);
    for &(kind, a, b) in &legs {
        let o = osc[kind_index(kind)];
        let mu = setting.lp_mean.get(kind);
        let c = 1.0 - 2.0 * DAMPING * o.omega * dt;
        for _ in a..b {
            lp.push(x);
            v = c * v - o.omega * o.omega * dt * (x - mu) + o.sigma * dt.sqrt() * normal(&mut r);
            let next = x + dt * v;
            if next.abs() > limit {
                let clamped = next.clamp(-limit, limit);
                v = (clamped - x) / dt;
                x = clamped;
            } else {
                x = next;
            }
        }
    }

    // Curve direction alternates so the route does not spiral.
    let mut radius_track = Vec::with_capacity(n);
    let mut steer_target = Vec::with_capacity(legs.len());
    let mut left = true;
    for &(kind, a, b) in &legs {
        let mut rad = radius(kind);
        if kind != SectionKind::Straight {
            if !left {
                rad = -rad;
            }
            left = !left;
        }
        radius_track.extend(std::iter::repeat_n(rad, b - a));
        steer_target.push(if kind == SectionKind::Straight { 0.0 } else { TRACK_GAIN / rad });
    }

    let mut steering = vec![0.0; n];
    let blend = (TRACK_BLEND_S / dt).round() as usize;
    let mut r = rng(setting.seed, 2);
    let mut prev = steer_target[0];
    for (i, &(kind, a, b)) in legs.iter().enumerate() {
        let target = steer_target[i];
        let jitter = setting.fsa_sd_target.get(kind);
        for (k, s) in steering.iter_mut().enumerate().take(b).skip(a) {
            let u = ((k - a) as f64 / blend.max(1) as f64).min(1.0);
            let w = 0.5 - 0.5 * (std::f64::consts::PI * u).cos();
            *s = prev + (target - prev) * w + jitter * normal(&mut r);
        }
        prev = target;
    }
    if let Some(t) = &setting.tremor {
        for (k, s) in steering.iter_mut().enumerate() {
            let time = k as f64 * dt;
            let env: f64 = t.episodes.iter().map(|&e| tremor_envelope(time, e)).sum();
            if env > 0.0 {
                *s += t.amplitude_deg * env.min(1.0) * (2.0 * std::f64::consts::PI * t.freq_hz * time).sin();
            }
        }
    }

    let ar1 = |tau: f64| (-dt / tau).exp();
    let mut r_l = rng(setting.seed, 3);
    let mut r_d = rng(setting.seed, 4);
    let (pl, pd) = (ar1(LKAS_TORQUE_TAU_S), ar1(DRIVER_TORQUE_TAU_S));
    let mut lkas = Vec::with_capacity(n);
    let mut driver = Vec::with_capacity(n);
    let mut el = normal(&mut r_l);
    let mut ed = normal(&mut r_d);
    for &(kind, a, b) in &legs {
        // Interference is l on the half of frames where l and d disagree in
        // sign, so l needs sqrt(2) times the target spread.
        let sl = setting.it_sd_target.get(kind) * std::f64::consts::SQRT_2;
        for _ in a..b {
            lkas.push(sl * el);
            driver.push(setting.driver_torque_sd * ed);
            el = pl * el + (1.0 - pl * pl).sqrt() * normal(&mut r_l);
            ed = pd * ed + (1.0 - pd * pd).sqrt() * normal(&mut r_d);
        }
    }

    Ok(Tracks {
        lp,
        steering,
        radius: radius_track,
        lkas,
        driver,
    })
}

/// Timestamp of frame `k` of signal `s`, rounded to 0.1 ms so it survives
/// a CSV round trip unchanged.
fn stamp(k: usize, s: usize) -> f64 {
    (k as u64 * 100 + OFFSETS[s]) as f64 / 10_000.0
}

/// Generates one drive. The same setting always yields the same log.
pub fn generate_drive(setting: &SyntheticSetting) -> Result<RawLog> {
    setting.check()?;
    let dt = DEFAULT_PERIOD;
    let tracks = simulate(setting, dt)?;
    let n = tracks.lp.len();
    let half = setting.lane_width / 2.0;
    let value = |s: usize, k: usize| -> f64 {
        match s {
            0 => half + tracks.lp[k],
            1 => half - tracks.lp[k],
            2 => tracks.steering[k],
            3 => tracks.radius[k],
            4 => tracks.lkas[k],
            5 => tracks.driver[k],
            6 => 1.0,
            _ => 0.0,
        }
    };
    // Offsets are all below one frame, so frame-major order with signals
    // sorted by offset is time order.
    let mut by_offset: Vec<usize> = (0..SIGNALS.len()).collect();
    by_offset.sort_by_key(|&s| OFFSETS[s]);
    let mut records = Vec::with_capacity(n * 6 + n / 50);
    for k in 0..n {
        for &s in &by_offset {
            if k % SLOW_EVERY[s] == 0 {
                records.push(RawRecord {
                    timestamp: stamp(k, s),
                    signal: SignalId(s as u32),
                    value: value(s, k),
                });
            }
        }
    }
    let mut meta = SettingMeta::new(setting.setting_id.clone());
    meta.vehicle_model = "synthetic".into();
    Ok(RawLog {
        records,
        signal_names: SIGNALS.iter().map(|s| s.to_string()).collect(),
        meta,
    })
}

/// Drives at increasing severity: every sd target and the tremor amplitude
/// are multiplied by the severity. All drives share the base seed, so
/// severity 1 reproduces the base drive exactly.
pub fn generate_setting_family(
    base: &SyntheticSetting,
    severities: &[f64],
) -> Result<Vec<(f64, RawLog)>> {
    if severities.len() < 2 {
        return Err(Error::InvalidArgument("a family needs at least two severities".into()));
    }
    if severities.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidArgument("severities must be > 0".into()));
    }
    if severities.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("severities must be strictly ascending".into()));
    }
    severities
        .iter()
        .map(|&s| Ok((s, generate_drive(&base.at_severity(s))?)))
        .collect()
}

/// Writes a log in the CSV layout `ingest` reads: one row per distinct
/// timestamp, empty cells for signals not sampled at that instant.
pub fn write_csv<W: Write>(log: &RawLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    header.extend(log.signal_names.iter().cloned());
    w.write_record(&header)?;
    let mut row: Vec<String> = vec![String::new(); header.len()];
    let mut i = 0;
    while i < log.records.len() {
        let t = log.records[i].timestamp;
        row.iter_mut().for_each(String::clear);
        row[0] = t.to_string();
        while i < log.records.len() && log.records[i].timestamp == t {
            let r = &log.records[i];
            row[r.signal.index() + 1] = r.value.to_string();
            i += 1;
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
