use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use lkas_core::derive::{channel_series, filtered_steering_angle};
use lkas_core::ingest::{filter_frames, ingest_csv};
use lkas_core::scoring::stats::{linear_regression, pearson, Correlation, Regression};
use lkas_core::scoring::compare_settings_detailed;
use lkas_core::segmentation::{durations, segment};
use lkas_core::spectral::{spectrogram, stft, tremor_report, TremorEpisode};
use lkas_core::storage::{load_frames, save_frames};
use lkas_core::synthgen::{generate_drive, generate_setting_family, write_csv, SyntheticSetting};
use lkas_core::{
    analyze, FrameTable, GripCondition, Indicator, ScoreReport, SectionKind, SettingMeta,
    SCHEMA_VERSION,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{plot, CliError};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(lkas_core::Error::from)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn load(path: &Path) -> Result<FrameTable, CliError> {
    load_frames(path).map_err(|e| match e {
        lkas_core::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

/// `mm:ss`, as in drive-time tables.
fn clock(seconds: f64) -> String {
    let s = seconds.round() as u64;
    format!("{:02}:{:02}", s / 60, s % 60)
}

pub fn setting_meta(
    log: &Path,
    setting_id: Option<String>,
    grip: Option<String>,
    vehicle: Option<String>,
    rating: Option<f64>,
) -> Result<SettingMeta, CliError> {
    let id = setting_id.unwrap_or_else(|| {
        log.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "setting".into())
    });
    let meta = SettingMeta {
        setting_id: id,
        grip_condition: match grip.as_deref() {
            Some("non_grip") => GripCondition::NonGrip,
            _ => GripCondition::Grip,
        },
        vehicle_model: vehicle.unwrap_or_default(),
        subjective_rating: rating,
    };
    meta.check()?;
    Ok(meta)
}

#[derive(Debug, Serialize)]
struct SectionTime {
    seconds: f64,
    clock: String,
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    schema_version: u32,
    setting_id: String,
    frames: usize,
    valid_frames: usize,
    period: f64,
    start_time: f64,
    sections: BTreeMap<SectionKind, SectionTime>,
    total: SectionTime,
    channels: Vec<String>,
}

pub fn ingest(config: &RunConfig, log: &Path, out: &Path, meta: SettingMeta) -> Result<(), CliError> {
    let file = std::fs::File::open(log).map_err(|e| CliError::io(log, e))?;
    let table = ingest_csv(BufReader::with_capacity(1 << 20, file), &config.csv, config.period, meta)?;
    let table = filter_frames(&table, &config.analysis.filter_policy())?;
    let sections = segment(&table, &config.analysis.signals.curvature_radius, &config.analysis.curvature)?;

    let times = durations(&sections, table.period);
    let total: f64 = times.iter().map(|(_, t)| t).sum();
    let summary = IngestSummary {
        schema_version: SCHEMA_VERSION,
        setting_id: table.meta.setting_id.clone(),
        frames: table.n_frames(),
        valid_frames: table.valid_frames(),
        period: table.period,
        start_time: table.start_time,
        sections: times
            .iter()
            .map(|&(k, t)| (k, SectionTime { seconds: t, clock: clock(t) }))
            .collect(),
        total: SectionTime {
            seconds: total,
            clock: clock(total),
        },
        channels: table.channels.iter().map(|c| c.name.clone()).collect(),
    };

    create_dir(out)?;
    let frames_path = out.join("frames.bin");
    save_frames(&table, &frames_path).map_err(|e| match e {
        lkas_core::Error::Io(io) => CliError::io(&frames_path, io),
        other => other.into(),
    })?;
    write_json(&out.join("summary.json"), &summary)?;

    println!("setting {}", summary.setting_id);
    println!("{:<12} {:>10} {:>8}", "section", "seconds", "mm:ss");
    for (kind, t) in &summary.sections {
        println!("{:<12} {:>10.2} {:>8}", kind.as_str(), t.seconds, t.clock);
    }
    println!("{:<12} {:>10.2} {:>8}", "total", total, summary.total.clock);
    println!(
        "{} frames, {} valid, {} channels",
        summary.frames,
        summary.valid_frames,
        summary.channels.len()
    );
    Ok(())
}

fn score_table(report: &ScoreReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "reference {}  candidate {}", report.reference_id, report.candidate_id);
    let _ = write!(s, "{:<18} {:>8}", "indicator", "score");
    for kind in SectionKind::ALL {
        let _ = write!(s, " {:>10}", kind.as_str());
    }
    s.push('\n');
    for ind in Indicator::ALL {
        let _ = write!(s, "{:<18}", ind.as_str());
        if let Some(reason) = report.omitted.get(&ind) {
            let _ = writeln!(s, " {:>8}  ({reason})", "omitted");
            continue;
        }
        let _ = write!(s, " {:>8.2}", report.indicator_scores[&ind]);
        for kind in SectionKind::ALL {
            match report.per_section.get(&ind).and_then(|m| m.get(&kind)) {
                Some(v) => {
                    let _ = write!(s, " {v:>10.2}");
                }
                None => {
                    let _ = write!(s, " {:>10}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

pub fn score(config: &RunConfig, reference: &Path, candidate: &Path, out: &Path) -> Result<(), CliError> {
    let (r, c) = (load(reference)?, load(candidate)?);
    let (ra, ca) = rayon::join(|| analyze(&r, &config.analysis), || analyze(&c, &config.analysis));
    let detailed = compare_settings_detailed(&ra?, &ca?, &config.bins, &config.weights)?;

    create_dir(out)?;
    let cells_dir = out.join("cells");
    create_dir(&cells_dir)?;
    for cell in &detailed.cells {
        let stem = format!("{}_{}", cell.indicator.variable().to_lowercase(), cell.section.as_str());
        let mut csv = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Input(e.to_string());
        csv.write_record(["edge_lo", "edge_hi", "prob_ref", "prob_cand"]).map_err(io)?;
        let edges = &cell.reference.edges;
        for (i, (p, q)) in cell.reference.probs.iter().zip(&cell.candidate.probs).enumerate() {
            csv.write_record([edges[i], edges[i + 1], *p, *q].map(|v| v.to_string()))
                .map_err(io)?;
        }
        let bytes = csv.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
        write_file(&cells_dir.join(format!("{stem}.csv")), &bytes)?;
        write_file(&cells_dir.join(format!("{stem}.svg")), plot::pdf_overlay(cell).as_bytes())?;
    }
    let report = &detailed.report;
    write_file(&out.join("report.json"), (report.to_json()? + "\n").as_bytes())?;
    print!("{}", score_table(report));
    Ok(())
}

pub fn spectrum(config: &RunConfig, frames: &Path, out: &Path) -> Result<(), CliError> {
    let table = load(frames)?;
    let raw = channel_series(&table, &config.analysis.signals.steering_angle, Indicator::SteeringStability)?;
    let fsa = filtered_steering_angle(&raw, &config.analysis.high_pass)?;
    let x = stft(&fsa, &config.stft)?;
    if !x.skipped.is_empty() {
        let frames: usize = x.skipped.iter().map(|s| s.len).sum();
        eprintln!(
            "warning: {} valid run(s) totalling {frames} frames are shorter than the {}-frame window and were skipped",
            x.skipped.len(),
            config.stft.window_len
        );
    }
    let sg = spectrogram(&x);
    let [lo, hi] = config.tremor_band;
    let mut episodes = tremor_report(&sg, (lo, hi), config.tremor_threshold)?;
    let t0 = table.start_time;
    for e in &mut episodes {
        e.start_s += t0;
        e.end_s += t0;
    }

    create_dir(out)?;
    let mut csv = String::from("time_s,freq_hz,magnitude\n");
    for (j, col) in sg.magnitudes.iter().enumerate() {
        let t = t0 + sg.time_axis[j];
        for (k, m) in col.iter().enumerate() {
            let _ = writeln!(csv, "{t},{},{m}", sg.freq_axis[k]);
        }
    }
    let csv_path = out.join("spectrogram.csv");
    let mut w = BufWriter::new(std::fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?);
    w.write_all(csv.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&csv_path, e))?;
    write_file(&out.join("spectrogram.svg"), plot::spectrogram_heatmap(&sg).as_bytes())?;
    write_json::<Vec<TremorEpisode>>(&out.join("tremor.json"), &episodes)?;

    println!(
        "{} columns, {} tremor episode(s) in [{lo}, {hi}] Hz above {}",
        sg.n_columns(),
        episodes.len(),
        config.tremor_threshold
    );
    for e in &episodes {
        println!(
            "  {:>9.2} - {:>9.2} s  peak {:.3} Hz  amplitude {:.4}",
            e.start_s, e.end_s, e.peak_freq_hz, e.peak_amplitude
        );
    }
    Ok(())
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn write_log_csv(log: &lkas_core::RawLog, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(log, BufWriter::new(file)).map_err(|e| match e {
        lkas_core::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

pub fn synth(
    setting: Option<&Path>,
    preset: Option<&str>,
    seed: Option<u64>,
    family: Option<Vec<f64>>,
    out: &Path,
) -> Result<(), CliError> {
    let mut base = match (setting, preset) {
        (Some(_), Some(_)) => {
            return Err(CliError::Input("give either a setting file or --preset, not both".into()))
        }
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        (None, Some("bad")) => SyntheticSetting::bad(),
        (None, _) => SyntheticSetting::default(),
    };
    if let Some(seed) = seed {
        base.seed = seed;
    }
    match family {
        None => {
            let log = generate_drive(&base)?;
            write_log_csv(&log, out)?;
            println!("{}: {} records, {:.0} s", out.display(), log.records.len(), base.duration());
        }
        Some(severities) => {
            let drives = generate_setting_family(&base, &severities)?;
            create_dir(out)?;
            for (severity, log) in drives {
                let path = out.join(format!("{}.csv", file_safe(&log.meta.setting_id)));
                write_log_csv(&log, &path)?;
                println!("severity {severity}: {}", path.display());
            }
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    setting_id: String,
    rating: f64,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum IndicatorFit {
    Fit {
        n: usize,
        pearson: Correlation,
        regression: Regression,
    },
    Failed {
        n: usize,
        error: String,
    },
}

#[derive(Debug, Serialize)]
struct CorrelationReport {
    schema_version: u32,
    settings: Vec<String>,
    indicators: BTreeMap<Indicator, IndicatorFit>,
}

fn read_ratings(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<RatingRow>() {
        let row = row.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if !(0.0..=100.0).contains(&row.rating) {
            return Err(CliError::Input(format!(
                "{}: rating {} for `{}` outside [0, 100]",
                path.display(),
                row.rating,
                row.setting_id
            )));
        }
        if out.insert(row.setting_id.clone(), row.rating).is_some() {
            return Err(CliError::Input(format!(
                "{}: duplicate rating for `{}`",
                path.display(),
                row.setting_id
            )));
        }
    }
    Ok(out)
}

fn read_report(path: &Path) -> Result<ScoreReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ScoreReport::from_json(&text).map_err(|e| match e {
        lkas_core::Error::Json(j) => CliError::Input(format!("{}: {j}", path.display())),
        other => other.into(),
    })
}

pub fn correlate(reports: &[std::path::PathBuf], ratings: &Path, out: &Path) -> Result<(), CliError> {
    let ratings = read_ratings(ratings)?;
    let mut matched = Vec::new();
    for path in reports {
        let report = read_report(path)?;
        if let Some(&rating) = ratings.get(&report.candidate_id) {
            matched.push((report, rating));
        }
    }
    if matched.len() < 3 {
        return Err(CliError::Input(format!(
            "need at least 3 reports with a rated candidate, found {}",
            matched.len()
        )));
    }
    let mut indicators = BTreeMap::new();
    for ind in Indicator::ALL {
        let (x, y): (Vec<f64>, Vec<f64>) = matched
            .iter()
            .filter_map(|(r, rating)| r.indicator_scores.get(&ind).map(|s| (*s, *rating)))
            .unzip();
        let fit = pearson(&x, &y).and_then(|p| Ok((p, linear_regression(&x, &y)?)));
        indicators.insert(
            ind,
            match fit {
                Ok((pearson, regression)) => IndicatorFit::Fit {
                    n: x.len(),
                    pearson,
                    regression,
                },
                Err(e) => IndicatorFit::Failed {
                    n: x.len(),
                    error: e.to_string(),
                },
            },
        );
    }
    let report = CorrelationReport {
        schema_version: SCHEMA_VERSION,
        settings: matched.iter().map(|(r, _)| r.candidate_id.clone()).collect(),
        indicators,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(out, &report)?;

    println!("{:<18} {:>4} {:>8} {:>10} {:>10} {:>10}", "indicator", "n", "r", "p", "intercept", "slope");
    for (ind, fit) in &report.indicators {
        match fit {
            IndicatorFit::Fit { n, pearson, regression } => println!(
                "{:<18} {n:>4} {:>8.4} {:>10.4} {:>10.4} {:>10.4}",
                ind.as_str(),
                pearson.r,
                pearson.p_value,
                regression.intercept.estimate,
                regression.slope.estimate
            ),
            IndicatorFit::Failed { n, error } => println!("{:<18} {n:>4}  {error}", ind.as_str()),
        }
    }
    Ok(())
}

fn render_report(report: &ScoreReport) -> String {
    let mut s = score_table(report);
    s.push('\n');
    let _ = writeln!(
        s,
        "{:<18} {:<11} {:>11} {:>11} {:>11} {:>11} {:>10} {:>10}",
        "indicator", "section", "ref mean", "ref sd", "cand mean", "cand sd", "levene W", "p"
    );
    let num = |d: Option<f64>| d.map_or("-".to_string(), |v| format!("{v:.4}"));
    for (ind, sections) in &report.stats {
        for (kind, cell) in sections {
            let lev = report.levene.get(ind).and_then(|m| m.get(kind));
            let _ = writeln!(
                s,
                "{:<18} {:<11} {:>11} {:>11} {:>11} {:>11} {:>10} {:>10}",
                ind.as_str(),
                kind.as_str(),
                num(cell.reference.map(|d| d.mean)),
                num(cell.reference.map(|d| d.sd)),
                num(cell.candidate.map(|d| d.mean)),
                num(cell.candidate.map(|d| d.sd)),
                lev.map_or("-".to_string(), |l| format!("{:.3}", l.w)),
                lev.map_or("-".to_string(), |l| format!("{:.2e}", l.p_value)),
            );
        }
    }
    s
}

pub fn report(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let report = read_report(path)?;
    let text = render_report(&report);
    print!("{text}");
    if let Some(out) = out {
        write_file(out, text.as_bytes())?;
    }
    Ok(())
}
