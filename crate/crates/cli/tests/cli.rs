use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lkas_core::synthgen::{generate_drive, write_csv, RouteLeg, SyntheticSetting, TremorSpec};
use lkas_core::{Indicator, ScoreReport, SectionKind, SCHEMA_VERSION};
use tempfile::TempDir;

fn lkas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lkas"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn short_setting(seconds: f64) -> SyntheticSetting {
    SyntheticSetting {
        route: vec![
            RouteLeg::new(SectionKind::Straight, seconds / 2.0),
            RouteLeg::new(SectionKind::HighCurve, seconds / 2.0),
        ],
        ..SyntheticSetting::default()
    }
}

fn write_drive(dir: &Path, name: &str, setting: &SyntheticSetting) -> PathBuf {
    let path = dir.join(format!("{name}.csv"));
    write_csv(&generate_drive(setting).unwrap(), std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn ingest(dir: &Path, csv: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let o = lkas(&["ingest", p(csv), "--out", p(&out), "--setting-id", name]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("frames.bin")
}

#[test]
fn synth_route_durations_survive_ingest() {
    let dir = TempDir::new().unwrap();
    let setting = dir.path().join("route.json");
    std::fs::write(
        &setting,
        r#"{"route": [{"kind": "straight", "duration_s": 300}, {"kind": "high_curve", "duration_s": 60}]}"#,
    )
    .unwrap();
    let csv = dir.path().join("route.csv");
    assert!(lkas(&["synth", p(&setting), "--out", p(&csv)]).status.success());
    let out = dir.path().join("ingested");
    let o = lkas(&["ingest", p(&csv), "--out", p(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("05:00"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let secs = |k: &str| summary["sections"][k]["seconds"].as_f64().unwrap();
    assert!((secs("straight") - 300.0).abs() <= 0.01 + 1e-9);
    assert!((secs("high_curve") - 60.0).abs() <= 0.01 + 1e-9);
    assert_eq!(secs("low_curve"), 0.0);
    assert_eq!(summary["setting_id"], "route");
}

#[test]
fn empty_csv_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("empty.csv");
    std::fs::write(&csv, "").unwrap();
    assert_eq!(lkas(&["ingest", p(&csv), "--out", p(dir.path())]).status.code(), Some(2));
    std::fs::write(&csv, "time,a\n0.0,abc\n").unwrap();
    let o = lkas(&["ingest", p(&csv), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let csv = write_drive(dir.path(), "d", &short_setting(10.0));
    // A path below a regular file can never be created, even as root.
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = lkas(&["ingest", p(&csv), "--out", p(&blocker.join("out"))]);
    assert_eq!(o.status.code(), Some(3));
    let missing = dir.path().join("nope.csv");
    assert_eq!(lkas(&["ingest", p(&missing)]).status.code(), Some(3));
}

#[test]
fn self_score_is_100_and_severe_candidate_is_lower() {
    let dir = TempDir::new().unwrap();
    let base = short_setting(120.0);
    let fam = dir.path().join("fam");
    let base_json = dir.path().join("base.json");
    std::fs::write(&base_json, serde_json::to_string(&base).unwrap()).unwrap();
    assert!(lkas(&["synth", p(&base_json), "--family", "1,4", "--out", p(&fam)]).status.success());
    let r = ingest(dir.path(), &fam.join("synthetic.csv"), "s1");
    let c = ingest(dir.path(), &fam.join("synthetic_4.csv"), "s4");

    let out = dir.path().join("self");
    let o = lkas(&["score", p(&r), p(&r), "--out", p(&out)]);
    assert!(o.status.success());
    let report = ScoreReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.indicator_scores.len(), 4);
    assert!(report.indicator_scores.values().all(|&v| v == 100.0));
    assert_eq!(stdout(&o).matches(" 100.00").count(), 4 * 3);

    let out = dir.path().join("severe");
    assert!(lkas(&["score", p(&r), p(&c), "--out", p(&out)]).status.success());
    let report = ScoreReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.indicator_scores.len(), 4);
    assert!(report.indicator_scores.values().all(|&v| v < 100.0), "{:?}", report.indicator_scores);
    let cell = std::fs::read_to_string(out.join("cells/lp_straight.csv")).unwrap();
    assert!(cell.starts_with("edge_lo,edge_hi,prob_ref,prob_cand\n"));
    assert!(out.join("cells/lp_straight.svg").exists());
}

#[test]
fn scoring_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = ingest(dir.path(), &write_drive(dir.path(), "a", &short_setting(40.0)), "a");
    let b = ingest(
        dir.path(),
        &write_drive(dir.path(), "b", &SyntheticSetting { seed: 3, ..short_setting(40.0) }),
        "b",
    );
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    assert!(lkas(&["score", p(&a), p(&b), "--out", p(&o1), "--jobs", "1"]).status.success());
    assert!(lkas(&["score", p(&a), p(&b), "--out", p(&o2), "--jobs", "2"]).status.success());
    for f in ["report.json", "cells/it_high_curve.svg", "cells/fsa_straight.csv"] {
        assert_eq!(std::fs::read(o1.join(f)).unwrap(), std::fs::read(o2.join(f)).unwrap(), "{f}");
    }
}

/// Rewrites a CSV without one column.
fn drop_column(src: &Path, dst: &Path, column: &str) {
    let text = std::fs::read_to_string(src).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    let keep = |line: &str| {
        line.split(',')
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, c)| c)
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = keep(&header.join(",")) + "\n";
    for line in lines {
        let row = keep(line);
        // Rows that only carried the dropped signal are now empty.
        if row.split(',').skip(1).any(|c| !c.is_empty()) {
            out.push_str(&row);
            out.push('\n');
        }
    }
    std::fs::write(dst, out).unwrap();
}

#[test]
fn missing_driver_torque_is_flagged_omitted() {
    let dir = TempDir::new().unwrap();
    let full = write_drive(dir.path(), "full", &short_setting(30.0));
    let partial = dir.path().join("partial.csv");
    drop_column(&full, &partial, "driver_torque");
    let r = ingest(dir.path(), &full, "full");
    let c = ingest(dir.path(), &partial, "partial");
    let out = dir.path().join("out");
    let o = lkas(&["score", p(&r), p(&c), "--out", p(&out)]);
    assert!(o.status.success());
    let line = stdout(&o)
        .lines()
        .find(|l| l.starts_with("non_interference"))
        .unwrap()
        .to_string();
    assert!(line.contains("omitted"), "{line}");
    let report = ScoreReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.omitted.contains_key(&Indicator::NonInterference));
    assert_eq!(report.indicator_scores.len(), 3);
}

#[test]
fn schema_version_mismatch_exits_4() {
    let dir = TempDir::new().unwrap();
    let frames = ingest(dir.path(), &write_drive(dir.path(), "d", &short_setting(10.0)), "d");
    let mut bytes = std::fs::read(&frames).unwrap();
    bytes[8..12].copy_from_slice(&(SCHEMA_VERSION + 1).to_le_bytes());
    let old = dir.path().join("old.bin");
    std::fs::write(&old, bytes).unwrap();
    assert_eq!(lkas(&["score", p(&frames), p(&old), "--out", p(dir.path())]).status.code(), Some(4));
    assert_eq!(lkas(&["spectrum", p(&old), "--out", p(dir.path())]).status.code(), Some(4));

    let mut report: serde_json::Value = serde_json::from_str(&sample_report("x", 50.0)).unwrap();
    report["schema_version"] = serde_json::json!(SCHEMA_VERSION + 1);
    let path = dir.path().join("r.json");
    std::fs::write(&path, report.to_string()).unwrap();
    assert_eq!(lkas(&["report", p(&path)]).status.code(), Some(4));
}

#[test]
fn spectrum_finds_injected_tremor() {
    let dir = TempDir::new().unwrap();
    let setting = SyntheticSetting {
        tremor: Some(TremorSpec {
            freq_hz: 1.5,
            amplitude_deg: 0.3,
            episodes: vec![[20.0, 30.0]],
        }),
        ..short_setting(60.0)
    };
    let frames = ingest(dir.path(), &write_drive(dir.path(), "t", &setting), "t");
    let out = dir.path().join("spec");
    let o = lkas(&["spectrum", p(&frames), "--out", p(&out), "--tremor-band", "1,5", "--tremor-threshold", "0.05"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let episodes: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("tremor.json")).unwrap()).unwrap();
    assert_eq!(episodes.len(), 1);
    let f = episodes[0]["peak_freq_hz"].as_f64().unwrap();
    assert!((f - 1.5).abs() <= 0.4, "{f}");
    let start = episodes[0]["start_s"].as_f64().unwrap();
    assert!(start > 15.0 && start < 25.0, "{start}");
    let csv = std::fs::read_to_string(out.join("spectrogram.csv")).unwrap();
    assert!(csv.starts_with("time_s,freq_hz,magnitude\n"));
    assert!(std::fs::read_to_string(out.join("spectrogram.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn spectrum_zero_signal_short_log_and_missing_channel() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("time,steering_angle,curvature_radius,lkas_status,turn_signal\n");
    for k in 0..1000 {
        csv.push_str(&format!("{},0,9000,1,0\n", k as f64 / 100.0));
    }
    let path = dir.path().join("zero.csv");
    std::fs::write(&path, &csv).unwrap();
    let frames = ingest(dir.path(), &path, "zero");
    let out = dir.path().join("spec");
    assert!(lkas(&["spectrum", p(&frames), "--out", p(&out)]).status.success());
    assert_eq!(std::fs::read_to_string(out.join("tremor.json")).unwrap().trim(), "[]");

    let short: String = csv.lines().take(101).map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, short).unwrap();
    let frames = ingest(dir.path(), &path, "short");
    let out = dir.path().join("short_spec");
    let o = lkas(&["spectrum", p(&frames), "--out", p(&out)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert_eq!(std::fs::read_to_string(out.join("spectrogram.csv")).unwrap(), "time_s,freq_hz,magnitude\n");

    let no_steer: String = csv.replace("steering_angle", "other_signal");
    std::fs::write(&path, no_steer).unwrap();
    let frames = ingest(dir.path(), &path, "nosteer");
    assert_eq!(lkas(&["spectrum", p(&frames), "--out", p(&out)]).status.code(), Some(2));
}

fn sample_report(candidate: &str, score: f64) -> String {
    let mut scores = BTreeMap::new();
    for (i, ind) in Indicator::ALL.into_iter().enumerate() {
        scores.insert(ind, score - i as f64 * (score / 10.0));
    }
    ScoreReport {
        schema_version: SCHEMA_VERSION,
        reference_id: "ref".into(),
        candidate_id: candidate.into(),
        per_section: BTreeMap::new(),
        weights: BTreeMap::new(),
        indicator_scores: scores,
        stats: BTreeMap::new(),
        levene: BTreeMap::new(),
        omitted: BTreeMap::new(),
    }
    .to_json()
    .unwrap()
}

fn correlate_fixture(dir: &Path, rating: impl Fn(f64) -> f64) -> serde_json::Value {
    let scores = [30.0, 55.0, 70.0, 90.0];
    let mut args = vec!["correlate".to_string()];
    let mut ratings = String::from("setting_id,rating\n");
    for (i, s) in scores.iter().enumerate() {
        let path = dir.join(format!("r{i}.json"));
        std::fs::write(&path, sample_report(&format!("c{i}"), *s)).unwrap();
        args.push(p(&path).to_string());
        ratings.push_str(&format!("c{i},{}\n", rating(*s)));
    }
    let ratings_path = dir.join("ratings.csv");
    std::fs::write(&ratings_path, ratings).unwrap();
    let out = dir.join("correlation.json");
    args.extend(["--ratings".into(), p(&ratings_path).into(), "--out".into(), p(&out).into()]);
    let o = lkas(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn correlate_exact_fits() {
    let dir = TempDir::new().unwrap();
    let v = correlate_fixture(dir.path(), |s| s);
    let lk = &v["indicators"]["lane_keeping"];
    assert_eq!(lk["pearson"]["r"].as_f64().unwrap(), 1.0);
    assert!((lk["regression"]["slope"]["estimate"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(lk["regression"]["intercept"]["estimate"].as_f64().unwrap().abs() < 1e-12);

    let v = correlate_fixture(dir.path(), |s| 0.5 * s + 10.0);
    let lk = &v["indicators"]["lane_keeping"];
    assert!((lk["pearson"]["r"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((lk["regression"]["slope"]["estimate"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((lk["regression"]["intercept"]["estimate"].as_f64().unwrap() - 10.0).abs() < 1e-10);
}

#[test]
fn correlate_needs_three_rated_settings() {
    let dir = TempDir::new().unwrap();
    let r = dir.path().join("r.json");
    std::fs::write(&r, sample_report("a", 40.0)).unwrap();
    let ratings = dir.path().join("ratings.csv");
    std::fs::write(&ratings, "setting_id,rating\na,50\nb,60\n").unwrap();
    let o = lkas(&["correlate", p(&r), p(&r), "--ratings", p(&ratings), "--out", p(&dir.path().join("c.json"))]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&ratings, "setting_id,rating\na,150\n").unwrap();
    let o = lkas(&["correlate", p(&r), "--ratings", p(&ratings)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_renders_table() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("r.json");
    std::fs::write(&path, sample_report("cand", 80.0)).unwrap();
    let out = dir.path().join("r.txt");
    let o = lkas(&["report", p(&path), "--out", p(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("candidate cand"));
    assert!(text.contains("lane_keeping"));
    assert_eq!(std::fs::read_to_string(out).unwrap(), text);
}

#[test]
fn config_file_and_flags() {
    let dir = TempDir::new().unwrap();
    let map = dir.path().join("signals.json");
    std::fs::write(&map, r#"{"curvature_radius": "radius", "turn_signal": null}"#).unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"signal_map_path": "signals.json"}"#).unwrap();
    let csv = dir.path().join("log.csv");
    let mut text = String::from("time,radius,lkas_status\n");
    for k in 0..500 {
        text.push_str(&format!("{},{},1\n", k as f64 / 100.0, if k < 250 { 6000 } else { 800 }));
    }
    std::fs::write(&csv, text).unwrap();
    let out = dir.path().join("o");
    let o = lkas(&["--config", p(&config), "ingest", p(&csv), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = lkas(&["--config", p(&config), "ingest", p(&csv), "--out", p(&out), "--straight-threshold", "7000"]);
    assert!(o.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sections"]["straight"]["seconds"].as_f64().unwrap(), 0.0);
    let o = lkas(&["ingest", p(&csv), "--out", p(&out), "--high-threshold", "9000"]);
    assert_eq!(o.status.code(), Some(2));
}
