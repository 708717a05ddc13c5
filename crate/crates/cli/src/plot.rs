//! Minimal SVG output. Coordinates are printed with fixed precision so the
//! same input always yields the same bytes.

use std::fmt::Write;

use lkas_core::scoring::CellDetail;
use lkas_core::spectral::Spectrogram;

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;
/// Spectrogram columns beyond this are max-pooled together.
const MAX_COLUMNS: usize = 600;

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{title}</text>"#, W / 2.0);
}

fn axes(out: &mut String, x_label: &str, x_range: (f64, f64), y_label: &str, y_range: (f64, f64)) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.1},{y1:.1} V{y0:.1} H{x1:.1}" fill="none" stroke="black"/>"#
    );
    for (x, v) in [(x0, x_range.0), (x1, x_range.1)] {
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 14.0, tick(v));
    }
    for (y, v) in [(y0, y_range.0), (y1, y_range.1)] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 4.0, y + 4.0, tick(v));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#, (x0 + x1) / 2.0, H - 8.0);
    let _ = writeln!(
        out,
        r#"<text transform="translate(14,{:.1}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        (y0 + y1) / 2.0
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Reference and candidate PDFs over their shared bins, with the
/// overlapping mass (the similarity) shaded.
pub fn pdf_overlay(cell: &CellDetail) -> String {
    let edges = &cell.reference.edges;
    let (lo, hi) = (edges[0], edges[edges.len() - 1]);
    let p_max = cell
        .reference
        .probs
        .iter()
        .chain(&cell.candidate.probs)
        .fold(0.0f64, |a, &b| a.max(b))
        .max(f64::MIN_POSITIVE);
    let sx = |x: f64| LEFT + (x - lo) / (hi - lo) * (W - LEFT - RIGHT);
    let sy = |p: f64| H - BOTTOM - p / p_max * (H - TOP - BOTTOM);

    let mut out = String::new();
    let title = format!(
        "{} / {}: s = {:.2}",
        cell.indicator.variable(),
        cell.section.as_str(),
        cell.similarity
    );
    header(&mut out, &title);
    let bars = |out: &mut String, probs: &[f64], style: &str| {
        let mut d = String::new();
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                let (x0, x1) = (sx(edges[i]), sx(edges[i + 1]));
                let _ = write!(d, "M{x0:.2},{:.2}H{x1:.2}V{:.2}H{x0:.2}Z", sy(p), sy(0.0));
            }
        }
        let _ = writeln!(out, r#"<path d="{d}" {style}/>"#);
    };
    let overlap: Vec<f64> = cell
        .reference
        .probs
        .iter()
        .zip(&cell.candidate.probs)
        .map(|(a, b)| a.min(*b))
        .collect();
    bars(&mut out, &cell.reference.probs, r##"fill="#c8c8c8""##);
    bars(&mut out, &overlap, r##"fill="#707070""##);
    bars(&mut out, &cell.candidate.probs, r#"fill="none" stroke="black" stroke-width="0.8""#);
    axes(
        &mut out,
        &format!("{} ({})", cell.indicator.variable(), cell.indicator.unit()),
        (lo, hi),
        "probability",
        (0.0, p_max),
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" text-anchor="end">grey: reference, outline: candidate, dark: overlap</text>"##,
        W - RIGHT,
        TOP + 10.0
    );
    out.push_str("</svg>\n");
    out
}

/// Amplitude heatmap, time left to right and frequency bottom to top.
pub fn spectrogram_heatmap(sg: &Spectrogram) -> String {
    let mut out = String::new();
    header(&mut out, "Filtered steering angle spectrogram");
    let n_cols = sg.n_columns();
    let n_bins = sg.freq_axis.len();
    if n_cols == 0 || n_bins == 0 {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">no complete window</text>"#,
            W / 2.0,
            H / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }
    let group = n_cols.div_ceil(MAX_COLUMNS);
    let pooled: Vec<Vec<f64>> = (0..n_cols)
        .step_by(group)
        .map(|j0| {
            (0..n_bins)
                .map(|k| {
                    (j0..(j0 + group).min(n_cols))
                        .map(|j| sg.amplitude(j, k))
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();
    let a_max = pooled.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let (plot_w, plot_h) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let cw = plot_w / pooled.len() as f64;
    let bh = plot_h / n_bins as f64;
    for (c, col) in pooled.iter().enumerate() {
        for (k, &a) in col.iter().enumerate() {
            let level = if a_max > 0.0 { a / a_max } else { 0.0 };
            let g = (255.0 * (1.0 - level)).round() as u8;
            if g == 255 {
                continue;
            }
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#{g:02x}{g:02x}{g:02x}"/>"##,
                LEFT + c as f64 * cw,
                H - BOTTOM - (k + 1) as f64 * bh,
                cw + 0.01,
                bh + 0.01
            );
        }
    }
    let t_end = sg.spans.last().map_or(0.0, |s| s.1);
    axes(
        &mut out,
        "time (s)",
        (sg.spans[0].0, t_end),
        "frequency (Hz)",
        (0.0, sg.freq_axis[n_bins - 1]),
    );
    out.push_str("</svg>\n");
    out
}
