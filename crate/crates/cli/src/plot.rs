//! Hand-written SVG figures: the score timeline with detections and the
//! score histogram with fitted densities.
//!
//! Every drawn element sits in a `<g id=...>` layer and carries its data
//! values as `data-*` attributes so the figures can be checked
//! programmatically.

use std::fmt::Write;

use sewerwatch::calibrate::HypothesisModels;
use sewerwatch::sprt::{Decision, DecisionLog};
use sewerwatch::Label;

const WIDTH: f64 = 1000.0;
const MARGIN: f64 = 50.0;

pub const HISTOGRAM_BINS: usize = 40;
pub const DENSITY_GRID: usize = 2000;

/// Inclusive runs of consecutive indices where `pred` holds, as `(start, end)`.
pub fn runs(flags: impl IntoIterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut last = 0;
    for (i, f) in flags.into_iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
        last = i;
    }
    if let Some(s) = start {
        out.push((s, last));
    }
    out
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<title>{title}</title>"#);
    let _ = writeln!(out, r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##);
}

fn fmt_list(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Score trace with the threshold line, ground-truth anomaly spans,
/// per-frame threshold detections and SPRT decision windows.
///
/// Spans are drawn in three lanes below the trace. Frame `t` occupies
/// `[x(t), x(t + 1))` on a linear axis. `log` must not be empty and
/// `truth` must have one label per frame.
pub fn plot_timeline(log: &DecisionLog, truth: &[Label], tau: f64) -> String {
    assert!(!log.frames.is_empty(), "empty decision log");
    assert_eq!(log.frames.len(), truth.len(), "one truth label per frame");
    let t0 = log.frames[0].t as f64;
    let n = log.frames.last().unwrap().t as f64 + 1.0 - t0;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let x = |t: f64| MARGIN + (t - t0) * plot_w / n;

    let trace_top = 40.0;
    let trace_h = 220.0;
    let lane_h = 18.0;
    let lanes_top = trace_top + trace_h + 20.0;
    let height = lanes_top + 3.0 * (lane_h + 8.0) + 30.0;

    let zmax = log
        .frames
        .iter()
        .map(|f| f.z)
        .filter(|z| z.is_finite())
        .fold(tau, f64::max)
        .max(f64::MIN_POSITIVE)
        * 1.05;
    let y = |z: f64| trace_top + trace_h * (1.0 - (z / zmax).clamp(0.0, 1.0));

    let mut out = String::new();
    header(&mut out, WIDTH, height, "Anomaly score timeline");
    let _ = writeln!(
        out,
        r##"<g id="axes" stroke="#444444" fill="none"><line x1="{MARGIN}" y1="{}" x2="{}" y2="{}"/><line x1="{MARGIN}" y1="{trace_top}" x2="{MARGIN}" y2="{}"/></g>"##,
        trace_top + trace_h,
        WIDTH - MARGIN,
        trace_top + trace_h,
        trace_top + trace_h
    );
    let _ = writeln!(
        out,
        r#"<g id="labels"><text x="{MARGIN}" y="25">score z (max {zmax:.3})</text><text x="{}" y="{}" text-anchor="end">frame</text></g>"#,
        WIDTH - MARGIN,
        height - 8.0
    );

    let lane = |i: usize| lanes_top + i as f64 * (lane_h + 8.0);
    let span_rect = |out: &mut String, s: u64, e: u64, top: f64, fill: &str, extra: &str| {
        let x0 = x(s as f64);
        let _ = writeln!(
            out,
            r#"<rect data-start="{s}" data-end="{e}"{extra} x="{x0}" y="{top}" width="{}" height="{lane_h}" fill="{fill}"/>"#,
            x(e as f64 + 1.0) - x0
        );
    };

    let frame_t = |i: usize| log.frames[i].t;
    let _ = writeln!(out, r#"<g id="truth-spans">"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">truth</text>"#, MARGIN - 4.0, lane(0) + 13.0);
    for (s, e) in runs(truth.iter().map(|l| l.is_anomaly())) {
        span_rect(&mut out, frame_t(s), frame_t(e), lane(0), "#1f4fd8", "");
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g id="threshold-detections" data-tau="{tau}">"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">z ≥ τ</text>"#, MARGIN - 4.0, lane(1) + 13.0);
    for (s, e) in runs(log.frames.iter().map(|f| f.z >= tau)) {
        span_rect(&mut out, frame_t(s), frame_t(e), lane(1), "#d62728", "");
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g id="sprt-spans">"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">SPRT</text>"#, MARGIN - 4.0, lane(2) + 13.0);
    for ev in &log.events {
        let (verdict, fill) = match ev.verdict {
            Decision::Anomaly => ("anomaly", "#2ca02c"),
            Decision::Normal => ("normal", "#dddddd"),
            Decision::Undecided => continue,
        };
        span_rect(
            &mut out,
            ev.window_start,
            ev.t_decided,
            lane(2),
            fill,
            &format!(r#" data-verdict="{verdict}""#),
        );
    }
    let _ = writeln!(out, "</g>");

    let points: Vec<String> = log
        .frames
        .iter()
        .map(|f| format!("{:.2},{:.2}", x(f.t as f64 + 0.5), y(f.z)))
        .collect();
    let _ = writeln!(
        out,
        r##"<g id="score-trace"><polyline fill="none" stroke="#333333" stroke-width="0.8" points="{}"/></g>"##,
        points.join(" ")
    );
    let _ = writeln!(
        out,
        r##"<g id="tau-line"><line data-tau="{tau}" x1="{MARGIN}" y1="{}" x2="{}" y2="{}" stroke="#d62728" stroke-dasharray="6 4"/><text x="{}" y="{}" fill="#d62728" text-anchor="end">τ = {tau:.3}</text></g>"##,
        y(tau),
        WIDTH - MARGIN,
        y(tau),
        WIDTH - MARGIN,
        y(tau) - 4.0
    );
    out.push_str("</svg>\n");
    out
}

/// Equal-width bins over `[lo, hi]` normalised to unit area.
fn histogram(scores: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &z in scores {
        let i = (((z - lo) / w).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / (scores.len() as f64 * w))
        .collect()
}

/// Grid the fitted densities are sampled on: the score range widened to
/// cover the bulk of both models.
pub fn density_grid(models: &HypothesisModels, lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let h1 = &models.h1;
    let (mut glo, mut ghi) = (lo, hi);
    for (m, v) in h1.means.iter().zip(&h1.variances) {
        glo = glo.min(m - 6.0 * v.sqrt());
        ghi = ghi.max(m + 6.0 * v.sqrt());
    }
    ghi = ghi.max(models.h0.mean() + 10.0 * models.h0.variance().sqrt());
    let step = (ghi - glo) / (points - 1) as f64;
    (0..points).map(|i| glo + i as f64 * step).collect()
}

/// Normalised per-class histograms of calibration scores overlaid with the
/// fitted H0 and H1 densities. Both score sets must be non-empty.
pub fn plot_histogram(h0_scores: &[f64], h1_scores: &[f64], models: &HypothesisModels) -> String {
    assert!(!h0_scores.is_empty() && !h1_scores.is_empty(), "empty score set");
    let all = h0_scores.iter().chain(h1_scores);
    let mut lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let mut hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let bins = HISTOGRAM_BINS;
    let bw = (hi - lo) / bins as f64;
    let d0 = histogram(h0_scores, lo, hi, bins);
    let d1 = histogram(h1_scores, lo, hi, bins);
    let grid = density_grid(models, lo, hi, DENSITY_GRID);
    let p0: Vec<f64> = grid.iter().map(|&z| models.log_pdf_h0(z).exp()).collect();
    let p1: Vec<f64> = grid.iter().map(|&z| models.log_pdf_h1(z).exp()).collect();

    let (xlo, xhi) = (grid[0], grid[grid.len() - 1]);
    let bar_max = d0.iter().chain(&d1).copied().fold(0.0, f64::max);
    let curve_max = p0.iter().chain(&p1).copied().filter(|p| p.is_finite()).fold(0.0, f64::max);
    let ymax = bar_max.max(curve_max.min(3.0 * bar_max)).max(f64::MIN_POSITIVE) * 1.05;

    let height = 400.0;
    let (top, plot_h) = (40.0, height - 90.0);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let x = |z: f64| MARGIN + (z - xlo) / (xhi - xlo) * plot_w;
    let y = |p: f64| top + plot_h * (1.0 - (p / ymax).clamp(0.0, 1.0));

    let mut out = String::new();
    header(&mut out, WIDTH, height, "Calibration score histogram");
    let _ = writeln!(
        out,
        r##"<g id="axes" stroke="#444444" fill="none"><line x1="{MARGIN}" y1="{}" x2="{}" y2="{}"/><line x1="{MARGIN}" y1="{top}" x2="{MARGIN}" y2="{}"/></g>"##,
        top + plot_h,
        WIDTH - MARGIN,
        top + plot_h,
        top + plot_h
    );
    let _ = writeln!(
        out,
        r#"<g id="labels"><text x="{}" y="{}" text-anchor="middle">score z</text><text x="{MARGIN}" y="25">density</text><text x="{MARGIN}" y="{}">{xlo:.3}</text><text x="{}" y="{}" text-anchor="end">{xhi:.3}</text></g>"#,
        WIDTH / 2.0,
        height - 10.0,
        top + plot_h + 16.0,
        WIDTH - MARGIN,
        top + plot_h + 16.0
    );

    for (id, class, dens, fill) in [
        ("histogram-h0", "h0", &d0, "#1f77b4"),
        ("histogram-h1", "h1", &d1, "#d62728"),
    ] {
        let _ = writeln!(out, r#"<g id="{id}" fill="{fill}" fill-opacity="0.4">"#);
        for (i, &d) in dens.iter().enumerate() {
            let (a, b) = (lo + i as f64 * bw, if i + 1 == bins { hi } else { lo + (i + 1) as f64 * bw });
            let _ = writeln!(
                out,
                r#"<rect data-class="{class}" data-lo="{a}" data-hi="{b}" data-density="{d}" x="{}" y="{}" width="{}" height="{}"/>"#,
                x(a),
                y(d),
                x(b) - x(a),
                top + plot_h - y(d)
            );
        }
        let _ = writeln!(out, "</g>");
    }

    for (id, model, p, stroke) in [("density-h0", "h0", &p0, "#1f77b4"), ("density-h1", "h1", &p1, "#d62728")] {
        let points: Vec<String> = grid
            .iter()
            .zip(p.iter())
            .map(|(&z, &v)| format!("{:.2},{:.2}", x(z), y(if v.is_finite() { v } else { ymax })))
            .collect();
        let _ = writeln!(
            out,
            r#"<g id="{id}"><polyline data-model="{model}" data-z="{}" data-p="{}" fill="none" stroke="{stroke}" stroke-width="1.5" points="{}"/></g>"#,
            fmt_list(grid.iter().copied()),
            fmt_list(p.iter().copied()),
            points.join(" ")
        );
    }
    let _ = writeln!(
        out,
        r##"<g id="tau-line"><line data-tau="{0}" x1="{1}" y1="{top}" x2="{1}" y2="{2}" stroke="#444444" stroke-dasharray="6 4"/></g>"##,
        models.tau,
        x(models.tau),
        top + plot_h
    );
    let _ = writeln!(
        out,
        r##"<g id="legend"><text x="{0}" y="25" fill="#1f77b4" text-anchor="end">normal p(z|H0)</text><text x="{0}" y="40" fill="#d62728" text-anchor="end">anomalous p(z|H1)</text></g>"##,
        WIDTH - MARGIN
    );
    out.push_str("</svg>\n");
    out
}
