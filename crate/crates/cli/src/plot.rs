//! Minimal SVG line chart for sweep CSV files.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize, PartialEq)]
pub struct SweepRow {
    pub swept_rate: f64,
    pub held_rate: f64,
    pub seeds: usize,
    pub mean_recovery: f64,
    pub std_recovery: f64,
    pub mean_clusters: f64,
    pub mean_triples: f64,
    pub failures: usize,
}

impl SweepRow {
    fn std_error(&self) -> f64 {
        self.std_recovery / (self.seeds.max(1) as f64).sqrt()
    }
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows = reader.deserialize().collect::<Result<Vec<SweepRow>, _>>()?;
    if rows.is_empty() {
        bail!("sweep CSV has no data rows");
    }
    Ok(rows)
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-9 {
        (lo - 0.5 * lo.abs().max(0.01), hi + 0.5 * hi.abs().max(0.01))
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Mean recovery against swept rate with one standard error bars.
pub fn render_svg(rows: &[SweepRow], title: &str, x_label: &str) -> String {
    let xs = rows.iter().map(|r| r.swept_rate);
    let (x0, x1) = span(
        xs.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
    );
    let lo = rows
        .iter()
        .map(|r| r.mean_recovery - r.std_error())
        .fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.mean_recovery + r.std_error())
        .fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = span(lo, hi);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (ax0, ax1, ay0, ay1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        s,
        r#"<path d="M{ax0},{ay0} L{ax0},{ay1} L{ax1},{ay1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (x, y) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (tx, ty) = (px(x), py(y));
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.1}" y1="{ay1}" x2="{tx:.1}" y2="{}" stroke="black"/>"#,
            ay1 + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{tx:.1}" y="{}" text-anchor="middle">{:.1}%</text>"#,
            ay1 + 18.0,
            x * 100.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ty:.1}" x2="{ax0}" y2="{ty:.1}" stroke="black"/>"#,
            ax0 - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"#,
            ax0 - 8.0,
            ty + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (ax0 + ax1) / 2.0,
        H - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">recovery rate</text>"#,
        (ay0 + ay1) / 2.0
    );
    let points: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.1},{:.1}", px(r.swept_rate), py(r.mean_recovery)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        points.join(" ")
    );
    for r in rows {
        let (x, se) = (px(r.swept_rate), r.std_error());
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#1f77b4"/>"##,
            py(r.mean_recovery - se),
            py(r.mean_recovery + se)
        );
        let _ = writeln!(
            s,
            r##"<circle cx="{x:.1}" cy="{:.1}" r="3.5" fill="#1f77b4"/>"##,
            py(r.mean_recovery)
        );
    }
    s.push_str("</svg>\n");
    s
}
