//! File writers: JSON, CSV traces and regret-curve SVGs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use risklab::learner::RegretTrace;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct TraceRow {
    k: u64,
    phi_true: f64,
    phi_opt: f64,
    regret_k: f64,
    regret_cum: f64,
    first_action: usize,
    modal_return: f64,
}

/// One row per episode; objective columns are multiplied by `scale`.
pub fn write_trace_csv(path: &Path, trace: &RegretTrace, scale: f64) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in &trace.records {
        w.serialize(TraceRow {
            k: r.k,
            phi_true: r.phi_true * scale,
            phi_opt: r.phi_opt * scale,
            regret_k: r.regret_k * scale,
            regret_cum: r.regret_cum * scale,
            first_action: r.first_action,
            modal_return: r.modal_return * scale,
        })
        .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// A family of curves sharing one x axis: mean and standard deviation
/// across seeds.
pub struct Band {
    pub label: String,
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

impl Band {
    /// Pointwise mean and (population) standard deviation of `curves`.
    pub fn from_curves(label: String, curves: &[Vec<f64>]) -> Self {
        let n = curves.iter().map(Vec::len).min().unwrap_or(0);
        let count = curves.len().max(1) as f64;
        let mut mean = vec![0.0; n];
        let mut stdev = vec![0.0; n];
        for i in 0..n {
            let m = curves.iter().map(|c| c[i]).sum::<f64>() / count;
            let v = curves.iter().map(|c| (c[i] - m).powi(2)).sum::<f64>() / count;
            mean[i] = m;
            stdev[i] = v.sqrt();
        }
        Band { label, mean, stdev }
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Line chart of `bands` against the episode index, each with a shaded
/// one-standard-deviation band.
pub fn regret_svg(title: &str, bands: &[Band]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let n = bands.iter().map(|b| b.mean.len()).max().unwrap_or(0).max(2);
    let y_max = bands
        .iter()
        .flat_map(|b| b.mean.iter().zip(&b.stdev).map(|(m, s)| m + s))
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.05;
    let x = |i: usize| left + pw * i as f64 / (n - 1) as f64;
    let y = |v: f64| top + ph * (1.0 - v.clamp(0.0, y_max) / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{:.1}" y1="{yy:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            left + pw,
            left - 6.0,
            y(v) + 4.0,
            yy = y(v)
        );
        let k = (n - 1) * i / 4 + 1;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#,
            x(k - 1),
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">episode</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">cumulative regret</text>"#,
        top + ph / 2.0
    );
    for (j, b) in bands.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        let mut upper = String::new();
        let mut lower = Vec::new();
        let mut line = String::new();
        for (i, (m, sd)) in b.mean.iter().zip(&b.stdev).enumerate() {
            let _ = write!(upper, "{:.1},{:.1} ", x(i), y(m + sd));
            lower.push(format!("{:.1},{:.1}", x(i), y(m - sd)));
            let _ = write!(line, "{:.1},{:.1} ", x(i), y(*m));
        }
        lower.reverse();
        let _ = writeln!(
            s,
            r#"<polygon points="{}{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            upper,
            lower.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            line.trim_end()
        );
        let ly = top + 16.0 + 20.0 * j as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + pw + 12.0,
            left + pw + 36.0,
            left + pw + 42.0,
            ly + 4.0,
            escape(&b.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
