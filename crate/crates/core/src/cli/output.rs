//! CSV, manifest and SVG emission.

use std::fmt::Write as _;

use crate::harness::{Axis, ExperimentResult, PowerRow};
use crate::verify::VerifyRow;

pub const EXPERIMENT_HEADER: &str =
    "statistic,d,n,bandwidth_rule,budget,calibration,alpha,reps,power,stderr,master_seed";

pub const VERIFY_HEADER: &str = "suite,quantity,reference,estimate,stderr,n,discrepancy,threshold,pass";

/// Quote a CSV cell if needed.
fn cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn power_line(r: &PowerRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        cell(&r.statistic),
        r.d,
        r.n,
        cell(&r.bandwidth_rule),
        r.budget,
        r.calibration,
        r.alpha,
        r.reps,
        r.power,
        r.stderr,
        r.master_seed
    )
}

/// Rows grouped by statistic, grid order within each.
pub fn experiment_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(EXPERIMENT_HEADER);
    out.push('\n');
    for curve in &result.curves {
        for row in &curve.rows {
            out.push_str(&power_line(row));
            out.push('\n');
        }
    }
    out
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "na".into()
    } else {
        v.to_string()
    }
}

pub fn verify_csv(rows: &[VerifyRow]) -> String {
    let mut out = String::from(VERIFY_HEADER);
    out.push('\n');
    for r in rows {
        let pass = match r.pass {
            Some(true) => "true",
            Some(false) => "false",
            None => "report",
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.suite,
            cell(&r.quantity),
            num(r.reference),
            num(r.estimate),
            num(r.stderr),
            r.n,
            num(r.discrepancy),
            num(r.threshold),
            pass
        )
        .expect("write to String");
    }
    out
}

/// `key = value` lines in insertion order.
#[derive(Debug, Default, Clone)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Power against the grid axis, one polyline per statistic.
pub fn experiment_svg(result: &ExperimentResult) -> String {
    let (w, h) = (820.0, 460.0);
    let (left, right, top, bottom) = (70.0, 220.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let axis = result.config.preset.axis();
    let xs: Vec<f64> = result.curves.first().map_or_else(Vec::new, |c| {
        c.rows
            .iter()
            .map(|r| match axis {
                Axis::Dimension => r.d as f64,
                Axis::SampleSize => r.n as f64,
            })
            .collect()
    });
    let xmin = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if xmax > xmin { xmax - xmin } else { 1.0 };
    let px = |x: f64| left + (x - xmin) / span * pw;
    let py = |y: f64| top + (1.0 - y) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(result.config.preset.name())
    );
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"#,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    for k in 0..=5 {
        let y = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{py}" x2="{left}" y2="{py}" stroke="black"/><line x1="{left}" y1="{py}" x2="{}" y2="{py}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{y:.1}</text>"##,
            left - 5.0,
            left + pw,
            left - 8.0,
            py(y) + 4.0,
            py = py(y)
        );
    }
    for &x in &xs {
        let _ = writeln!(
            s,
            r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{x}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 20.0,
            px = px(x)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 15.0,
        axis.label()
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">power</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, curve) in result.curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if i >= PALETTE.len() { r#" stroke-dasharray="4 3""# } else { "" };
        let points: Vec<String> = curve
            .rows
            .iter()
            .zip(&xs)
            .map(|(r, &x)| format!("{:.2},{:.2}", px(x), py(r.power)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 25.0,
            lx + 32.0,
            ly + 4.0,
            escape(&curve.display_name)
        );
    }
    s.push_str("</svg>\n");
    s
}
