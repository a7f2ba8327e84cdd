//! Metrics CSV → summary table and SVG line plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::Serialize;

use crate::error::HarnessError;
use crate::fed::{rounds_to_fraction, Metrics};
use crate::harness::{RoundRow, METRICS_HEADER};

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<RoundRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(HarnessError::InvalidSpec(format!(
            "metrics header must be {}",
            METRICS_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |field: &str| HarnessError::InvalidSpec(format!("row {}: bad {field}", i + 2));
        let num = |k: usize, name: &str| rec.get(k).unwrap_or("").parse::<f64>().map_err(|_| bad(name));
        let losses = match rec.get(2).unwrap_or("") {
            "" => Vec::new(),
            s => s
                .split(';')
                .map(|x| x.parse::<f64>().map_err(|_| bad("client_losses")))
                .collect::<Result<_, _>>()?,
        };
        rows.push(RoundRow {
            round: rec.get(0).unwrap_or("").parse().map_err(|_| bad("round"))?,
            scope: rec.get(1).unwrap_or("").to_string(),
            client_losses: losses,
            metrics: Metrics {
                accuracy: num(3, "accuracy")?,
                precision: num(4, "precision")?,
                recall: num(5, "recall")?,
                f1: num(6, "f1")?,
                mse_loss: num(7, "mse_loss")?,
            },
            bytes_shared: rec.get(8).unwrap_or("").parse().map_err(|_| bad("bytes_shared"))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScopeSummary {
    pub scope: String,
    pub rounds: usize,
    pub last: Metrics,
    pub best_f1: f64,
    pub rounds_to_90: Option<usize>,
    pub bytes_shared: u64,
}

fn by_scope(rows: &[RoundRow]) -> BTreeMap<&str, Vec<&RoundRow>> {
    let mut m: BTreeMap<&str, Vec<&RoundRow>> = BTreeMap::new();
    for r in rows {
        m.entry(r.scope.as_str()).or_default().push(r);
    }
    for v in m.values_mut() {
        v.sort_by_key(|r| r.round);
    }
    m
}

pub fn summarize(rows: &[RoundRow]) -> Vec<ScopeSummary> {
    by_scope(rows)
        .into_iter()
        .map(|(scope, rs)| {
            let f1: Vec<f64> = rs.iter().map(|r| r.metrics.f1).collect();
            let last = rs.last().expect("non-empty group");
            ScopeSummary {
                scope: scope.to_string(),
                rounds: rs.len(),
                last: last.metrics,
                best_f1: f1.iter().copied().fold(0.0, f64::max),
                rounds_to_90: rounds_to_fraction(&f1, 0.9),
                bytes_shared: last.bytes_shared,
            }
        })
        .collect()
}

pub fn render_table(summaries: &[ScopeSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>6} {:>8} {:>9} {:>8} {:>8} {:>8} {:>10} {:>12}",
        "scope", "rounds", "accuracy", "precision", "recall", "f1", "mse", "rounds@90%", "bytes_shared"
    );
    for s in summaries {
        let r90 = s.rounds_to_90.map_or("-".to_string(), |r| r.to_string());
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>8.4} {:>9.4} {:>8.4} {:>8.4} {:>8.4} {:>10} {:>12}",
            s.scope,
            s.rounds,
            s.last.accuracy,
            s.last.precision,
            s.last.recall,
            s.last.f1,
            s.last.mse_loss,
            r90,
            s.bytes_shared
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMetric {
    F1,
    Accuracy,
    Loss,
}

impl PlotMetric {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f1" => Some(PlotMetric::F1),
            "accuracy" => Some(PlotMetric::Accuracy),
            "loss" | "mse_loss" => Some(PlotMetric::Loss),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            PlotMetric::F1 => "F1",
            PlotMetric::Accuracy => "accuracy",
            PlotMetric::Loss => "MSE loss",
        }
    }

    fn get(self, m: &Metrics) -> f64 {
        match self {
            PlotMetric::F1 => m.f1,
            PlotMetric::Accuracy => m.accuracy,
            PlotMetric::Loss => m.mse_loss,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Per-round curves, one polyline per scope.
pub fn render_svg(rows: &[RoundRow], metric: PlotMetric) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let groups = by_scope(rows);
    let max_round = rows.iter().map(|r| r.round).max().unwrap_or(1).max(2) as f64;
    let values: Vec<f64> = rows.iter().map(|r| metric.get(&r.metrics)).collect();
    let (mut lo, mut hi) = match metric {
        PlotMetric::Loss => (0.0, values.iter().copied().fold(0.0, f64::max)),
        _ => (0.0, 1.0),
    };
    if hi <= lo {
        lo = 0.0;
        hi = 1.0;
    }
    let x = |round: usize| pad + (round as f64 - 1.0) / (max_round - 1.0) * (w - 2.0 * pad);
    let y = |v: f64| h - pad - (v - lo) / (hi - lo) * (h - 2.0 * pad);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            pad - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">round</text><text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 12.0,
        w / 2.0,
        pad / 2.0,
        metric.name()
    );
    let _ = writeln!(
        svg,
        r#"<text x="{pad}" y="{}" text-anchor="start">1</text><text x="{}" y="{}" text-anchor="end">{}</text>"#,
        h - pad + 16.0,
        w - pad,
        h - pad + 16.0,
        max_round as usize
    );
    for (k, (scope, rs)) in groups.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points = rs
            .iter()
            .map(|r| format!("{:.1},{:.1}", x(r.round), y(metric.get(&r.metrics))))
            .collect::<Vec<_>>()
            .join(" ");
        let width = if *scope == "all" { 2.5 } else { 1.2 };
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{points}"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{scope}</text>"#,
            w - pad - 90.0,
            pad + 14.0 * k as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
