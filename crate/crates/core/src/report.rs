//! Figure emitters: self-contained SVG plus a CSV with the plotted series.
//!
//! Numbers printed inside SVG text use 4 significant figures; the CSV
//! sidecar keeps full precision (shortest round-trip formatting).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{CalibrationSummary, ConfidenceInterval, RocCurve, Table2x2, TableStats};
use crate::probes::WeakRobustResult;
use crate::utility::MaxEuPoint;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("{kind}: {reason}")]
    ShapeMismatch { kind: &'static str, reason: String },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    RocComparison,
    MaxEuVsPrevalence,
    StratifiedForest,
    Calibration,
    WeakRobustCurve,
    TwoByTwo,
}

impl FigureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FigureKind::RocComparison => "roc_comparison",
            FigureKind::MaxEuVsPrevalence => "max_eu_vs_prevalence",
            FigureKind::StratifiedForest => "stratified_forest",
            FigureKind::Calibration => "calibration",
            FigureKind::WeakRobustCurve => "weak_robust_curve",
            FigureKind::TwoByTwo => "two_by_two",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocSeries {
    pub label: String,
    pub curve: RocCurve,
    pub auc: f64,
    pub ci: Option<ConfidenceInterval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EuSeries {
    pub label: String,
    pub points: Vec<MaxEuPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub label: String,
    pub n_pos: usize,
    pub n_neg: usize,
    pub auc: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FigureData {
    Roc(Vec<RocSeries>),
    MaxEu(Vec<EuSeries>),
    Forest { rows: Vec<ForestRow>, reference: f64 },
    Calibration(CalibrationSummary),
    WeakRobust(WeakRobustResult),
    TwoByTwo { predictor: String, table: Table2x2, stats: TableStats },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub kind: FigureKind,
    pub svg: String,
    pub csv: String,
}

/// Default dashed reference line of the forest plot.
pub const FOREST_REFERENCE: f64 = 0.62;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Formats `x` with 4 significant figures.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Pixel coordinate as written into SVG geometry.
pub fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Data-to-pixel mapping of a plot area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl Frame {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Frame {
            x_range,
            y_range,
            left: 70.0,
            right: 470.0,
            top: 40.0,
            bottom: 420.0,
        }
    }

    pub fn x(&self, v: f64) -> f64 {
        let (a, b) = self.x_range;
        self.left + (v - a) / (b - a) * (self.right - self.left)
    }

    pub fn y(&self, v: f64) -> f64 {
        let (a, b) = self.y_range;
        self.bottom - (v - a) / (b - a) * (self.bottom - self.top)
    }

    /// `points` attribute of a polyline through `pts`.
    pub fn polyline_points(&self, pts: &[(f64, f64)]) -> String {
        pts.iter()
            .map(|&(x, y)| format!("{},{}", fmt_px(self.x(x)), fmt_px(self.y(y))))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        Self::sized(title, WIDTH, HEIGHT)
    }

    fn sized(title: &str, width: f64, height: f64) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = width,
            h = height
        );
        let _ = writeln!(body, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        let _ = writeln!(body, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, esc(title));
        Svg { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dashed: bool) {
        let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}"{dash}/>"#,
            fmt_px(x1),
            fmt_px(y1),
            fmt_px(x2),
            fmt_px(y2)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            fmt_px(x),
            fmt_px(y),
            esc(s)
        );
    }

    fn polyline(&mut self, points: &str, stroke: &str, series: &str) {
        let _ = writeln!(
            self.body,
            r#"<polyline class="series" data-series="{}" fill="none" stroke="{stroke}" stroke-width="2" points="{points}"/>"#,
            esc(series)
        );
    }

    fn axes(&mut self, f: &Frame, x_label: &str, y_label: &str, x_ticks: &[f64], y_ticks: &[f64]) {
        self.line(f.left, f.bottom, f.right, f.bottom, "black", false);
        self.line(f.left, f.top, f.left, f.bottom, "black", false);
        for &t in x_ticks {
            let x = f.x(t);
            self.line(x, f.bottom, x, f.bottom + 5.0, "black", false);
            self.text(x, f.bottom + 18.0, "middle", &sig4(t));
        }
        for &t in y_ticks {
            let y = f.y(t);
            self.line(f.left - 5.0, y, f.left, y, "black", false);
            self.text(f.left - 8.0, y + 4.0, "end", &sig4(t));
        }
        self.text((f.left + f.right) / 2.0, f.bottom + 38.0, "middle", x_label);
        let _ = writeln!(
            self.body,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            fmt_px((f.top + f.bottom) / 2.0),
            fmt_px((f.top + f.bottom) / 2.0),
            esc(y_label)
        );
    }

    fn legend(&mut self, x: f64, y: f64, entries: &[(String, &str)]) {
        let _ = writeln!(self.body, r#"<g class="legend">"#);
        for (i, (label, color)) in entries.iter().enumerate() {
            let yy = y + 18.0 * i as f64;
            self.line(x, yy - 4.0, x + 20.0, yy - 4.0, color, false);
            let _ = writeln!(
                self.body,
                r#"<text class="legend-entry" x="{}" y="{}">{}</text>"#,
                fmt_px(x + 26.0),
                fmt_px(yy),
                esc(label)
            );
        }
        let _ = writeln!(self.body, "</g>");
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| ReportError::Csv(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| ReportError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Csv(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// The (x, y) series a ROC figure plots: (1 - specificity, sensitivity).
pub fn roc_plot_points(curve: &RocCurve) -> Vec<(f64, f64)> {
    curve.points.iter().map(|p| (1.0 - p.specificity, p.sensitivity)).collect()
}

pub fn emit_figure(kind: FigureKind, data: &FigureData) -> Result<Figure, ReportError> {
    let mismatch = |reason: &str| ReportError::ShapeMismatch {
        kind: kind.as_str(),
        reason: reason.to_string(),
    };
    let (svg, csv) = match (kind, data) {
        (FigureKind::RocComparison, FigureData::Roc(series)) => {
            if series.is_empty() || series.iter().any(|s| s.curve.is_empty()) {
                return Err(mismatch("needs at least one non-empty ROC curve"));
            }
            roc_figure(series)?
        }
        (FigureKind::MaxEuVsPrevalence, FigureData::MaxEu(series)) => {
            if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
                return Err(mismatch("needs at least one non-empty max-EU series"));
            }
            eu_figure(series)?
        }
        (FigureKind::StratifiedForest, FigureData::Forest { rows, reference }) => {
            if rows.is_empty() {
                return Err(mismatch("empty stratum list"));
            }
            forest_figure(rows, *reference)?
        }
        (FigureKind::Calibration, FigureData::Calibration(summary)) => {
            if summary.bins.is_empty() {
                return Err(mismatch("no calibration bins"));
            }
            calibration_figure(summary)?
        }
        (FigureKind::WeakRobustCurve, FigureData::WeakRobust(res)) => {
            if res.steps.is_empty() {
                return Err(mismatch("no probe steps"));
            }
            weak_robust_figure(res)?
        }
        (FigureKind::TwoByTwo, FigureData::TwoByTwo { predictor, table, stats }) => two_by_two_figure(predictor, table, stats)?,
        _ => return Err(mismatch("data does not match figure kind")),
    };
    Ok(Figure { kind, svg, csv })
}

fn roc_figure(series: &[RocSeries]) -> Result<(String, String), ReportError> {
    let f = Frame::new((0.0, 1.0), (0.0, 1.0));
    let mut svg = Svg::new("ROC comparison");
    svg.axes(&f, "1 - specificity", "sensitivity", &ticks(0.0, 1.0, 5), &ticks(0.0, 1.0, 5));
    svg.line(f.x(0.0), f.y(0.0), f.x(1.0), f.y(1.0), "#999999", true);
    let mut legend = Vec::new();
    let mut rows = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.polyline(&f.polyline_points(&roc_plot_points(&s.curve)), color, &s.label);
        let mut entry = format!("{}: AUC {}", s.label, sig4(s.auc));
        if let Some(ci) = &s.ci {
            let _ = write!(entry, " [{}, {}]", sig4(ci.lower), sig4(ci.upper));
        }
        legend.push((entry, color));
        for p in &s.curve.points {
            rows.push(vec![
                s.label.clone(),
                p.threshold.to_string(),
                (1.0 - p.specificity).to_string(),
                p.sensitivity.to_string(),
            ]);
        }
    }
    svg.legend(f.right + 20.0, f.top + 10.0, &legend);
    Ok((svg.finish(), csv_string(&["series", "threshold", "fpr", "tpr"], rows)?))
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn eu_figure(series: &[EuSeries]) -> Result<(String, String), ReportError> {
    let all = series.iter().flat_map(|s| &s.points);
    let (xmin, xmax) = all.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.prevalence), b.max(p.prevalence)));
    let (ymin, ymax) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.max_eu), b.max(p.max_eu)));
    let xr = if xmax > xmin { (xmin, xmax) } else { padded(xmin, xmax) };
    let f = Frame::new(xr, padded(ymin, ymax));
    let mut svg = Svg::new("Maximum expected utility vs prevalence");
    svg.axes(&f, "prevalence", "max EU", &ticks(f.x_range.0, f.x_range.1, 5), &ticks(f.y_range.0, f.y_range.1, 5));
    let mut legend = Vec::new();
    let mut rows = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().map(|p| (p.prevalence, p.max_eu)).collect();
        svg.polyline(&f.polyline_points(&pts), color, &s.label);
        legend.push((s.label.clone(), color));
        for p in &s.points {
            rows.push(vec![
                s.label.clone(),
                p.prevalence.to_string(),
                p.max_eu.to_string(),
                p.best.threshold.to_string(),
                p.best.sensitivity.to_string(),
                p.best.specificity.to_string(),
            ]);
        }
    }
    svg.legend(f.right + 20.0, f.top + 10.0, &legend);
    let header = ["series", "prevalence", "max_eu", "threshold", "sensitivity", "specificity"];
    Ok((svg.finish(), csv_string(&header, rows)?))
}

fn forest_figure(rows: &[ForestRow], reference: f64) -> Result<(String, String), ReportError> {
    let n = rows.len() as f64;
    let labels: Vec<String> = rows.iter().map(|r| format!("{} ({}+/{}-)", r.label, r.n_pos, r.n_neg)).collect();
    let longest = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64;
    let mut f = Frame::new((0.0, 1.0), (0.0, n + 1.0));
    // ~7px per character at font-size 12, 16px per row
    f.left = (20.0 + 7.0 * longest).max(330.0);
    f.right = f.left + 360.0;
    f.bottom = f.bottom.max(f.top + 16.0 * (n + 1.0));
    let mut svg = Svg::sized("Per-stratum AUC with 95% DeLong CI", (f.right + 40.0).max(WIDTH), f.bottom + 60.0);
    svg.axes(&f, "AUC", "", &ticks(0.0, 1.0, 5), &[]);
    svg.line(f.x(0.5), f.top, f.x(0.5), f.bottom, "black", false);
    svg.line(f.x(reference), f.top, f.x(reference), f.bottom, "#d62728", true);
    let mut out = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let y = f.y(n - i as f64);
        svg.line(f.x(r.lower), y, f.x(r.upper), y, "#1f77b4", false);
        let _ = writeln!(
            svg.body,
            r##"<circle class="point" cx="{}" cy="{}" r="3" fill="#1f77b4"/>"##,
            fmt_px(f.x(r.auc)),
            fmt_px(y)
        );
        svg.text(f.left - 8.0, y + 4.0, "end", &labels[i]);
        out.push(vec![
            r.label.clone(),
            r.n_pos.to_string(),
            r.n_neg.to_string(),
            r.auc.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
        ]);
    }
    let header = ["stratum", "n_pos", "n_neg", "auc", "ci_lower", "ci_upper"];
    Ok((svg.finish(), csv_string(&header, out)?))
}

fn calibration_figure(s: &CalibrationSummary) -> Result<(String, String), ReportError> {
    let f = Frame::new((0.0, 1.0), (0.0, 1.0));
    let mut svg = Svg::new(&format!("Calibration (ECE {})", sig4(s.ece)));
    svg.axes(&f, "mean predicted score", "fraction positive", &ticks(0.0, 1.0, 5), &ticks(0.0, 1.0, 5));
    svg.line(f.x(0.0), f.y(0.0), f.x(1.0), f.y(1.0), "#999999", true);
    let pts: Vec<(f64, f64)> = s.bins.iter().map(|b| (b.mean_score, b.frac_positive)).collect();
    svg.polyline(&f.polyline_points(&pts), PALETTE[0], "reliability");
    let rows = s
        .bins
        .iter()
        .map(|b| {
            vec![
                b.lower.to_string(),
                b.upper.to_string(),
                b.count.to_string(),
                b.mean_score.to_string(),
                b.frac_positive.to_string(),
            ]
        })
        .collect();
    let header = ["bin_lower", "bin_upper", "count", "mean_score", "frac_positive"];
    Ok((svg.finish(), csv_string(&header, rows)?))
}

fn weak_robust_figure(res: &WeakRobustResult) -> Result<(String, String), ReportError> {
    let k_max = res.steps.len() as f64;
    let f = Frame::new((1.0, k_max.max(2.0)), (0.0, 1.0));
    let title = match res.tau {
        Some(t) => format!("Weak-Robust curation (tau = {t})"),
        None => "Weak-Robust curation (calibration never passed)".to_string(),
    };
    let mut svg = Svg::new(&title);
    let step = ((k_max as usize).saturating_sub(1) / 10 + 1) as f64;
    let kt: Vec<f64> = (0..).map(|i| 1.0 + step * i as f64).take_while(|&k| k <= k_max.max(2.0)).collect();
    svg.axes(&f, "principal components k", "AUC / UAR", &kt, &ticks(0.0, 1.0, 5));
    if let Some(t) = res.tau {
        let _ = writeln!(
            svg.body,
            r##"<rect class="attributable" x="{}" y="{}" width="{}" height="{}" fill="#fdd" opacity="0.5"/>"##,
            fmt_px(f.left),
            fmt_px(f.top),
            fmt_px(f.x(t as f64) - f.left),
            fmt_px(f.bottom - f.top)
        );
        svg.line(f.x(t as f64), f.top, f.x(t as f64), f.bottom, "#d62728", true);
    }
    let curated: Vec<(f64, f64)> = res
        .steps
        .iter()
        .filter_map(|s| s.curated_auc.map(|a| (s.k as f64, a)))
        .collect();
    let calib: Vec<(f64, f64)> = res.steps.iter().map(|s| (s.k as f64, s.calibration_uar)).collect();
    let matched: Vec<(f64, f64)> = res.steps.iter().map(|s| (s.k as f64, s.matched_uar)).collect();
    svg.polyline(&f.polyline_points(&curated), PALETTE[0], "curated_auc");
    svg.polyline(&f.polyline_points(&calib), PALETTE[1], "calibration_uar");
    svg.polyline(&f.polyline_points(&matched), PALETTE[2], "weak_uar");
    svg.legend(
        f.right + 20.0,
        f.top + 10.0,
        &[
            (format!("main AUC on curated set (start {})", sig4(res.baseline_auc)), PALETTE[0]),
            ("weak-model calibration UAR".to_string(), PALETTE[1]),
            ("weak-model UAR".to_string(), PALETTE[2]),
        ],
    );
    let rows = res
        .steps
        .iter()
        .map(|s| {
            vec![
                s.k.to_string(),
                s.calibration_uar.to_string(),
                s.matched_uar.to_string(),
                s.removed_ids.len().to_string(),
                s.curated_n_pos.to_string(),
                s.curated_n_neg.to_string(),
                opt(s.curated_auc),
                u8::from(s.confounder_attributable).to_string(),
            ]
        })
        .collect();
    let header = [
        "k",
        "calibration_uar",
        "weak_uar",
        "removed",
        "curated_n_pos",
        "curated_n_neg",
        "curated_auc",
        "attributable",
    ];
    Ok((svg.finish(), csv_string(&header, rows)?))
}

fn two_by_two_figure(predictor: &str, t: &Table2x2, s: &TableStats) -> Result<(String, String), ReportError> {
    let mut svg = Svg::new(&format!("{predictor} vs label"));
    let cells = [
        ("present", "positive", t.x1_pos),
        ("present", "negative", t.x1_neg),
        ("absent", "positive", t.x0_pos),
        ("absent", "negative", t.x0_neg),
    ];
    let total: f64 = cells.iter().map(|c| c.2).sum();
    let (x0, y0, w, h) = (200.0, 80.0, 160.0, 110.0);
    svg.text(x0 + w / 2.0, y0 - 10.0, "middle", "label positive");
    svg.text(x0 + 1.5 * w, y0 - 10.0, "middle", "label negative");
    svg.text(x0 - 10.0, y0 + h / 2.0, "end", &format!("{predictor} present"));
    svg.text(x0 - 10.0, y0 + 1.5 * h, "end", &format!("{predictor} absent"));
    for (i, (_, _, v)) in cells.iter().enumerate() {
        let (cx, cy) = (x0 + w * (i % 2) as f64, y0 + h * (i / 2) as f64);
        let shade = if total > 0.0 { 0.15 + 0.7 * v / total } else { 0.0 };
        let _ = writeln!(
            svg.body,
            r##"<rect class="cell" x="{}" y="{}" width="{w}" height="{h}" fill="#1f77b4" fill-opacity="{}" stroke="black"/>"##,
            fmt_px(cx),
            fmt_px(cy),
            sig4(shade)
        );
        svg.text(cx + w / 2.0, cy + h / 2.0 + 4.0, "middle", &sig4(*v));
    }
    let summary = format!(
        "phi {}   MI {} nats   sensitivity {}   specificity {}   AUC {}",
        sig4(s.phi),
        sig4(s.mi),
        sig4(s.sensitivity),
        sig4(s.specificity),
        sig4(s.auc)
    );
    svg.text(WIDTH / 2.0, y0 + 2.0 * h + 50.0, "middle", &summary);
    let rows = cells
        .iter()
        .map(|(x, y, v)| vec![predictor.to_string(), x.to_string(), y.to_string(), v.to_string()])
        .collect();
    Ok((svg.finish(), csv_string(&["predictor", "predictor_value", "label", "count"], rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{auc_ci, calibration_bins, roc_curve, table_2x2_stats, CiMethod, ScoredLabels};
    use crate::rng;
    use rand::Rng;

    fn scored(n: usize, shift: f64, seed: u64) -> ScoredLabels {
        let mut r = rng::seeded(seed);
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let scores = labels
            .iter()
            .map(|&l| (r.random::<f64>() + if l { shift } else { 0.0 }) / (1.0 + shift))
            .collect();
        ScoredLabels::new(scores, labels).unwrap()
    }

    fn roc_series(label: &str, d: &ScoredLabels) -> RocSeries {
        let ci = auc_ci(d, CiMethod::Delong, 0.95).unwrap();
        RocSeries {
            label: label.into(),
            curve: roc_curve(d).unwrap(),
            auc: ci.estimate,
            ci: Some(ci),
        }
    }

    #[test]
    fn significant_figures() {
        assert_eq!(sig4(0.846123), "0.8461");
        assert_eq!(sig4(12.3456), "12.35");
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(1.0), "1.000");
        assert_eq!(sig4(-0.00012345), "-0.0001234");
        assert_eq!(sig4(123456.0), "123456");
    }

    #[test]
    fn roc_legend_lists_each_curve() {
        let series: Vec<RocSeries> = (0..3).map(|i| roc_series(&format!("model {i}"), &scored(60, 0.3 * i as f64, i))).collect();
        let fig = emit_figure(FigureKind::RocComparison, &FigureData::Roc(series.clone())).unwrap();
        assert_eq!(fig.svg.matches("class=\"legend-entry\"").count(), 3);
        for s in &series {
            let ci = s.ci.as_ref().unwrap();
            let want = format!("{}: AUC {} [{}, {}]", s.label, sig4(s.auc), sig4(ci.lower), sig4(ci.upper));
            assert!(fig.svg.contains(&want), "{want}");
        }
        assert!(!fig.svg.contains("href"));
    }

    /// Re-plots the CSV with the same frame and compares with every
    /// polyline in the SVG.
    #[test]
    fn roc_csv_parses_back_to_svg_series() {
        let series = vec![roc_series("a", &scored(40, 0.5, 1)), roc_series("b", &scored(30, 0.0, 2))];
        let fig = emit_figure(FigureKind::RocComparison, &FigureData::Roc(series)).unwrap();
        let mut rdr = csv::Reader::from_reader(fig.csv.as_bytes());
        let mut by_series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let pt = (rec[2].parse().unwrap(), rec[3].parse().unwrap());
            match by_series.last_mut() {
                Some((name, pts)) if name == &rec[0] => pts.push(pt),
                _ => by_series.push((rec[0].to_string(), vec![pt])),
            }
        }
        let f = Frame::new((0.0, 1.0), (0.0, 1.0));
        for (name, pts) in by_series {
            let expected = format!("data-series=\"{name}\" fill=\"none\" stroke=\"");
            let line = fig.svg.lines().find(|l| l.contains(&expected)).unwrap();
            let attr = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            assert_eq!(attr, f.polyline_points(&pts));
        }
    }

    #[test]
    fn forest_has_reference_lines() {
        let rows = vec![
            ForestRow { label: "s1".into(), n_pos: 5, n_neg: 5, auc: 0.6, lower: 0.3, upper: 0.9 },
            ForestRow { label: "s2".into(), n_pos: 4, n_neg: 4, auc: 0.7, lower: 0.4, upper: 1.0 },
        ];
        let fig = emit_figure(FigureKind::StratifiedForest, &FigureData::Forest { rows, reference: FOREST_REFERENCE }).unwrap();
        let f = {
            let mut f = Frame::new((0.0, 1.0), (0.0, 3.0));
            f.left = 330.0;
            f.right = 690.0;
            f
        };
        assert!(fig.svg.contains(&format!("x1=\"{}\"", fmt_px(f.x(0.5)))));
        let dashed = format!("x1=\"{}\"", fmt_px(f.x(0.62)));
        assert!(fig.svg.lines().any(|l| l.contains(&dashed) && l.contains("stroke-dasharray")));
        assert_eq!(fig.csv.lines().count(), 3);
    }

    #[test]
    fn shape_errors() {
        let empty = FigureData::Forest { rows: vec![], reference: FOREST_REFERENCE };
        assert!(matches!(emit_figure(FigureKind::StratifiedForest, &empty), Err(ReportError::ShapeMismatch { .. })));
        assert!(matches!(emit_figure(FigureKind::RocComparison, &empty), Err(ReportError::ShapeMismatch { .. })));
        assert!(matches!(emit_figure(FigureKind::RocComparison, &FigureData::Roc(vec![])), Err(ReportError::ShapeMismatch { .. })));
    }

    #[test]
    fn other_kinds_render() {
        let d = scored(200, 0.4, 3);
        let cal = calibration_bins(d.scores(), d.labels(), 10).unwrap();
        let fig = emit_figure(FigureKind::Calibration, &FigureData::Calibration(cal.clone())).unwrap();
        assert_eq!(fig.csv.lines().count(), cal.bins.len() + 1);
        let t = Table2x2::from_population(0.02, 0.65, 0.2);
        let stats = table_2x2_stats(&t).unwrap();
        let fig = emit_figure(
            FigureKind::TwoByTwo,
            &FigureData::TwoByTwo { predictor: "any_symptom".into(), table: t, stats },
        )
        .unwrap();
        assert!(fig.svg.contains("phi 0.1549"));
        assert!(fig.svg.starts_with("<svg") && fig.svg.trim_end().ends_with("</svg>"));
    }
}
