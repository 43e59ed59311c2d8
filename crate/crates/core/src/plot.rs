//! Minimal deterministic SVG renderer for multi-panel scatter/line plots.

use std::fmt::Write as _;

use serde::Serialize;

use crate::diagnostics::{DiagSeries, Panel, QqData};
use crate::error::{Error, Result};

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 280.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 42.0;
const PAD: f64 = 0.05;
const TICKS: usize = 5;

const STYLE: &str = "\
text{font-family:sans-serif;font-size:11px;fill:#222}\
.title{font-size:12px;font-weight:bold}\
.frame{fill:none;stroke:#444;stroke-width:1}\
.tick{stroke:#444;stroke-width:1}\
.pt{fill:#1f77b4;fill-opacity:0.7}\
.line{fill:none;stroke:#d62728;stroke-width:1.5}\
.faint{fill:none;stroke:#7f7f7f;stroke-width:0.6;stroke-opacity:0.35}\
.ref{stroke:#2ca02c;stroke-width:1;stroke-dasharray:4 3}\
.band{fill:#1f77b4;fill-opacity:0.15;stroke:none}";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Layer {
    Points { x: Vec<f64>, y: Vec<f64> },
    /// Polyline; `faint` draws it thin and grey.
    Line { x: Vec<f64>, y: Vec<f64>, faint: bool },
    HLine(f64),
    VLine(f64),
    Band { x: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },
}

impl Layer {
    fn xs(&self) -> Vec<f64> {
        match self {
            Layer::Points { x, .. } | Layer::Line { x, .. } | Layer::Band { x, .. } => x.clone(),
            Layer::HLine(_) => vec![],
            Layer::VLine(v) => vec![*v],
        }
    }

    fn ys(&self) -> Vec<f64> {
        match self {
            Layer::Points { y, .. } | Layer::Line { y, .. } => y.clone(),
            Layer::Band { lo, hi, .. } => lo.iter().chain(hi).copied().collect(),
            Layer::HLine(v) => vec![*v],
            Layer::VLine(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPanel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub layers: Vec<Layer>,
}

impl PlotPanel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            layers: Vec::new(),
        }
    }

    pub fn layer(mut self, layer: Layer) -> Self {
        self.layers.push(layer);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSpec {
    pub title: Option<String>,
    pub panels: Vec<PlotPanel>,
}

/// Columns and rows of the panel grid: `ceil(sqrt(P))` columns, filled row-major.
pub fn grid_shape(panels: usize) -> (usize, usize) {
    let cols = (panels as f64).sqrt().ceil().max(1.0) as usize;
    let rows = panels.div_ceil(cols).max(1);
    (cols, rows)
}

/// Six significant digits, trailing zeros dropped.
pub fn fmt_coord(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let s = format!("{:.*e}", 5, v);
    let (mant, exp) = s.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let out = if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{:.*}", decimals, v)
    } else {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{mant}e{exp}")
    };
    if out.contains('.') && !out.contains('e') {
        out.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        out
    }
}

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        (lo - PAD * span, hi + PAD * span)
    } else {
        let half = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        (lo - half, hi + half)
    }
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }
}

fn polyline(f: &Frame, x: &[f64], y: &[f64]) -> String {
    let mut d = String::new();
    for (i, (a, b)) in x.iter().zip(y).enumerate() {
        let _ = write!(d, "{}{},{}", if i == 0 { "M" } else { " L" }, fmt_coord(f.px(*a)), fmt_coord(f.py(*b)));
    }
    d
}

fn render_panel(svg: &mut String, p: &PlotPanel, idx: usize, ox: f64, oy: f64) -> Result<()> {
    let xs: Vec<f64> = p.layers.iter().flat_map(Layer::xs).collect();
    let ys: Vec<f64> = p.layers.iter().flat_map(Layer::ys).collect();
    if xs.is_empty() && ys.is_empty() {
        return Err(Error::EmptyPanel(idx));
    }
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCoordinate(idx));
    }
    let f = Frame {
        x0: ox + MARGIN_L,
        y0: oy + MARGIN_T,
        w: PANEL_W - MARGIN_L - MARGIN_R,
        h: PANEL_H - MARGIN_T - MARGIN_B,
        xr: if xs.is_empty() { (0.0, 1.0) } else { padded_range(&xs) },
        yr: if ys.is_empty() { (0.0, 1.0) } else { padded_range(&ys) },
    };
    let (fx, fy, fw, fh) = (fmt_coord(f.x0), fmt_coord(f.y0), fmt_coord(f.w), fmt_coord(f.h));
    let _ = writeln!(svg, "<g class=\"panel\" id=\"panel-{}\">", idx + 1);
    let _ = writeln!(
        svg,
        "<text class=\"title\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        fmt_coord(f.x0 + f.w / 2.0),
        fmt_coord(oy + MARGIN_T - 10.0),
        escape_xml(&p.title)
    );
    let _ = writeln!(svg, "<rect class=\"frame\" x=\"{fx}\" y=\"{fy}\" width=\"{fw}\" height=\"{fh}\"/>");

    let mut ticks = String::new();
    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let xv = f.xr.0 + t * (f.xr.1 - f.xr.0);
        let yv = f.yr.0 + t * (f.yr.1 - f.yr.0);
        let (px, py) = (f.px(xv), f.py(yv));
        let base = f.y0 + f.h;
        let _ = write!(ticks, "M{},{} V{} ", fmt_coord(px), fmt_coord(base), fmt_coord(base + 4.0));
        let _ = write!(ticks, "M{},{} H{} ", fmt_coord(f.x0), fmt_coord(py), fmt_coord(f.x0 - 4.0));
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            fmt_coord(px),
            fmt_coord(base + 15.0),
            fmt_tick(xv)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            fmt_coord(f.x0 - 6.0),
            fmt_coord(py + 4.0),
            fmt_tick(yv)
        );
    }
    let _ = writeln!(svg, "<path class=\"tick\" d=\"{}\"/>", ticks.trim_end());
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        fmt_coord(f.x0 + f.w / 2.0),
        fmt_coord(f.y0 + f.h + 34.0),
        escape_xml(&p.x_label)
    );
    let (lx, ly) = (fmt_coord(ox + 14.0), fmt_coord(f.y0 + f.h / 2.0));
    let _ = writeln!(
        svg,
        "<text x=\"{lx}\" y=\"{ly}\" text-anchor=\"middle\" transform=\"rotate(-90 {lx} {ly})\">{}</text>",
        escape_xml(&p.y_label)
    );

    for layer in &p.layers {
        match layer {
            Layer::Band { x, lo, hi } => {
                let mut d = polyline(&f, x, hi);
                for (a, b) in x.iter().zip(lo).rev() {
                    let _ = write!(d, " L{},{}", fmt_coord(f.px(*a)), fmt_coord(f.py(*b)));
                }
                let _ = writeln!(svg, "<path class=\"band\" d=\"{d} Z\"/>");
            }
            Layer::Line { x, y, faint } => {
                let class = if *faint { "faint" } else { "line" };
                let _ = writeln!(svg, "<path class=\"{class}\" d=\"{}\"/>", polyline(&f, x, y));
            }
            Layer::Points { x, y } => {
                for (a, b) in x.iter().zip(y) {
                    let _ = writeln!(
                        svg,
                        "<circle class=\"pt\" cx=\"{}\" cy=\"{}\" r=\"2\"/>",
                        fmt_coord(f.px(*a)),
                        fmt_coord(f.py(*b))
                    );
                }
            }
            Layer::HLine(v) => {
                let y = fmt_coord(f.py(*v));
                let _ = writeln!(
                    svg,
                    "<line class=\"ref\" x1=\"{fx}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\"/>",
                    fmt_coord(f.x0 + f.w)
                );
            }
            Layer::VLine(v) => {
                let x = fmt_coord(f.px(*v));
                let _ = writeln!(
                    svg,
                    "<line class=\"ref\" x1=\"{x}\" y1=\"{fy}\" x2=\"{x}\" y2=\"{}\"/>",
                    fmt_coord(f.y0 + f.h)
                );
            }
        }
    }
    svg.push_str("</g>\n");
    Ok(())
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Renders `spec` to a standalone SVG document. Identical input gives identical bytes.
pub fn render_svg(spec: &PlotSpec) -> Result<String> {
    if spec.panels.is_empty() {
        return Err(Error::EmptyPanel(0));
    }
    let (cols, rows) = grid_shape(spec.panels.len());
    let top = if spec.title.is_some() { 24.0 } else { 0.0 };
    let width = cols as f64 * PANEL_W;
    let height = rows as f64 * PANEL_H + top;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = fmt_coord(width),
        h = fmt_coord(height)
    );
    let _ = writeln!(svg, "<style>{STYLE}</style>");
    let _ = writeln!(svg, "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>", fmt_coord(width), fmt_coord(height));
    if let Some(t) = &spec.title {
        let _ = writeln!(
            svg,
            "<text class=\"title\" x=\"{}\" y=\"17\" text-anchor=\"middle\">{}</text>",
            fmt_coord(width / 2.0),
            escape_xml(t)
        );
    }
    for (i, p) in spec.panels.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        render_panel(&mut svg, p, i, c as f64 * PANEL_W, top + r as f64 * PANEL_H)?;
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reweighting panels: faint bootstrap curves, the point curve, and the unweighted estimate.
pub fn reweight_plot(title: &str, panels: &[Panel]) -> PlotSpec {
    PlotSpec {
        title: Some(title.into()),
        panels: panels
            .iter()
            .map(|p| {
                let mut out = PlotPanel::new(&p.title, &p.reweighted, format!("coefficient of {}", p.coefficient));
                for curve in &p.boot {
                    out.layers.push(Layer::Line { x: p.centers.clone(), y: curve.clone(), faint: true });
                }
                out.layer(Layer::Line { x: p.centers.clone(), y: p.estimates.clone(), faint: false })
                    .layer(Layer::Points { x: p.centers.clone(), y: p.estimates.clone() })
                    .layer(Layer::HLine(p.reference))
            })
            .collect(),
    }
}

/// Q-Q panels with the identity reference line.
pub fn qq_plot(title: &str, data: &[QqData]) -> PlotSpec {
    PlotSpec {
        title: Some(title.into()),
        panels: data
            .iter()
            .map(|q| {
                let lo = q.theoretical_quantiles.first().copied().unwrap_or(-1.0);
                let hi = q.theoretical_quantiles.last().copied().unwrap_or(1.0);
                PlotPanel::new(&q.coefficient, "Theoretical quantiles", "Standardized replicates")
                    .layer(Layer::Points { x: q.theoretical_quantiles.clone(), y: q.sample_quantiles.clone() })
                    .layer(Layer::Line { x: vec![lo, hi], y: vec![lo, hi], faint: false })
            })
            .collect(),
    }
}

/// The six classical residual plots.
pub fn lm_diag_plot(series: &[DiagSeries]) -> PlotSpec {
    PlotSpec {
        title: None,
        panels: series
            .iter()
            .map(|s| {
                let p = PlotPanel::new(&s.title, &s.x_label, &s.y_label)
                    .layer(Layer::Points { x: s.x.clone(), y: s.y.clone() });
                match s.title.as_str() {
                    "Residuals vs Fitted" | "Residuals vs Leverage" => p.layer(Layer::HLine(0.0)),
                    "Normal Q-Q" if !s.x.is_empty() => {
                        let (lo, hi) = (s.x[0], s.x[s.x.len() - 1]);
                        p.layer(Layer::Line { x: vec![lo, hi], y: vec![lo, hi], faint: false })
                    }
                    _ => p,
                }
            })
            .collect(),
    }
}
