//! Monte-Carlo coverage experiments for interval estimates.
//!
//! Each repetition draws `x ~ U(-1, 2)`, a linear or quadratic mean and
//! homoscedastic or heteroscedastic noise, fits `y ~ x`, and records whether
//! each method's interval covers the projection parameter.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{DesignMatrix, INTERCEPT};
use crate::inference::coef_table;
use crate::ols::fit_ols;
use crate::plot::{Layer, PlotPanel, PlotSpec};
use crate::rng::{child_seed, substream, Domain};
use crate::tabular::Dataset;
use crate::variance::{
    var_classical, var_empirical_boot, var_multiplier_boot, var_residual_boot, var_sandwich,
    var_subsampling, Method, VarianceEstimate, WeightsType,
};

pub const X_LOW: f64 = -1.0;
pub const X_HIGH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    /// `y = 1 + x + e`
    Linear,
    /// `y = 1 + x + x^2 + e`
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// `sd(e | x) = sigma`
    Homoscedastic,
    /// `sd(e | x) = sigma * |x|`
    Heteroscedastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    pub kind: NoiseKind,
    pub sigma: f64,
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub n: usize,
    pub truth: Truth,
    pub noise: Noise,
    pub reps: usize,
    #[serde(rename = "B_grid", alias = "b_grid", default)]
    pub b_grid: Vec<usize>,
    pub methods: Vec<Method>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights_type: WeightsType,
    /// Subsample size; defaults to `floor(n^0.7)`.
    #[serde(default)]
    pub subsample_m: Option<usize>,
}

impl SimScenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.n < 3 {
            return bad("n must be at least 3");
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return bad("noise sigma must be finite and non-negative");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::BadLevel(self.level));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::DuplicateMethod(*m));
            }
        }
        if self.methods.iter().any(|m| m.is_resampling()) {
            if self.b_grid.is_empty() {
                return bad("B_grid is required for resampling methods");
            }
            if self.b_grid[0] < 2 {
                return bad("every B must be at least 2");
            }
        }
        if self.b_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("B_grid must be strictly increasing");
        }
        if self.methods.contains(&Method::Subsampling) {
            let m = self.subsample_size();
            if m >= self.n || m < 2 {
                return Err(Error::MTooLarge { m, n: self.n });
            }
        }
        Ok(())
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_m
            .unwrap_or_else(|| (self.n as f64).powf(0.7).floor() as usize)
    }
}

fn mean_response(truth: Truth, x: f64) -> f64 {
    match truth {
        Truth::Linear => 1.0 + x,
        Truth::Quadratic => 1.0 + x + x * x,
    }
}

/// Dataset `(y, x)` for repetition `rep`.
pub fn simulate_dataset(sc: &SimScenario, rep: usize) -> Dataset {
    let mut rng = substream(sc.seed, Domain::SimData, rep as u64);
    let mut x = Vec::with_capacity(sc.n);
    let mut y = Vec::with_capacity(sc.n);
    for _ in 0..sc.n {
        let xi = rng.random_range(X_LOW..X_HIGH);
        let z: f64 = rng.sample(StandardNormal);
        let sd = match sc.noise.kind {
            NoiseKind::Homoscedastic => sc.noise.sigma,
            NoiseKind::Heteroscedastic => sc.noise.sigma * xi.abs(),
        };
        x.push(xi);
        y.push(mean_response(sc.truth, xi) + sd * z);
    }
    Dataset::new(vec![("y".into(), y), ("x".into(), x)]).expect("simulated columns are finite")
}

/// `E[x^k]` for `x ~ U(X_LOW, X_HIGH)`.
fn uniform_moment(k: i32) -> f64 {
    (X_HIGH.powi(k + 1) - X_LOW.powi(k + 1)) / ((k + 1) as f64 * (X_HIGH - X_LOW))
}

/// Population least-squares coefficients `(intercept, slope)` of `y` on `(1, x)`.
pub fn projection_target(truth: Truth) -> [f64; 2] {
    let (m1, m2, m3) = (uniform_moment(1), uniform_moment(2), uniform_moment(3));
    let (ey, exy) = match truth {
        Truth::Linear => (1.0 + m1, m1 + m2),
        Truth::Quadratic => (1.0 + m1 + m2, m1 + m2 + m3),
    };
    let var_x = m2 - m1 * m1;
    let slope = (exy - m1 * ey) / var_x;
    [ey - slope * m1, slope]
}

fn design_of(d: &Dataset) -> DesignMatrix {
    let x = d.column("x").expect("x column");
    let y = d.column("y").expect("y column");
    let n = x.len();
    let xm = nalgebra::DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    DesignMatrix::new(
        "y",
        DVector::from_column_slice(y),
        xm,
        vec![INTERCEPT.into(), "x".into()],
        true,
    )
    .expect("valid simulated design")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub method: Method,
    /// Replicate count; empty for closed-form methods.
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub coefficient: String,
    pub coverage: f64,
    pub avg_width: f64,
    pub covered: usize,
    pub reps: usize,
}

/// `(method, B)` cells in output order.
fn cells(sc: &SimScenario) -> Vec<(Method, Option<usize>)> {
    let mut methods = sc.methods.clone();
    methods.sort();
    let mut out = Vec::new();
    for m in methods {
        if m.is_resampling() {
            out.extend(sc.b_grid.iter().map(|&b| (m, Some(b))));
        } else {
            out.push((m, None));
        }
    }
    out
}

/// Per-cell, per-coefficient `(covered, width)` for one repetition.
fn one_rep(sc: &SimScenario, rep: usize, target: &[f64; 2], cells: &[(Method, Option<usize>)]) -> Result<Vec<[(bool, f64); 2]>> {
    let data = simulate_dataset(sc, rep);
    let fit = fit_ols(&design_of(&data))?;
    let seed = child_seed(sc.seed, Domain::SimReplicate, rep as u64);
    let b_max = sc.b_grid.last().copied().unwrap_or(0);
    let mut full: Vec<(Method, VarianceEstimate)> = Vec::new();
    for &m in &sc.methods {
        let ve = match m {
            Method::ClassicalLm => var_classical(&fit)?,
            Method::Sandwich => var_sandwich(&fit)?,
            Method::EmpiricalBoot => var_empirical_boot(&fit, b_max, sc.n, seed)?,
            Method::MultiplierBoot => var_multiplier_boot(&fit, b_max, sc.weights_type, seed)?,
            Method::ResidualBoot => var_residual_boot(&fit, b_max, seed)?,
            Method::Subsampling => var_subsampling(&fit, b_max, sc.subsample_size(), seed)?,
        };
        full.push((m, ve));
    }
    cells
        .iter()
        .map(|&(m, b)| {
            let ve = &full.iter().find(|(k, _)| *k == m).expect("method computed").1;
            let rows = match b {
                Some(b) if b < b_max => coef_table(&fit, &ve.truncated(b)?, sc.level)?,
                _ => coef_table(&fit, ve, sc.level)?,
            };
            let cell = |j: usize| {
                let r = &rows[j];
                (r.conf_low <= target[j] && target[j] <= r.conf_high, r.conf_high - r.conf_low)
            };
            Ok([cell(0), cell(1)])
        })
        .collect()
}

/// Coverage and average width of each method's interval for `beta_inf`.
pub fn coverage_experiment(sc: &SimScenario) -> Result<Vec<CoverageRow>> {
    sc.validate()?;
    let target = projection_target(sc.truth);
    let cells = cells(sc);
    let per_rep = (0..sc.reps)
        .into_par_iter()
        .map(|rep| one_rep(sc, rep, &target, &cells))
        .collect::<Result<Vec<_>>>()?;
    let names = [INTERCEPT, "x"];
    let mut out = Vec::with_capacity(cells.len() * 2);
    for (c, &(method, b)) in cells.iter().enumerate() {
        for (j, name) in names.iter().enumerate() {
            let mut covered = 0;
            let mut width = 0.0;
            for rep in &per_rep {
                let (hit, w) = rep[c][j];
                covered += usize::from(hit);
                width += w;
            }
            out.push(CoverageRow {
                method,
                b,
                coefficient: (*name).into(),
                coverage: covered as f64 / sc.reps as f64,
                avg_width: width / sc.reps as f64,
                covered,
                reps: sc.reps,
            });
        }
    }
    Ok(out)
}

pub fn coverage_csv(rows: &[CoverageRow]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["method", "B", "coefficient", "coverage", "avg_width", "covered", "reps"])?;
    for r in rows {
        wtr.write_record([
            r.method.as_str().to_string(),
            r.b.map(|b| b.to_string()).unwrap_or_default(),
            r.coefficient.clone(),
            r.coverage.to_string(),
            r.avg_width.to_string(),
            r.covered.to_string(),
            r.reps.to_string(),
        ])?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Coverage and average width against `B`, one panel per (measure, coefficient).
/// Closed-form methods appear as horizontal lines.
pub fn coverage_plot(rows: &[CoverageRow], level: f64) -> PlotSpec {
    let mut panels = Vec::new();
    for coef in [INTERCEPT, "x"] {
        for (measure, label) in [("coverage", "Coverage"), ("avg_width", "Average CI width")] {
            let mut panel = PlotPanel::new(format!("{label}: {coef}"), "B", label);
            if measure == "coverage" {
                panel = panel.layer(Layer::HLine(level));
            }
            let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
            methods.dedup();
            for m in methods {
                let pts: Vec<&CoverageRow> = rows
                    .iter()
                    .filter(|r| r.method == m && r.coefficient == coef)
                    .collect();
                let value = |r: &CoverageRow| if measure == "coverage" { r.coverage } else { r.avg_width };
                if m.is_resampling() {
                    let x: Vec<f64> = pts.iter().map(|r| r.b.unwrap_or(0) as f64).collect();
                    let y: Vec<f64> = pts.iter().map(|r| value(r)).collect();
                    panel = panel
                        .layer(Layer::Line { x: x.clone(), y: y.clone(), faint: false })
                        .layer(Layer::Points { x, y });
                } else if let Some(r) = pts.first() {
                    panel = panel.layer(Layer::HLine(value(r)));
                }
            }
            panels.push(panel);
        }
    }
    PlotSpec {
        title: Some("Interval coverage versus B".into()),
        panels,
    }
}
