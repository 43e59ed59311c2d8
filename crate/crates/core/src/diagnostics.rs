//! Misspecification diagnostics.
//!
//! The reweighting diagnostics refit the regression with Gaussian-kernel
//! weights centred at a grid of values of one regressor and track how the
//! coefficients move. Under a correct linear model they stay flat; drift
//! indicates nonlinearity or interactions. Bootstrapped curves give the
//! sampling noise to compare against.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::inference::CoefRow;
use crate::ols::{fit_wls, leverage_and_cooks, wls_coefficients, FittedOls, Influence};
use crate::rng::{substream, Domain};
use crate::tabular::{quantile_type1, sample_sd};
use crate::variance::{Method, VarianceEstimate, MAX_REDRAWS};
use crate::formula::DesignMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Type-1 deciles, `p = 0.1, 0.2, ..., 1.0`.
    Deciles,
    /// `K` evenly spaced points from the minimum to the maximum.
    Uniform(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterGrid {
    pub centers: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn reweight_centers(x: &[f64], kind: GridKind) -> Result<CenterGrid> {
    let (min, max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if x.is_empty() || min == max {
        return Err(Error::ConstantRegressor(String::new()));
    }
    let mut warnings = Vec::new();
    let centers = match kind {
        GridKind::Deciles => {
            let mut sorted = x.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mut c: Vec<f64> = (1..=10)
                .map(|k| quantile_type1(&sorted, k as f64 / 10.0))
                .collect();
            c.dedup();
            if c.len() < 10 {
                let msg = format!("tied deciles removed; {} centers remain", c.len());
                log::warn!("{msg}");
                warnings.push(msg);
            }
            c
        }
        GridKind::Uniform(k) => {
            if k < 2 {
                return Err(Error::TooFewCenters(k));
            }
            let step = (max - min) / (k - 1) as f64;
            (0..k)
                .map(|i| if i == k - 1 { max } else { min + step * i as f64 })
                .collect()
        }
    };
    if centers.len() < 2 {
        return Err(Error::TooFewCenters(centers.len()));
    }
    Ok(CenterGrid { centers, warnings })
}

/// Default kernel bandwidth: the sample standard deviation of the regressor.
pub fn default_gamma(x: &[f64]) -> f64 {
    sample_sd(x)
}

/// `w_i = exp(-(x_i - center)^2 / (2 gamma^2))`.
pub fn kernel_weights(x: &[f64], center: f64, gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::NonpositiveGamma(gamma));
    }
    let denom = 2.0 * gamma * gamma;
    Ok(x.iter().map(|v| (-(v - center).powi(2) / denom).exp()).collect())
}

/// Weighted fits along one regressor.
#[derive(Debug, Clone)]
pub struct ReweightGrid {
    /// Design column that was reweighted.
    pub regressor: usize,
    pub regressor_name: String,
    pub centers: Vec<f64>,
    pub gamma: f64,
    /// `K x d`; row `l` is the weighted fit at `centers[l]`.
    pub estimates: DMatrix<f64>,
    /// One `K x d` matrix per bootstrap dataset.
    pub boot_curves: Option<Vec<DMatrix<f64>>>,
    pub warnings: Vec<String>,
}

fn check_regressor(design: &DesignMatrix, j: usize) -> Result<()> {
    if j >= design.d() || (design.intercept && j == 0) {
        return Err(Error::BadRegressor(
            design.term_names.get(j).cloned().unwrap_or_else(|| format!("column {j}")),
        ));
    }
    Ok(())
}

pub fn reweighted_estimates(
    design: &DesignMatrix,
    j: usize,
    centers: &[f64],
    gamma: f64,
) -> Result<ReweightGrid> {
    check_regressor(design, j)?;
    let x: Vec<f64> = design.x.column(j).iter().copied().collect();
    let mut kept = Vec::with_capacity(centers.len());
    let mut rows = Vec::with_capacity(centers.len());
    let mut warnings = Vec::new();
    for &c in centers {
        let w = kernel_weights(&x, c, gamma)?;
        match fit_wls(design, &w) {
            Ok(fit) => {
                kept.push(c);
                rows.push(fit.beta_hat);
            }
            Err(Error::RankDeficient { .. }) => {
                let msg = format!("center {c} dropped: weighted design is rank deficient");
                log::warn!("{msg}");
                warnings.push(msg);
            }
            Err(e) => return Err(e),
        }
    }
    if kept.len() < 2 {
        return Err(Error::TooFewCenters(kept.len()));
    }
    let mut estimates = DMatrix::zeros(kept.len(), design.d());
    for (l, r) in rows.iter().enumerate() {
        estimates.row_mut(l).copy_from(&r.transpose());
    }
    Ok(ReweightGrid {
        regressor: j,
        regressor_name: design.term_names[j].clone(),
        centers: kept,
        gamma,
        estimates,
        boot_curves: None,
        warnings,
    })
}

/// Full sweep over `grid.centers` on the rows `idx` of `design`.
fn sweep(design: &DesignMatrix, grid: &ReweightGrid, idx: &[usize]) -> Option<DMatrix<f64>> {
    let x = design.x.select_rows(idx);
    let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| design.y[i]));
    let xj: Vec<f64> = x.column(grid.regressor).iter().copied().collect();
    let mut out = DMatrix::zeros(grid.centers.len(), design.d());
    for (l, &c) in grid.centers.iter().enumerate() {
        let w = kernel_weights(&xj, c, grid.gamma).ok()?;
        let beta = wls_coefficients(&x, &y, &w).ok()?;
        out.row_mut(l).copy_from(&beta.transpose());
    }
    Some(out)
}

/// Adds `b` n-out-of-n bootstrap sweeps to `grid`, with the same centers and bandwidth.
pub fn bootstrap_reweighted_curves(
    design: &DesignMatrix,
    grid: ReweightGrid,
    b: usize,
    seed: u64,
) -> Result<ReweightGrid> {
    let n = design.n();
    let curves: Vec<Result<DMatrix<f64>>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, Domain::ReweightBoot, rep as u64);
            for _ in 0..=MAX_REDRAWS {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                if let Some(curve) = sweep(design, &grid, &idx) {
                    return Ok(curve);
                }
            }
            Err(Error::RankDeficientReplicate {
                method: Method::EmpiricalBoot,
                replicate: rep,
                attempts: MAX_REDRAWS + 1,
            })
        })
        .collect();
    let curves = curves.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ReweightGrid {
        boot_curves: Some(curves),
        ..grid
    })
}

/// Bootstrap sweeps on caller-chosen row index sets, one curve per set.
pub fn bootstrap_curves_from_indices(
    design: &DesignMatrix,
    grid: ReweightGrid,
    index_sets: &[Vec<usize>],
) -> Result<ReweightGrid> {
    let curves = index_sets
        .iter()
        .enumerate()
        .map(|(rep, idx)| {
            sweep(design, &grid, idx).ok_or(Error::RankDeficientReplicate {
                method: Method::EmpiricalBoot,
                replicate: rep,
                attempts: 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReweightGrid {
        boot_curves: Some(curves),
        ..grid
    })
}

/// Centers, bandwidth and point/bootstrap sweeps for every non-intercept regressor.
pub fn reweight_all(
    design: &DesignMatrix,
    kind: GridKind,
    gamma: Option<f64>,
    b: usize,
    seed: u64,
) -> Result<Vec<ReweightGrid>> {
    design
        .regressor_indices()
        .into_iter()
        .map(|j| {
            let x: Vec<f64> = design.x.column(j).iter().copied().collect();
            let centers = reweight_centers(&x, kind).map_err(|e| match e {
                Error::ConstantRegressor(_) => Error::ConstantRegressor(design.term_names[j].clone()),
                other => other,
            })?;
            let gamma = gamma.unwrap_or_else(|| default_gamma(&x));
            let mut grid = reweighted_estimates(design, j, &centers.centers, gamma)?;
            grid.warnings.splice(0..0, centers.warnings);
            if b > 0 {
                grid = bootstrap_reweighted_curves(design, grid, b, seed)?;
            }
            Ok(grid)
        })
        .collect()
}

/// One diagnostic panel: a coefficient against the centers of a reweighted regressor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Panel {
    pub title: String,
    pub reweighted: String,
    pub coefficient: String,
    pub centers: Vec<f64>,
    pub estimates: Vec<f64>,
    /// `B x K`.
    pub boot: Vec<Vec<f64>>,
    /// Unweighted OLS estimate of the coefficient.
    pub reference: f64,
}

fn panel(grid: &ReweightGrid, fit: &FittedOls, k: usize) -> Panel {
    let coefficient = fit.design.term_names[k].clone();
    Panel {
        title: format!("{coefficient} | reweighted by {}", grid.regressor_name),
        reweighted: grid.regressor_name.clone(),
        coefficient,
        centers: grid.centers.clone(),
        estimates: grid.estimates.column(k).iter().copied().collect(),
        boot: grid
            .boot_curves
            .iter()
            .flatten()
            .map(|c| c.column(k).iter().copied().collect())
            .collect(),
        reference: fit.beta_hat[k],
    }
}

/// Coefficient `k` under reweighting of each regressor in turn.
pub fn focal_slope_data(grids: &[ReweightGrid], fit: &FittedOls, k: usize) -> Result<Vec<Panel>> {
    check_regressor(&fit.design, k)?;
    Ok(grids.iter().map(|g| panel(g, fit, k)).collect())
}

/// Each coefficient under reweighting of its own regressor.
pub fn nonlinearity_detection_data(grids: &[ReweightGrid], fit: &FittedOls) -> Vec<Panel> {
    grids.iter().map(|g| panel(g, fit, g.regressor)).collect()
}

/// Every non-intercept coefficient under reweighting of one regressor.
pub fn focal_reweighting_variable_data(grid: &ReweightGrid, fit: &FittedOls) -> Vec<Panel> {
    fit.design
        .regressor_indices()
        .into_iter()
        .map(|k| panel(grid, fit, k))
        .collect()
}

/// Long-format row for panel exports. `replicate` is empty for the point estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelRow {
    pub panel: String,
    pub reweighted: String,
    pub center: f64,
    pub coefficient: String,
    pub replicate: Option<usize>,
    pub value: f64,
}

pub fn panel_rows(panels: &[Panel]) -> Vec<PanelRow> {
    let mut out = Vec::new();
    for p in panels {
        let mut push = |replicate: Option<usize>, values: &[f64]| {
            for (c, v) in p.centers.iter().zip(values) {
                out.push(PanelRow {
                    panel: p.title.clone(),
                    reweighted: p.reweighted.clone(),
                    center: *c,
                    coefficient: p.coefficient.clone(),
                    replicate,
                    value: *v,
                });
            }
        };
        push(None, &p.estimates);
        for (b, curve) in p.boot.iter().enumerate() {
            push(Some(b + 1), curve);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqData {
    pub coefficient: String,
    /// Standardized replicates, ascending.
    pub sample_quantiles: Vec<f64>,
    /// Standard normal quantiles at `(i - 0.5) / B`.
    pub theoretical_quantiles: Vec<f64>,
}

pub fn normal_plotting_positions(count: usize) -> Vec<f64> {
    let normal = Normal::standard();
    (1..=count)
        .map(|i| normal.inverse_cdf((i as f64 - 0.5) / count as f64))
        .collect()
}

/// Q-Q data for an arbitrary replicate sample.
pub fn qq_from_values(coefficient: &str, values: &[f64]) -> Result<QqData> {
    let b = values.len();
    if b < 10 {
        return Err(Error::TooFewReplicates {
            method: Method::EmpiricalBoot,
            min: 10,
            got: b,
        });
    }
    let mean = values.iter().sum::<f64>() / b as f64;
    let sd = sample_sd(values);
    if !(sd > 0.0) {
        return Err(Error::DegenerateReplicates(coefficient.to_string()));
    }
    let mut sample: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    sample.sort_by(f64::total_cmp);
    Ok(QqData {
        coefficient: coefficient.to_string(),
        sample_quantiles: sample,
        theoretical_quantiles: normal_plotting_positions(b),
    })
}

/// Normal Q-Q data for coefficient `j` of a resampling estimate.
pub fn qq_data(ve: &VarianceEstimate, j: usize, term: &str) -> Result<QqData> {
    let reps = ve.replicates.as_ref().ok_or(Error::NoReplicates(ve.method))?;
    if reps.nrows() < 10 {
        return Err(Error::TooFewReplicates {
            method: ve.method,
            min: 10,
            got: reps.nrows(),
        });
    }
    let col: Vec<f64> = reps.column(j).iter().copied().collect();
    qq_from_values(term, &col)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthRow {
    pub term: String,
    #[serde(rename = "var.type")]
    pub var_type: Method,
    pub width: f64,
}

/// Interval widths per (term, method) from coefficient tables of at least two methods.
pub fn ci_width_comparison(rows: &[CoefRow]) -> Result<Vec<WidthRow>> {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.var_type).collect();
    methods.sort();
    methods.dedup();
    if methods.len() < 2 {
        return Err(Error::TooFewMethods(2));
    }
    Ok(rows
        .iter()
        .map(|r| WidthRow {
            term: r.term.clone(),
            var_type: r.var_type,
            width: r.conf_high - r.conf_low,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagSeries {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// 1-based data rows of each point.
    pub rows: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl DiagSeries {
    fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            rows: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    fn push(&mut self, row: usize, x: f64, y: f64) {
        self.rows.push(row + 1);
        self.x.push(x);
        self.y.push(y);
    }
}

/// The six classical residual diagnostics.
///
/// A perfect fit has undefined standardized residuals; they are reported as
/// zero so the residual plots collapse onto the axis.
pub fn lm_diag_data(fit: &FittedOls) -> Result<Vec<DiagSeries>> {
    let n = fit.n();
    let influence = match leverage_and_cooks(fit) {
        Ok(inf) => inf,
        Err(Error::DegenerateFit) => Influence {
            leverage: fit.factor().hat_diagonal(&fit.design.x),
            std_residuals: vec![Some(0.0); n],
            cooks: vec![Some(0.0); n],
        },
        Err(e) => return Err(e),
    };
    let perfect = fit.is_perfect();
    let resid = |i: usize| if perfect { 0.0 } else { fit.residuals[i] };

    let mut rvf = DiagSeries::new("Residuals vs Fitted", "Fitted values", "Residuals");
    let mut qq = DiagSeries::new("Normal Q-Q", "Theoretical quantiles", "Standardized residuals");
    let mut sl = DiagSeries::new("Scale-Location", "Fitted values", "sqrt(|Standardized residuals|)");
    let mut cd = DiagSeries::new("Cook's distance", "Obs. number", "Cook's distance");
    let mut rvl = DiagSeries::new("Residuals vs Leverage", "Leverage", "Standardized residuals");
    let mut cdl = DiagSeries::new("Cook's dist vs Leverage h/(1-h)", "Leverage h/(1-h)", "Cook's distance");

    let mut std_sorted: Vec<(f64, usize)> = Vec::new();
    for i in 0..n {
        let h = influence.leverage[i];
        rvf.push(i, fit.fitted[i], resid(i));
        if let Some(r) = influence.std_residuals[i] {
            std_sorted.push((r, i));
            sl.push(i, fit.fitted[i], r.abs().sqrt());
            rvl.push(i, h, r);
        }
        if let Some(c) = influence.cooks[i] {
            cd.push(i, (i + 1) as f64, c);
            cdl.push(i, h / (1.0 - h), c);
        }
    }
    std_sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let theo = normal_plotting_positions(std_sorted.len());
    for ((r, i), t) in std_sorted.into_iter().zip(theo) {
        qq.push(i, t, r);
    }
    Ok(vec![rvf, qq, sl, cd, rvl, cdl])
}
