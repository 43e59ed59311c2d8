//! Coefficient tables, confidence intervals, Wald tests and text summaries.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::ols::{FittedOls, RANK_TOLERANCE};
pub use crate::special::chi_square_sf;
use crate::special::normal_two_sided_p;
use crate::variance::{Method, VarianceEstimate};

/// One tidy row: a coefficient under one variance estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefRow {
    pub term: String,
    pub estimate: f64,
    #[serde(rename = "std.error")]
    pub std_error: f64,
    pub statistic: f64,
    #[serde(rename = "p.value")]
    pub p_value: f64,
    #[serde(rename = "conf.low")]
    pub conf_low: f64,
    #[serde(rename = "conf.high")]
    pub conf_high: f64,
    #[serde(rename = "var.type")]
    pub var_type: Method,
}

pub const TIDY_COLUMNS: [&str; 8] = [
    "term",
    "estimate",
    "std.error",
    "statistic",
    "p.value",
    "conf.low",
    "conf.high",
    "var.type",
];

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Two-sided critical value `z_{alpha/2}` for `level = 1 - alpha`.
pub fn normal_critical(level: f64) -> Result<f64> {
    check_level(level)?;
    Ok(standard_normal().inverse_cdf(0.5 + level / 2.0))
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::BadLevel(level));
    }
    Ok(())
}

/// Reference distribution for statistics and intervals.
enum Reference {
    Normal(Normal),
    StudentT(StudentsT),
}

impl Reference {
    fn for_estimate(fit: &FittedOls, ve: &VarianceEstimate) -> Self {
        let df = fit.n().saturating_sub(fit.d());
        match ve.method {
            Method::ClassicalLm if df > 0 => {
                Reference::StudentT(StudentsT::new(0.0, 1.0, df as f64).expect("df > 0"))
            }
            _ => Reference::Normal(standard_normal()),
        }
    }

    fn two_sided_p(&self, stat: f64) -> f64 {
        match self {
            Reference::Normal(_) => normal_two_sided_p(stat),
            Reference::StudentT(d) => (2.0 * d.sf(stat.abs())).min(1.0),
        }
    }

    fn critical(&self, level: f64) -> f64 {
        let p = 0.5 + level / 2.0;
        match self {
            Reference::Normal(d) => d.inverse_cdf(p),
            Reference::StudentT(d) => d.inverse_cdf(p),
        }
    }
}

/// Estimates, standard errors, tests and intervals under one variance estimate.
///
/// Classical estimates use Student-t with `n - d` degrees of freedom; every
/// other method uses the standard normal.
pub fn coef_table(fit: &FittedOls, ve: &VarianceEstimate, level: f64) -> Result<Vec<CoefRow>> {
    check_level(level)?;
    if ve.cov_beta.nrows() != fit.d() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} covariance for {} coefficients",
            ve.cov_beta.nrows(),
            ve.cov_beta.ncols(),
            fit.d()
        )));
    }
    let reference = Reference::for_estimate(fit, ve);
    let crit = reference.critical(level);
    let se = ve.std_errors();
    Ok(fit
        .design
        .term_names
        .iter()
        .enumerate()
        .map(|(j, term)| {
            let est = fit.beta_hat[j];
            let (statistic, p_value) = if se[j] > 0.0 {
                let t = est / se[j];
                (t, reference.two_sided_p(t))
            } else if est == 0.0 {
                (0.0, 1.0)
            } else {
                (f64::INFINITY.copysign(est), 0.0)
            };
            CoefRow {
                term: term.clone(),
                estimate: est,
                std_error: se[j],
                statistic,
                p_value,
                conf_low: est - crit * se[j],
                conf_high: est + crit * se[j],
                var_type: ve.method,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    #[serde(rename = "p.value")]
    pub p_value: f64,
    #[serde(rename = "var.type")]
    pub var_type: Method,
    #[serde(skip)]
    pub r_matrix: DMatrix<f64>,
    #[serde(skip)]
    pub r_vector: DVector<f64>,
}

/// Number of linearly independent rows of `m`.
fn row_rank(m: &DMatrix<f64>) -> usize {
    let k = m.nrows().min(m.ncols());
    let qr = m.transpose().qr();
    let r = qr.r();
    let max = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    (0..k)
        .filter(|&j| r[(j, j)].abs() > RANK_TOLERANCE * max)
        .count()
}

/// Tests `R beta = r` with `(R beta_hat - r)^T (R C R^T)^{-1} (R beta_hat - r)`
/// against chi-square with `k` degrees of freedom, where `C` is `ve.cov_beta`.
pub fn wald_test(
    fit: &FittedOls,
    ve: &VarianceEstimate,
    r_matrix: &DMatrix<f64>,
    r_vector: &DVector<f64>,
) -> Result<WaldResult> {
    let (k, d) = r_matrix.shape();
    if d != fit.d() || r_vector.len() != k || k == 0 {
        return Err(Error::DimensionMismatch(format!(
            "R is {k}x{d} and r has {} entries for {} coefficients",
            r_vector.len(),
            fit.d()
        )));
    }
    let rank = row_rank(r_matrix);
    if rank < k {
        return Err(Error::RankDeficientR { rank, rows: k });
    }
    let diff = r_matrix * &fit.beta_hat - r_vector;
    let middle = r_matrix * &ve.cov_beta * r_matrix.transpose();
    let middle = (&middle + middle.transpose()) * 0.5;
    let chol = middle.cholesky().ok_or(Error::SingularConstraintCov)?;
    let l = chol.l();
    let max = (0..k).map(|j| l[(j, j)]).fold(0.0, f64::max);
    if (0..k).any(|j| !(l[(j, j)] > 1e-8 * max)) {
        return Err(Error::SingularConstraintCov);
    }
    let statistic = if diff.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        l.solve_lower_triangular(&diff)
            .ok_or(Error::SingularConstraintCov)?
            .norm_squared()
    };
    Ok(WaldResult {
        statistic,
        df: k,
        p_value: chi_square_sf(statistic, k),
        var_type: ve.method,
        r_matrix: r_matrix.clone(),
        r_vector: r_vector.clone(),
    })
}

/// Joint test that every non-intercept coefficient is zero. `None` for an
/// intercept-only model.
pub fn global_wald_test(fit: &FittedOls, ve: &VarianceEstimate) -> Option<Result<WaldResult>> {
    let regs = fit.design.regressor_indices();
    if regs.is_empty() {
        return None;
    }
    let mut r = DMatrix::zeros(regs.len(), fit.d());
    for (row, &j) in regs.iter().enumerate() {
        r[(row, j)] = 1.0;
    }
    Some(wald_test(fit, ve, &r, &DVector::zeros(regs.len())))
}

/// The conditions under which `ve` is valid, followed by a parameter line
/// for resampling methods.
pub fn assumptions_report(ve: &VarianceEstimate) -> Vec<String> {
    let base: &[&str] = match ve.method {
        Method::ClassicalLm => &[
            "linearity",
            "homoscedasticity",
            "normality of errors",
            "independence",
        ],
        Method::ResidualBoot => &["linearity", "homoscedasticity", "independence"],
        Method::Sandwich | Method::EmpiricalBoot | Method::MultiplierBoot => {
            &["independence", "finite moments"]
        }
        Method::Subsampling => &["independence or stationary weak dependence", "m = o(n)"],
    };
    let mut out: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    if ve.method.is_resampling() {
        let p = &ve.params;
        let mut line = format!("parameters: n = {}", p.n);
        if let Some(b) = p.b {
            let _ = write!(line, ", B = {b}");
        }
        if let Some(m) = p.m {
            let _ = write!(line, ", m = {m}");
        }
        if let Some(w) = p.weights_type {
            let _ = write!(line, ", weights = {w}");
        }
        if let Some(s) = p.seed {
            let _ = write!(line, ", seed = {s}");
        }
        out.push(line);
    }
    out
}

/// Fixed-width number formatting for text reports.
pub fn fmt_number(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v.is_infinite() {
        if v > 0.0 { "Inf" } else { "-Inf" }.into()
    } else if v == 0.0 {
        "0".into()
    } else if (1e-4..1e6).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.4e}")
    }
}

fn model_line(fit: &FittedOls) -> String {
    let design = &fit.design;
    let mut terms: Vec<&str> = design.regressor_indices().iter().map(|&j| design.term_names[j].as_str()).collect();
    if terms.is_empty() {
        terms.push("1");
    }
    let mut s = format!("{} ~ {}", design.response, terms.join(" + "));
    if !design.intercept {
        s.push_str(" - 1");
    }
    s
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    out.push_str(line(header.to_vec()).trim_end());
    out.push('\n');
    for r in rows {
        out.push_str(line(r.iter().map(String::as_str).collect()).trim_end());
        out.push('\n');
    }
}

fn header(out: &mut String, fit: &FittedOls, level: f64) {
    let _ = writeln!(out, "Model: {}", model_line(fit));
    let _ = writeln!(
        out,
        "Observations: {}  Coefficients: {}  Confidence level: {}",
        fit.n(),
        fit.d(),
        level
    );
}

fn coef_block(out: &mut String, fit: &FittedOls, ve: &VarianceEstimate, level: f64, assumptions: bool) -> Result<()> {
    let _ = writeln!(out, "\n== {} ({}) ==", ve.method.title(), ve.method);
    if assumptions {
        out.push_str("Assumptions:\n");
        for a in &ve.assumptions {
            let _ = writeln!(out, "  - {a}");
        }
    }
    let rows: Vec<Vec<String>> = coef_table(fit, ve, level)?
        .into_iter()
        .map(|r| {
            vec![
                r.term,
                fmt_number(r.estimate),
                fmt_number(r.std_error),
                fmt_number(r.statistic),
                fmt_number(r.p_value),
                fmt_number(r.conf_low),
                fmt_number(r.conf_high),
            ]
        })
        .collect();
    table(out, &TIDY_COLUMNS[..7], &rows);
    Ok(())
}

/// Coefficient blocks only, one per variance estimate in [`Method::ALL`] order.
pub fn render_coefficients(fit: &FittedOls, ves: &[VarianceEstimate], level: f64) -> Result<String> {
    check_level(level)?;
    let mut ves: Vec<&VarianceEstimate> = ves.iter().collect();
    ves.sort_by_key(|v| v.method);
    let mut out = String::new();
    header(&mut out, fit, level);
    for ve in ves {
        coef_block(&mut out, fit, ve, level, false)?;
    }
    Ok(out)
}

/// Stacked report: one block per variance estimate in [`Method::ALL`] order,
/// each with its assumptions, then the global Wald test under every estimate.
pub fn render_summary(fit: &FittedOls, ves: &[VarianceEstimate], level: f64) -> Result<String> {
    check_level(level)?;
    let mut ves: Vec<&VarianceEstimate> = ves.iter().collect();
    ves.sort_by_key(|v| v.method);

    let mut out = String::new();
    header(&mut out, fit, level);
    for ve in &ves {
        coef_block(&mut out, fit, ve, level, true)?;
    }

    out.push_str("\n== Global Wald test: all non-intercept coefficients equal 0 ==\n");
    let mut rows = Vec::new();
    for ve in &ves {
        let row = match global_wald_test(fit, ve) {
            None => vec![ve.method.to_string(), "NA".into(), "0".into(), "NA".into()],
            Some(Ok(w)) => vec![
                ve.method.to_string(),
                fmt_number(w.statistic),
                w.df.to_string(),
                fmt_number(w.p_value),
            ],
            Some(Err(_)) => vec![
                ve.method.to_string(),
                "NA".into(),
                fit.design.regressor_indices().len().to_string(),
                "NA".into(),
            ],
        };
        rows.push(row);
    }
    table(&mut out, &["var.type", "chi2", "df", "p.value"], &rows);
    Ok(out)
}

/// Tidy rows as CSV with the broom-style header.
pub fn tidy_csv(rows: &[CoefRow]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wtr.serialize(r)?;
    }
    if rows.is_empty() {
        wtr.write_record(TIDY_COLUMNS)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writes utf-8"))
}

pub fn tidy_json(rows: &[CoefRow]) -> Result<String> {
    serde_json::to_string_pretty(rows).map_err(|e| Error::Config(e.to_string()))
}
