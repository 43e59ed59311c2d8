//! Covariance estimators for the OLS coefficient vector.
//!
//! Two closed forms are always available: the classical well-specified
//! `sigma^2 (X^T X)^{-1}` and the sandwich `n^{-1} J^{-1} V J^{-1}`, which
//! needs only independent observations with finite moments. Four resampling
//! estimators (empirical m-out-of-n bootstrap, multiplier bootstrap, residual
//! bootstrap, subsampling) can be requested on top of them.
//!
//! Every estimate is scaled to estimate `Var(beta_hat)` directly, so standard
//! errors are always `sqrt(diag(cov_beta))`.

mod closed_form;
mod resampling;
mod weights;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::assumptions_report;
use crate::ols::FittedOls;

pub use closed_form::{var_classical, var_sandwich};
pub use resampling::{
    replicate_covariance, var_empirical_boot, var_multiplier_boot, var_residual_boot,
    var_subsampling, MAX_REDRAWS,
};
pub use weights::{sample_weights, WeightsType};

pub const DEFAULT_B: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClassicalLm,
    Sandwich,
    EmpiricalBoot,
    MultiplierBoot,
    ResidualBoot,
    Subsampling,
}

impl Method {
    /// Reporting order.
    pub const ALL: [Method; 6] = [
        Method::ClassicalLm,
        Method::Sandwich,
        Method::EmpiricalBoot,
        Method::MultiplierBoot,
        Method::ResidualBoot,
        Method::Subsampling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClassicalLm => "classical_lm",
            Method::Sandwich => "sandwich",
            Method::EmpiricalBoot => "empirical_boot",
            Method::MultiplierBoot => "multiplier_boot",
            Method::ResidualBoot => "residual_boot",
            Method::Subsampling => "subsampling",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Method::ClassicalLm => "Well-specified linear model",
            Method::Sandwich => "Sandwich",
            Method::EmpiricalBoot => "Empirical bootstrap",
            Method::MultiplierBoot => "Multiplier bootstrap",
            Method::ResidualBoot => "Residual bootstrap",
            Method::Subsampling => "Subsampling",
        }
    }

    pub fn is_resampling(self) -> bool {
        !matches!(self, Method::ClassicalLm | Method::Sandwich)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variance method {s:?}")))
    }
}

/// Tuning parameters recorded with an estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Params {
    pub n: usize,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights_type: Option<WeightsType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Rank-deficient resamples that were discarded and redrawn.
    pub redraws: usize,
}

#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    pub method: Method,
    /// Estimated `Var(beta_hat)`, `d x d`.
    pub cov_beta: DMatrix<f64>,
    pub assumptions: Vec<String>,
    pub params: Params,
    /// `B x d` matrix of replicate coefficient vectors, resampling methods only.
    pub replicates: Option<DMatrix<f64>>,
}

impl VarianceEstimate {
    pub(crate) fn new(
        method: Method,
        cov_beta: DMatrix<f64>,
        params: Params,
        replicates: Option<DMatrix<f64>>,
    ) -> Self {
        let mut ve = Self {
            method,
            cov_beta,
            assumptions: Vec::new(),
            params,
            replicates,
        };
        ve.assumptions = assumptions_report(&ve);
        ve
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.cov_beta.nrows())
            .map(|j| self.cov_beta[(j, j)].max(0.0).sqrt())
            .collect()
    }

    /// The same estimate restricted to the first `b` replicates.
    ///
    /// Replicates come from per-index random streams, so this equals a fresh
    /// run with `B = b` and the same seed.
    pub fn truncated(&self, b: usize) -> Result<Self> {
        let reps = self
            .replicates
            .as_ref()
            .ok_or(Error::NoReplicates(self.method))?;
        if b < 2 || b > reps.nrows() {
            return Err(Error::TooFewReplicates {
                method: self.method,
                min: 2,
                got: b,
            });
        }
        let head = reps.rows(0, b).into_owned();
        let scale = match (self.method, self.params.m) {
            (Method::EmpiricalBoot | Method::Subsampling, Some(m)) => {
                m as f64 / self.params.n as f64
            }
            _ => 1.0,
        };
        let cov = replicate_covariance(&head) * scale;
        let params = Params {
            b: Some(b),
            ..self.params.clone()
        };
        Ok(Self::new(self.method, cov, params, Some(head)))
    }
}

/// Resample size: a fixed count or the number of rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSize {
    Rows(usize),
    All(AllRows),
}

/// The literal `"n"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllRows {
    #[serde(rename = "n")]
    N,
}

impl SampleSize {
    pub const N: SampleSize = SampleSize::All(AllRows::N);

    pub fn resolve(self, n: usize) -> usize {
        match self {
            SampleSize::Rows(m) => m,
            SampleSize::All(_) => n,
        }
    }
}

impl FromStr for SampleSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "n" {
            return Ok(SampleSize::N);
        }
        s.parse()
            .map(SampleSize::Rows)
            .map_err(|_| Error::Config(format!("m must be a count or \"n\", got {s:?}")))
    }
}

/// One requested resampling estimator. Mirrors the JSON job schema
/// `{method, B, m, weights_type, seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub method: Method,
    #[serde(rename = "B", default)]
    pub b: Option<usize>,
    #[serde(default)]
    pub m: Option<SampleSize>,
    #[serde(default)]
    pub weights_type: Option<WeightsType>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl EstimatorConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            b: None,
            m: None,
            weights_type: None,
            seed: None,
        }
    }

    pub fn with_b(mut self, b: usize) -> Self {
        self.b = Some(b);
        self
    }

    pub fn with_m(mut self, m: SampleSize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn with_weights(mut self, w: WeightsType) -> Self {
        self.weights_type = Some(w);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn run(&self, fit: &FittedOls) -> Result<VarianceEstimate> {
        let b = self.b.unwrap_or(DEFAULT_B);
        let seed = self.seed.unwrap_or(0);
        let m = self.m.unwrap_or(SampleSize::N).resolve(fit.n());
        match self.method {
            Method::EmpiricalBoot => var_empirical_boot(fit, b, m, seed),
            Method::MultiplierBoot => {
                var_multiplier_boot(fit, b, self.weights_type.unwrap_or_default(), seed)
            }
            Method::ResidualBoot => var_residual_boot(fit, b, seed),
            Method::Subsampling => var_subsampling(fit, b, m, seed),
            other => Err(Error::NotResampling(other)),
        }
    }
}

/// Classical and sandwich estimates plus one estimate per request, in
/// [`Method::ALL`] order.
pub fn comp_var(fit: &FittedOls, requests: &[EstimatorConfig]) -> Result<Vec<VarianceEstimate>> {
    let mut seen = Vec::new();
    for r in requests {
        if !r.method.is_resampling() {
            return Err(Error::NotResampling(r.method));
        }
        if seen.contains(&r.method) {
            return Err(Error::DuplicateMethod(r.method));
        }
        seen.push(r.method);
    }
    let mut out = vec![var_classical(fit)?, var_sandwich(fit)?];
    let mut sorted: Vec<&EstimatorConfig> = requests.iter().collect();
    sorted.sort_by_key(|r| r.method);
    for r in sorted {
        out.push(r.run(fit)?);
    }
    Ok(out)
}
