use crate::error::Result;
use crate::ols::{symmetrize, vhat, FittedOls};

use super::{Method, Params, VarianceEstimate};

/// `sigma2_hat (X^T X)^{-1} = n^{-1} sigma2_hat J^{-1}`.
pub fn var_classical(fit: &FittedOls) -> Result<VarianceEstimate> {
    let cov = fit.xtx_inverse() * fit.sigma2_hat;
    Ok(VarianceEstimate::new(
        Method::ClassicalLm,
        symmetrize(cov),
        Params {
            n: fit.n(),
            ..Params::default()
        },
        None,
    ))
}

/// `n^{-1} J^{-1} V J^{-1}`.
pub fn var_sandwich(fit: &FittedOls) -> Result<VarianceEstimate> {
    let j_inv = fit.jhat_inverse();
    let v = vhat(&fit.design, &fit.residuals)?;
    let cov = &j_inv * v * &j_inv / fit.n() as f64;
    Ok(VarianceEstimate::new(
        Method::Sandwich,
        symmetrize(cov),
        Params {
            n: fit.n(),
            ..Params::default()
        },
        None,
    ))
}
