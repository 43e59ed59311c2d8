use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ols::{solve_coefficients, symmetrize, FittedOls};
use crate::rng::{substream, Domain};

use super::weights::fill_weights;
use super::{Method, Params, VarianceEstimate, WeightsType};

/// A rank-deficient resample is discarded and redrawn at most this many times.
pub const MAX_REDRAWS: usize = 100;

/// Sample covariance of the rows of `reps`, centred at their mean, denominator `B - 1`.
pub fn replicate_covariance(reps: &DMatrix<f64>) -> DMatrix<f64> {
    let b = reps.nrows();
    let mean = reps.row_mean();
    let mut centred = reps.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    symmetrize(centred.tr_mul(&centred) / (b as f64 - 1.0))
}

fn check_b(method: Method, b: usize) -> Result<()> {
    if b < 2 {
        return Err(Error::TooFewReplicates { method, min: 2, got: b });
    }
    Ok(())
}

fn stack(rows: Vec<DVector<f64>>, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), d);
    for (i, r) in rows.into_iter().enumerate() {
        out.row_mut(i).copy_from(&r.transpose());
    }
    out
}

/// Runs one refit per replicate in parallel. `draw` picks the row indices;
/// rank-deficient draws are retried from the same stream.
fn refit_rows<F>(
    fit: &FittedOls,
    method: Method,
    domain: Domain,
    b: usize,
    seed: u64,
    draw: F,
) -> Result<(DMatrix<f64>, usize)>
where
    F: Fn(&mut ChaCha8Rng) -> Vec<usize> + Sync,
{
    let design = &fit.design;
    let results: Vec<Result<(DVector<f64>, usize)>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, domain, rep as u64);
            for attempt in 0..=MAX_REDRAWS {
                let idx = draw(&mut rng);
                let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| design.y[i]));
                if let Ok(beta) = solve_coefficients(design.x.select_rows(&idx), &y) {
                    return Ok((beta, attempt));
                }
            }
            Err(Error::RankDeficientReplicate {
                method,
                replicate: rep,
                attempts: MAX_REDRAWS + 1,
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(b);
    let mut redraws = 0;
    for r in results {
        let (beta, extra) = r?;
        redraws += extra;
        rows.push(beta);
    }
    Ok((stack(rows, fit.d()), redraws))
}

/// m-out-of-n empirical bootstrap: resample `m` rows with replacement and refit.
///
/// `m / (B - 1) * sum (beta*_b - mean)(beta*_b - mean)^T` estimates the
/// asymptotic variance; dividing by `n` gives `cov_beta`.
pub fn var_empirical_boot(fit: &FittedOls, b: usize, m: usize, seed: u64) -> Result<VarianceEstimate> {
    let method = Method::EmpiricalBoot;
    check_b(method, b)?;
    if m == 0 {
        return Err(Error::MTooSmall { m, d: fit.d() });
    }
    let n = fit.n();
    let (reps, redraws) = refit_rows(fit, method, Domain::EmpiricalBoot, b, seed, |rng| {
        (0..m).map(|_| rng.random_range(0..n)).collect()
    })?;
    let cov = replicate_covariance(&reps) * (m as f64 / n as f64);
    let params = Params {
        n,
        b: Some(b),
        m: Some(m),
        seed: Some(seed),
        redraws,
        ..Params::default()
    };
    Ok(VarianceEstimate::new(method, cov, params, Some(reps)))
}

/// Subsampling: `m < n` distinct rows per replicate; `cov_beta = (m / n) * sample covariance`.
pub fn var_subsampling(fit: &FittedOls, b: usize, m: usize, seed: u64) -> Result<VarianceEstimate> {
    let method = Method::Subsampling;
    check_b(method, b)?;
    let (n, d) = (fit.n(), fit.d());
    if m >= n {
        return Err(Error::MTooLarge { m, n });
    }
    if m < d {
        return Err(Error::MTooSmall { m, d });
    }
    let (reps, redraws) = refit_rows(fit, method, Domain::Subsampling, b, seed, |rng| {
        index::sample(rng, n, m).into_vec()
    })?;
    let cov = replicate_covariance(&reps) * (m as f64 / n as f64);
    let params = Params {
        n,
        b: Some(b),
        m: Some(m),
        seed: Some(seed),
        redraws,
        ..Params::default()
    };
    Ok(VarianceEstimate::new(method, cov, params, Some(reps)))
}

/// Multiplier bootstrap:
/// `beta*_b = beta_hat + n^{-1} sum_i w_ib J^{-1} x_i e_i`, no refitting.
///
/// For unit-variance weights `Var(beta*_b | data) = n^{-1} J^{-1} V J^{-1}`,
/// so the replicate covariance estimates `Var(beta_hat)` without rescaling.
pub fn var_multiplier_boot(
    fit: &FittedOls,
    b: usize,
    weights_type: WeightsType,
    seed: u64,
) -> Result<VarianceEstimate> {
    let method = Method::MultiplierBoot;
    check_b(method, b)?;
    let (n, d) = (fit.n(), fit.d());
    let xtx_inv = fit.xtx_inverse();
    let mut scores = fit.design.x.clone();
    for (i, mut row) in scores.row_iter_mut().enumerate() {
        row *= fit.residuals[i];
    }
    let rows: Vec<DVector<f64>> = (0..b)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |w, rep| {
                let mut rng = substream(seed, Domain::MultiplierBoot, rep as u64);
                fill_weights(weights_type, w, &mut rng);
                let s = scores.tr_mul(&DVector::from_column_slice(w));
                &fit.beta_hat + &xtx_inv * s
            },
        )
        .collect();
    let reps = stack(rows, d);
    let cov = replicate_covariance(&reps);
    let params = Params {
        n,
        b: Some(b),
        weights_type: Some(weights_type),
        seed: Some(seed),
        ..Params::default()
    };
    Ok(VarianceEstimate::new(method, cov, params, Some(reps)))
}

/// Residual bootstrap: `y* = X beta_hat + e*` with `e*` drawn from the
/// residuals, refit on the fixed design. Targets `n^{-1} sum e_i^2 (X^T X)^{-1}`.
pub fn var_residual_boot(fit: &FittedOls, b: usize, seed: u64) -> Result<VarianceEstimate> {
    let method = Method::ResidualBoot;
    check_b(method, b)?;
    let (n, d) = (fit.n(), fit.d());
    let x = &fit.design.x;
    let rows: Vec<Result<DVector<f64>>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, Domain::ResidualBoot, rep as u64);
            let y = DVector::from_fn(n, |i, _| fit.fitted[i] + fit.residuals[rng.random_range(0..n)]);
            solve_coefficients(x.clone(), &y).map_err(|column| Error::RankDeficient {
                column,
                name: fit.design.term_names[column.min(d - 1)].clone(),
            })
        })
        .collect();
    let reps = stack(rows.into_iter().collect::<Result<_>>()?, d);
    let cov = replicate_covariance(&reps);
    let params = Params {
        n,
        b: Some(b),
        seed: Some(seed),
        ..Params::default()
    };
    Ok(VarianceEstimate::new(method, cov, params, Some(reps)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ols::fit_ols;
    use crate::ols::tests::design;
    use crate::rng::{substream, Domain};
    use crate::variance::var_sandwich;
    use approx::assert_relative_eq;

    fn hetero_fit(n: usize) -> FittedOls {
        let mut rng = substream(99, Domain::SimData, 0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 1.0 + 2.0 * v + v.abs() * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        fit_ols(&design(&y, &[&x], true)).unwrap()
    }

    fn exact_fit() -> FittedOls {
        let x: Vec<f64> = (0..30).map(|i| (i as f64).sqrt()).collect();
        let y = vec![0.0; 30];
        fit_ols(&design(&y, &[&x], true)).unwrap()
    }

    #[test]
    fn zero_residuals_give_zero_covariance() {
        let fit = exact_fit();
        let zero = DMatrix::zeros(2, 2);
        let emp = var_empirical_boot(&fit, 20, 30, 1).unwrap();
        assert!(emp.cov_beta.amax() < 1e-28);
        assert_eq!(var_multiplier_boot(&fit, 20, WeightsType::Gaussian, 1).unwrap().cov_beta, zero);
        assert_eq!(var_residual_boot(&fit, 20, 1).unwrap().cov_beta, zero);
        assert!(var_subsampling(&fit, 20, 29, 1).unwrap().cov_beta.amax() < 1e-28);
    }

    #[test]
    fn subsample_bounds() {
        let fit = exact_fit();
        assert!(matches!(var_subsampling(&fit, 20, 30, 1), Err(Error::MTooLarge { m: 30, n: 30 })));
        assert!(matches!(var_subsampling(&fit, 20, 1, 1), Err(Error::MTooSmall { .. })));
        assert!(matches!(var_empirical_boot(&fit, 1, 30, 1), Err(Error::TooFewReplicates { .. })));
    }

    #[test]
    fn subsample_indices_are_distinct() {
        for rep in 0..50 {
            let mut rng = substream(3, Domain::Subsampling, rep);
            let mut idx = index::sample(&mut rng, 40, 25).into_vec();
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 25);
        }
    }

    #[test]
    fn hopeless_resamples_abort() {
        // Only one row has a nonzero regressor, so almost every resample of
        // two rows loses rank.
        let x = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let y = [1.0, 2.0, 0.0, 1.0, 2.0, 1.0, 0.5, 0.3, 0.2, 4.0];
        let fit = fit_ols(&design(&y, &[&x], true)).unwrap();
        let err = var_empirical_boot(&fit, 50, 1, 4).unwrap_err();
        assert!(matches!(err, Error::RankDeficientReplicate { attempts: 101, .. }), "{err}");
        let ok = var_empirical_boot(&fit, 50, 10, 4).unwrap();
        assert!(ok.params.redraws > 0);
    }

    #[test]
    fn seeded_runs_are_identical_across_pools() {
        let fit = hetero_fit(120);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    [
                        var_empirical_boot(&fit, 64, 120, 5).unwrap(),
                        var_multiplier_boot(&fit, 64, WeightsType::Webb, 5).unwrap(),
                        var_residual_boot(&fit, 64, 5).unwrap(),
                        var_subsampling(&fit, 64, 40, 5).unwrap(),
                    ]
                })
        };
        let (a, b) = (run(1), run(8));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.replicates, y.replicates);
            assert_eq!(x.cov_beta, y.cov_beta);
        }
    }

    #[test]
    fn resampling_scale_equivariance() {
        let fit = hetero_fit(80);
        let scaled = fit_ols(&fit.design.with_response(&fit.design.y * 2.5)).unwrap();
        let pairs = [
            (var_empirical_boot(&fit, 50, 80, 2).unwrap(), var_empirical_boot(&scaled, 50, 80, 2).unwrap()),
            (
                var_multiplier_boot(&fit, 50, WeightsType::Mammen, 2).unwrap(),
                var_multiplier_boot(&scaled, 50, WeightsType::Mammen, 2).unwrap(),
            ),
            (var_residual_boot(&fit, 50, 2).unwrap(), var_residual_boot(&scaled, 50, 2).unwrap()),
            (var_subsampling(&fit, 50, 30, 2).unwrap(), var_subsampling(&scaled, 50, 30, 2).unwrap()),
        ];
        for (a, b) in pairs {
            assert_relative_eq!(a.cov_beta * 6.25, b.cov_beta, max_relative = 1e-9);
        }
    }

    #[test]
    fn multiplier_tracks_sandwich() {
        let fit = hetero_fit(500);
        let sand = var_sandwich(&fit).unwrap().cov_beta;
        let mul = var_multiplier_boot(&fit, 5000, WeightsType::Gaussian, 17).unwrap().cov_beta;
        assert!((&mul - &sand).norm() / sand.norm() < 0.10);
    }
}
