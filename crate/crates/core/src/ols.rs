//! Ordinary and weighted least squares via Householder QR.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::formula::DesignMatrix;

/// A diagonal entry of R below this fraction of the largest one marks the
/// corresponding column as linearly dependent on the columns before it.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Thin QR factorization of a full-column-rank matrix, reduced to what the
/// estimators need: the `d x d` upper-triangular factor.
#[derive(Debug, Clone)]
pub struct QrFactor {
    r: DMatrix<f64>,
}

impl QrFactor {
    /// Factors `x` and solves the least-squares problem for `y`.
    ///
    /// On rank deficiency returns the 0-based index of the first dependent column.
    pub fn solve(x: DMatrix<f64>, y: &DVector<f64>) -> std::result::Result<(Self, DVector<f64>), usize> {
        let d = x.ncols();
        let qr = x.qr();
        let r = qr.r();
        let max = (0..d).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
        if let Some(j) = (0..d).find(|&j| !(r[(j, j)].abs() > RANK_TOLERANCE * max)) {
            return Err(j);
        }
        let mut qty = y.clone();
        qr.q_tr_mul(&mut qty);
        let beta = r
            .solve_upper_triangular(&qty.rows(0, d).into_owned())
            .ok_or(0usize)?;
        Ok((Self { r }, beta))
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// `(X^T X)^{-1} = R^{-1} R^{-T}`.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        let d = self.r.ncols();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(d, d))
            .expect("R has a nonzero diagonal");
        let inv = &r_inv * r_inv.transpose();
        symmetrize(inv)
    }

    /// Squared norms of the rows of `Q = X R^{-1}`, i.e. the hat-matrix diagonal.
    pub fn hat_diagonal(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let rt = self.r.transpose();
        let mut out = DVector::zeros(x.nrows());
        for i in 0..x.nrows() {
            let row = x.row(i).transpose();
            let q = rt
                .solve_lower_triangular(&row)
                .expect("R has a nonzero diagonal");
            out[i] = q.norm_squared();
        }
        out
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Least-squares coefficients only; the fast path for resampling refits.
pub fn solve_coefficients(x: DMatrix<f64>, y: &DVector<f64>) -> std::result::Result<DVector<f64>, usize> {
    if x.nrows() < x.ncols() {
        return Err(x.nrows());
    }
    QrFactor::solve(x, y).map(|(_, beta)| beta)
}

/// Rows of `(x, y)` multiplied by `sqrt(w_i)`.
fn scale_rows(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let mut xs = x.clone();
    let mut ys = y.clone();
    for (i, mut row) in xs.row_iter_mut().enumerate() {
        let s = w[i].sqrt();
        row *= s;
        ys[i] *= s;
    }
    (xs, ys)
}

/// Weighted least-squares coefficients only. Same arithmetic as [`fit_wls`].
pub fn wls_coefficients(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
) -> std::result::Result<DVector<f64>, usize> {
    let (xs, ys) = scale_rows(x, y, w);
    solve_coefficients(xs, &ys)
}

/// A least-squares fit and the pieces every variance estimator reuses.
#[derive(Debug, Clone)]
pub struct FittedOls {
    pub design: DesignMatrix,
    pub beta_hat: DVector<f64>,
    /// `y - X beta_hat`, unweighted.
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
    /// Weighted RSS over `n - d`.
    pub sigma2_hat: f64,
    /// `n^{-1} sum w_i x_i x_i^T` (unit weights for OLS).
    pub jhat: DMatrix<f64>,
    pub weights: Option<DVector<f64>>,
    factor: QrFactor,
}

impl FittedOls {
    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn d(&self) -> usize {
        self.design.d()
    }

    pub fn factor(&self) -> &QrFactor {
        &self.factor
    }

    /// `(X^T W X)^{-1}`.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        self.factor.xtx_inverse()
    }

    /// `J-hat^{-1} = n (X^T X)^{-1}`.
    pub fn jhat_inverse(&self) -> DMatrix<f64> {
        self.xtx_inverse() * self.n() as f64
    }

    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }

    /// Residuals are rounding noise: `RSS <= (1e-10 ||y||)^2`.
    pub fn is_perfect(&self) -> bool {
        self.rss() <= 1e-20 * self.design.y.norm_squared()
    }
}

fn rank_error(design: &DesignMatrix, column: usize) -> Error {
    Error::RankDeficient {
        column,
        name: design
            .term_names
            .get(column)
            .cloned()
            .unwrap_or_default(),
    }
}

pub fn fit_ols(design: &DesignMatrix) -> Result<FittedOls> {
    fit_impl(design, None)
}

/// Minimizes `sum w_i (y_i - x_i^T theta)^2` by scaling rows with `sqrt(w_i)`.
pub fn fit_wls(design: &DesignMatrix, weights: &[f64]) -> Result<FittedOls> {
    if weights.len() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} rows",
            weights.len(),
            design.n()
        )));
    }
    if let Some((row, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(**w >= 0.0) || !w.is_finite())
    {
        return Err(Error::NegativeWeight { row, value });
    }
    fit_impl(design, Some(DVector::from_column_slice(weights)))
}

fn fit_impl(design: &DesignMatrix, weights: Option<DVector<f64>>) -> Result<FittedOls> {
    let (n, d) = (design.n(), design.d());
    if n <= d {
        return Err(Error::TooFewRows { n, d });
    }
    let (xs, ys) = match &weights {
        None => (design.x.clone(), design.y.clone()),
        Some(w) => scale_rows(&design.x, &design.y, w.as_slice()),
    };
    let jhat = symmetrize(xs.tr_mul(&xs) / n as f64);
    let (factor, beta_hat) = QrFactor::solve(xs, &ys).map_err(|j| rank_error(design, j))?;
    let fitted = &design.x * &beta_hat;
    let residuals = &design.y - &fitted;
    let wrss = match &weights {
        None => residuals.norm_squared(),
        Some(w) => residuals.iter().zip(w.iter()).map(|(e, w)| w * e * e).sum(),
    };
    Ok(FittedOls {
        design: design.clone(),
        beta_hat,
        residuals,
        fitted,
        sigma2_hat: wrss / (n - d) as f64,
        jhat,
        weights,
        factor,
    })
}

/// `n^{-1} sum x_i x_i^T`.
pub fn jhat(design: &DesignMatrix) -> DMatrix<f64> {
    symmetrize(design.x.tr_mul(&design.x) / design.n() as f64)
}

/// `n^{-1} sum x_i x_i^T e_i^2`.
pub fn vhat(design: &DesignMatrix, residuals: &DVector<f64>) -> Result<DMatrix<f64>> {
    if residuals.len() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals for {} rows",
            residuals.len(),
            design.n()
        )));
    }
    let mut scores = design.x.clone();
    for (i, mut row) in scores.row_iter_mut().enumerate() {
        row *= residuals[i];
    }
    Ok(symmetrize(scores.tr_mul(&scores) / design.n() as f64))
}

#[derive(Debug, Clone)]
pub struct Influence {
    pub leverage: DVector<f64>,
    /// `None` where the leverage is one.
    pub std_residuals: Vec<Option<f64>>,
    pub cooks: Vec<Option<f64>>,
}

pub fn leverage_and_cooks(fit: &FittedOls) -> Result<Influence> {
    if fit.sigma2_hat <= 0.0 || fit.is_perfect() {
        return Err(Error::DegenerateFit);
    }
    let leverage = fit.factor.hat_diagonal(&fit.design.x);
    let sigma = fit.sigma2_hat.sqrt();
    let d = fit.d() as f64;
    let mut std_residuals = Vec::with_capacity(fit.n());
    let mut cooks = Vec::with_capacity(fit.n());
    for (h, e) in leverage.iter().zip(fit.residuals.iter()) {
        if 1.0 - h <= 1e-12 {
            std_residuals.push(None);
            cooks.push(None);
        } else {
            let r = e / (sigma * (1.0 - h).sqrt());
            std_residuals.push(Some(r));
            cooks.push(Some(r * r * h / (d * (1.0 - h))));
        }
    }
    Ok(Influence {
        leverage,
        std_residuals,
        cooks,
    })
}
