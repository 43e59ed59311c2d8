//! Model-free inference for ordinary least squares.
//!
//! Fits OLS by QR, estimates the covariance of the coefficients with closed
//! forms (classical and sandwich) and resampling schemes (empirical,
//! multiplier and residual bootstrap, subsampling), reports intervals and
//! chi-square Wald tests tagged with the assumptions each estimate needs, and
//! produces kernel-reweighting diagnostics for misspecification.

pub mod diagnostics;
pub mod error;
pub mod formula;
pub mod inference;
pub mod ols;
pub mod plot;
pub mod rng;
pub mod sim;
pub mod special;
pub mod tabular;
pub mod variance;

pub use diagnostics::{
    focal_reweighting_variable_data, focal_slope_data, lm_diag_data, nonlinearity_detection_data,
    qq_data, reweight_all, GridKind, ReweightGrid,
};
pub use error::{Error, Result};
pub use formula::{build_design, parse_formula, DesignMatrix, ModelSpec};
pub use inference::{coef_table, render_coefficients, render_summary, wald_test, CoefRow, WaldResult};
pub use ols::{fit_ols, fit_wls, FittedOls};
pub use plot::{render_svg, PlotSpec};
pub use sim::{coverage_experiment, CoverageRow, SimScenario};
pub use tabular::{read_csv, Dataset};
pub use variance::{comp_var, EstimatorConfig, Method, SampleSize, VarianceEstimate, WeightsType};
