//! Smoothing-spline generalized likelihood ratio test for the nullity of the
//! slope function in the functional linear model
//!
//! ```text
//! Y_i = ∫₀¹ β(t) X_i(t) dt + ε_i,   H₀: β ≡ 0.
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`funcgrid`]: functions sampled on a uniform grid over `[0, 1]`, trapezoid
//!   quadrature and the iterated integration operators `T₀^k`, `T₁^k`.
//! * [`design`]: the sample-level objects (boundary matrix, projector, deflated
//!   integrated curves, Gram matrices and their eigensystems).
//! * [`estimator`]: the penalized smoothing-spline estimate of the slope.
//! * [`glrt`]: the likelihood ratio statistic and its normal calibration.
//! * [`lambda_select`]: the data-driven smoothing parameter.
//! * [`simlab`]: simulation designs and the Monte Carlo size/power driver.
//! * [`ingest`], [`report`], [`cli`]: CSV ingestion, report emission and the
//!   `flrt` command line tool.

pub mod cli;
pub mod design;
pub mod error;
pub mod estimator;
pub mod funcgrid;
pub mod glrt;
pub mod ingest;
pub mod lambda_select;
pub mod report;
pub mod simlab;

pub use design::{
    build_design, eig_qhat, eig_qraw, qplus_apply, DesignOperators, EigenSystem, FunctionalSample,
};
pub use error::{FlrtError, Result};
pub use estimator::{fit, rss_pair, SplineFit};
pub use funcgrid::{fourier_basis, inner, integrate, t0_pow, t1_pow, Grid, GridFunction};
pub use glrt::{null_moments, run_test, tau_statistic, Sided, TestResult, TracePath};
pub use lambda_select::{select_lambda, LambdaSelection};
pub use simlab::{power_curve, run_monte_carlo, LambdaRule, SimConfig, SizePowerRow};
