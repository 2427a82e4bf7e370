//! Generalized likelihood ratio statistic and its normal calibration.
//!
//! `τ = (n/2) ln(RSS₀/RSS₁)` is compared with the null mean and variance
//! `μ_n = tr(A_n)`, `σ_n² = 2 tr(A_n²)`. The eigen path evaluates both traces in
//! closed form from the spectrum of `Q̂`; the dense path assembles the `n × n`
//! matrix `A_n` by quadrature and is kept for cross-checking.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::design::{DesignOperators, EigenSystem};
use crate::error::{FlrtError, Result};
use crate::estimator::{fit, rss_pair};
use crate::funcgrid::weighted_gram;

/// Residual ratios below this are reported as a perfect fit.
const PERFECT_FIT: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sided {
    One,
    #[default]
    Two,
}

impl fmt::Display for Sided {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sided::One => "one",
            Sided::Two => "two",
        })
    }
}

impl FromStr for Sided {
    type Err = FlrtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Sided::One),
            "two" => Ok(Sided::Two),
            other => Err(FlrtError::InvalidInput(format!(
                "sidedness must be `one` or `two`, got `{other}`"
            ))),
        }
    }
}

/// Which computation produced `μ_n` and `σ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TracePath {
    #[default]
    Eigen,
    Dense,
}

impl fmt::Display for TracePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TracePath::Eigen => "eigen",
            TracePath::Dense => "dense",
        })
    }
}

impl FromStr for TracePath {
    type Err = FlrtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eigen" => Ok(TracePath::Eigen),
            "dense" => Ok(TracePath::Dense),
            other => Err(FlrtError::InvalidInput(format!("unknown trace path `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub tau: f64,
    pub mu_n: f64,
    pub sigma_n: f64,
    pub z: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub sided: Sided,
    pub reject: bool,
    pub lambda: f64,
    pub trace_path: TracePath,
    pub rss0: f64,
    pub rss1: f64,
    /// Set when `RSS₁` vanished and `τ` is infinite.
    pub perfect_fit: bool,
}

/// `(n/2) ln(rss0/rss1)`; `+∞` for a perfect fit.
pub fn tau_statistic(rss0: f64, rss1: f64, n: usize) -> Result<f64> {
    if !(rss0.is_finite() && rss1.is_finite()) || rss1 < 0.0 {
        return Err(FlrtError::Numeric(format!(
            "invalid residual sums of squares ({rss0}, {rss1})"
        )));
    }
    if rss0 <= 0.0 {
        return Err(FlrtError::DegenerateResponse);
    }
    if rss1 > rss0 * (1.0 + 1e-12) {
        return Err(FlrtError::Numeric(format!(
            "alternative fit is worse than the null: rss1 = {rss1:e} > rss0 = {rss0:e}"
        )));
    }
    if rss1 <= PERFECT_FIT * rss0 {
        return Ok(f64::INFINITY);
    }
    Ok(0.5 * n as f64 * (rss0 / rss1).ln())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(FlrtError::InvalidInput(format!(
            "smoothing parameter must be positive and finite, got {lambda}"
        )))
    }
}

/// `(μ_n, σ_n²)` from the spectrum of `Q̂`:
/// `μ_n = Σ κ(λ+κ/2)/(λ+κ)² + m/2`,
/// `σ_n² = 2[Σ κ²(2λ+κ)²/(4(λ+κ)⁴) + m/4]`.
pub fn null_moments(eigs: &EigenSystem, lambda: f64, m: usize) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    let mf = m as f64;
    let mut tr = 0.0;
    let mut tr2 = 0.0;
    for &k in eigs.kappa() {
        let d = lambda + k;
        tr += k * (lambda + 0.5 * k) / (d * d);
        let a = k * (2.0 * lambda + k) / (2.0 * d * d);
        tr2 += a * a;
    }
    Ok((tr + 0.5 * mf, 2.0 * (tr2 + 0.25 * mf)))
}

/// Traces of the explicitly assembled `A_n = A_I + B̂/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseTraces {
    pub trace: f64,
    pub trace_sq: f64,
    /// `tr(A_I B̂)`, zero in exact arithmetic.
    pub cross: f64,
}

impl DenseTraces {
    pub fn moments(&self) -> (f64, f64) {
        (self.trace, 2.0 * self.trace_sq)
    }
}

/// `A_I = n⁻¹ ∫ Û Q̂⁺ Ûᵀ − (2n)⁻¹ ∫∫ Q̂⁺Û(t) Q̂(t,s) Q̂⁺Û(s)ᵀ`, with `Q̂⁺`
/// discretized as a `p × p` operator on the grid.
pub fn dense_a_matrix(design: &DesignOperators, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    let n = design.n() as f64;
    let w = design.grid().weights();
    let u = design.u();
    let p = w.len();
    // Q̂ acting on grid functions: (Q̂f)(t_a) = n⁻¹ Σ_b Σ_i Û_i(t_a) Û_i(t_b) w_b f(t_b)
    let mut qd = u.tr_mul(u) / n;
    for (b, wb) in w.iter().enumerate() {
        qd.column_mut(b).scale_mut(*wb);
    }
    let mut sys = qd.clone();
    for a in 0..p {
        sys[(a, a)] += lambda;
    }
    let qu = sys
        .lu()
        .solve(&u.transpose())
        .ok_or_else(|| FlrtError::Numeric("dense (λI + Q̂) is singular".into()))?;
    let first = weighted_gram(u, &qu.transpose(), w) / n;
    let qqu = &qd * &qu;
    let second = weighted_gram(&qu.transpose(), &qqu.transpose(), w) / (2.0 * n);
    Ok(first - second)
}

/// Traces of `A_n` from [`dense_a_matrix`].
pub fn dense_traces(design: &DesignOperators, lambda: f64) -> Result<DenseTraces> {
    let ai = dense_a_matrix(design, lambda)?;
    let b = design.bhat();
    let a = &ai + b * 0.5;
    Ok(DenseTraces {
        trace: a.trace(),
        trace_sq: (&a * &a).trace(),
        cross: (&ai * b).trace(),
    })
}

fn p_value(z: f64, sided: Sided) -> f64 {
    let normal = Normal::standard();
    match sided {
        Sided::One => normal.sf(z),
        Sided::Two => (2.0 * normal.sf(z.abs())).min(1.0),
    }
}

/// Critical value `z_α` (one-sided) or `z_{α/2}` (two-sided).
pub fn critical_value(alpha: f64, sided: Sided) -> f64 {
    let normal = Normal::standard();
    let tail = match sided {
        Sided::One => alpha,
        Sided::Two => 0.5 * alpha,
    };
    let z = normal.inverse_cdf(1.0 - tail);
    // one Newton step on sf(z) = tail
    z + (normal.sf(z) - tail) / normal.pdf(z)
}

/// Decision for a given standardized statistic.
pub fn decide(z: f64, alpha: f64, sided: Sided) -> (f64, bool) {
    let p = p_value(z, sided);
    (p, p <= alpha)
}

/// Fits the spline, forms `τ`, and calibrates it with eigen-path moments.
pub fn run_test(
    design: &DesignOperators,
    eigs: &EigenSystem,
    y: &[f64],
    lambda: f64,
    alpha: f64,
    sided: Sided,
) -> Result<TestResult> {
    run_test_with(design, eigs, y, lambda, alpha, sided, TracePath::Eigen)
}

pub fn run_test_with(
    design: &DesignOperators,
    eigs: &EigenSystem,
    y: &[f64],
    lambda: f64,
    alpha: f64,
    sided: Sided,
    trace_path: TracePath,
) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FlrtError::InvalidInput(format!(
            "alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    let spline = fit(design, eigs, y, lambda)?;
    let (rss0, rss1) = rss_pair(&spline);
    let tau = tau_statistic(rss0, rss1, design.n())?;
    let (mu_n, sigma2) = match trace_path {
        TracePath::Eigen => null_moments(eigs, lambda, design.m())?,
        TracePath::Dense => dense_traces(design, lambda)?.moments(),
    };
    let sigma_n = sigma2.sqrt();
    if tau.is_infinite() {
        return Ok(TestResult {
            tau,
            mu_n,
            sigma_n,
            z: f64::INFINITY,
            p_value: 0.0,
            alpha,
            sided,
            reject: true,
            lambda,
            trace_path,
            rss0,
            rss1,
            perfect_fit: true,
        });
    }
    let z = (tau - mu_n) / sigma_n;
    let (p_value, reject) = decide(z, alpha, sided);
    Ok(TestResult {
        tau,
        mu_n,
        sigma_n,
        z,
        p_value,
        alpha,
        sided,
        reject,
        lambda,
        trace_path,
        rss0,
        rss1,
        perfect_fit: false,
    })
}
