//! Data-driven smoothing parameter
//! `λ̃ = argmin_λ  λ + n⁻¹ Σ_k κ̃_k/(√λ + κ̃_k)`,
//! where `κ̃` is the spectrum of `T₀^m Γ̂ T₁^m`.

use crate::design::EigenSystem;
use crate::error::{FlrtError, Result};

pub const GRID_LO: f64 = 1e-12;
pub const GRID_HI: f64 = 1.0;
const GRID_POINTS: usize = 400;
const REL_WIDTH: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSelection {
    pub lambda_tilde: f64,
    pub objective_value: f64,
    /// `|n⁻¹ Σ κ̃/(√λ̃+κ̃)² − 2√λ̃|`
    pub stationarity_residual: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub at_boundary: bool,
}

/// `J(λ) = λ + n⁻¹ Σ κ̃_k/(√λ + κ̃_k)`.
pub fn objective(kappa: &[f64], n: usize, lambda: f64) -> f64 {
    let s = lambda.sqrt();
    lambda + kappa.iter().map(|k| k / (s + k)).sum::<f64>() / n as f64
}

/// `|n⁻¹ Σ κ̃/(√λ+κ̃)² − 2√λ|`, the first-order condition in `√λ`.
pub fn stationarity_residual(kappa: &[f64], n: usize, lambda: f64) -> f64 {
    let s = lambda.sqrt();
    let lhs = kappa.iter().map(|k| k / ((s + k) * (s + k))).sum::<f64>() / n as f64;
    (lhs - 2.0 * s).abs()
}

/// The `400`-point logarithmic search grid on `[1e-12, 1]`.
pub fn search_grid() -> Vec<f64> {
    let (a, b) = (GRID_LO.ln(), GRID_HI.ln());
    (0..GRID_POINTS)
        .map(|i| {
            if i + 1 == GRID_POINTS {
                GRID_HI
            } else if i == 0 {
                GRID_LO
            } else {
                (a + (b - a) * i as f64 / (GRID_POINTS - 1) as f64).exp()
            }
        })
        .collect()
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > REL_WIDTH {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimizes `J` over `[1e-12, 1]` for the spectrum of `eigs_raw`.
pub fn select_lambda(eigs_raw: &EigenSystem, n: usize) -> Result<LambdaSelection> {
    select_lambda_from_spectrum(eigs_raw.kappa(), n)
}

/// [`select_lambda`] on a bare spectrum.
pub fn select_lambda_from_spectrum(kappa: &[f64], n: usize) -> Result<LambdaSelection> {
    if n < 2 {
        return Err(FlrtError::InvalidInput(format!(
            "smoothing parameter selection needs n ≥ 2, got {n}"
        )));
    }
    if kappa.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
        return Err(FlrtError::InvalidInput(
            "spectrum must be finite and nonnegative".into(),
        ));
    }
    let boundary = |lambda: f64| LambdaSelection {
        lambda_tilde: lambda,
        objective_value: objective(kappa, n, lambda),
        stationarity_residual: stationarity_residual(kappa, n, lambda),
        grid_lo: GRID_LO,
        grid_hi: GRID_HI,
        at_boundary: true,
    };
    if kappa.iter().all(|&k| k == 0.0) {
        return Ok(boundary(GRID_LO));
    }
    let grid = search_grid();
    let values: Vec<f64> = grid.iter().map(|&l| objective(kappa, n, l)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if best == 0 || best + 1 == grid.len() {
        return Ok(boundary(grid[best]));
    }
    // refine in log λ, where the step above is uniform
    let f = |x: f64| objective(kappa, n, x.exp());
    let x = golden_section(f, grid[best - 1].ln(), grid[best + 1].ln());
    let mut lambda = x.exp();
    let mut value = objective(kappa, n, lambda);
    if value > values[best] {
        lambda = grid[best];
        value = values[best];
    }
    Ok(LambdaSelection {
        lambda_tilde: lambda,
        objective_value: value,
        stationarity_residual: stationarity_residual(kappa, n, lambda),
        grid_lo: GRID_LO,
        grid_hi: GRID_HI,
        at_boundary: false,
    })
}
