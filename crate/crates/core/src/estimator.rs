//! Penalized smoothing-spline estimate of the slope function.
//!
//! The estimate minimizes
//! `Σ_i (Y_i − ∫X_i β)² + nλ ∫(β^{(m)})²`. Its `m`-th derivative is
//! `β̂^{(m)} = (−1)^m n⁻¹ (λI + Q̂)⁻¹ Σ_i Y_i Û_i`, the boundary vector
//! `Υ̂(1)` solves the remaining `m × m` least-squares system, and `β̂` itself
//! is reassembled as `Υ̂(1)ᵀζ + T₁^m((−1)^m β̂^{(m)})` with `ζ_k = T₁^{k−1} 1`.

use nalgebra::DVector;

use crate::design::{qplus_apply, DesignOperators, EigenSystem};
use crate::error::{FlrtError, Result};
use crate::funcgrid::{t1_pow, weighted_dot, GridFunction};

/// A fitted smoothing spline and its residual sums of squares.
#[derive(Debug, Clone)]
pub struct SplineFit {
    pub lambda: f64,
    pub m: usize,
    /// `β̂^{(m)}`
    pub beta_m: GridFunction,
    /// `[β̂(1), −β̂′(1), …, (−1)^{m−1} β̂^{(m−1)}(1)]`
    pub upsilon1: Vec<f64>,
    pub beta: GridFunction,
    /// `∫ X_i β̂`
    pub fitted: Vec<f64>,
    pub rss0: f64,
    pub rss1: f64,
    /// `λ ∫ (β̂^{(m)})²`
    pub penalty: f64,
}

impl SplineFit {
    pub fn residuals(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.fitted).map(|(y, f)| y - f).collect()
    }
}

fn sign(m: usize) -> f64 {
    if m.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn check_inputs(design: &DesignOperators, y: &[f64], lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(FlrtError::InvalidInput(format!(
            "smoothing parameter must be positive and finite, got {lambda}"
        )));
    }
    if y.len() != design.n() {
        return Err(FlrtError::InvalidInput(format!(
            "{} responses for a design with {} curves",
            y.len(),
            design.n()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FlrtError::InvalidInput("responses contain non-finite values".into()));
    }
    Ok(())
}

/// Boundary basis `ζ_k = T₁^{k−1} 1`, `k = 1..m`, the discrete counterpart of
/// `(1−t)^{k−1}/(k−1)!`.
pub fn boundary_basis(design: &DesignOperators) -> Result<Vec<GridFunction>> {
    let one = GridFunction::constant(design.grid(), 1.0)?;
    let mut out = Vec::with_capacity(design.m());
    out.push(one.clone());
    for k in 1..design.m() {
        out.push(t1_pow(&one, k)?);
    }
    Ok(out)
}

/// `Σ_k Υ_k ζ_k + (−1)^m T₁^m β^{(m)}`.
pub fn assemble_beta(
    design: &DesignOperators,
    upsilon1: &[f64],
    beta_m: &GridFunction,
) -> Result<GridFunction> {
    let m = design.m();
    if upsilon1.len() != m {
        return Err(FlrtError::InvalidInput(format!(
            "boundary vector has length {}, expected {m}",
            upsilon1.len()
        )));
    }
    let mut values = t1_pow(beta_m, m)?.scale(sign(m)).into_values();
    for (u, z) in upsilon1.iter().zip(boundary_basis(design)?) {
        for (v, zv) in values.iter_mut().zip(z.values()) {
            *v += u * zv;
        }
    }
    GridFunction::new(design.grid(), values)
}

/// `∫ X_i β` for the spline with boundary vector `upsilon1` and `m`-th
/// derivative `beta_m`, evaluated as `X̃(1)ᵀΥ + (−1)^m ⟨T₀^m X_i, β^{(m)}⟩`.
pub fn predict(design: &DesignOperators, upsilon1: &[f64], beta_m: &GridFunction) -> Vec<f64> {
    let w = design.grid().weights();
    let s = sign(design.m());
    let xt = design.xtilde1();
    design
        .tm_x()
        .row_iter()
        .enumerate()
        .map(|(i, row)| {
            let v: Vec<f64> = row.iter().copied().collect();
            let poly: f64 = (0..design.m()).map(|k| xt[(k, i)] * upsilon1[k]).sum();
            poly + s * weighted_dot(w, &v, beta_m.values())
        })
        .collect()
}

/// The penalized criterion `Σ(Y_i − ∫X_iβ)² + nλ∫(β^{(m)})²` at the spline
/// described by `(upsilon1, beta_m)`.
pub fn objective(
    design: &DesignOperators,
    y: &[f64],
    lambda: f64,
    upsilon1: &[f64],
    beta_m: &GridFunction,
) -> Result<f64> {
    check_inputs(design, y, lambda)?;
    if upsilon1.len() != design.m() {
        return Err(FlrtError::InvalidInput("boundary vector has the wrong length".into()));
    }
    let rss: f64 = predict(design, upsilon1, beta_m)
        .iter()
        .zip(y)
        .map(|(f, y)| (y - f).powi(2))
        .sum();
    let w = design.grid().weights();
    let pen = weighted_dot(w, beta_m.values(), beta_m.values());
    Ok(rss + design.n() as f64 * lambda * pen)
}

/// Fits the smoothing spline for responses `y` at smoothing parameter `lambda`.
pub fn fit(design: &DesignOperators, eigs: &EigenSystem, y: &[f64], lambda: f64) -> Result<SplineFit> {
    check_inputs(design, y, lambda)?;
    let n = design.n();
    let nf = n as f64;
    let m = design.m();
    let s = sign(m);
    let grid = design.grid();
    let w = grid.weights();

    // f = n⁻¹ Σ Y_i Û_i
    let yv = DVector::from_column_slice(y);
    let f = design.u().tr_mul(&yv) / nf;
    let f = GridFunction::new(grid, f.iter().copied().collect())?;
    // g = (−1)^m β̂^{(m)}
    let g = qplus_apply(eigs, lambda, &f)?;
    let beta_m = g.scale(s);

    let vg: Vec<f64> = design
        .tm_x()
        .row_iter()
        .map(|row| {
            let v: Vec<f64> = row.iter().copied().collect();
            weighted_dot(w, &v, g.values())
        })
        .collect();
    let partial = DVector::from_iterator(n, y.iter().zip(&vg).map(|(y, v)| y - v));
    let upsilon = design.hhat_inv() * (design.xtilde1() * partial) / nf;
    let upsilon1: Vec<f64> = upsilon.iter().copied().collect();

    let fitted: Vec<f64> = (0..n)
        .map(|i| {
            let poly: f64 = (0..m).map(|k| design.xtilde1()[(k, i)] * upsilon1[k]).sum();
            poly + vg[i]
        })
        .collect();
    let beta = assemble_beta(design, &upsilon1, &beta_m)?;
    let rss0 = y.iter().map(|v| v * v).sum();
    let rss1 = y.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
    let penalty = lambda * weighted_dot(w, g.values(), g.values());

    Ok(SplineFit {
        lambda,
        m,
        beta_m,
        upsilon1,
        beta,
        fitted,
        rss0,
        rss1,
        penalty,
    })
}

/// `(Σ Y_i², Σ (Y_i − ∫X_iβ̂)²)`.
pub fn rss_pair(fit: &SplineFit) -> (f64, f64) {
    (fit.rss0, fit.rss1)
}
