//! Sample-level operators for a penalty of order `m`.
//!
//! With `V_i = T₀^m X_i` and the boundary matrix `X̃(1)` (row `k` holds
//! `T₀^k X_j(1)`), the projector `B̂ = n⁻¹ X̃(1)ᵀ Ĥ⁻¹ X̃(1)` removes the
//! polynomial part of the spline and `Û = (I − B̂) V`. The integral operator
//! `Q̂ = n⁻¹ ÛᵀÛ` has the same nonzero spectrum as the `n × n` matrix `n⁻¹G`,
//! `G_ij = ⟨Û_i, Û_j⟩`, which is what the eigensystems below decompose.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FlrtError, Result};
use crate::funcgrid::{t0_rows, weighted_dot, weighted_gram, Grid, GridFunction};

/// Relative cutoff below which eigenvalues are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Gram eigenvalues below this multiple of the raw energy `tr(G̃)/n` are
/// rounding noise of the deflation and are dropped as well.
const NOISE_CUTOFF: f64 = 64.0 * f64::EPSILON;

const MAX_CONDITION: f64 = 1e12;
const RIDGE_FACTOR: f64 = 1e-10;

/// `n` predictor curves on a common grid with their scalar responses.
#[derive(Debug, Clone)]
pub struct FunctionalSample {
    grid: Arc<Grid>,
    curves: DMatrix<f64>,
    responses: Vec<f64>,
    centered: bool,
}

impl FunctionalSample {
    pub fn new(curves: Vec<GridFunction>, responses: Vec<f64>) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| FlrtError::InvalidInput("sample has no curves".into()))?;
        let grid = Arc::clone(first.grid());
        let p = grid.len();
        let mut mat = DMatrix::zeros(curves.len(), p);
        for (i, c) in curves.iter().enumerate() {
            if c.grid().len() != p {
                return Err(FlrtError::GridMismatch {
                    left: p,
                    right: c.grid().len(),
                });
            }
            for (j, v) in c.values().iter().enumerate() {
                mat[(i, j)] = *v;
            }
        }
        Self::from_matrix(&grid, mat, responses)
    }

    /// Curves given as the rows of an `n × p` matrix.
    pub fn from_matrix(grid: &Arc<Grid>, curves: DMatrix<f64>, responses: Vec<f64>) -> Result<Self> {
        if curves.ncols() != grid.len() {
            return Err(FlrtError::InvalidInput(format!(
                "curves have {} columns but the grid has {} points",
                curves.ncols(),
                grid.len()
            )));
        }
        if curves.nrows() != responses.len() {
            return Err(FlrtError::InvalidInput(format!(
                "{} curves but {} responses",
                curves.nrows(),
                responses.len()
            )));
        }
        if curves.nrows() == 0 {
            return Err(FlrtError::InvalidInput("sample has no curves".into()));
        }
        if curves.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
            return Err(FlrtError::InvalidInput(
                "sample contains non-finite values".into(),
            ));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            curves,
            responses,
            centered: false,
        })
    }

    /// Subtracts the pointwise mean curve and the mean response.
    pub fn centered(mut self) -> Self {
        let n = self.n() as f64;
        for mut col in self.curves.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
        }
        let ybar = self.responses.iter().sum::<f64>() / n;
        for y in &mut self.responses {
            *y -= ybar;
        }
        self.centered = true;
        self
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Same curves with a new response vector; the centering flag is kept only
    /// if the new responses have (numerically) zero mean.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        let mut s = Self::from_matrix(&self.grid, self.curves.clone(), responses)?;
        let scale = s.responses.iter().fold(0.0f64, |a, y| a.max(y.abs())).max(1.0);
        let mean = s.responses.iter().sum::<f64>() / s.n() as f64;
        s.centered = self.centered && mean.abs() <= 1e-10 * scale;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `n × p` matrix whose rows are the curves.
    pub fn curves(&self) -> &DMatrix<f64> {
        &self.curves
    }

    pub fn curve(&self, i: usize) -> GridFunction {
        GridFunction::from_parts(&self.grid, self.curves.row(i).iter().copied().collect())
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }
}

/// Precomputed operator objects for one sample and penalty order.
#[derive(Debug, Clone)]
pub struct DesignOperators {
    m: usize,
    grid: Arc<Grid>,
    xtilde1: DMatrix<f64>,
    hhat: DMatrix<f64>,
    hhat_inv: DMatrix<f64>,
    hhat_condition: f64,
    bhat: DMatrix<f64>,
    tm_x: DMatrix<f64>,
    u: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_raw: DMatrix<f64>,
    ridge_used: f64,
}

impl DesignOperators {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.bhat.nrows()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `m × n`, entry `(k, j)` is `T₀^{k+1} X_j(1)`.
    pub fn xtilde1(&self) -> &DMatrix<f64> {
        &self.xtilde1
    }

    pub fn hhat(&self) -> &DMatrix<f64> {
        &self.hhat
    }

    /// Inverse of `Ĥ` (plus the ridge, when one was needed).
    pub fn hhat_inv(&self) -> &DMatrix<f64> {
        &self.hhat_inv
    }

    pub fn hhat_condition(&self) -> f64 {
        self.hhat_condition
    }

    pub fn bhat(&self) -> &DMatrix<f64> {
        &self.bhat
    }

    /// Rows are `T₀^m X_i`.
    pub fn tm_x(&self) -> &DMatrix<f64> {
        &self.tm_x
    }

    /// Rows are `Û_i = ((I − B̂) T₀^m X)_i`.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn u_rows(&self) -> Vec<GridFunction> {
        self.u
            .row_iter()
            .map(|r| GridFunction::from_parts(&self.grid, r.iter().copied().collect()))
            .collect()
    }

    /// `G_ij = ⟨Û_i, Û_j⟩`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `G̃_ij = ⟨T₀^m X_i, T₀^m X_j⟩`.
    pub fn gram_raw(&self) -> &DMatrix<f64> {
        &self.gram_raw
    }

    pub fn ridge_used(&self) -> f64 {
        self.ridge_used
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn invert_boundary_gram(hhat: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, f64)> {
    let m = hhat.nrows();
    let eig = hhat.clone().symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if !(max.is_finite() && max > 0.0) {
        return Err(FlrtError::DegenerateDesign {
            condition: f64::INFINITY,
        });
    }
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let mut ridge = 0.0;
    let mut target = hhat.clone();
    if condition > MAX_CONDITION {
        ridge = RIDGE_FACTOR * hhat.trace() / m as f64;
        for k in 0..m {
            target[(k, k)] += ridge;
        }
        log::warn!("boundary Gram matrix has condition number {condition:e}; adding ridge {ridge:e}");
    }
    let chol = target.cholesky().ok_or(FlrtError::DegenerateDesign { condition })?;
    Ok((chol.inverse(), condition, ridge))
}

/// Builds [`DesignOperators`] for `sample` and penalty order `m`.
pub fn build_design(sample: &FunctionalSample, m: usize) -> Result<DesignOperators> {
    let n = sample.n();
    if m == 0 {
        return Err(FlrtError::InvalidInput("penalty order m must be at least 1".into()));
    }
    if n < m {
        return Err(FlrtError::InvalidInput(format!(
            "need at least m = {m} curves, got {n}"
        )));
    }
    if !sample.is_centered() {
        log::debug!("building design on an uncentered sample");
    }
    let grid = Arc::clone(sample.grid());
    let h = grid.step();
    let w = grid.weights();
    let last = grid.len() - 1;

    let mut xtilde1 = DMatrix::zeros(m, n);
    let mut cur = sample.curves().clone();
    for k in 0..m {
        cur = t0_rows(&cur, 1, h);
        for j in 0..n {
            xtilde1[(k, j)] = cur[(j, last)];
        }
    }
    let tm_x = cur;

    let nf = n as f64;
    let mut hhat = &xtilde1 * xtilde1.transpose() / nf;
    symmetrize(&mut hhat);
    let (hhat_inv, hhat_condition, ridge_used) = invert_boundary_gram(&hhat)?;

    // B̂ = n⁻¹ X̃ᵀ Ĥ⁻¹ X̃ and Û = V − n⁻¹ X̃ᵀ Ĥ⁻¹ (X̃ V)
    let hx = &hhat_inv * &xtilde1;
    let mut bhat = xtilde1.transpose() * &hx / nf;
    symmetrize(&mut bhat);
    let proj = (&hx * &tm_x) / nf;
    let u = &tm_x - xtilde1.transpose() * proj;

    let mut gram_raw = weighted_gram(&tm_x, &tm_x, w);
    symmetrize(&mut gram_raw);
    let mut gram = weighted_gram(&u, &u, w);
    symmetrize(&mut gram);

    Ok(DesignOperators {
        m,
        grid,
        xtilde1,
        hhat,
        hhat_inv,
        hhat_condition,
        bhat,
        tm_x,
        u,
        gram,
        gram_raw,
        ridge_used,
    })
}

/// Eigenvalues `κ₁ ≥ κ₂ ≥ … > 0` of an integral operator `n⁻¹ Σ_i R_i ⊗ R_i`
/// together with the scores `ξ_ik = ⟨R_i, φ_k⟩` and, optionally, the
/// eigenfunctions `φ_k` sampled on the grid.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    kappa: Vec<f64>,
    xi: DMatrix<f64>,
    phi: Option<DMatrix<f64>>,
    grid: Arc<Grid>,
}

impl EigenSystem {
    /// An operator with no retained spectrum.
    pub fn empty(grid: &Arc<Grid>, n: usize) -> Self {
        Self {
            kappa: Vec::new(),
            xi: DMatrix::zeros(n, 0),
            phi: Some(DMatrix::zeros(0, grid.len())),
            grid: Arc::clone(grid),
        }
    }

    /// Spectrum only, for callers that never touch scores or eigenfunctions.
    pub fn from_eigenvalues(grid: &Arc<Grid>, n: usize, kappa: Vec<f64>) -> Self {
        Self {
            xi: DMatrix::zeros(n, 0),
            phi: None,
            grid: Arc::clone(grid),
            kappa,
        }
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Retained rank.
    pub fn rank(&self) -> usize {
        self.kappa.len()
    }

    /// `n × r` score matrix.
    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    /// `r × p` eigenfunctions, one per row, when materialized.
    pub fn phi(&self) -> Option<&DMatrix<f64>> {
        self.phi.as_ref()
    }

    pub fn phi_function(&self, k: usize) -> Option<GridFunction> {
        self.phi.as_ref().map(|phi| {
            GridFunction::from_parts(&self.grid, phi.row(k).iter().copied().collect())
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
}

fn retained_cutoff(kappa_max: f64, energy: f64) -> f64 {
    (RANK_CUTOFF * kappa_max).max(NOISE_CUTOFF * energy)
}

// Eigensystem of n⁻¹·gram where gram_ij = ⟨R_i, R_j⟩ for the rows R of `rows`.
fn spectral(
    gram: &DMatrix<f64>,
    rows: &DMatrix<f64>,
    energy: f64,
    grid: &Arc<Grid>,
) -> Result<EigenSystem> {
    let n = gram.nrows();
    let nf = n as f64;
    let scaled = gram / nf;
    let eig = SymmetricEigen::try_new(scaled, f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| FlrtError::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let kappa_max = order.first().map(|&i| eig.eigenvalues[i]).unwrap_or(0.0);
    if kappa_max.is_nan() || kappa_max <= 0.0 {
        return Ok(EigenSystem::empty(grid, n));
    }
    let cut = retained_cutoff(kappa_max, energy);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > cut)
        .collect();
    let r = keep.len();
    let mut kappa = Vec::with_capacity(r);
    let mut xi = DMatrix::zeros(n, r);
    let mut vecs = DMatrix::zeros(r, n);
    for (k, &i) in keep.iter().enumerate() {
        let lam = eig.eigenvalues[i];
        kappa.push(lam);
        let norm = (nf * lam).sqrt();
        let v = eig.eigenvectors.column(i);
        for j in 0..n {
            xi[(j, k)] = norm * v[j];
            vecs[(k, j)] = v[j] / norm;
        }
    }
    // φ_k = (n κ_k)^{-1/2} Σ_i v_ik R_i
    let phi = vecs * rows;
    Ok(EigenSystem {
        kappa,
        xi,
        phi: Some(phi),
        grid: Arc::clone(grid),
    })
}

fn raw_energy(design: &DesignOperators) -> f64 {
    design.gram_raw.trace() / design.n() as f64
}

/// Eigensystem of the deflated operator `Q̂ = n⁻¹ ÛᵀÛ`.
pub fn eig_qhat(design: &DesignOperators) -> Result<EigenSystem> {
    spectral(&design.gram, &design.u, raw_energy(design), &design.grid)
}

/// Eigensystem of the undeflated operator `T₀^m Γ̂ T₁^m`, whose Gram matrix
/// is `G̃`. Used by the smoothing-parameter rule.
pub fn eig_qraw(design: &DesignOperators) -> Result<EigenSystem> {
    spectral(&design.gram_raw, &design.tm_x, raw_energy(design), &design.grid)
}

/// [`eig_qraw`] computed straight from a sample, without the boundary
/// matrix (so it is defined even when `Ĥ` is singular).
pub fn eig_qraw_sample(sample: &FunctionalSample, m: usize) -> Result<EigenSystem> {
    if m == 0 {
        return Err(FlrtError::InvalidInput("penalty order m must be at least 1".into()));
    }
    let grid = sample.grid();
    let tm_x = t0_rows(sample.curves(), m, grid.step());
    let mut gram_raw = weighted_gram(&tm_x, &tm_x, grid.weights());
    symmetrize(&mut gram_raw);
    let energy = gram_raw.trace() / sample.n() as f64;
    spectral(&gram_raw, &tm_x, energy, grid)
}

/// Eigenvalues of `T₀^m Γ̂ T₁^m` only; cheaper than [`eig_qraw`].
pub fn qraw_spectrum(design: &DesignOperators) -> Vec<f64> {
    let n = design.n();
    let mut vals: Vec<f64> = (&design.gram_raw / n as f64)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let Some(&top) = vals.first() else {
        return vals;
    };
    if top.is_nan() || top <= 0.0 {
        return Vec::new();
    }
    let cut = retained_cutoff(top, raw_energy(design));
    vals.retain(|&v| v > cut);
    vals
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

/// `(λI + Q̂)⁻¹ f = λ⁻¹ [f − Σ_k κ_k/(λ+κ_k) ⟨φ_k, f⟩ φ_k]`.
pub fn qplus_apply(eigs: &EigenSystem, lambda: f64, f: &GridFunction) -> Result<GridFunction> {
    check_lambda(lambda)?;
    if f.grid().len() != eigs.grid.len() {
        return Err(FlrtError::GridMismatch {
            left: eigs.grid.len(),
            right: f.grid().len(),
        });
    }
    let mut out: Vec<f64> = f.values().to_vec();
    if eigs.rank() > 0 {
        let phi = eigs.phi.as_ref().ok_or_else(|| {
            FlrtError::InvalidInput("eigensystem was built without eigenfunctions".into())
        })?;
        let w = eigs.grid.weights();
        for (k, &kap) in eigs.kappa.iter().enumerate() {
            let row: Vec<f64> = phi.row(k).iter().copied().collect();
            let c = kap / (lambda + kap) * weighted_dot(w, &row, f.values());
            for (o, p) in out.iter_mut().zip(&row) {
                *o -= c * p;
            }
        }
    }
    for o in &mut out {
        *o /= lambda;
    }
    Ok(GridFunction::from_parts(f.grid(), out))
}

/// Same operator as [`qplus_apply`] through the `n × n` system
/// `(nλI + G) c = (⟨Û_i, f⟩)_i`, `(λI+Q̂)⁻¹ f = λ⁻¹ (f − Σ_i c_i Û_i)`.
pub fn qplus_apply_gram(
    design: &DesignOperators,
    lambda: f64,
    f: &GridFunction,
) -> Result<GridFunction> {
    check_lambda(lambda)?;
    let n = design.n();
    let w = design.grid.weights();
    let rhs = DVector::from_iterator(
        n,
        design
            .u
            .row_iter()
            .map(|r| r.iter().zip(f.values()).zip(w).map(|((a, b), w)| a * b * w).sum()),
    );
    let mut sys = design.gram.clone();
    for i in 0..n {
        sys[(i, i)] += n as f64 * lambda;
    }
    let c = sys
        .cholesky()
        .ok_or_else(|| FlrtError::Numeric("(nλI + G) is not positive definite".into()))?
        .solve(&rhs);
    let corr = design.u.transpose() * c;
    let values = f
        .values()
        .iter()
        .zip(corr.iter())
        .map(|(v, c)| (v - c) / lambda)
        .collect();
    Ok(GridFunction::from_parts(f.grid(), values))
}

/// `(Q̂ f)(t) = n⁻¹ Σ_i Û_i(t) ⟨Û_i, f⟩`, applied directly from the rows.
pub fn qhat_apply(design: &DesignOperators, f: &GridFunction) -> GridFunction {
    let n = design.n() as f64;
    let w = design.grid.weights();
    let coef = DVector::from_iterator(
        design.n(),
        design
            .u
            .row_iter()
            .map(|r| r.iter().zip(f.values()).zip(w).map(|((a, b), w)| a * b * w).sum::<f64>() / n),
    );
    let v = design.u.transpose() * coef;
    GridFunction::from_parts(&design.grid, v.iter().copied().collect())
}
