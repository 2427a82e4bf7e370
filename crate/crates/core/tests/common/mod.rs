//! Dense reference implementations used as test oracles. Everything here is
//! built from explicit `p × p` matrices and never calls into the
//! spectral/low-rank code paths of the library.

#![allow(dead_code)]

use std::sync::Arc;

use flrt::{FunctionalSample, Grid, GridFunction};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Trapezoid weights as a diagonal matrix.
pub fn weight_matrix(p: usize) -> DMatrix<f64> {
    let h = 1.0 / (p - 1) as f64;
    let mut w = DMatrix::from_diagonal_element(p, p, h);
    w[(0, 0)] = h / 2.0;
    w[(p - 1, p - 1)] = h / 2.0;
    w
}

/// `(C₀ f)_k = Σ_{j<k} h (f_j + f_{j+1})/2`, the cumulative trapezoid rule.
pub fn c0_matrix(p: usize) -> DMatrix<f64> {
    let h = 1.0 / (p - 1) as f64;
    let mut c = DMatrix::zeros(p, p);
    for k in 1..p {
        for j in 0..k {
            c[(k, j)] += h / 2.0;
            c[(k, j + 1)] += h / 2.0;
        }
    }
    c
}

/// The `W`-adjoint of [`c0_matrix`]: `W⁻¹ C₀ᵀ W`.
pub fn t1_matrix(p: usize) -> DMatrix<f64> {
    let w = weight_matrix(p);
    let winv = DMatrix::from_diagonal(&w.diagonal().map(|v| 1.0 / v));
    winv * c0_matrix(p).transpose() * w
}

pub fn mat_pow(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = a * out;
    }
    out
}

/// Random smooth curves: cosine coefficients decaying like `k^{-1}`, plus a
/// random linear trend.
pub fn random_curves(rng: &mut impl Rng, n: usize, p: usize) -> DMatrix<f64> {
    let grid = Grid::uniform(p).unwrap();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let coefs: Vec<f64> = (1..=8)
            .map(|k| rng.random_range(-1.0..1.0) / k as f64)
            .collect();
        for (j, &t) in grid.points().iter().enumerate() {
            let mut v = a + b * t;
            for (k, c) in coefs.iter().enumerate() {
                v += c * 2f64.sqrt() * ((k + 1) as f64 * std::f64::consts::PI * t).cos();
            }
            x[(i, j)] = v;
        }
    }
    x
}

pub fn random_sample(seed: u64, n: usize, p: usize) -> FunctionalSample {
    let mut r = rng(seed);
    let x = random_curves(&mut r, n, p);
    let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let grid = Grid::uniform(p).unwrap();
    FunctionalSample::from_matrix(&grid, x, y).unwrap().centered()
}

pub fn grid_fn(grid: &Arc<Grid>, v: &DVector<f64>) -> GridFunction {
    GridFunction::new(grid, v.iter().copied().collect()).unwrap()
}

/// Independent construction of the sample operators.
pub struct DenseDesign {
    pub p: usize,
    pub n: usize,
    pub m: usize,
    pub w: DMatrix<f64>,
    pub c0: DMatrix<f64>,
    pub t1: DMatrix<f64>,
    /// `n × p` curves.
    pub x: DMatrix<f64>,
    /// `n × p`, rows `T₀^m X_i`.
    pub v: DMatrix<f64>,
    /// `m × n`.
    pub xt: DMatrix<f64>,
    /// `n × n`.
    pub b: DMatrix<f64>,
    /// `n × p`, rows `Û_i`.
    pub u: DMatrix<f64>,
}

impl DenseDesign {
    pub fn new(sample: &FunctionalSample, m: usize) -> Self {
        let x = sample.curves().clone();
        let (n, p) = x.shape();
        let w = weight_matrix(p);
        let c0 = c0_matrix(p);
        let t1 = t1_matrix(p);
        let mut xt = DMatrix::zeros(m, n);
        for k in 1..=m {
            let ck = mat_pow(&c0, k);
            let rows = &x * ck.transpose();
            for j in 0..n {
                xt[(k - 1, j)] = rows[(j, p - 1)];
            }
        }
        let v = &x * mat_pow(&c0, m).transpose();
        let hh = &xt * xt.transpose() / n as f64;
        let b = xt.transpose() * hh.try_inverse().unwrap() * &xt / n as f64;
        let u = (DMatrix::identity(n, n) - &b) * &v;
        DenseDesign { p, n, m, w, c0, t1, x, v, xt, b, u }
    }

    /// `Q̂` as a `p × p` operator on grid values.
    pub fn q_dense(&self) -> DMatrix<f64> {
        self.u.transpose() * &self.u * &self.w / self.n as f64
    }

    /// `(λI + Q̂)⁻¹` as a `p × p` matrix.
    pub fn qplus_dense(&self, lambda: f64) -> DMatrix<f64> {
        let a = DMatrix::identity(self.p, self.p) * lambda + self.q_dense();
        a.lu().try_inverse().unwrap()
    }

    /// `ζ_k = T₁^{k−1} 1` as the columns of a `p × m` matrix.
    pub fn zeta(&self) -> DMatrix<f64> {
        let one = DVector::from_element(self.p, 1.0);
        let mut z = DMatrix::zeros(self.p, self.m);
        for k in 0..self.m {
            z.set_column(k, &(mat_pow(&self.t1, k) * &one));
        }
        z
    }

    /// Minimizer of `Σ(Y − ∫X β)² + nλ ∫(β^{(m)})²` over
    /// `β = Σ_k υ_k ζ_k + (−1)^m T₁^m g` by one dense normal-equation solve.
    /// Returns `(β, υ, β^{(m)})`.
    pub fn brute_force_fit(&self, y: &[f64], lambda: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (p, m, n) = (self.p, self.m, self.n);
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let mut s = DMatrix::zeros(p, m + p);
        s.view_mut((0, 0), (p, m)).copy_from(&self.zeta());
        s.view_mut((0, m), (p, p)).copy_from(&(mat_pow(&self.t1, m) * sign));
        let design = &self.x * &self.w * &s; // n × (m+p)
        let mut lhs = design.transpose() * &design;
        let pen = &self.w * (n as f64 * lambda);
        let mut block = lhs.view_mut((m, m), (p, p));
        block += &pen;
        let rhs = design.transpose() * DVector::from_column_slice(y);
        let theta = lhs.clone().cholesky().map(|c| c.solve(&rhs)).unwrap_or_else(|| {
            lhs.lu().solve(&rhs).unwrap()
        });
        let beta = &s * &theta;
        let ups = theta.rows(0, m).into_owned();
        let beta_m = theta.rows(m, p) * sign;
        (beta, ups, beta_m)
    }

    /// `tr(A_n)`, `tr(A_n²)` and `tr(A_I B̂)` from the explicitly assembled
    /// `n × n` matrices.
    pub fn a_traces(&self, lambda: f64) -> (f64, f64, f64) {
        let n = self.n as f64;
        let qp = self.qplus_dense(lambda);
        let qd = self.q_dense();
        let qu = &qp * self.u.transpose(); // p × n, columns Q̂⁺Û_j
        let first = &self.u * &self.w * &qu / n;
        let second = qu.transpose() * &self.w * &qd * &qu / (2.0 * n);
        let ai = first - second;
        let a = &ai + &self.b * 0.5;
        (a.trace(), (&a * &a).trace(), (&ai * &self.b).trace())
    }
}

/// β-space oracle: β on the grid, penalty through second divided
/// differences, `min Σ(Y − ⟨X_i, β⟩)² + nλ Σ_j h (Δ²β_j/h²)²`.
pub fn second_difference_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> DVector<f64> {
    let (n, p) = x.shape();
    let h = 1.0 / (p - 1) as f64;
    let w = weight_matrix(p);
    let mut d = DMatrix::zeros(p - 2, p);
    for j in 0..p - 2 {
        d[(j, j)] = 1.0 / (h * h);
        d[(j, j + 1)] = -2.0 / (h * h);
        d[(j, j + 2)] = 1.0 / (h * h);
    }
    let xw = x * &w;
    let lhs = xw.transpose() * &xw + d.transpose() * &d * (n as f64 * lambda * h);
    let rhs = xw.transpose() * DVector::from_column_slice(y);
    lhs.lu().solve(&rhs).unwrap()
}

pub fn rel_l2(a: &DVector<f64>, b: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    let d = a - b;
    let num = (d.transpose() * w * &d)[(0, 0)].sqrt();
    let den = (b.transpose() * w * b)[(0, 0)].sqrt();
    num / den
}

/// Two rounds of a 10⁶-point logarithmic grid: the full search interval, then
/// the two cells around the first-round winner.
pub fn brute_force_lambda(kappa: &[f64], n: usize) -> f64 {
    const N: usize = 1_000_000;
    let mut lo = 1e-12f64.ln();
    let mut hi = 0.0f64;
    let mut best = lo;
    for _ in 0..2 {
        let step = (hi - lo) / (N - 1) as f64;
        let mut best_val = f64::INFINITY;
        for i in 0..N {
            let x = lo + step * i as f64;
            let v = flrt::lambda_select::objective(kappa, n, x.exp());
            if v < best_val {
                best_val = v;
                best = x;
            }
        }
        lo = (best - 2.0 * step).max(1e-12f64.ln());
        hi = (best + 2.0 * step).min(0.0);
    }
    best.exp()
}
