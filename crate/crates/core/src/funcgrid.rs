//! Functions on a uniform grid over `[0, 1]`.
//!
//! Every integral in the crate is a composite trapezoid sum with the weights
//! carried by [`Grid`]. The left integration operator `T₀` is the cumulative
//! trapezoid rule. The right operator `T₁` is defined as the exact adjoint of
//! `T₀` under the trapezoid inner product, `⟨g, T₀f⟩ = ⟨T₁g, f⟩` to rounding.
//! On interior nodes it coincides with the cumulative trapezoid rule run from
//! the right end; at the two end nodes it differs from it by `h/2 · f`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{FlrtError, Result};

/// Uniform grid on `[0, 1]` with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
    step: f64,
}

impl Grid {
    /// Uniform grid with `p ≥ 3` points including both endpoints.
    pub fn uniform(p: usize) -> Result<Arc<Grid>> {
        if p < 3 {
            return Err(FlrtError::InvalidInput(format!(
                "grid needs at least 3 points, got {p}"
            )));
        }
        let last = (p - 1) as f64;
        let step = 1.0 / last;
        let points: Vec<f64> = (0..p).map(|j| j as f64 / last).collect();
        let mut weights = vec![step; p];
        weights[0] = 0.5 * step;
        weights[p - 1] = 0.5 * step;
        Ok(Arc::new(Grid {
            points,
            weights,
            step,
        }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Spacing `h = 1/(p-1)`.
    pub fn step(&self) -> f64 {
        self.step
    }
}

/// A real function sampled on a [`Grid`]. Values are always finite.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlrtError::InvalidInput(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(FlrtError::InvalidInput(format!(
                "non-finite value {} at grid index {j}",
                values[j]
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.len()],
        }
    }

    // Internal constructor for values produced by finite arithmetic on finite inputs.
    pub(crate) fn from_parts(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at the right endpoint `t = 1`.
    pub fn at_one(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn scale(&self, a: f64) -> GridFunction {
        Self::from_parts(&self.grid, self.values.iter().map(|v| a * v).collect())
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        same_grid(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self::from_parts(&self.grid, values))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Quadrature L₂ norm.
    pub fn l2_norm(&self) -> f64 {
        weighted_dot(self.grid.weights(), &self.values, &self.values).sqrt()
    }
}

fn same_grid(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if Arc::ptr_eq(&f.grid, &g.grid) || f.grid.len() == g.grid.len() {
        Ok(())
    } else {
        Err(FlrtError::GridMismatch {
            left: f.grid.len(),
            right: g.grid.len(),
        })
    }
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// Trapezoid approximation of `∫₀¹ f(t) dt`.
pub fn integrate(f: &GridFunction) -> f64 {
    f.grid.weights().iter().zip(&f.values).map(|(w, v)| w * v).sum()
}

/// `⟨f, g⟩ = ∫₀¹ f g` by trapezoid quadrature.
pub fn inner(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    same_grid(f, g)?;
    Ok(weighted_dot(f.grid.weights(), &f.values, &g.values))
}

fn check_power(k: usize) -> Result<()> {
    if k == 0 {
        Err(FlrtError::InvalidInput(
            "integration power k must be at least 1".into(),
        ))
    } else {
        Ok(())
    }
}

pub(crate) fn cumulative_left(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for j in 1..values.len() {
        out[j] = out[j - 1] + 0.5 * h * (values[j - 1] + values[j]);
    }
    out
}

// W⁻¹ C₀ᵀ W, where C₀ is the cumulative trapezoid matrix.
pub(crate) fn adjoint_right(values: &[f64], weights: &[f64], h: f64) -> Vec<f64> {
    let p = values.len();
    let mut out = vec![0.0; p];
    let mut tail = 0.0;
    for k in (0..p).rev() {
        out[k] = tail + if k > 0 { 0.5 * h * values[k] } else { 0.0 };
        tail += weights[k] * values[k];
    }
    out
}

/// `T₀^k f(t) = ∫₀ᵗ (t−s)^{k−1}/(k−1)! f(s) ds`, computed by `k` passes of the
/// cumulative trapezoid rule.
pub fn t0_pow(f: &GridFunction, k: usize) -> Result<GridFunction> {
    check_power(k)?;
    let h = f.grid.step();
    let mut v = f.values.clone();
    for _ in 0..k {
        v = cumulative_left(&v, h);
    }
    Ok(GridFunction::from_parts(&f.grid, v))
}

/// `T₁^k f(t) = ∫ₜ¹ (s−t)^{k−1}/(k−1)! f(s) ds`, as the `k`-th power of the
/// trapezoid adjoint of `T₀`.
pub fn t1_pow(f: &GridFunction, k: usize) -> Result<GridFunction> {
    check_power(k)?;
    let h = f.grid.step();
    let w = f.grid.weights();
    let mut v = f.values.clone();
    for _ in 0..k {
        v = adjoint_right(&v, w, h);
    }
    Ok(GridFunction::from_parts(&f.grid, v))
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

// Trapezoid sum of `kernel(s)·f(s)` over the grid nodes in `lo..=hi`.
fn trapezoid_segment(f: &[f64], h: f64, lo: usize, hi: usize, kernel: impl Fn(usize) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut acc = 0.5 * (kernel(lo) * f[lo] + kernel(hi) * f[hi]);
    for (j, v) in f.iter().enumerate().take(hi).skip(lo + 1) {
        acc += kernel(j) * v;
    }
    acc * h
}

/// Reference form of [`t0_pow`]: trapezoid quadrature of the kernel
/// `(t−s)₊^{k−1}/(k−1)!` over `[0, t]`. Identical to [`t0_pow`] for `k = 1`,
/// and agrees with it to `O(h²)` for smooth `f` otherwise.
pub fn t0_pow_kernel(f: &GridFunction, k: usize) -> Result<GridFunction> {
    check_power(k)?;
    let t = f.grid.points();
    let h = f.grid.step();
    let c = factorial(k - 1);
    let values = (0..t.len())
        .map(|j| trapezoid_segment(&f.values, h, 0, j, |i| (t[j] - t[i]).powi(k as i32 - 1) / c))
        .collect();
    Ok(GridFunction::from_parts(&f.grid, values))
}

/// Reference form of [`t1_pow`]: trapezoid quadrature of `(s−t)₊^{k−1}/(k−1)!`
/// over `[t, 1]`.
pub fn t1_pow_kernel(f: &GridFunction, k: usize) -> Result<GridFunction> {
    check_power(k)?;
    let t = f.grid.points();
    let h = f.grid.step();
    let last = t.len() - 1;
    let c = factorial(k - 1);
    let values = (0..t.len())
        .map(|j| trapezoid_segment(&f.values, h, j, last, |i| (t[i] - t[j]).powi(k as i32 - 1) / c))
        .collect();
    Ok(GridFunction::from_parts(&f.grid, values))
}

/// Cosine basis used by the simulation designs: `φ₁ = 1`,
/// `φ_{k+1}(t) = √2 cos(kπt)`.
pub fn fourier_basis(k: usize, grid: &Arc<Grid>) -> Result<GridFunction> {
    if k == 0 {
        return Err(FlrtError::InvalidInput("basis index starts at 1".into()));
    }
    if k == 1 {
        return GridFunction::constant(grid, 1.0);
    }
    let freq = (k - 1) as f64 * PI;
    GridFunction::from_fn(grid, |t| SQRT_2 * (freq * t).cos())
}

/// Applies `T₀^k` to every row of an `n × p` matrix of curves.
pub(crate) fn t0_rows(rows: &DMatrix<f64>, k: usize, h: f64) -> DMatrix<f64> {
    let mut cur = rows.clone();
    let p = rows.ncols();
    for _ in 0..k {
        let mut next = DMatrix::zeros(rows.nrows(), p);
        for j in 1..p {
            for i in 0..rows.nrows() {
                next[(i, j)] = next[(i, j - 1)] + 0.5 * h * (cur[(i, j - 1)] + cur[(i, j)]);
            }
        }
        cur = next;
    }
    cur
}

/// `A · diag(w) · Bᵀ` for row-stacked curves `A` (`n × p`) and `B` (`q × p`).
pub(crate) fn weighted_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut aw = a.clone();
    for (j, mut col) in aw.column_iter_mut().enumerate() {
        col *= w[j];
    }
    aw * b.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(p: usize) -> Arc<Grid> {
        Grid::uniform(p).unwrap()
    }

    #[test]
    fn grid_invariants() {
        for p in [3, 4, 101, 201, 1000] {
            let g = grid(p);
            assert_eq!(g.points()[0], 0.0);
            assert_eq!(g.points()[p - 1], 1.0);
            assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for d in g.points().windows(2) {
                assert!(d[1] > d[0]);
                assert!(((d[1] - d[0]) - 1.0 / (p - 1) as f64).abs() <= 1e-12);
            }
        }
        assert!(Grid::uniform(2).is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = grid(5);
        assert!(GridFunction::new(&g, vec![0.0, 1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(GridFunction::new(&g, vec![0.0, f64::INFINITY, 0.0, 0.0, 0.0]).is_err());
        assert!(GridFunction::new(&g, vec![0.0; 4]).is_err());
    }

    #[test]
    fn integrate_examples() {
        let g = grid(101);
        let one = GridFunction::constant(&g, 1.0).unwrap();
        assert!((integrate(&one) - 1.0).abs() < 1e-15);
        let lin = GridFunction::from_fn(&g, |t| t).unwrap();
        assert!((integrate(&lin) - 0.5).abs() < 1e-15);
        let c = GridFunction::from_fn(&g, |t| (PI * t).cos()).unwrap();
        assert!(integrate(&c).abs() < 1e-4);
    }

    #[test]
    fn inner_examples() {
        let g = grid(201);
        let one = GridFunction::constant(&g, 1.0).unwrap();
        assert!((inner(&one, &one).unwrap() - 1.0).abs() < 1e-14);
        let p2 = fourier_basis(2, &g).unwrap();
        let p3 = fourier_basis(3, &g).unwrap();
        assert!((inner(&p2, &p2).unwrap() - 1.0).abs() < 1e-4);
        assert!(inner(&p2, &p3).unwrap().abs() < 1e-4);

        let other = GridFunction::constant(&grid(11), 1.0).unwrap();
        assert!(matches!(
            inner(&one, &other),
            Err(FlrtError::GridMismatch { left: 201, right: 11 })
        ));
    }

    #[test]
    fn t0_examples() {
        let g = grid(201);
        let one = GridFunction::constant(&g, 1.0).unwrap();
        let t0 = t0_pow(&one, 1).unwrap();
        for (v, t) in t0.values().iter().zip(g.points()) {
            assert!((v - t).abs() < 1e-15);
        }
        let t00 = t0_pow(&one, 2).unwrap();
        for (v, t) in t00.values().iter().zip(g.points()) {
            assert!((v - t * t / 2.0).abs() < 1e-6);
        }
        let lin = GridFunction::from_fn(&g, |t| t).unwrap();
        assert!((t0_pow(&lin, 1).unwrap().at_one() - 0.5).abs() < 1e-15);
        assert!(t0_pow(&one, 0).is_err());
        assert!(t1_pow(&one, 0).is_err());
    }

    #[test]
    fn t1_of_constant() {
        let g = grid(201);
        let h = g.step();
        let one = GridFunction::constant(&g, 1.0).unwrap();
        let t1 = t1_pow(&one, 1).unwrap();
        let p = g.len();
        for j in 1..p - 1 {
            assert!((t1.values()[j] - (1.0 - g.points()[j])).abs() < 1e-14);
        }
        // end nodes carry the h/2 adjoint correction
        assert!((t1.values()[0] - (1.0 - 0.5 * h)).abs() < 1e-14);
        assert!((t1.values()[p - 1] - 0.5 * h).abs() < 1e-14);

        let t11 = t1_pow(&one, 2).unwrap();
        for j in 0..p {
            let exact = (1.0 - g.points()[j]).powi(2) / 2.0;
            assert!((t11.values()[j] - exact).abs() <= 0.5 * h + 1e-12);
        }
    }

    #[test]
    fn t1_is_weighted_transpose_of_t0() {
        let p = 9;
        let g = grid(p);
        let w = g.weights();
        // column j of C0 is T0 applied to e_j
        let mut c0 = DMatrix::zeros(p, p);
        let mut t1 = DMatrix::zeros(p, p);
        for j in 0..p {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            let f = GridFunction::new(&g, e).unwrap();
            c0.set_column(j, &nalgebra::DVector::from_vec(t0_pow(&f, 1).unwrap().into_values()));
            t1.set_column(j, &nalgebra::DVector::from_vec(t1_pow(&f, 1).unwrap().into_values()));
        }
        let wm = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(w));
        let lhs = &wm * &c0;
        let rhs = t1.transpose() * &wm;
        assert!((lhs - rhs).amax() < 1e-16);
    }

    #[test]
    fn kernel_forms() {
        let g = grid(201);
        let f = GridFunction::from_fn(&g, |t| (3.0 * t).sin() + t * t).unwrap();
        let a = t0_pow(&f, 1).unwrap();
        let b = t0_pow_kernel(&f, 1).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-14);
        }
        // the iterated and kernel rules are both second order; they agree to O(h²)
        for k in 2..=4 {
            let a = t0_pow(&f, k).unwrap();
            let b = t0_pow_kernel(&f, k).unwrap();
            let diff = a.axpby(1.0, &b, -1.0).unwrap().sup_norm();
            assert!(diff < 1e-5, "k={k} diff={diff}");
        }
        let a = t1_pow(&f, 2).unwrap();
        let b = t1_pow_kernel(&f, 2).unwrap();
        let p = g.len();
        for j in 1..p - 1 {
            assert!((a.values()[j] - b.values()[j]).abs() < 1e-4);
        }
    }

    #[test]
    fn fourier_examples() {
        let g = grid(201);
        let b1 = fourier_basis(1, &g).unwrap();
        assert!(b1.values().iter().all(|&v| v == 1.0));
        let b2 = fourier_basis(2, &g).unwrap();
        assert!((b2.values()[0] - std::f64::consts::SQRT_2).abs() < 1e-12);
        for k in 1..=50 {
            let b = fourier_basis(k, &g).unwrap();
            assert!((inner(&b, &b).unwrap() - 1.0).abs() < 1e-4);
        }
        assert!(fourier_basis(0, &g).is_err());
    }

    #[test]
    fn row_operators_match_function_operators() {
        let g = grid(31);
        let rows = DMatrix::from_fn(3, g.len(), |i, j| ((i + 1) as f64 * g.points()[j]).sin());
        let t2 = t0_rows(&rows, 2, g.step());
        for i in 0..3 {
            let f = GridFunction::new(&g, rows.row(i).iter().copied().collect()).unwrap();
            let r = t0_pow(&f, 2).unwrap();
            for j in 0..g.len() {
                assert!((t2[(i, j)] - r.values()[j]).abs() < 1e-15);
            }
        }
        let gram = weighted_gram(&rows, &rows, g.weights());
        let f0 = GridFunction::new(&g, rows.row(0).iter().copied().collect()).unwrap();
        let f2 = GridFunction::new(&g, rows.row(2).iter().copied().collect()).unwrap();
        assert!((gram[(0, 2)] - inner(&f0, &f2).unwrap()).abs() < 1e-15);
    }
}
