//! Simulation designs and the Monte Carlo size/power driver.
//!
//! Curves are `X(t) = Σ_{k≤50} ζ_k Z_k φ_k(t)` in the cosine basis with
//! `Z_k ~ U[−√3, √3]`, the slope is `β₀ = B Σ_k (−1)^{k+1} k^{−2} φ_k` and the
//! noise is standard normal. Replication `r` draws from the ChaCha20 stream
//! `r` of the configured seed, so results do not depend on scheduling.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

use crate::design::{build_design, eig_qhat, qraw_spectrum, FunctionalSample};
use crate::error::{FlrtError, Result};
use crate::funcgrid::{fourier_basis, weighted_dot, Grid, GridFunction};
use crate::glrt::{run_test, Sided};
use crate::lambda_select::select_lambda_from_spectrum;

/// Number of basis terms in the simulated curves.
pub const N_TERMS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setup {
    One,
    Two,
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setup::One => "1",
            Setup::Two => "2",
        })
    }
}

impl FromStr for Setup {
    type Err = FlrtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Setup::One),
            "2" => Ok(Setup::Two),
            other => Err(FlrtError::InvalidInput(format!("setup must be 1 or 2, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LambdaRule {
    #[default]
    Adaptive,
    Fixed(f64),
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaRule::Adaptive => f.write_str("adaptive"),
            LambdaRule::Fixed(l) => write!(f, "fixed:{l:e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub setup: Setup,
    pub n: usize,
    pub nu: f64,
    pub b: f64,
    pub reps: usize,
    pub alpha: f64,
    pub m: usize,
    pub grid_points: usize,
    pub seed: u64,
    pub sided: Sided,
    pub lambda_rule: LambdaRule,
    /// Setup 2 only: read the bracket `[5(k/5)]` as `k` instead of `5⌊k/5⌋`.
    pub literal_bracket: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            setup: Setup::One,
            n: 100,
            nu: 2.0,
            b: 0.0,
            reps: 1000,
            alpha: 0.05,
            m: 2,
            grid_points: 201,
            seed: 7,
            sided: Sided::Two,
            lambda_rule: LambdaRule::Adaptive,
            literal_bracket: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FlrtError::InvalidInput(msg));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.n < 10 {
            return bad(format!("n must be at least 10, got {}", self.n));
        }
        if self.m == 0 || self.n < self.m + 2 {
            return bad(format!("penalty order m = {} is invalid for n = {}", self.m, self.n));
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return bad(format!("B must be finite and nonnegative, got {}", self.b));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.grid_points < 3 {
            return bad(format!("grid needs at least 3 points, got {}", self.grid_points));
        }
        if let LambdaRule::Fixed(l) = self.lambda_rule {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("fixed lambda must be positive, got {l}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizePowerRow {
    pub config: SimConfig,
    pub rejections: usize,
    pub reject_rate: f64,
    /// `√(p̂(1−p̂)/reps)`
    pub mc_stderr: f64,
    pub mean_lambda: f64,
}

/// Setup-1 coefficients `(−1)^{k+1} k^{−ν/2}`, normalized to unit length.
pub fn zeta_setup1(nu: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=N_TERMS)
        .map(|k| alt(k) * (k as f64).powf(-nu / 2.0))
        .collect();
    let norm = raw.iter().map(|z| z * z).sum::<f64>().sqrt();
    raw.into_iter().map(|z| z / norm).collect()
}

/// Setup-2 coefficients (unnormalized).
pub fn zeta_setup2(nu: f64, literal_bracket: bool) -> Vec<f64> {
    (1..=N_TERMS)
        .map(|k| match k {
            1 => 1.0,
            2..=4 => 0.2 * alt(k) * (1.0 - 0.0001 * k as f64),
            _ => {
                let base = if literal_bracket {
                    k as f64
                } else {
                    (5 * (k / 5)) as f64
                };
                0.2 * alt(k) * base.powf(-nu / 5.0) - 0.0001 * (k % 5) as f64
            }
        })
        .collect()
}

fn alt(k: usize) -> f64 {
    if k % 2 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Basis, coefficients and true slope for one simulation setting.
#[derive(Debug, Clone)]
pub struct Generator {
    grid: Arc<Grid>,
    /// `N_TERMS × p`, row `k` is `ζ_{k+1} φ_{k+1}`.
    scaled_basis: DMatrix<f64>,
    beta0: GridFunction,
    /// `ζ_k ⟨φ_k, β₀⟩`, so `∫X β₀ = Σ_k Z_k · signal_k`.
    signal: Vec<f64>,
}

impl Generator {
    pub fn new(grid: &Arc<Grid>, zeta: &[f64], b: f64) -> Result<Self> {
        let p = grid.len();
        let mut scaled_basis = DMatrix::zeros(zeta.len(), p);
        let mut beta = vec![0.0; p];
        for (k, z) in zeta.iter().enumerate() {
            let phi = fourier_basis(k + 1, grid)?;
            let c = b * alt(k + 1) / ((k + 1) as f64).powi(2);
            for (j, v) in phi.values().iter().enumerate() {
                scaled_basis[(k, j)] = z * v;
                beta[j] += c * v;
            }
        }
        let beta0 = GridFunction::new(grid, beta)?;
        let signal = scaled_basis
            .row_iter()
            .map(|r| {
                let r: Vec<f64> = r.iter().copied().collect();
                weighted_dot(grid.weights(), &r, beta0.values())
            })
            .collect();
        Ok(Self {
            grid: Arc::clone(grid),
            scaled_basis,
            beta0,
            signal,
        })
    }

    pub fn for_config(grid: &Arc<Grid>, config: &SimConfig) -> Result<Self> {
        let zeta = match config.setup {
            Setup::One => zeta_setup1(config.nu),
            Setup::Two => zeta_setup2(config.nu, config.literal_bracket),
        };
        Self::new(grid, &zeta, config.b)
    }

    pub fn beta0(&self) -> &GridFunction {
        &self.beta0
    }

    /// Draws `n` centered observations.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<FunctionalSample> {
        Ok(self.sample_uncentered(n, rng)?.centered())
    }

    /// Draws `n` observations without centering them.
    pub fn sample_uncentered<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<FunctionalSample> {
        let s3 = 3f64.sqrt();
        let unif = Uniform::new(-s3, s3).map_err(|e| FlrtError::Numeric(e.to_string()))?;
        let terms = self.scaled_basis.nrows();
        let mut z = DMatrix::zeros(n, terms);
        for i in 0..n {
            for k in 0..terms {
                z[(i, k)] = unif.sample(rng);
            }
        }
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let eps: f64 = StandardNormal.sample(rng);
            let mean: f64 = (0..terms).map(|k| z[(i, k)] * self.signal[k]).sum();
            y.push(mean + eps);
        }
        let curves = z * &self.scaled_basis;
        FunctionalSample::from_matrix(&self.grid, curves, y)
    }
}

/// One setup-1 data set and the true slope.
pub fn gen_setup1<R: Rng + ?Sized>(
    n: usize,
    nu: f64,
    b: f64,
    grid: &Arc<Grid>,
    rng: &mut R,
) -> Result<(FunctionalSample, GridFunction)> {
    let g = Generator::new(grid, &zeta_setup1(nu), b)?;
    Ok((g.sample(n, rng)?, g.beta0.clone()))
}

/// One setup-2 data set (floor reading of the bracket) and the true slope.
pub fn gen_setup2<R: Rng + ?Sized>(
    n: usize,
    nu: f64,
    b: f64,
    grid: &Arc<Grid>,
    rng: &mut R,
) -> Result<(FunctionalSample, GridFunction)> {
    let g = Generator::new(grid, &zeta_setup2(nu, false), b)?;
    Ok((g.sample(n, rng)?, g.beta0.clone()))
}

/// Generator for replication `index` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Outcome of a single replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replicate {
    pub reject: bool,
    pub lambda: f64,
    pub z: f64,
}

pub fn run_replication(gen: &Generator, config: &SimConfig, index: u64) -> Result<Replicate> {
    let mut rng = replication_rng(config.seed, index);
    let sample = gen.sample(config.n, &mut rng)?;
    let design = build_design(&sample, config.m)?;
    let lambda = match config.lambda_rule {
        LambdaRule::Fixed(l) => l,
        LambdaRule::Adaptive => {
            select_lambda_from_spectrum(&qraw_spectrum(&design), config.n)?.lambda_tilde
        }
    };
    let eigs = eig_qhat(&design)?;
    let res = run_test(&design, &eigs, sample.responses(), lambda, config.alpha, config.sided)?;
    Ok(Replicate {
        reject: res.reject,
        lambda,
        z: res.z,
    })
}

/// All replications of `config`, in index order.
pub fn replicate_all(config: &SimConfig) -> Result<Vec<Replicate>> {
    config.validate()?;
    let grid = Grid::uniform(config.grid_points)?;
    let gen = Generator::for_config(&grid, config)?;
    (0..config.reps as u64)
        .into_par_iter()
        .map(|r| {
            run_replication(&gen, config, r).map_err(|e| FlrtError::Replication {
                index: r,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Rejection rate of the test over `config.reps` replications.
pub fn run_monte_carlo(config: &SimConfig) -> Result<SizePowerRow> {
    let reps = replicate_all(config)?;
    let rejections = reps.iter().filter(|r| r.reject).count();
    let total = reps.len() as f64;
    let rate = rejections as f64 / total;
    let mean_lambda = reps.iter().map(|r| r.lambda).sum::<f64>() / total;
    log::info!(
        "setup {} nu {} n {} B {}: {rejections}/{} rejections",
        config.setup,
        config.nu,
        config.n,
        config.b,
        reps.len()
    );
    Ok(SizePowerRow {
        config: config.clone(),
        rejections,
        reject_rate: rate,
        mc_stderr: (rate * (1.0 - rate) / total).sqrt(),
        mean_lambda,
    })
}

/// One row per value of `B`, all sharing the template's seed.
pub fn power_curve(template: &SimConfig, b_values: &[f64]) -> Result<Vec<SizePowerRow>> {
    if b_values.is_empty() {
        return Err(FlrtError::InvalidInput("no values of B given".into()));
    }
    if b_values.windows(2).any(|w| w[0].is_nan() || w[0] > w[1]) {
        return Err(FlrtError::InvalidInput("values of B must be nondecreasing".into()));
    }
    b_values
        .iter()
        .map(|&b| {
            let mut c = template.clone();
            c.b = b;
            run_monte_carlo(&c)
        })
        .collect()
}
