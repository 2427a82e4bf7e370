mod common;

use common::{random_sample, rel_l2, second_difference_fit, DenseDesign};
use flrt::estimator::{assemble_beta, objective};
use flrt::{build_design, eig_qhat, fit, rss_pair, GridFunction};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn lambdas() -> impl Strategy<Value = f64> {
    (-6.0..0.0f64).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fit_is_linear_in_response(seed in any::<u64>(), lambda in lambdas(), a in -3.0..3.0f64) {
        let s = random_sample(seed, 14, 41);
        let d = build_design(&s, 2).unwrap();
        let e = eig_qhat(&d).unwrap();
        let y1 = s.responses().to_vec();
        let y2: Vec<f64> = (0..14).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + v).collect();
        let f1 = fit(&d, &e, &y1, lambda).unwrap();
        let f2 = fit(&d, &e, &y2, lambda).unwrap();
        let fs = fit(&d, &e, &sum, lambda).unwrap();
        let combo = f1.beta.axpby(a, &f2.beta, 1.0).unwrap();
        let diff = fs.beta.axpby(1.0, &combo, -1.0).unwrap();
        prop_assert!(diff.sup_norm() <= 1e-10 * (1.0 + combo.sup_norm()));
    }

    #[test]
    fn optimality_certificates(seed in any::<u64>(), m in 1usize..4, lambda in lambdas()) {
        let n = 16;
        let s = random_sample(seed, n, 51);
        let d = build_design(&s, m).unwrap();
        let e = eig_qhat(&d).unwrap();
        let y = s.responses();
        let f = fit(&d, &e, y, lambda).unwrap();
        let yscale = y.iter().map(|v| v * v).sum::<f64>().sqrt() / (n as f64).sqrt();

        // (λI + Q̂) β̂^{(m)} − (−1)^m n⁻¹ Σ Y_i Û_i = 0, by direct quadrature
        let u = d.u();
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(d.grid().weights()));
        let bm = DVector::from_column_slice(f.beta_m.values());
        let yv = DVector::from_column_slice(y);
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let resid = &bm * lambda + u.transpose() * (u * &w * &bm) / n as f64
            - u.transpose() * &yv * (sign / n as f64);
        let l2 = (resid.transpose() * &w * &resid)[(0, 0)].sqrt();
        prop_assert!(l2 <= 1e-8 * yscale, "stationarity residual {l2:e}");

        // boundary equations n⁻¹ Σ_i T₀^k X_i(1) (Y_i − ∫X_i β̂) = 0
        let r = DVector::from_iterator(n, y.iter().zip(&f.fitted).map(|(a, b)| a - b));
        let xt = d.xtilde1();
        let bnd = xt * &r / n as f64;
        prop_assert!(bnd.amax() <= 1e-8 * yscale * (1.0 + xt.amax()));

        // β̂ improves on zero and satisfies the objective inequality
        let (rss0, rss1) = rss_pair(&f);
        prop_assert!(rss1 <= rss0);
        let pen = f.penalty / lambda;
        prop_assert!(rss1 + n as f64 * lambda * pen <= rss0 * (1.0 + 1e-8));

        // reconstruction from the boundary vector and β̂^{(m)}
        let rebuilt = assemble_beta(&d, &f.upsilon1, &f.beta_m).unwrap();
        let diff = rebuilt.axpby(1.0, &f.beta, -1.0).unwrap();
        prop_assert!(diff.sup_norm() <= 1e-8 * (1.0 + f.beta.sup_norm()));
    }

    #[test]
    fn perturbations_do_not_descend(seed in any::<u64>(), lambda in lambdas(), c in prop::collection::vec(-1.0..1.0f64, 5)) {
        let s = random_sample(seed, 12, 41);
        let d = build_design(&s, 2).unwrap();
        let e = eig_qhat(&d).unwrap();
        let y = s.responses();
        let f = fit(&d, &e, y, lambda).unwrap();
        let best = objective(&d, y, lambda, &f.upsilon1, &f.beta_m).unwrap();
        let zero = objective(&d, y, lambda, &[0.0, 0.0], &GridFunction::zeros(d.grid())).unwrap();
        prop_assert!(best <= zero * (1.0 + 1e-12));
        let dir = GridFunction::from_fn(d.grid(), |t| c[0] * (2.0 * t).sin() + c[1] * t + c[2] * (5.0 * t).cos()).unwrap();
        for eps in [1e-3, -1e-3] {
            let bm = f.beta_m.axpby(1.0, &dir, eps).unwrap();
            let ups = [f.upsilon1[0] + eps * c[3], f.upsilon1[1] + eps * c[4]];
            let val = objective(&d, y, lambda, &ups, &bm).unwrap();
            prop_assert!(best <= val * (1.0 + 1e-12));
        }
    }
}

#[test]
fn zero_response_fits_zero() {
    let s = random_sample(5, 10, 31);
    let d = build_design(&s, 2).unwrap();
    let e = eig_qhat(&d).unwrap();
    let f = fit(&d, &e, &[0.0; 10], 1e-2).unwrap();
    assert_eq!(rss_pair(&f), (0.0, 0.0));
    assert_eq!(f.beta.sup_norm(), 0.0);
}

#[test]
fn residuals_shrink_as_lambda_decreases() {
    for seed in 0..5 {
        let s = random_sample(seed, 25, 61);
        let d = build_design(&s, 2).unwrap();
        let e = eig_qhat(&d).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let lambda = 10f64.powf(1.0 - 0.2 * k as f64);
            let (_, rss1) = rss_pair(&fit(&d, &e, s.responses(), lambda).unwrap());
            assert!(rss1 <= prev * (1.0 + 1e-12), "seed {seed} lambda {lambda:e}");
            prev = rss1;
        }
    }
}

#[test]
fn heavy_penalty_reduces_to_linear_regression() {
    for seed in 0..5 {
        let s = random_sample(seed, 30, 201);
        let d = build_design(&s, 2).unwrap();
        let e = eig_qhat(&d).unwrap();
        let f = fit(&d, &e, s.responses(), 1e6).unwrap();
        // regressors ∫X_i and ∫X_i(s)(1−s)ds by the trapezoid rule
        let g = s.grid();
        let n = s.n();
        let mut z = DMatrix::zeros(n, 2);
        for i in 0..n {
            let c = s.curve(i);
            for (j, (&x, &t)) in c.values().iter().zip(g.points()).enumerate() {
                z[(i, 0)] += g.weights()[j] * x;
                z[(i, 1)] += g.weights()[j] * x * (1.0 - t);
            }
        }
        let y = DVector::from_column_slice(s.responses());
        let coef = (z.transpose() * &z).lu().solve(&(z.transpose() * &y)).unwrap();
        let rss_poly = (&y - &z * &coef).norm_squared();
        let (_, rss1) = rss_pair(&f);
        assert!((rss1 - rss_poly).abs() <= 1e-3 * rss_poly, "{rss1} vs {rss_poly}");
        let line = GridFunction::from_fn(g, |t| coef[0] + coef[1] * (1.0 - t)).unwrap();
        let diff = f.beta.axpby(1.0, &line, -1.0).unwrap();
        assert!(diff.l2_norm() <= 1e-2 * line.l2_norm());
    }
}

#[test]
fn matches_dense_penalized_least_squares() {
    for seed in 0..6 {
        let s = random_sample(100 + seed, 20, 101);
        let d = build_design(&s, 2).unwrap();
        let e = eig_qhat(&d).unwrap();
        let dense = DenseDesign::new(&s, 2);
        for lambda in [1e-1, 1e-3, 1e-5] {
            let f = fit(&d, &e, s.responses(), lambda).unwrap();
            let got = DVector::from_column_slice(f.beta.values());
            let (want, ups, bm) = dense.brute_force_fit(s.responses(), lambda);
            assert!(rel_l2(&got, &want, &dense.w) <= 1e-8);
            for k in 0..2 {
                assert!((f.upsilon1[k] - ups[k]).abs() <= 1e-7 * (1.0 + ups.amax()));
            }
            let bm_got = DVector::from_column_slice(f.beta_m.values());
            assert!(rel_l2(&bm_got, &bm, &dense.w) <= 1e-7);
        }
    }
}

#[test]
fn second_difference_discretization_converges() {
    // β-space oracle with a divided-difference penalty differs from the
    // operator discretization by a grid-dependent amount that shrinks with p
    for seed in 0..3 {
        let mut prev = f64::INFINITY;
        for p in [51usize, 101, 201] {
            let s = random_sample(seed, 20, p);
            let d = build_design(&s, 2).unwrap();
            let e = eig_qhat(&d).unwrap();
            let dense = DenseDesign::new(&s, 2);
            let f = fit(&d, &e, s.responses(), 1e-3).unwrap();
            let got = DVector::from_column_slice(f.beta.values());
            let want = second_difference_fit(&dense.x, s.responses(), 1e-3);
            let gap = rel_l2(&got, &want, &dense.w);
            assert!(gap <= 2e-2, "seed {seed} p {p}: {gap:e}");
            assert!(gap < prev, "seed {seed} p {p}: {gap:e} after {prev:e}");
            prev = gap;
        }
    }
}
