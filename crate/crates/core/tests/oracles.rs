//! Values checked against references computed here, independently of the
//! library's own oracles.

use nalgebra::{DMatrix, DVector};
use oei_core::bo::{one_point_ei, DEMO_NOISE};
use oei_core::gp::{Dataset, GpModel, Kernel, MeanFunction, MomentMatrix};
use oei_core::linalg::inner;
use oei_core::oei::{worst_case_distribution, OeiAcquisition};
use oei_core::sdp::{SdpMethod, SdpProblem, SdpSettings, SdpSolver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn solve_with(mean: &[f64], cov: &DMatrix<f64>, incumbent: f64, method: SdpMethod) -> oei_core::sdp::SdpSolution {
    let omega = MomentMatrix::from_moments(&DVector::from_column_slice(mean), cov).unwrap();
    let problem = SdpProblem::new(&omega, incumbent).unwrap();
    let settings = SdpSettings { method, ..SdpSettings::default() };
    let sol = SdpSolver::new(settings).solve(&problem, None).unwrap();
    assert!(sol.converged, "{method:?} did not converge: {:?}", sol.residuals);
    sol
}

fn random_cov(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    &b * b.transpose() / k as f64 + DMatrix::identity(k, k) * 0.1
}

/// Two-point worst case for one Gaussian: mass at `d -+ sqrt(d^2 + s^2)`
/// around the improvement offset `d`, whose lower point gives
/// `(d - sqrt(d^2 + s^2)) / 2`.
fn k1_reference(d: f64, s: f64) -> f64 {
    (d - (d * d + s * s).sqrt()) / 2.0
}

#[test]
fn single_point_matches_two_point_bound_on_grid() {
    for i in 0..10 {
        for j in 0..10 {
            let d = -3.0 + 6.0 * i as f64 / 9.0;
            let s = 0.1 + 2.9 * j as f64 / 9.0;
            let incumbent = 0.7;
            let sol = solve_with(&[incumbent + d], &DMatrix::from_element(1, 1, s * s), incumbent, SdpMethod::InteriorPoint);
            let want = k1_reference(d, s);
            assert!((sol.value - want).abs() <= 1e-6, "d={d} s={s}: {} vs {want}", sol.value);
        }
    }
}

#[test]
fn interior_point_and_admm_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in [2, 3, 4] {
        for _ in 0..3 {
            let mean: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cov = random_cov(&mut rng, k);
            let incumbent = rng.random_range(-1.0..1.0);
            let a = solve_with(&mean, &cov, incumbent, SdpMethod::InteriorPoint);
            let b = solve_with(&mean, &cov, incumbent, SdpMethod::Admm);
            assert!((a.value - b.value).abs() <= 1e-6 * (1.0 + a.value.abs()), "k={k}: {} vs {}", a.value, b.value);
            assert!((&a.m_bar - &b.m_bar).norm() <= 1e-4 * (1.0 + a.m_bar.norm()));
        }
    }
}

/// Plain MC estimate of `E[min(y - y_min, 0)]`, without antithetic pairs.
fn plain_mc(mean: &[f64], cov: &DMatrix<f64>, incumbent: f64, n: usize, seed: u64) -> (f64, f64) {
    let l = cov.clone().cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = mean.len();
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &l * z;
        let best = (0..k).map(|a| mean[a] + y[a]).fold(f64::INFINITY, f64::min);
        let g = (best - incumbent).min(0.0);
        sum += g;
        sq += g * g;
    }
    let m = sum / n as f64;
    (m, ((sq / n as f64 - m * m) / n as f64).sqrt())
}

#[test]
fn value_lies_below_plain_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in [1, 2, 3, 5] {
        let mean: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cov = random_cov(&mut rng, k);
        let incumbent = rng.random_range(-1.0..1.0);
        let sol = solve_with(&mean, &cov, incumbent, SdpMethod::InteriorPoint);
        let (mc, se) = plain_mc(&mean, &cov, incumbent, 200_000, 99 + k as u64);
        assert!(sol.value <= mc + 3.0 * se, "k={k}: {} above {mc} +- {se}", sol.value);
    }
}

/// Simpson quadrature of `min(y - y_min, 0)` against the normal density.
fn quadrature_ei(mu: f64, var: f64, incumbent: f64) -> f64 {
    let s = var.sqrt();
    let (lo, hi, n) = (mu - 12.0 * s, mu + 12.0 * s, 20_000);
    let h = (hi - lo) / n as f64;
    let f = |y: f64| {
        let z = (y - mu) / s;
        (y - incumbent).min(0.0) * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn one_point_ei_matches_quadrature() {
    for &(mu, var, inc) in &[(0.0, 1.0, 0.0), (1.5, 0.25, 0.2), (-2.0, 4.0, 1.0), (0.3, 1e-4, 0.29)] {
        let want = quadrature_ei(mu, var, inc);
        assert!((one_point_ei(mu, var, inc) - want).abs() < 1e-9, "{mu} {var} {inc}");
    }
}

#[test]
fn optimistic_value_never_exceeds_the_gaussian_value_for_one_point() {
    for &(mu, var, inc) in &[(0.0, 1.0, 0.0), (1.5, 0.25, 0.2), (-2.0, 4.0, 1.0)] {
        let sol = solve_with(&[mu], &DMatrix::from_element(1, 1, var), inc, SdpMethod::InteriorPoint);
        assert!(sol.value <= quadrature_ei(mu, var, inc) + 1e-9);
    }
}

/// The primal optimizer is the gradient of the value in `Omega`.
#[test]
fn primal_optimizer_is_the_value_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let k = 3;
    let mean: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cov = random_cov(&mut rng, k);
    let omega = MomentMatrix::from_moments(&DVector::from_column_slice(&mean), &cov).unwrap();
    let value = |o: &DMatrix<f64>| {
        let p = SdpProblem::new(&MomentMatrix::from_matrix(o.clone()).unwrap(), 0.1).unwrap();
        SdpSolver::new(SdpSettings::default()).solve(&p, None).unwrap().value
    };
    let base = omega.matrix().clone();
    let sol = SdpSolver::new(SdpSettings::default()).solve(&SdpProblem::new(&omega, 0.1).unwrap(), None).unwrap();
    // Symmetric, with the corner fixed at one.
    let mut dir = DMatrix::from_fn(k + 1, k + 1, |a, b| ((a + 2 * b) as f64).sin() + ((b + 2 * a) as f64).sin());
    dir[(k, k)] = 0.0;
    let h = 1e-5;
    let fd = (value(&(&base + &dir * h)) - value(&(&base - &dir * h))) / (2.0 * h);
    let analytic = inner(&sol.m_bar, &dir);
    assert!((fd - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()), "{fd} vs {analytic}");
}

/// The worst-case distribution's support points, checked by direct sums.
#[test]
fn worst_case_distribution_attains_value_and_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let k = 4;
    let mean: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cov = random_cov(&mut rng, k);
    let incumbent = -0.2;
    let sol = solve_with(&mean, &cov, incumbent, SdpMethod::InteriorPoint);
    let dist = worst_case_distribution(&sol);
    let (mut w_sum, mut m1, mut m2, mut eg) = (0.0, DVector::zeros(k), DMatrix::zeros(k, k), 0.0);
    for (w, p) in dist.weights.iter().zip(&dist.atoms) {
        w_sum += w;
        m1 += p * *w;
        m2 += p * p.transpose() * *w;
        eg += w * (p.min() - incumbent).min(0.0);
    }
    let mu = DVector::from_column_slice(&mean);
    let second = &cov + &mu * mu.transpose();
    assert!((w_sum - 1.0).abs() < 1e-8);
    assert!((m1 - &mu).norm() < 1e-6);
    assert!((m2 - second).norm() < 1e-6 * (1.0 + cov.norm()));
    assert!((eg - sol.value).abs() < 1e-6);
}

/// The solver's value for a GP batch equals the one for the posterior moments
/// computed here from the kernel.
#[test]
fn gp_batch_value_matches_hand_built_posterior() {
    let xs = [-0.8, -0.2, 0.5];
    let ys = [0.3, -0.4, 0.1];
    let kern = Kernel::squared_exponential(1.0, 0.4).unwrap();
    let model = GpModel::new(
        Dataset::new(DMatrix::from_column_slice(3, 1, &xs), ys.to_vec()).unwrap(),
        kern,
        MeanFunction::Zero,
        DEMO_NOISE,
    )
    .unwrap();
    let batch = [0.1, 0.9];
    let x = DMatrix::from_column_slice(2, 1, &batch);
    let acq = OeiAcquisition::new(&model, 2.0);
    let got = acq.evaluate(&x, &mut SdpSolver::new(SdpSettings::default()), false, false).unwrap().value;

    let k = |a: f64, b: f64| (-(a - b) * (a - b) / (2.0 * 0.4 * 0.4)).exp();
    let kxx = DMatrix::from_fn(3, 3, |i, j| k(xs[i], xs[j]) + if i == j { model.jitter() + DEMO_NOISE } else { 0.0 });
    let ksx = DMatrix::from_fn(2, 3, |i, j| k(batch[i], xs[j]));
    let kss = DMatrix::from_fn(2, 2, |i, j| k(batch[i], batch[j]) + if i == j { model.jitter() } else { 0.0 });
    let inv = kxx.try_inverse().unwrap();
    let mu = &ksx * &inv * DVector::from_column_slice(&ys);
    let cov = kss - &ksx * &inv * ksx.transpose();
    let want = solve_with(mu.as_slice(), &cov, -0.4, SdpMethod::Admm).value;
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
}
