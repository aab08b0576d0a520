//! Monte-Carlo and closed-form oracles for the building blocks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use enkf_switch::dynamics::{euler_maruyama_step_in_place, DiffusionConfig, Drift, DriftModel, StateVector};
use enkf_switch::enkbf::{covariance_rhs, enkbf_step, enkbf_step_in_place, Ensemble, EnkbfWorkspace};
use enkf_switch::localization::{LocalizationMatrix, LocalizationSpec};
use enkf_switch::observation::{sample_subset_uniform, ObservationOperator, PoissonSwitcher};
use enkf_switch::rng::{RngStream, StreamRole};

struct Zero(usize);

impl Drift for Zero {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

fn rng(rep: u64) -> RngStream {
    RngStream::new(2024, rep, StreamRole::Scratch)
}

#[test]
fn euler_maruyama_variance_matches_diffusion() {
    // f = 0: after n steps each component has variance a^2 n dt.
    let (n, dt, paths) = (10, 0.01, 100_000);
    let cfg = DiffusionConfig::new(std::f64::consts::SQRT_2).unwrap();
    let mut r = rng(1);
    let (mut s, mut s2) = (0.0, 0.0);
    let mut buf = vec![0.0; 1];
    for _ in 0..paths {
        let mut x = vec![0.0];
        for _ in 0..n {
            euler_maruyama_step_in_place(&Zero(1), &mut x, dt, cfg, &mut r, &mut buf).unwrap();
        }
        s += x[0];
        s2 += x[0] * x[0];
    }
    let mean = s / paths as f64;
    let var = s2 / paths as f64 - mean * mean;
    let want = 2.0 * n as f64 * dt;
    assert!((var / want - 1.0).abs() < 0.05, "variance {var} vs {want}");
}

#[test]
fn observation_noise_has_stated_scale() {
    let eps = 0.3;
    let h = ObservationOperator::new(vec![1, 3], 4, eps).unwrap();
    let x: StateVector = vec![1.0, -2.0, 3.0, 0.5].into();
    let mut r = rng(2);
    let draws = 100_000;
    let (mut d2, mut i2) = (0.0, 0.0);
    let dt = 0.01;
    for _ in 0..draws {
        let y = h.discrete_observation(&x, &mut r).unwrap();
        d2 += (y[0] + 2.0).powi(2) + (y[1] - 0.5).powi(2);
        let dy = h.observation_increment(&x, dt, &mut r).unwrap();
        i2 += (dy[0] + 2.0 * dt).powi(2) + (dy[1] - 0.5 * dt).powi(2);
    }
    let std = (d2 / (2 * draws) as f64).sqrt();
    let inc_var = i2 / (2 * draws) as f64;
    assert!((std / eps - 1.0).abs() < 0.02, "discrete std {std}");
    assert!((inc_var / (eps * dt) - 1.0).abs() < 0.02, "increment variance {inc_var}");
}

#[test]
fn five_choose_two_is_uniform() {
    let draws = 100_000;
    let mut r = rng(3);
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for _ in 0..draws {
        *counts.entry(sample_subset_uniform(5, 2, &mut r).unwrap()).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 10);
    let expected = draws as f64 / 10.0;
    for (s, &c) in &counts {
        assert!((c as f64 / draws as f64 - 0.1).abs() < 0.01, "{s:?}: {c}");
    }
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2 {chi2}, p {p}");
}

#[test]
fn marginal_inclusion_is_nj_over_nx() {
    let (n_x, n_j, draws) = (12, 5, 100_000);
    let mut r = rng(4);
    let mut hits = vec![0usize; n_x];
    for _ in 0..draws {
        for i in sample_subset_uniform(n_x, n_j, &mut r).unwrap() {
            hits[i] += 1;
        }
    }
    let p = n_j as f64 / n_x as f64;
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    for (i, &h) in hits.iter().enumerate() {
        let f = h as f64 / draws as f64;
        assert!((f - p).abs() < 3.0 * sigma + 1e-12, "index {i}: {f} vs {p}");
    }
}

#[test]
fn poisson_ln2_switches_half_the_time() {
    let cycles = 100_000;
    let mut sw = PoissonSwitcher::new(
        std::f64::consts::LN_2,
        RngStream::new(5, 0, StreamRole::PoissonClock),
        RngStream::new(5, 0, StreamRole::SubsetSampler),
    )
    .unwrap();
    let h = ObservationOperator::new(vec![0], 6, 1.0).unwrap();
    let mut switches = 0;
    for _ in 0..cycles {
        let (switched, next) = sw.maybe_switch(&h, || 2).unwrap();
        if switched {
            switches += 1;
            assert_eq!(next.n_obs(), 2);
        } else {
            assert_eq!(next, h);
        }
    }
    let f = switches as f64 / cycles as f64;
    assert!((f - 0.5).abs() < 0.01, "switch frequency {f}");
}

fn scalar_ensemble(m: usize, mean: f64, var: f64) -> Ensemble {
    // Symmetric, exactly centred members with the requested sample variance.
    let raw: Vec<f64> = (0..m).map(|i| i as f64 - (m - 1) as f64 / 2.0).collect();
    let s2: f64 = raw.iter().map(|v| v * v).sum::<f64>() / (m - 1) as f64;
    let scale = (var / s2).sqrt();
    Ensemble::from_matrix(DMatrix::from_fn(1, m, |_, j| mean + scale * raw[j])).unwrap()
}

#[test]
fn scalar_variance_follows_riccati_solution() {
    // With f = 0, phi = 1, H = 1 and R = eps the ensemble variance obeys
    // dP/dt = 2 - P^2 / eps, so P(t) = s tanh(s t / eps + atanh(P0 / s)),
    // s = sqrt(2 eps).
    let (eps, p0, dt, t_end): (f64, f64, f64, f64) = (0.5, 0.1, 1e-4, 2.0);
    let s = (2.0 * eps).sqrt();
    let exact = |t: f64| s * (s * t / eps + (p0 / s).atanh()).tanh();
    let h = ObservationOperator::new(vec![0], 1, eps).unwrap();
    let phi = LocalizationMatrix::all_ones(1);
    let mut e = scalar_ensemble(40, 3.0, p0);
    let mut ws = EnkbfWorkspace::default();
    let steps = (t_end / dt).round() as usize;
    let mut worst = 0.0f64;
    for k in 1..=steps {
        enkbf_step_in_place(&mut e, &Zero(1), &phi, &h, &[0.0], dt, 1e-12, &mut ws).unwrap();
        if k % 1000 == 0 {
            let p = e.covariance().unwrap()[(0, 0)];
            worst = worst.max((p - exact(k as f64 * dt)).abs() / exact(k as f64 * dt));
        }
    }
    assert!(worst < 1e-3, "relative deviation from Riccati solution {worst}");
}

#[test]
fn mean_converges_monotonically_to_constant_truth() {
    let (eps, dt, truth) = (0.5, 1e-3, 1.7);
    let h = ObservationOperator::new(vec![0], 1, eps).unwrap();
    let phi = LocalizationMatrix::all_ones(1);
    let mut e = scalar_ensemble(200, -2.0, 1.0);
    let mut gap = (e.mean()[0] - truth).abs();
    for _ in 0..5000 {
        e = enkbf_step(&e, &Zero(1), &phi, &h, &[truth * dt], dt, 1e-12).unwrap().0;
        let g = (e.mean()[0] - truth).abs();
        assert!(g <= gap, "gap grew from {gap} to {g}");
        gap = g;
    }
    assert!(gap < 1e-2, "final gap {gap}");
}

#[test]
fn covariance_rhs_matches_finite_difference() {
    let model = DriftModel::lorenz96(8, 8.0).unwrap();
    let phi = LocalizationMatrix::build(&LocalizationSpec::gaspari_cohn(2.0), 8).unwrap();
    let h = ObservationOperator::new(vec![1, 4, 6], 8, 0.4).unwrap();
    let mut r = rng(6);
    let m = DMatrix::from_fn(8, 25, |i, _| 3.0 + (i as f64).sin() + r.standard_normal());
    let e = Ensemble::from_matrix(m).unwrap();
    let dy = vec![0.3 * 1e-6, -0.1 * 1e-6, 0.2 * 1e-6];
    let rhs = covariance_rhs(&e, &model, &phi, &h, 1e-12).unwrap();
    let mut errs = Vec::new();
    for dt in [1e-4, 5e-5] {
        let (next, _) = enkbf_step(&e, &model, &phi, &h, &dy, dt, 1e-12).unwrap();
        let fd = (next.covariance().unwrap() - e.covariance().unwrap()) / dt;
        let err = (fd.diagonal() - rhs.diagonal()).amax() / rhs.diagonal().amax();
        errs.push(err);
    }
    assert!(errs[0] < 1e-2, "finite-difference mismatch {errs:?}");
    // First-order agreement: halving dt roughly halves the mismatch.
    assert!(errs[1] < 0.6 * errs[0], "mismatch does not shrink with dt: {errs:?}");
}
