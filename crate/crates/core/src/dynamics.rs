//! Lorenz-63 / Lorenz-96 drifts and the RK4 and Euler–Maruyama integrators.

use std::ops::{Deref, DerefMut};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

/// A state of the system, one value per component.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        StateVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// A vector field `f: R^n -> R^n`.
///
/// Implemented by [`DriftModel`]; tests plug in simple stubs (zero or
/// identity drift) through the same interface.
pub trait Drift {
    fn dim(&self) -> usize;

    /// Writes `f(x)` into `out`. Both slices have length `dim()`.
    fn eval_into(&self, x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftModel {
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
    Lorenz96 { forcing: f64, dim: usize },
}

impl DriftModel {
    /// Lorenz-63 with the classical chaotic parameters (10, 28, 8/3).
    pub fn lorenz63() -> Self {
        DriftModel::Lorenz63 {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn lorenz96(dim: usize, forcing: f64) -> Result<Self> {
        let m = DriftModel::Lorenz96 { forcing, dim };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DriftModel::Lorenz63 { sigma, rho, beta } => {
                if ![sigma, rho, beta].iter().all(|p| p.is_finite()) {
                    return Err(Error::invalid("Lorenz-63 parameters must be finite"));
                }
            }
            DriftModel::Lorenz96 { forcing, dim } => {
                if dim < 4 {
                    return Err(Error::invalid(format!(
                        "Lorenz-96 needs at least 4 components, got {dim}"
                    )));
                }
                if !forcing.is_finite() {
                    return Err(Error::invalid("Lorenz-96 forcing must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn drift(&self, x: &StateVector) -> Result<StateVector> {
        check_dim(self.dim(), x.dim())?;
        let mut out = StateVector::zeros(x.dim());
        self.eval_into(x, &mut out);
        Ok(out)
    }
}

impl Drift for DriftModel {
    fn dim(&self) -> usize {
        match *self {
            DriftModel::Lorenz63 { .. } => 3,
            DriftModel::Lorenz96 { dim, .. } => dim,
        }
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            DriftModel::Lorenz63 { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            DriftModel::Lorenz96 { forcing, dim: n } => {
                for i in 0..n {
                    let ip1 = if i + 1 == n { 0 } else { i + 1 };
                    let im1 = if i == 0 { n - 1 } else { i - 1 };
                    let im2 = (i + n - 2) % n;
                    out[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + forcing;
                }
            }
        }
    }
}

/// Amplitude of the additive state noise; the SDE is
/// `dX = f(X) dt + amplitude dW` with `W` a standard Wiener process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionConfig {
    pub noise_amplitude: f64,
}

impl DiffusionConfig {
    pub fn new(noise_amplitude: f64) -> Result<Self> {
        if !(noise_amplitude >= 0.0) || !noise_amplitude.is_finite() {
            return Err(Error::invalid("noise amplitude must be finite and >= 0"));
        }
        Ok(DiffusionConfig { noise_amplitude })
    }
}

impl Default for DiffusionConfig {
    /// `sqrt(2)`, i.e. unit diffusion covariance.
    fn default() -> Self {
        DiffusionConfig {
            noise_amplitude: std::f64::consts::SQRT_2,
        }
    }
}

/// Stage buffers for [`rk4_step_in_place`], reusable across steps.
#[derive(Debug, Clone)]
pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(dim: usize) -> Self {
        Rk4Scratch {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("time step must be positive, got {dt}")))
    }
}

fn non_finite() -> Error {
    Error::NonFinite { step: 0, member: None }
}

/// Classical fourth-order Runge–Kutta step, overwriting `x`.
///
/// Fails with [`Error::NonFinite`] if any stage leaves the finite reals;
/// `x` is left untouched in that case.
pub fn rk4_step_in_place<D: Drift + ?Sized>(
    model: &D,
    x: &mut [f64],
    dt: f64,
    s: &mut Rk4Scratch,
) -> Result<()> {
    let n = x.len();
    let half = 0.5 * dt;
    model.eval_into(x, &mut s.k1);
    for i in 0..n {
        s.tmp[i] = x[i] + half * s.k1[i];
    }
    model.eval_into(&s.tmp, &mut s.k2);
    for i in 0..n {
        s.tmp[i] = x[i] + half * s.k2[i];
    }
    model.eval_into(&s.tmp, &mut s.k3);
    for i in 0..n {
        s.tmp[i] = x[i] + dt * s.k3[i];
    }
    model.eval_into(&s.tmp, &mut s.k4);
    let sixth = dt / 6.0;
    for i in 0..n {
        s.tmp[i] = x[i] + sixth * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
    if !s.tmp.iter().all(|v| v.is_finite()) {
        return Err(non_finite());
    }
    x.copy_from_slice(&s.tmp);
    Ok(())
}

pub fn rk4_step<D: Drift + ?Sized>(model: &D, x: &StateVector, dt: f64) -> Result<StateVector> {
    check_dt(dt)?;
    check_dim(model.dim(), x.dim())?;
    let mut out = x.clone();
    rk4_step_in_place(model, &mut out, dt, &mut Rk4Scratch::new(x.dim()))?;
    Ok(out)
}

/// `x + f(x) dt + a sqrt(dt) xi`, xi ~ N(0, I), in place. `drift` is a
/// scratch buffer of length `x.len()`.
pub fn euler_maruyama_step_in_place<D: Drift + ?Sized>(
    model: &D,
    x: &mut [f64],
    dt: f64,
    cfg: DiffusionConfig,
    rng: &mut RngStream,
    drift: &mut [f64],
) -> Result<()> {
    model.eval_into(x, drift);
    let scale = cfg.noise_amplitude * dt.sqrt();
    for (xi, fi) in x.iter_mut().zip(drift.iter()) {
        *xi += fi * dt;
    }
    if scale > 0.0 {
        for xi in x.iter_mut() {
            *xi += scale * rng.standard_normal();
        }
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(non_finite())
    }
}

pub fn euler_maruyama_step<D: Drift + ?Sized>(
    model: &D,
    x: &StateVector,
    dt: f64,
    cfg: DiffusionConfig,
    rng: &mut RngStream,
) -> Result<StateVector> {
    check_dt(dt)?;
    check_dim(model.dim(), x.dim())?;
    let mut out = x.clone();
    let mut buf = vec![0.0; x.dim()];
    euler_maruyama_step_in_place(model, &mut out, dt, cfg, rng, &mut buf)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l96(n: usize) -> DriftModel {
        DriftModel::lorenz96(n, 8.0).unwrap()
    }

    #[test]
    fn l63_origin_is_fixed_point() {
        let f = DriftModel::lorenz63().drift(&vec![0.0; 3].into()).unwrap();
        assert_eq!(f.0, vec![0.0; 3]);
    }

    #[test]
    fn l63_drift_at_ones() {
        let f = DriftModel::lorenz63().drift(&vec![1.0; 3].into()).unwrap();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 26.0);
        assert!((f[2] + 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn l96_forcing_state_is_stationary() {
        let f = l96(40).drift(&vec![8.0; 40].into()).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_checks() {
        assert!(DriftModel::lorenz96(3, 8.0).is_err());
        assert!(matches!(
            DriftModel::lorenz63().drift(&vec![0.0; 4].into()),
            Err(Error::DimensionMismatch { expected: 3, actual: 4 })
        ));
        assert!(rk4_step(&DriftModel::lorenz63(), &vec![1.0; 3].into(), 0.0).is_err());
    }

    #[test]
    fn rk4_zero_drift_is_identity() {
        let m = DriftModel::lorenz96(8, 0.0).unwrap();
        let x = StateVector::zeros(8);
        assert_eq!(rk4_step(&m, &x, 0.37).unwrap(), x);
    }

    #[test]
    fn rk4_blow_up_is_reported() {
        let x: StateVector = vec![1e200, -1e200, 1e200].into();
        let err = rk4_step(&DriftModel::lorenz63(), &x, 0.01).unwrap_err();
        assert!(err.is_blow_up());
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        // Oracle: the same step resolved with 100 sub-steps.
        let m = DriftModel::lorenz63();
        let x0: StateVector = vec![1.0, 1.0, 1.0].into();
        let local_err = |dt: f64| {
            let coarse = rk4_step(&m, &x0, dt).unwrap();
            let mut fine = x0.clone();
            for _ in 0..100 {
                fine = rk4_step(&m, &fine, dt / 100.0).unwrap();
            }
            coarse.iter().zip(fine.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let e1 = local_err(0.004);
        let e2 = local_err(0.002);
        assert!(e1 < 1e-7, "local error {e1}");
        let order = (e1 / e2).log2();
        assert!((4.5..5.5).contains(&order), "local order {order}");
    }

    #[test]
    fn euler_maruyama_without_noise_is_explicit_euler() {
        let m = DriftModel::lorenz63();
        let x: StateVector = vec![1.5, -2.0, 20.0].into();
        let mut rng = RngStream::from_seed(1);
        let em = euler_maruyama_step(&m, &x, 0.01, DiffusionConfig::new(0.0).unwrap(), &mut rng)
            .unwrap();
        let f = m.drift(&x).unwrap();
        for i in 0..3 {
            assert_eq!(em[i].to_bits(), (x[i] + f[i] * 0.01).to_bits());
        }
    }

    #[test]
    fn euler_maruyama_is_deterministic_per_seed() {
        let m = DriftModel::lorenz63();
        let run = || {
            let mut rng = RngStream::from_seed(99);
            let mut x: StateVector = vec![1.0, 2.0, 3.0].into();
            for _ in 0..500 {
                x = euler_maruyama_step(&m, &x, 1e-3, DiffusionConfig::default(), &mut rng).unwrap();
            }
            x
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn diffusion_rejects_negative_amplitude() {
        assert!(DiffusionConfig::new(-0.1).is_err());
        assert!(DiffusionConfig::new(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn l96_drift_commutes_with_rotation(
            xs in proptest::collection::vec(-20.0f64..20.0, 4..24),
            shift in 0usize..24,
        ) {
            let n = xs.len();
            let m = l96(n);
            let rot = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| v[(i + shift) % n]).collect() };
            let lhs = m.drift(&rot(&xs).into()).unwrap();
            let rhs = rot(&m.drift(&xs.clone().into()).unwrap());
            prop_assert_eq!(lhs.0, rhs);
        }

        #[test]
        fn drift_is_pure(xs in proptest::collection::vec(-20.0f64..20.0, 3)) {
            let m = DriftModel::lorenz63();
            let x: StateVector = xs.into();
            prop_assert_eq!(m.drift(&x).unwrap(), m.drift(&x).unwrap());
        }
    }
}
