//! Localized deterministic ensemble Kalman–Bucy filter.
//!
//! Each member follows
//!
//! ```text
//! dX_i = f(X_i) dt + P^+ (X_i - mean) dt
//!        - 1/2 (P o phi) H^T R^-1 (H X_i dt + H mean dt - 2 dY)
//! ```
//!
//! where `P^+` is the diagonal pseudo-inverse of the sample covariance and
//! `R = eps I`. The system is advanced with explicit Euler, freezing the
//! ensemble statistics over the step.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{Drift, StateVector};
use crate::error::{check_dim, Error, Result};
use crate::localization::LocalizationMatrix;
use crate::observation::ObservationOperator;

/// `M` members of an `N_x`-dimensional state, stored one member per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
}

impl Ensemble {
    /// Wraps an `N_x x M` matrix whose columns are the members.
    pub fn from_matrix(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() == 0 || members.nrows() == 0 {
            return Err(Error::invalid("ensemble needs at least one member and one component"));
        }
        if !members.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: 0, member: None });
        }
        Ok(Ensemble { members })
    }

    pub fn from_members(members: &[Vec<f64>]) -> Result<Self> {
        let n_x = members.first().map(|m| m.len()).unwrap_or(0);
        for m in members {
            check_dim(n_x, m.len())?;
        }
        let flat: Vec<f64> = members.iter().flatten().copied().collect();
        Self::from_matrix(DMatrix::from_vec(n_x, members.len(), flat))
    }

    pub fn n_x(&self) -> usize {
        self.members.nrows()
    }

    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn member(&self, i: usize) -> &[f64] {
        let n = self.n_x();
        &self.members.as_slice()[i * n..(i + 1) * n]
    }

    pub(crate) fn members_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.members
    }

    pub fn mean(&self) -> StateVector {
        StateVector(self.members.column_mean().as_slice().to_vec())
    }

    /// Members minus the ensemble mean.
    pub fn deviations(&self) -> DMatrix<f64> {
        let mean = self.members.column_mean();
        let mut dev = self.members.clone();
        for mut col in dev.column_iter_mut() {
            col -= &mean;
        }
        dev
    }

    /// Sample covariance with `1/(M-1)` normalization.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.size() < 2 {
            return Err(Error::invalid("covariance needs at least two members"));
        }
        let dev = self.deviations();
        Ok((&dev * dev.transpose()) / (self.size() - 1) as f64)
    }

    /// Diagonal of the sample covariance without forming the full matrix.
    pub fn variances(&self) -> Result<DVector<f64>> {
        if self.size() < 2 {
            return Err(Error::invalid("covariance needs at least two members"));
        }
        let dev = self.deviations();
        let scale = 1.0 / (self.size() - 1) as f64;
        Ok(DVector::from_iterator(
            self.n_x(),
            dev.row_iter().map(|r| r.norm_squared() * scale),
        ))
    }
}

pub fn ensemble_mean(e: &Ensemble) -> StateVector {
    e.mean()
}

pub fn ensemble_covariance(e: &Ensemble) -> Result<DMatrix<f64>> {
    e.covariance()
}

/// `x_ref - mean`.
pub fn tracking_error(e: &Ensemble, x_ref: &StateVector) -> Result<Vec<f64>> {
    check_dim(e.n_x(), x_ref.dim())?;
    let mean = e.mean();
    Ok(x_ref.iter().zip(mean.iter()).map(|(a, b)| a - b).collect())
}

/// Drift–spread interaction `1/(M-1) sum_i (X_i - mean)(f(X_i) - mean f)^T`.
pub fn covariance_interaction_term<D: Drift + ?Sized>(e: &Ensemble, model: &D) -> Result<DMatrix<f64>> {
    check_dim(model.dim(), e.n_x())?;
    if e.size() < 2 {
        return Err(Error::invalid("interaction term needs at least two members"));
    }
    let n = e.n_x();
    let mut fx = DMatrix::zeros(n, e.size());
    for (i, col) in fx.as_mut_slice().chunks_mut(n).enumerate() {
        model.eval_into(e.member(i), col);
    }
    let f_mean = fx.column_mean();
    for mut col in fx.column_iter_mut() {
        col -= &f_mean;
    }
    Ok(e.deviations() * fx.transpose() / (e.size() - 1) as f64)
}

/// Right-hand side of the covariance evolution under the filter:
/// `F + F^T + P^+ P + P P^+ - 1/(2 eps) (P_L H^T H P + P H^T H P_L)`
/// with `Omega = eps R^-1 = I`.
pub fn covariance_rhs<D: Drift + ?Sized>(
    e: &Ensemble,
    model: &D,
    phi: &LocalizationMatrix,
    h: &ObservationOperator,
    floor: f64,
) -> Result<DMatrix<f64>> {
    let f = covariance_interaction_term(e, model)?;
    let p = e.covariance()?;
    let pinv = crate::localization::diag_pseudo_inverse(&p, floor)?;
    let pl = crate::localization::localize(&p, phi)?;
    let hm = h.matrix();
    let hth = hm.transpose() * hm;
    let pinv = DMatrix::from_diagonal(&pinv);
    let gain = &pl * &hth * &p;
    Ok(&f + f.transpose() + &pinv * &p + &p * &pinv - (&gain + gain.transpose()) / (2.0 * h.eps()))
}

/// Per-step side information from [`enkbf_step`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepReport {
    /// Components whose spread factor `dt / P_kk` was clipped to 1.
    pub spread_cap_hits: usize,
}

/// Scratch buffers for [`enkbf_step_in_place`].
#[derive(Debug, Clone, Default)]
pub struct EnkbfWorkspace {
    mean: Vec<f64>,
    dev: Vec<f64>,
    spread: Vec<f64>,
    gain: Vec<f64>,
    innovation: Vec<f64>,
    drift: Vec<f64>,
}

/// Advances `e` by one explicit Euler step of the filter equations.
///
/// `dy` is the observation increment over `[t, t + dt]`.
#[allow(clippy::too_many_arguments)]
pub fn enkbf_step_in_place<D: Drift + ?Sized>(
    e: &mut Ensemble,
    model: &D,
    phi: &LocalizationMatrix,
    h: &ObservationOperator,
    dy: &[f64],
    dt: f64,
    floor: f64,
    ws: &mut EnkbfWorkspace,
) -> Result<StepReport> {
    let n = e.n_x();
    let m = e.size();
    let n_obs = h.n_obs();
    check_dim(model.dim(), n)?;
    check_dim(phi.dim(), n)?;
    check_dim(h.n_x(), n)?;
    check_dim(n_obs, dy.len())?;
    if m < 2 {
        return Err(Error::invalid("filter needs at least two members"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }

    let x = e.members.as_slice();
    ws.mean.clear();
    ws.mean.resize(n, 0.0);
    for col in x.chunks_exact(n) {
        for (acc, v) in ws.mean.iter_mut().zip(col) {
            *acc += v;
        }
    }
    let inv_m = 1.0 / m as f64;
    for v in ws.mean.iter_mut() {
        *v *= inv_m;
    }
    ws.dev.clear();
    ws.dev.extend(
        x.chunks_exact(n)
            .flat_map(|col| col.iter().zip(&ws.mean).map(|(a, b)| a - b)),
    );

    // Spread term coefficient dt * P^+_kk, capped at 1.
    let norm = 1.0 / (m - 1) as f64;
    let mut report = StepReport::default();
    ws.spread.clear();
    for k in 0..n {
        let var = (0..m).map(|i| ws.dev[i * n + k].powi(2)).sum::<f64>() * norm;
        let coef = dt / var.max(floor);
        if coef > 1.0 {
            report.spread_cap_hits += 1;
        }
        ws.spread.push(coef.min(1.0));
    }

    // Localized gain columns (P o phi)[:, j] / eps, column-major n x n_obs.
    let inv_eps = 1.0 / h.eps();
    ws.gain.clear();
    ws.gain.resize(n * n_obs, 0.0);
    for (l, &j) in h.indices().iter().enumerate() {
        for k in 0..n {
            let w = phi.get(k, j);
            if w == 0.0 {
                continue;
            }
            let cov = (0..m).map(|i| ws.dev[i * n + k] * ws.dev[i * n + j]).sum::<f64>() * norm;
            ws.gain[l * n + k] = cov * w * inv_eps;
        }
    }

    ws.drift.resize(n, 0.0);
    ws.innovation.resize(n_obs, 0.0);
    let mean = &ws.mean;
    let xs = e.members.as_mut_slice();
    for (i, col) in xs.chunks_exact_mut(n).enumerate() {
        model.eval_into(col, &mut ws.drift);
        for (l, &j) in h.indices().iter().enumerate() {
            ws.innovation[l] = (col[j] + mean[j]) * dt - 2.0 * dy[l];
        }
        for k in 0..n {
            let mut update = ws.drift[k] * dt + ws.spread[k] * ws.dev[i * n + k];
            let mut corr = 0.0;
            for l in 0..n_obs {
                corr += ws.gain[l * n + k] * ws.innovation[l];
            }
            update -= 0.5 * corr;
            col[k] += update;
        }
        if !col.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: 0, member: Some(i) });
        }
    }
    Ok(report)
}

/// Pure version of [`enkbf_step_in_place`].
#[allow(clippy::too_many_arguments)]
pub fn enkbf_step<D: Drift + ?Sized>(
    e: &Ensemble,
    model: &D,
    phi: &LocalizationMatrix,
    h: &ObservationOperator,
    dy: &[f64],
    dt: f64,
    floor: f64,
) -> Result<(Ensemble, StepReport)> {
    let mut next = e.clone();
    let report = enkbf_step_in_place(&mut next, model, phi, h, dy, dt, floor, &mut EnkbfWorkspace::default())?;
    Ok((next, report))
}

/// Inputs to the covariance bound constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub eps: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub c_f: f64,
    pub c_phi_star: f64,
    /// Carried through for reporting only.
    pub phi_min: f64,
}

/// Upper/lower variance levels and the warm-up time after which they hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c_f: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub phi_min: f64,
    pub c_phi_star: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub t_star: f64,
}

/// Evaluates
///
/// ```text
/// lambda_max = sqrt((2 eps / (w_min q_min))^2 C_F^2 + 8 eps / (w_min q_min))
/// lambda_min = min(1 / (4 C_F^2 lambda_max), eps / (C_phi* w_max lambda_max))
/// t_star     = eps / (w_min lambda_max q_max)
/// ```
///
/// `c_f = 0` is allowed; the first term of `lambda_min` is then infinite.
pub fn lemma1_constants(inp: BoundInputs) -> Result<BoundConstants> {
    let named = [
        ("eps", inp.eps),
        ("omega_min", inp.omega_min),
        ("omega_max", inp.omega_max),
        ("q_min", inp.q_min),
        ("q_max", inp.q_max),
        ("c_phi_star", inp.c_phi_star),
    ];
    for (name, v) in named {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(inp.c_f >= 0.0) || !inp.c_f.is_finite() {
        return Err(Error::invalid(format!("c_f must be finite and >= 0, got {}", inp.c_f)));
    }
    let a = inp.eps / (inp.omega_min * inp.q_min);
    let lambda_max = ((2.0 * a).powi(2) * inp.c_f.powi(2) + 8.0 * a).sqrt();
    let first = if inp.c_f == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (4.0 * inp.c_f.powi(2) * lambda_max)
    };
    let second = inp.eps / (inp.c_phi_star * inp.omega_max * lambda_max);
    let t_star = inp.eps / (inp.omega_min * lambda_max * inp.q_max);
    Ok(BoundConstants {
        c_f: inp.c_f,
        omega_min: inp.omega_min,
        omega_max: inp.omega_max,
        q_min: inp.q_min,
        q_max: inp.q_max,
        phi_min: inp.phi_min,
        c_phi_star: inp.c_phi_star,
        lambda_max,
        lambda_min: first.min(second),
        t_star,
    })
}
