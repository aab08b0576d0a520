//! Local ensemble transform Kalman filter with Gaspari–Cohn R-localization.
//!
//! Every grid point `g` solves its own ETKF problem using the observations
//! within the kernel support `2 r_loc` of `g`. Each observation's error
//! variance is divided by its taper weight `gc(d(g, j) / r_loc)`, so remote
//! observations fade out smoothly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::enkbf::Ensemble;
use crate::error::{check_dim, Error, Result};
use crate::localization::{cyclic_distance, gaspari_cohn};
use crate::observation::ObservationOperator;

const EIGEN_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    /// Multiplicative inflation of the forecast deviations, `>= 1`.
    pub inflation: f64,
    pub r_loc: f64,
    /// Observation error standard deviation; `R = eps^2 I`.
    pub eps: f64,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inflation >= 1.0) || !self.inflation.is_finite() {
            return Err(Error::invalid(format!("inflation must be >= 1, got {}", self.inflation)));
        }
        if !(self.r_loc > 0.0) {
            return Err(Error::invalid(format!("r_loc must be positive, got {}", self.r_loc)));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// How observation weights depend on the distance to the analysed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsLocalization {
    /// Gaspari–Cohn taper over cyclic index distance with radius `r_loc`.
    GaspariCohn,
    /// Every observation has weight 1 at every point (a global ETKF).
    Global,
}

/// Scales deviations from the mean by `factor`; the mean is untouched.
pub fn inflate(e: &Ensemble, factor: f64) -> Result<Ensemble> {
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(Error::invalid(format!("inflation factor must be >= 1, got {factor}")));
    }
    let mean = e.matrix().column_mean();
    let mut dev = e.deviations() * factor;
    for mut col in dev.column_iter_mut() {
        col += &mean;
    }
    Ensemble::from_matrix(dev)
}

/// Transform for one local problem.
struct LocalTransform {
    /// Eigenvectors of `(M-1) I + Y^T R^-1 Y`.
    q: DMatrix<f64>,
    /// `sqrt((M-1) / lambda)` per eigenpair.
    sqrt_scale: DVector<f64>,
    /// Mean weights `Pa Y^T R^-1 (y - Hx)`.
    w_mean: DVector<f64>,
}

fn local_transform(
    yp: &DMatrix<f64>,
    innov: &DVector<f64>,
    rows: &[(usize, f64)],
    inv_r: f64,
) -> Result<LocalTransform> {
    let m = yp.ncols();
    // C = Y_L^T R_L^-1, stored as M x p.
    let mut c = DMatrix::zeros(m, rows.len());
    let mut d = DVector::zeros(rows.len());
    for (col, &(l, w)) in rows.iter().enumerate() {
        let scale = w * inv_r;
        for k in 0..m {
            c[(k, col)] = yp[(l, k)] * scale;
        }
        d[col] = innov[l];
    }
    let mut a = DMatrix::identity(m, m) * (m - 1) as f64;
    for (col, &(l, _)) in rows.iter().enumerate() {
        for j in 0..m {
            let ylj = yp[(l, j)];
            for i in 0..m {
                a[(i, j)] += c[(i, col)] * ylj;
            }
        }
    }
    let eig = SymmetricEigen::new(a);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) || eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Numerical("local ETKF matrix is not positive definite".into()));
    }
    let lambda = eig.eigenvalues.map(|v| v.max(EIGEN_CLIP));
    let q = eig.eigenvectors;
    // Pa C d = Q diag(1/lambda) Q^T (C d)
    let cd = &c * d;
    let mut proj = q.tr_mul(&cd);
    for (p, l) in proj.iter_mut().zip(lambda.iter()) {
        *p /= l;
    }
    let w_mean = &q * proj;
    let sqrt_scale = lambda.map(|l| ((m - 1) as f64 / l).sqrt());
    Ok(LocalTransform { q, sqrt_scale, w_mean })
}

/// Applies a transform to one row of forecast deviations, returning the
/// analysis deviations plus mean increment for that component.
fn apply_row(t: &LocalTransform, xp_row: &[f64], out: &mut [f64]) {
    let m = xp_row.len();
    let mut shift = 0.0;
    for k in 0..m {
        shift += xp_row[k] * t.w_mean[k];
    }
    // xp_row * Q * diag(s) * Q^T
    let mut u = vec![0.0; m];
    for (e, ue) in u.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..m {
            acc += xp_row[k] * t.q[(k, e)];
        }
        *ue = acc * t.sqrt_scale[e];
    }
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for e in 0..m {
            acc += u[e] * t.q[(i, e)];
        }
        *o = acc + shift;
    }
}

/// LETKF analysis of `e` given observations `y` of the components in `h`.
///
/// Inflation from `cfg` is applied to the forecast deviations first.
pub fn letkf_analysis(
    e: &Ensemble,
    y: &[f64],
    h: &ObservationOperator,
    cfg: &AnalysisConfig,
    loc: ObsLocalization,
) -> Result<Ensemble> {
    cfg.validate()?;
    let n = e.n_x();
    let m = e.size();
    check_dim(h.n_x(), n)?;
    check_dim(h.n_obs(), y.len())?;
    if m < 2 {
        return Err(Error::invalid("analysis needs at least two members"));
    }

    let mean = e.matrix().column_mean();
    let xp = e.deviations() * cfg.inflation;
    let mut out = xp.clone();
    for mut col in out.column_iter_mut() {
        col += &mean;
    }
    if h.n_obs() == 0 {
        return Ensemble::from_matrix(out);
    }

    let idx = h.indices();
    let yp = DMatrix::from_fn(idx.len(), m, |l, k| xp[(idx[l], k)]);
    let innov = DVector::from_iterator(idx.len(), idx.iter().zip(y).map(|(&j, &yv)| yv - mean[j]));
    let inv_r = 1.0 / (cfg.eps * cfg.eps);

    let mut row = vec![0.0; m];
    let mut xp_row = vec![0.0; m];
    let mut write_row = |g: usize, t: &LocalTransform, out: &mut DMatrix<f64>| {
        for k in 0..m {
            xp_row[k] = xp[(g, k)];
        }
        apply_row(t, &xp_row, &mut row);
        for k in 0..m {
            out[(g, k)] = mean[g] + row[k];
        }
    };

    match loc {
        ObsLocalization::Global => {
            let rows: Vec<(usize, f64)> = (0..idx.len()).map(|l| (l, 1.0)).collect();
            let t = local_transform(&yp, &innov, &rows, inv_r)?;
            for g in 0..n {
                write_row(g, &t, &mut out);
            }
        }
        ObsLocalization::GaspariCohn => {
            let mut rows = Vec::with_capacity(idx.len());
            for g in 0..n {
                rows.clear();
                for (l, &j) in idx.iter().enumerate() {
                    let w = gaspari_cohn(cyclic_distance(g, j, n) as f64 / cfg.r_loc);
                    if w > 0.0 {
                        rows.push((l, w));
                    }
                }
                if rows.is_empty() {
                    continue;
                }
                let t = local_transform(&yp, &innov, &rows, inv_r)?;
                write_row(g, &t, &mut out);
            }
        }
    }
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { step: 0, member: None });
    }
    Ensemble::from_matrix(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_ensemble(n: usize, m: usize, seed: u64) -> Ensemble {
        let mut rng = RngStream::from_seed(seed);
        Ensemble::from_matrix(DMatrix::from_fn(n, m, |i, _| 2.0 * rng.standard_normal() + i as f64)).unwrap()
    }

    fn cfg(eps: f64, r_loc: f64) -> AnalysisConfig {
        AnalysisConfig { inflation: 1.0, r_loc, eps }
    }

    #[test]
    fn inflation_examples() {
        let e = random_ensemble(5, 8, 1);
        let same = inflate(&e, 1.0).unwrap();
        assert!((same.matrix() - e.matrix()).amax() < 1e-12);
        let big = inflate(&e, 1.05).unwrap();
        let ratio = big.covariance().unwrap().trace() / e.covariance().unwrap().trace();
        assert!((ratio - 1.1025).abs() < 1e-12);
        let (a, b) = (e.mean(), big.mean());
        assert!(a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
        assert!(inflate(&e, 0.9).is_err());
    }

    #[test]
    fn no_observations_returns_forecast() {
        let e = random_ensemble(6, 10, 2);
        let h = ObservationOperator::new(vec![], 6, 0.25).unwrap();
        let a = letkf_analysis(&e, &[], &h, &cfg(0.25, 2.0), ObsLocalization::GaspariCohn).unwrap();
        assert!((a.matrix() - e.matrix()).amax() < 1e-12);
    }

    #[test]
    fn worthless_observations_leave_forecast() {
        let e = random_ensemble(6, 10, 3);
        let h = ObservationOperator::new(vec![0, 2, 5], 6, 1.0).unwrap();
        let y = vec![50.0, -50.0, 50.0];
        let a = letkf_analysis(&e, &y, &h, &cfg(1e6, 2.0), ObsLocalization::GaspariCohn).unwrap();
        let diff: f64 = a.mean().iter().zip(e.mean().iter()).map(|(p, q)| (p - q).powi(2)).sum();
        assert!(diff.sqrt() <= 1e-6, "{}", diff.sqrt());
    }

    #[test]
    fn mean_is_invariant_to_member_order() {
        let e = random_ensemble(8, 12, 4);
        let h = ObservationOperator::new(vec![1, 4, 6], 8, 1.0).unwrap();
        let y = vec![1.0, 2.0, 3.0];
        let c = cfg(0.5, 2.0);
        let a = letkf_analysis(&e, &y, &h, &c, ObsLocalization::GaspariCohn).unwrap();
        let perm: Vec<usize> = (0..12).rev().collect();
        let shuffled = Ensemble::from_matrix(e.matrix().select_columns(&perm)).unwrap();
        let b = letkf_analysis(&shuffled, &y, &h, &c, ObsLocalization::GaspariCohn).unwrap();
        let (ma, mb) = (a.mean(), b.mean());
        assert!(ma.iter().zip(mb.iter()).all(|(p, q)| (p - q).abs() < 1e-10));
    }

    #[test]
    fn remote_observation_has_no_influence() {
        let e = random_ensemble(10, 8, 5);
        let c = cfg(0.5, 0.4);
        let with = ObservationOperator::new(vec![2, 7], 10, 1.0).unwrap();
        let without = ObservationOperator::new(vec![2], 10, 1.0).unwrap();
        let a = letkf_analysis(&e, &[1.0, 9.0], &with, &c, ObsLocalization::GaspariCohn).unwrap();
        let b = letkf_analysis(&e, &[1.0], &without, &c, ObsLocalization::GaspariCohn).unwrap();
        for g in (0..10).filter(|&g| g != 7) {
            for k in 0..8 {
                assert!((a.matrix()[(g, k)] - b.matrix()[(g, k)]).abs() < 1e-12);
            }
        }
        assert!((a.matrix()[(7, 0)] - b.matrix()[(7, 0)]).abs() > 1e-6);
    }

    #[test]
    fn analysis_contracts_spread() {
        for seed in 0..5 {
            let e = random_ensemble(4, 20, 10 + seed);
            let h = ObservationOperator::new(vec![0, 1, 2, 3], 4, 1.0).unwrap();
            let y = vec![0.5; 4];
            let a = letkf_analysis(&e, &y, &h, &cfg(0.7, 1.0), ObsLocalization::Global).unwrap();
            assert!(a.covariance().unwrap().trace() <= e.covariance().unwrap().trace());
        }
    }

    #[test]
    fn rejects_bad_config() {
        let e = random_ensemble(3, 4, 6);
        let h = ObservationOperator::new(vec![0], 3, 1.0).unwrap();
        let bad = AnalysisConfig { inflation: 0.5, r_loc: 1.0, eps: 1.0 };
        assert!(letkf_analysis(&e, &[0.0], &h, &bad, ObsLocalization::Global).is_err());
        assert!(letkf_analysis(&e, &[], &h, &cfg(1.0, 1.0), ObsLocalization::Global).is_err());
    }
}
