//! Distance-based covariance tapering.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Default regularization for [`diag_pseudo_inverse`].
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

/// Distance between components `i` and `j` on a ring of `n` sites.
pub fn cyclic_distance(i: usize, j: usize, n: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

/// Fifth-order piecewise rational Gaspari–Cohn correlation function.
///
/// `r` is distance over the localization radius; support is `[0, 2)`.
pub fn gaspari_cohn(r: f64) -> f64 {
    let r = r.abs();
    if r >= 2.0 {
        0.0
    } else if r <= 1.0 {
        let r2 = r * r;
        let r3 = r2 * r;
        -0.25 * r3 * r2 + 0.5 * r2 * r2 + 0.625 * r3 - 5.0 / 3.0 * r2 + 1.0
    } else {
        let r2 = r * r;
        let r3 = r2 * r;
        r3 * r2 / 12.0 - 0.5 * r2 * r2 + 0.625 * r3 + 5.0 / 3.0 * r2 - 5.0 * r + 4.0
            - 2.0 / (3.0 * r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    GaspariCohn,
    /// Constant 1: no tapering at all.
    Uniform,
    /// 1 up to and including the radius, 0 beyond.
    TopHat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    CyclicIndex,
    /// No spatial arrangement; every pair is at distance zero.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationSpec {
    pub kernel: Kernel,
    pub r_loc: f64,
    pub distance: Distance,
}

impl LocalizationSpec {
    pub fn gaspari_cohn(r_loc: f64) -> Self {
        LocalizationSpec {
            kernel: Kernel::GaspariCohn,
            r_loc,
            distance: Distance::CyclicIndex,
        }
    }

    pub fn uniform() -> Self {
        LocalizationSpec {
            kernel: Kernel::Uniform,
            r_loc: 1.0,
            distance: Distance::None,
        }
    }

    fn distance(&self, i: usize, j: usize, n: usize) -> f64 {
        match self.distance {
            Distance::CyclicIndex => cyclic_distance(i, j, n) as f64,
            Distance::None => 0.0,
        }
    }

    /// Taper weight between components `i` and `j` of an `n`-site state.
    pub fn weight(&self, i: usize, j: usize, n: usize) -> f64 {
        let d = self.distance(i, j, n);
        match self.kernel {
            Kernel::Uniform => 1.0,
            Kernel::GaspariCohn => gaspari_cohn(d / self.r_loc),
            Kernel::TopHat => {
                if d <= self.r_loc {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// The taper matrix `phi`, symmetric with unit diagonal and entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationMatrix {
    phi: DMatrix<f64>,
}

impl LocalizationMatrix {
    pub fn build(spec: &LocalizationSpec, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("state dimension must be positive"));
        }
        if !(spec.r_loc > 0.0) {
            return Err(Error::invalid("localization radius must be positive"));
        }
        let phi = DMatrix::from_fn(n, n, |i, j| spec.weight(i, j, n));
        Ok(LocalizationMatrix { phi })
    }

    pub fn all_ones(n: usize) -> Self {
        LocalizationMatrix {
            phi: DMatrix::from_element(n, n, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.phi[(i, j)]
    }

    /// `max_k sum_i phi[k, i]`.
    pub fn max_row_sum(&self) -> f64 {
        self.phi
            .row_iter()
            .map(|r| r.sum())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest off-diagonal row sum restricted to the columns in `indices`,
    /// taken over rows in `indices`.
    pub fn max_offdiag_row_sum_on(&self, indices: &[usize]) -> f64 {
        indices
            .iter()
            .map(|&i| {
                indices
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| self.phi[(i, j)])
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

pub fn build_phi(spec: &LocalizationSpec, n: usize) -> Result<LocalizationMatrix> {
    LocalizationMatrix::build(spec, n)
}

/// Schur product `P o phi`.
pub fn localize(p: &DMatrix<f64>, phi: &LocalizationMatrix) -> Result<DMatrix<f64>> {
    if p.shape() != phi.phi.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: covariance {:?} vs taper {:?}",
            p.shape(),
            phi.phi.shape()
        )));
    }
    Ok(p.component_mul(&phi.phi))
}

/// Diagonal of the diagonal pseudo-inverse: `1 / max(P_ii, floor)`.
/// Off-diagonal entries of the pseudo-inverse are zero.
pub fn diag_pseudo_inverse(p: &DMatrix<f64>, floor: f64) -> Result<DVector<f64>> {
    check_dim(p.nrows(), p.ncols())?;
    Ok(DVector::from_iterator(
        p.nrows(),
        p.diagonal().iter().map(|&v| 1.0 / v.max(floor)),
    ))
}
