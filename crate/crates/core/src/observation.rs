//! Partial observation operators and how their index sets are drawn.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Poisson};

use crate::dynamics::StateVector;
use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

/// Selector `H_J` picking the components listed in `indices` from an
/// `n_x`-dimensional state, with observation noise scale `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationOperator {
    indices: Vec<usize>,
    n_x: usize,
    eps: f64,
}

impl ObservationOperator {
    /// `indices` must be strictly increasing and below `n_x`.
    pub fn new(indices: Vec<usize>, n_x: usize, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::invalid(format!("observation noise scale must be positive, got {eps}")));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("observed indices must be sorted and unique"));
        }
        if let Some(&last) = indices.last() {
            if last >= n_x {
                return Err(Error::invalid(format!("index {last} out of range for {n_x} components")));
            }
        }
        Ok(ObservationOperator { indices, n_x, eps })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn n_obs(&self) -> usize {
        self.indices.len()
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Same noise level and dimension, different index set.
    pub fn with_indices(&self, indices: Vec<usize>) -> Result<Self> {
        Self::new(indices, self.n_x, self.eps)
    }

    /// Dense `N_J x N_x` 0/1 matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n_obs(), self.n_x);
        for (row, &col) in self.indices.iter().enumerate() {
            h[(row, col)] = 1.0;
        }
        h
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_x, x.len())?;
        Ok(self.indices.iter().map(|&j| x[j]).collect())
    }

    /// `H x + eps xi`, xi ~ N(0, I). Discrete-time convention, `R = eps^2 I`.
    pub fn discrete_observation(&self, x_ref: &StateVector, rng: &mut RngStream) -> Result<Vec<f64>> {
        let mut y = self.apply(x_ref)?;
        for v in y.iter_mut() {
            *v += self.eps * rng.standard_normal();
        }
        Ok(y)
    }

    /// `H x dt + sqrt(eps dt) xi`. Continuous-time convention, `R = eps I`.
    pub fn observation_increment(&self, x_ref: &StateVector, dt: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
        if !(dt >= 0.0) {
            return Err(Error::invalid(format!("time step must be nonnegative, got {dt}")));
        }
        let mut dy = self.apply(x_ref)?;
        let scale = (self.eps * dt).sqrt();
        for v in dy.iter_mut() {
            *v = *v * dt + scale * rng.standard_normal();
        }
        Ok(dy)
    }

    /// Like [`Self::observation_increment`] but takes one standard normal per
    /// state component from `noise` and keeps only the observed ones, so
    /// filters with different index sets can share one noise realization.
    pub fn observation_increment_from(&self, x_ref: &[f64], dt: f64, noise: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_x, noise.len())?;
        let scale = (self.eps * dt).sqrt();
        Ok(self
            .indices
            .iter()
            .map(|&j| x_ref[j] * dt + scale * noise[j])
            .collect())
    }
}

/// Uniformly random `n_j`-subset of `0..n_x`, sorted (reservoir sampling,
/// Algorithm R). O(n_x) time and O(n_j) extra space.
pub fn sample_subset_uniform(n_x: usize, n_j: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if n_j > n_x {
        return Err(Error::invalid(format!("cannot draw {n_j} of {n_x} indices")));
    }
    let mut reservoir: Vec<usize> = (0..n_j).collect();
    if n_j > 0 {
        for i in n_j..n_x {
            let k = rng.index_inclusive(i);
            if k < n_j {
                reservoir[k] = i;
            }
        }
    }
    reservoir.sort_unstable();
    Ok(reservoir)
}

/// Poisson clock: one draw per assimilation cycle; a nonzero count triggers
/// a fresh uniform index set.
#[derive(Debug, Clone)]
pub struct PoissonSwitcher {
    lambda: f64,
    dist: Option<Poisson<f64>>,
    clock: RngStream,
    sampler: RngStream,
}

impl PoissonSwitcher {
    pub fn new(lambda: f64, clock: RngStream, sampler: RngStream) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("Poisson intensity must be >= 0, got {lambda}")));
        }
        let dist = if lambda > 0.0 {
            Some(Poisson::new(lambda).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(PoissonSwitcher { lambda, dist, clock, sampler })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Draws the jump count for this cycle and reports whether it is positive.
    pub fn draw_switch(&mut self) -> bool {
        match &self.dist {
            Some(d) => d.sample(self.clock.inner_mut()) > 0.0,
            None => false,
        }
    }

    pub fn sample_indices(&mut self, n_x: usize, n_j: usize) -> Result<Vec<usize>> {
        sample_subset_uniform(n_x, n_j, &mut self.sampler)
    }

    /// On a jump, resamples the index set with the cardinality returned by
    /// `next_size` (called only on a jump); otherwise returns `current`.
    pub fn maybe_switch(
        &mut self,
        current: &ObservationOperator,
        next_size: impl FnOnce() -> usize,
    ) -> Result<(bool, ObservationOperator)> {
        if !self.draw_switch() {
            return Ok((false, current.clone()));
        }
        let n_j = next_size();
        let indices = self.sample_indices(current.n_x(), n_j)?;
        Ok((true, current.with_indices(indices)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRole;
    use proptest::prelude::*;

    fn op(indices: Vec<usize>, n: usize) -> ObservationOperator {
        ObservationOperator::new(indices, n, 0.25).unwrap()
    }

    #[test]
    fn construction_validates_indices() {
        assert!(ObservationOperator::new(vec![1, 1], 3, 1.0).is_err());
        assert!(ObservationOperator::new(vec![2, 1], 3, 1.0).is_err());
        assert!(ObservationOperator::new(vec![3], 3, 1.0).is_err());
        assert!(ObservationOperator::new(vec![0], 3, 0.0).is_err());
        assert!(ObservationOperator::new(vec![], 3, 1.0).is_ok());
    }

    #[test]
    fn apply_selects_components() {
        assert_eq!(op(vec![2], 3).apply(&[4.0, 5.0, 6.0]).unwrap(), vec![6.0]);
        assert!(op(vec![], 3).apply(&[4.0, 5.0, 6.0]).unwrap().is_empty());
        assert_eq!(op(vec![0, 2], 3).apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 3.0]);
        assert!(op(vec![0], 3).apply(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn selector_matrix_identities() {
        let h = op(vec![1, 4, 5], 7).matrix();
        assert_eq!(&h * h.transpose(), DMatrix::identity(3, 3));
        let hth = h.transpose() * &h;
        for i in 0..7 {
            for j in 0..7 {
                let expected = if i == j && [1, 4, 5].contains(&i) { 1.0 } else { 0.0 };
                assert_eq!(hth[(i, j)], expected);
            }
        }
    }

    #[test]
    fn degenerate_subsets() {
        let mut rng = RngStream::from_seed(1);
        assert_eq!(sample_subset_uniform(5, 5, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(sample_subset_uniform(5, 0, &mut rng).unwrap().is_empty());
        assert!(sample_subset_uniform(5, 6, &mut rng).is_err());
    }

    #[test]
    fn zero_noise_observations_are_exact() {
        // eps must be positive, so use one tiny enough to vanish in f64.
        let h = ObservationOperator::new(vec![0, 2], 3, 1e-300).unwrap();
        let x: StateVector = vec![1.0, 2.0, 3.0].into();
        let mut rng = RngStream::from_seed(4);
        assert_eq!(h.discrete_observation(&x, &mut rng).unwrap(), vec![1.0, 3.0]);
        let dy = h.observation_increment(&x, 0.5, &mut rng).unwrap();
        assert!((dy[0] - 0.5).abs() < 1e-140 && (dy[1] - 1.5).abs() < 1e-140);
        assert_eq!(op(vec![0], 3).observation_increment(&x, 0.0, &mut rng).unwrap(), vec![0.0]);
    }

    #[test]
    fn observations_are_reproducible() {
        let h = op(vec![0, 1], 3);
        let x: StateVector = vec![1.0, 2.0, 3.0].into();
        let draw = || h.discrete_observation(&x, &mut RngStream::from_seed(11)).unwrap();
        assert_eq!(draw(), draw());
    }

    #[test]
    fn zero_intensity_never_switches() {
        let mut sw = PoissonSwitcher::new(
            0.0,
            RngStream::new(1, 0, StreamRole::PoissonClock),
            RngStream::new(1, 0, StreamRole::SubsetSampler),
        )
        .unwrap();
        let current = op(vec![3], 10);
        for _ in 0..1000 {
            let (switched, next) = sw.maybe_switch(&current, || 4).unwrap();
            assert!(!switched);
            assert_eq!(next, current);
        }
    }

    #[test]
    fn large_intensity_switches_every_cycle() {
        let mut sw = PoissonSwitcher::new(
            1000.0,
            RngStream::new(1, 0, StreamRole::PoissonClock),
            RngStream::new(1, 0, StreamRole::SubsetSampler),
        )
        .unwrap();
        let current = op(vec![3], 10);
        for _ in 0..1000 {
            let (switched, next) = sw.maybe_switch(&current, || 4).unwrap();
            assert!(switched);
            assert_eq!(next.n_obs(), 4);
        }
        assert!(PoissonSwitcher::new(-1.0, RngStream::from_seed(0), RngStream::from_seed(0)).is_err());
    }

    proptest! {
        #[test]
        fn sampled_subsets_are_sorted_unique_in_range(n_x in 0usize..50, frac in 0.0f64..=1.0, seed: u64) {
            let n_j = (frac * n_x as f64).floor() as usize;
            let s = sample_subset_uniform(n_x, n_j, &mut RngStream::from_seed(seed)).unwrap();
            prop_assert_eq!(s.len(), n_j);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.iter().all(|&i| i < n_x));
        }

        #[test]
        fn apply_is_linear(
            x in proptest::collection::vec(-10.0f64..10.0, 6),
            y in proptest::collection::vec(-10.0f64..10.0, 6),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let h = op(vec![0, 3, 5], 6);
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = h.apply(&combo).unwrap();
            let (hx, hy) = (h.apply(&x).unwrap(), h.apply(&y).unwrap());
            for k in 0..3 {
                prop_assert!((lhs[k] - (a * hx[k] + b * hy[k])).abs() < 1e-12);
            }
        }
    }
}
