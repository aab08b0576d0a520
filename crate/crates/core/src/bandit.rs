//! UCB1 over candidate observation-set sizes, plus the coverage statistic
//! and reward that drive it.

use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::localization::cyclic_distance;
use crate::rng::RngStream;

/// Candidate arm values `start, start + stride, ...` strictly below `stop`,
/// written `start:stride:stop`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmGrid {
    pub start: usize,
    pub stride: usize,
    pub stop: usize,
}

impl ArmGrid {
    pub fn values(&self) -> Vec<usize> {
        (self.start..self.stop).step_by(self.stride).collect()
    }
}

impl std::fmt::Display for ArmGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stride, self.stop)
    }
}

impl FromStr for ArmGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let [start, stride, stop] = parts.as_slice() else {
            return Err(Error::invalid(format!("arm grid `{s}` is not start:stride:stop")));
        };
        let num = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("arm grid `{s}`: `{v}` is not a count")))
        };
        let grid = ArmGrid {
            start: num(start)?,
            stride: num(stride)?,
            stop: num(stop)?,
        };
        if grid.stride == 0 {
            return Err(Error::invalid("arm grid stride must be positive"));
        }
        if grid.start == 0 || grid.start >= grid.stop {
            return Err(Error::invalid(format!("arm grid `{s}` is empty or starts at zero")));
        }
        Ok(grid)
    }
}

/// Empirical mean reward and play count per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    arms: Vec<usize>,
    mu_hat: Vec<f64>,
    plays: Vec<u64>,
    t: u64,
    ucb_coeff: f64,
}

impl BanditState {
    pub fn new(arms: Vec<usize>, ucb_coeff: f64) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::invalid("bandit needs at least one arm"));
        }
        if arms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("arms must be strictly increasing"));
        }
        if !(ucb_coeff > 0.0) || !ucb_coeff.is_finite() {
            return Err(Error::invalid(format!("ucb coefficient must be positive, got {ucb_coeff}")));
        }
        let k = arms.len();
        Ok(BanditState {
            arms,
            mu_hat: vec![0.0; k],
            plays: vec![0; k],
            t: 0,
            ucb_coeff,
        })
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn mu_hat(&self) -> &[f64] {
        &self.mu_hat
    }

    pub fn plays(&self) -> &[u64] {
        &self.plays
    }

    pub fn total_pulls(&self) -> u64 {
        self.t
    }

    pub fn arm_index(&self, value: usize) -> Option<usize> {
        self.arms.binary_search(&value).ok()
    }

    /// Index of the first unplayed arm, else the UCB1 argmax of
    /// `mu_hat + c sqrt(2 ln t / plays)`. Ties go to the smaller arm.
    pub fn choose_arm(&self) -> usize {
        if let Some(i) = self.plays.iter().position(|&p| p == 0) {
            return i;
        }
        let log_t = (self.t as f64).ln();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..self.arms.len() {
            let score = self.mu_hat[i] + self.ucb_coeff * (2.0 * log_t / self.plays[i] as f64).sqrt();
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    /// Counts one pull of `arm`; precedes [`Self::update_arm`].
    pub fn record_pull(&mut self, arm: usize) {
        self.plays[arm] += 1;
        self.t += 1;
    }

    /// Incremental mean update; the pull must already be recorded.
    pub fn update_arm(&mut self, arm: usize, reward: f64) {
        let n = self.plays[arm].max(1) as f64;
        self.mu_hat[arm] += (reward - self.mu_hat[arm]) / n;
    }

    pub fn observe(&mut self, arm: usize, reward: f64) {
        self.record_pull(arm);
        self.update_arm(arm, reward);
    }

    /// Arm value with the most plays; ties go to the smaller arm.
    pub fn most_played(&self) -> usize {
        let mut best = 0;
        for i in 1..self.arms.len() {
            if self.plays[i] > self.plays[best] {
                best = i;
            }
        }
        self.arms[best]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau_corr: f64,
    pub r_loc: f64,
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(name, "must be finite and >= 0"));
            }
        }
        if !(self.tau_corr > 0.0 && self.tau_corr < 1.0) {
            return Err(Error::config("tau_corr", "must lie in (0, 1)"));
        }
        if !(self.r_loc > 0.0) {
            return Err(Error::config("r_loc", "must be positive"));
        }
        Ok(())
    }
}

/// Fraction of components `k` having an observed `j` within cyclic distance
/// `r_loc` whose squared cross-covariance ratio `P[k,j]^2 / (P[k,k]^2 + 1e-12)`
/// reaches `tau_corr`.
pub fn coverage(indices: &[usize], r_loc: f64, p: &DMatrix<f64>, tau_corr: f64) -> Result<f64> {
    let n = p.nrows();
    check_dim(n, p.ncols())?;
    if n == 0 {
        return Err(Error::invalid("coverage needs a nonempty covariance"));
    }
    if indices.iter().any(|&j| j >= n) {
        return Err(Error::invalid("observed index out of range"));
    }
    let covered = (0..n)
        .filter(|&k| {
            let pkk2 = p[(k, k)] * p[(k, k)] + 1e-12;
            indices.iter().any(|&j| {
                cyclic_distance(j, k, n) as f64 <= r_loc && p[(k, j)] * p[(k, j)] / pkk2 >= tau_corr
            })
        })
        .count();
    Ok(covered as f64 / n as f64)
}

/// `beta kappa - alpha N_J / N_x - gamma trace(P) / N_x`.
pub fn reward(kappa: f64, n_j: usize, n_x: usize, trace_p: f64, params: &RewardParams) -> f64 {
    let n_x = n_x as f64;
    params.beta * kappa - params.alpha * n_j as f64 / n_x - params.gamma * trace_p / n_x
}

/// Outcome of a synthetic Bernoulli bandit run.
#[derive(Debug, Clone, PartialEq)]
pub struct SelftestOutcome {
    pub plays: Vec<u64>,
    /// Fraction of pulls spent on the arm with the largest mean.
    pub best_fraction: f64,
    /// `pulls * max(p) - sum of p over the pulled arms` (pseudo-regret).
    pub regret: f64,
}

/// UCB1 on Bernoulli arms with success probabilities `probs`.
pub fn bernoulli_selftest(probs: &[f64], pulls: u64, ucb_coeff: f64, rng: &mut RngStream) -> Result<SelftestOutcome> {
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("arm probabilities must lie in [0, 1]"));
    }
    let mut bandit = BanditState::new((0..probs.len()).collect(), ucb_coeff)?;
    let mut expected = 0.0;
    for _ in 0..pulls {
        let arm = bandit.choose_arm();
        let r = if rng.bernoulli(probs[arm]) { 1.0 } else { 0.0 };
        expected += probs[arm];
        bandit.observe(arm, r);
    }
    let (best, p_best) = probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
    let plays = bandit.plays().to_vec();
    Ok(SelftestOutcome {
        best_fraction: plays[best] as f64 / pulls.max(1) as f64,
        regret: pulls as f64 * p_best - expected,
        plays,
    })
}
