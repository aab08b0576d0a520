//! Flat `key = value` experiment configuration.
//!
//! Unset keys fall back to the standard L96 sequential-learning settings
//! (ensemble of 30, `dt = 0.01`, 3000 cycles of 5 forecast steps, 50
//! repetitions, ...). Continuous-filter experiments swap in their own
//! defaults for the handful of keys that differ.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::bandit::{ArmGrid, RewardParams};
use crate::dynamics::{DiffusionConfig, DriftModel};
use crate::error::{Error, Result};
use crate::letkf::AnalysisConfig;
use crate::localization::gaspari_cohn;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Fixed vs randomly switched single-component observation of L63.
    Trajectory,
    /// Error vs observation-noise scaling of the continuous filter.
    MseSweep,
    /// Sequential learning of the observation-set size on L96.
    LearnNj,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Trajectory => "trajectory",
            ExperimentKind::MseSweep => "mse-sweep",
            ExperimentKind::LearnNj => "learn-nj",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "trajectory" => Ok(ExperimentKind::Trajectory),
            "mse-sweep" => Ok(ExperimentKind::MseSweep),
            "learn-nj" => Ok(ExperimentKind::LearnNj),
            _ => Err("expected trajectory, mse-sweep or learn-nj".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    L63,
    L96,
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l63" => Ok(ModelKind::L63),
            "l96" => Ok(ModelKind::L96),
            _ => Err("expected l63 or l96".into()),
        }
    }
}

/// How the randomized continuous-filter run redraws its index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchMode {
    EveryStep,
    /// One Poisson(`lambda`) draw per integration step.
    Poisson,
}

impl FromStr for SwitchMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "every-step" => Ok(SwitchMode::EveryStep),
            "poisson" => Ok(SwitchMode::Poisson),
            _ => Err("expected every-step or poisson".into()),
        }
    }
}

/// Fully resolved run specification.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub paper_scale: bool,
    pub model: ModelKind,
    pub n_x: usize,
    pub forcing: f64,
    pub l63_sigma: f64,
    pub l63_rho: f64,
    pub l63_beta: f64,
    pub noise_amplitude: f64,
    pub ensemble_size: usize,
    pub dt: f64,
    pub steps: usize,
    pub cycles: usize,
    pub n_inner: usize,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub lambda: f64,
    pub switching: SwitchMode,
    pub observed_count: usize,
    pub fixed_index: usize,
    pub arms: ArmGrid,
    pub initial_n_j: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau_corr: f64,
    pub ucb_coeff: f64,
    pub inflation: f64,
    pub r_loc: f64,
    pub seed: u64,
    pub n_reps: usize,
    pub burn_in: f64,
    pub divergence_threshold: f64,
    pub init_spread: f64,
    pub spinup_steps: usize,
    pub variance_floor: f64,
    pub record_every: usize,
    pub bound_omega_min: f64,
    pub bound_omega_max: f64,
    pub bound_q_min: f64,
    pub bound_q_max: f64,
    pub bound_c_f: f64,
}

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "experiment",
    "paper_scale",
    "model",
    "n_x",
    "forcing",
    "l63_sigma",
    "l63_rho",
    "l63_beta",
    "noise_amplitude",
    "ensemble_size",
    "dt",
    "steps",
    "cycles",
    "n_inner",
    "eps",
    "eps_list",
    "lambda",
    "switching",
    "observed_count",
    "fixed_index",
    "stride",
    "arms",
    "initial_n_j",
    "alpha",
    "beta",
    "gamma",
    "tau_corr",
    "ucb_coeff",
    "inflation",
    "r_loc",
    "seed",
    "n_reps",
    "burn_in",
    "divergence_threshold",
    "init_spread",
    "spinup_steps",
    "variance_floor",
    "record_every",
    "bound_omega_min",
    "bound_omega_max",
    "bound_q_min",
    "bound_q_max",
    "bound_c_f",
];

/// Localization radius and arm stride paired with the standard L96 sizes.
pub fn l96_pairing(n_x: usize) -> (f64, usize) {
    match n_x {
        40 => (10.0, 2),
        80 => (20.0, 5),
        120 => (30.0, 7),
        160 => (40.0, 10),
        n => ((n as f64 / 4.0).max(1.0), 2),
    }
}

/// Reads `key = value` lines; `#` starts a comment. Later lines win.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(line, format!("line {}: expected key = value", lineno + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    resolve(parse_pairs(text)?)
}

/// Parses `text`, then applies `overrides` on top.
pub fn parse_config_with(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut pairs = parse_pairs(text)?;
    pairs.extend(overrides.iter().cloned());
    resolve(pairs)
}

struct Raw(BTreeMap<String, String>);

impl Raw {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<T>()
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::config(key, format!("cannot parse `{s}`: {e}")))
        })
        .collect()
}

fn resolve(pairs: Vec<(String, String)>) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (k, v) in pairs {
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::config(&k, "unknown key"));
        }
        map.insert(k, v);
    }
    let raw = Raw(map);

    let experiment: ExperimentKind = raw.get("experiment", ExperimentKind::LearnNj)?;
    let paper_scale: bool = raw.get("paper_scale", false)?;
    let continuous = experiment != ExperimentKind::LearnNj;

    let model: ModelKind = raw.get("model", if continuous { ModelKind::L63 } else { ModelKind::L96 })?;
    let n_x: usize = match model {
        ModelKind::L63 => {
            let n = raw.get("n_x", 3usize)?;
            if n != 3 {
                return Err(Error::config("n_x", "Lorenz-63 has exactly 3 components"));
            }
            n
        }
        ModelKind::L96 => raw.get("n_x", 40usize)?,
    };
    let (paired_r_loc, paired_stride) = match model {
        ModelKind::L96 => l96_pairing(n_x),
        ModelKind::L63 => (n_x as f64, 1),
    };
    let stride: usize = raw.get("stride", paired_stride)?;
    if stride == 0 {
        return Err(Error::config("stride", "must be positive"));
    }
    let arms: ArmGrid = match raw.0.get("arms") {
        Some(v) => v.parse().map_err(|e: Error| Error::config("arms", e.to_string()))?,
        None => ArmGrid { start: 1, stride, stop: n_x },
    };

    let (dt_default, steps_default, reps_default) = match (experiment, paper_scale) {
        (ExperimentKind::MseSweep, false) => (1e-4, 200_000, 20),
        (ExperimentKind::MseSweep, true) => (5e-6, 1_000_000, 50),
        (ExperimentKind::Trajectory, _) => (0.01, 20_000, 20),
        (ExperimentKind::LearnNj, _) => (0.01, 20_000, 50),
    };
    let eps_list = match raw.0.get("eps_list") {
        Some(v) => parse_f64_list("eps_list", v)?,
        None => vec![0.02, 0.05, 0.1, 0.2, 0.4],
    };
    let r_loc = raw.get("r_loc", paired_r_loc)?;

    let default_c_f = match model {
        // Lipschitz row sum of the L96 drift for |x_i| <= 12.
        ModelKind::L96 => 1.0 + 6.0 * 12.0,
        // Jacobian row-sum bound of L63 on its attractor box.
        ModelKind::L63 => 60.0,
    };
    let tau_corr = raw.get("tau_corr", 0.30)?;

    let cfg = ExperimentConfig {
        experiment,
        paper_scale,
        model,
        n_x,
        forcing: raw.get("forcing", 8.0)?,
        l63_sigma: raw.get("l63_sigma", 10.0)?,
        l63_rho: raw.get("l63_rho", 28.0)?,
        l63_beta: raw.get("l63_beta", 8.0 / 3.0)?,
        noise_amplitude: raw.get("noise_amplitude", std::f64::consts::SQRT_2)?,
        ensemble_size: raw.get("ensemble_size", 30usize)?,
        dt: raw.get("dt", dt_default)?,
        steps: raw.get("steps", steps_default)?,
        cycles: raw.get("cycles", 3000usize)?,
        n_inner: raw.get("n_inner", 5usize)?,
        eps: raw.get("eps", 0.25)?,
        eps_list,
        lambda: raw.get("lambda", 1000.0)?,
        switching: raw.get("switching", SwitchMode::EveryStep)?,
        observed_count: raw.get("observed_count", 1usize)?,
        fixed_index: raw.get("fixed_index", 2usize)?,
        arms,
        initial_n_j: if raw.has("initial_n_j") {
            let v: String = raw.get("initial_n_j", String::new())?;
            if v == "none" {
                None
            } else {
                Some(v.parse().map_err(|_| Error::config("initial_n_j", "expected a count or `none`"))?)
            }
        } else {
            None
        },
        alpha: raw.get("alpha", 3.2)?,
        beta: raw.get("beta", 2.5)?,
        gamma: raw.get("gamma", 0.25)?,
        tau_corr,
        ucb_coeff: raw.get("ucb_coeff", 1.0)?,
        inflation: raw.get("inflation", 1.05)?,
        r_loc,
        seed: raw.get("seed", 0u64)?,
        n_reps: raw.get("n_reps", reps_default)?,
        burn_in: raw.get("burn_in", 0.2)?,
        divergence_threshold: raw.get("divergence_threshold", 1e3)?,
        init_spread: raw.get("init_spread", 1.0)?,
        spinup_steps: raw.get("spinup_steps", 1000usize)?,
        variance_floor: raw.get("variance_floor", 1e-12)?,
        record_every: raw.get("record_every", if continuous { 100usize } else { 1 })?,
        bound_omega_min: raw.get("bound_omega_min", 1.0)?,
        bound_omega_max: raw.get("bound_omega_max", 1.0)?,
        // Coverage guarantees c_kj >= tau_corr and phi_kj >= gc(1) inside r_loc.
        bound_q_min: raw.get("bound_q_min", tau_corr * gaspari_cohn(1.0))?,
        bound_q_max: raw.get("bound_q_max", 1.0)?,
        bound_c_f: raw.get("bound_c_f", default_c_f)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("eps", self.eps),
            ("ucb_coeff", self.ucb_coeff),
            ("r_loc", self.r_loc),
            ("divergence_threshold", self.divergence_threshold),
            ("init_spread", self.init_spread),
            ("variance_floor", self.variance_floor),
            ("bound_omega_min", self.bound_omega_min),
            ("bound_omega_max", self.bound_omega_max),
            ("bound_q_min", self.bound_q_min),
            ("bound_q_max", self.bound_q_max),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(key, format!("must be positive and finite, got {v}")));
            }
        }
        if !self.forcing.is_finite() {
            return Err(Error::config("forcing", "must be finite"));
        }
        let nonneg = [
            ("noise_amplitude", self.noise_amplitude),
            ("lambda", self.lambda),
            ("bound_c_f", self.bound_c_f),
        ];
        for (key, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        for (key, v) in [("ensemble_size", self.ensemble_size), ("n_reps", self.n_reps), ("record_every", self.record_every)] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.ensemble_size < 2 {
            return Err(Error::config("ensemble_size", "needs at least two members"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be positive"));
        }
        if self.cycles == 0 || self.n_inner == 0 {
            return Err(Error::config(if self.cycles == 0 { "cycles" } else { "n_inner" }, "must be positive"));
        }
        if !(self.inflation >= 1.0) {
            return Err(Error::config("inflation", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::config("burn_in", "must lie in [0, 1)"));
        }
        if self.eps_list.is_empty() || self.eps_list.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::config("eps_list", "needs positive values"));
        }
        if self.model == ModelKind::L96 && self.n_x < 4 {
            return Err(Error::config("n_x", "Lorenz-96 needs at least 4 components"));
        }
        if self.observed_count > self.n_x {
            return Err(Error::config("observed_count", "exceeds the state dimension"));
        }
        if self.fixed_index >= self.n_x {
            return Err(Error::config("fixed_index", "out of range"));
        }
        if self.arms.stop > self.n_x + 1 {
            return Err(Error::config("arms", "arm values exceed the state dimension"));
        }
        if let Some(n) = self.initial_n_j {
            if !self.arms.values().contains(&n) {
                return Err(Error::config("initial_n_j", "must be one of the arm values"));
            }
        }
        self.reward_params().validate()?;
        self.drift_model().validate().map_err(|e| Error::config("model", e.to_string()))?;
        Ok(())
    }

    pub fn drift_model(&self) -> DriftModel {
        match self.model {
            ModelKind::L63 => DriftModel::Lorenz63 {
                sigma: self.l63_sigma,
                rho: self.l63_rho,
                beta: self.l63_beta,
            },
            ModelKind::L96 => DriftModel::Lorenz96 {
                forcing: self.forcing,
                dim: self.n_x,
            },
        }
    }

    pub fn diffusion(&self) -> DiffusionConfig {
        DiffusionConfig {
            noise_amplitude: self.noise_amplitude,
        }
    }

    pub fn reward_params(&self) -> RewardParams {
        RewardParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            tau_corr: self.tau_corr,
            r_loc: self.r_loc,
        }
    }

    pub fn analysis_config(&self) -> AnalysisConfig {
        AnalysisConfig {
            inflation: self.inflation,
            r_loc: self.r_loc,
            eps: self.eps,
        }
    }

    /// Renders every key so that `parse_config(render())` reproduces `self`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let model = match self.model {
            ModelKind::L63 => "l63",
            ModelKind::L96 => "l96",
        };
        let switching = match self.switching {
            SwitchMode::EveryStep => "every-step",
            SwitchMode::Poisson => "poisson",
        };
        let eps_list: Vec<String> = self.eps_list.iter().map(|e| e.to_string()).collect();
        let rows: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.name().into()),
            ("paper_scale", self.paper_scale.to_string()),
            ("model", model.into()),
            ("n_x", self.n_x.to_string()),
            ("forcing", self.forcing.to_string()),
            ("l63_sigma", self.l63_sigma.to_string()),
            ("l63_rho", self.l63_rho.to_string()),
            ("l63_beta", self.l63_beta.to_string()),
            ("noise_amplitude", self.noise_amplitude.to_string()),
            ("ensemble_size", self.ensemble_size.to_string()),
            ("dt", self.dt.to_string()),
            ("steps", self.steps.to_string()),
            ("cycles", self.cycles.to_string()),
            ("n_inner", self.n_inner.to_string()),
            ("eps", self.eps.to_string()),
            ("eps_list", eps_list.join(",")),
            ("lambda", self.lambda.to_string()),
            ("switching", switching.into()),
            ("observed_count", self.observed_count.to_string()),
            ("fixed_index", self.fixed_index.to_string()),
            ("arms", self.arms.to_string()),
            (
                "initial_n_j",
                self.initial_n_j.map_or_else(|| "none".to_string(), |n| n.to_string()),
            ),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("tau_corr", self.tau_corr.to_string()),
            ("ucb_coeff", self.ucb_coeff.to_string()),
            ("inflation", self.inflation.to_string()),
            ("r_loc", self.r_loc.to_string()),
            ("seed", self.seed.to_string()),
            ("n_reps", self.n_reps.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("divergence_threshold", self.divergence_threshold.to_string()),
            ("init_spread", self.init_spread.to_string()),
            ("spinup_steps", self.spinup_steps.to_string()),
            ("variance_floor", self.variance_floor.to_string()),
            ("record_every", self.record_every.to_string()),
            ("bound_omega_min", self.bound_omega_min.to_string()),
            ("bound_omega_max", self.bound_omega_max.to_string()),
            ("bound_q_min", self.bound_q_min.to_string()),
            ("bound_q_max", self.bound_q_max.to_string()),
            ("bound_c_f", self.bound_c_f.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_standard_settings() {
        let c = parse_config("").unwrap();
        assert_eq!(c.experiment, ExperimentKind::LearnNj);
        assert_eq!(c.model, ModelKind::L96);
        assert_eq!((c.eps, c.ensemble_size, c.dt), (0.25, 30, 0.01));
        assert_eq!((c.alpha, c.beta, c.gamma, c.tau_corr, c.ucb_coeff), (3.2, 2.5, 0.25, 0.30, 1.0));
        assert_eq!((c.lambda, c.cycles, c.n_reps, c.n_inner, c.inflation), (1000.0, 3000, 50, 5, 1.05));
        assert_eq!((c.n_x, c.r_loc), (40, 10.0));
        assert_eq!(c.arms.values(), (1..40).step_by(2).collect::<Vec<_>>());
    }

    #[test]
    fn negative_eps_is_rejected_by_name() {
        match parse_config("eps = -1") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "eps"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_and_malformed_keys() {
        assert!(matches!(parse_config("nonsense = 3"), Err(Error::Config { key, .. }) if key == "nonsense"));
        assert!(matches!(parse_config("m = 3"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("dt = fast"), Err(Error::Config { key, .. }) if key == "dt"));
        assert!(parse_config("just words").is_err());
    }

    #[test]
    fn state_size_selects_paired_radius_and_stride() {
        let c = parse_config_with("", &[("n_x".into(), "80".into())]).unwrap();
        assert_eq!((c.r_loc, c.arms.stride), (20.0, 5));
        let c = parse_config("n_x = 80\nr_loc = 7\nstride = 3").unwrap();
        assert_eq!((c.r_loc, c.arms.stride), (7.0, 3));
        let c = parse_config("n_x = 120").unwrap();
        assert_eq!((c.r_loc, c.arms.stride), (30.0, 7));
    }

    #[test]
    fn comments_and_later_lines_win() {
        let c = parse_config("# header\nseed = 4 # trailing\nseed = 9\n").unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn continuous_experiments_switch_defaults() {
        let c = parse_config("experiment = mse-sweep").unwrap();
        assert_eq!((c.model, c.n_x, c.dt, c.steps, c.n_reps), (ModelKind::L63, 3, 1e-4, 200_000, 20));
        assert_eq!(c.eps_list, vec![0.02, 0.05, 0.1, 0.2, 0.4]);
        let c = parse_config("experiment = mse-sweep\npaper_scale = true").unwrap();
        assert_eq!((c.dt, c.steps, c.n_reps), (5e-6, 1_000_000, 50));
        assert!(parse_config("experiment = trajectory\nn_x = 4").is_err());
    }

    #[test]
    fn rendered_config_round_trips() {
        for text in ["", "experiment = trajectory\nseed = 12", "experiment = mse-sweep\neps_list = 0.1, 0.3", "initial_n_j = 5\nlambda = 0"] {
            let c = parse_config(text).unwrap();
            assert_eq!(parse_config(&c.render()).unwrap(), c);
        }
    }
}
