//! Experiment drivers.
//!
//! * `trajectory`: L63 under the continuous filter, one fixed observed
//!   component versus one component redrawn at random every step, both fed
//!   by the same truth and noise.
//! * `mse-sweep`: time- and repetition-averaged squared error of the
//!   randomized continuous filter across observation noise levels.
//! * `learn-nj`: L96 forecast/analysis cycles with LETKF where a UCB1
//!   bandit picks how many components to observe at each Poisson switch.
//!
//! Every repetition draws from its own RNG streams keyed by
//! `(seed, rep, role)`, so results do not depend on execution order.

use std::path::Path;

use nalgebra::DMatrix;

use crate::bandit::{coverage, reward, BanditState};
use crate::config::{ExperimentConfig, ExperimentKind, ModelKind, SwitchMode};
use crate::dynamics::{
    euler_maruyama_step_in_place, rk4_step_in_place, DriftModel, Rk4Scratch, StateVector,
};
use crate::enkbf::{enkbf_step_in_place, lemma1_constants, BoundConstants, BoundInputs, Ensemble, EnkbfWorkspace};
use crate::error::{Error, Result};
use crate::letkf::{letkf_analysis, ObsLocalization};
use crate::localization::{LocalizationMatrix, LocalizationSpec};
use crate::observation::{sample_subset_uniform, ObservationOperator, PoissonSwitcher};
use crate::record::{emit_csv, fmt_f64, render_table, write_text, RunRecord};
use crate::rng::{RngStream, StreamRole, GENERATOR_NAME, GENERATOR_VERSION};

/// Spin-up step for the truth before assimilation starts.
const SPINUP_DT: f64 = 0.01;

fn map_reps<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn stream(cfg: &ExperimentConfig, rep: usize, role: StreamRole) -> RngStream {
    RngStream::new(cfg.seed, rep as u64, role)
}

/// Truth on the attractor: a perturbed reference state integrated with RK4.
pub fn spun_up_truth(cfg: &ExperimentConfig, rep: usize) -> Result<StateVector> {
    let model = cfg.drift_model();
    let mut rng = stream(cfg, rep, StreamRole::TruthInit);
    let base = match cfg.model {
        ModelKind::L63 => 1.0,
        ModelKind::L96 => cfg.forcing,
    };
    let mut x: Vec<f64> = (0..cfg.n_x).map(|_| base + rng.standard_normal()).collect();
    let mut scratch = Rk4Scratch::new(cfg.n_x);
    for step in 0..cfg.spinup_steps {
        rk4_step_in_place(&model, &mut x, SPINUP_DT, &mut scratch).map_err(|e| e.at_step(step))?;
    }
    Ok(StateVector(x))
}

/// `truth + init_spread * N(0, I)` per member.
pub fn initial_ensemble(cfg: &ExperimentConfig, rep: usize, truth: &StateVector) -> Result<Ensemble> {
    let mut rng = stream(cfg, rep, StreamRole::EnsembleInit);
    let members = DMatrix::from_fn(cfg.n_x, cfg.ensemble_size, |i, _| {
        truth[i] + cfg.init_spread * rng.standard_normal()
    });
    Ensemble::from_matrix(members)
}

fn localization_for(cfg: &ExperimentConfig) -> Result<LocalizationMatrix> {
    let spec = match cfg.model {
        ModelKind::L63 => LocalizationSpec::uniform(),
        ModelKind::L96 => LocalizationSpec::gaspari_cohn(cfg.r_loc),
    };
    LocalizationMatrix::build(&spec, cfg.n_x)
}

/// Covariance bound constants for this configuration. `C_phi*` is the
/// largest row sum of the taper matrix.
pub fn bound_constants(cfg: &ExperimentConfig) -> Result<BoundConstants> {
    let phi = localization_for(cfg)?;
    lemma1_constants(BoundInputs {
        eps: cfg.eps,
        omega_min: cfg.bound_omega_min,
        omega_max: cfg.bound_omega_max,
        q_min: cfg.bound_q_min,
        q_max: cfg.bound_q_max,
        c_f: cfg.bound_c_f,
        c_phi_star: phi.max_row_sum(),
        phi_min: crate::localization::gaspari_cohn(1.0),
    })
}

/// Which components the continuous filter observes over time.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationSchedule {
    Fixed(Vec<usize>),
    Random { n_j: usize, mode: SwitchMode },
}

/// One continuous-filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRun {
    pub records: Vec<RunRecord>,
    /// Step at which the error crossed the divergence threshold or the
    /// state became non-finite.
    pub diverged_at: Option<usize>,
    /// Mean of `||e_t||^2` over post-burn-in steps; NaN if diverged.
    pub mse: f64,
    /// Mean of `||e_t||` over the second half of the run; NaN if diverged.
    pub second_half_rmse: f64,
    pub spread_cap_hits: u64,
}

impl ContinuousRun {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

#[allow(clippy::too_many_arguments)]
fn continuous_record(
    cfg: &ExperimentConfig,
    step: usize,
    ensemble: &Ensemble,
    truth: &[f64],
    h: &ObservationOperator,
    switched: bool,
) -> Result<RunRecord> {
    let p = ensemble.covariance()?;
    let mean = ensemble.mean();
    let rmse = truth.iter().zip(mean.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let kappa = coverage(h.indices(), cfg.r_loc, &p, cfg.tau_corr)?;
    let trace_p = p.trace();
    Ok(RunRecord {
        cycle: step,
        time: step as f64 * cfg.dt,
        rmse,
        trace_p,
        kappa,
        reward: reward(kappa, h.n_obs(), cfg.n_x, trace_p, &cfg.reward_params()),
        n_j: h.n_obs(),
        j_indices: h.indices().to_vec(),
        switched,
    })
}

fn diverged_record(cfg: &ExperimentConfig, step: usize, h: &ObservationOperator, switched: bool) -> RunRecord {
    RunRecord {
        cycle: step,
        time: step as f64 * cfg.dt,
        rmse: f64::INFINITY,
        trace_p: f64::NAN,
        kappa: 0.0,
        reward: f64::NAN,
        n_j: h.n_obs(),
        j_indices: h.indices().to_vec(),
        switched,
    }
}

/// Runs the continuous filter for `cfg.steps` Euler steps of size `cfg.dt`
/// against an Euler–Maruyama truth.
///
/// Truth, initial ensemble and observation noise come from streams shared by
/// every schedule, so runs differing only in `schedule` see the same signal.
pub fn run_continuous(
    cfg: &ExperimentConfig,
    eps: f64,
    rep: usize,
    schedule: &ObservationSchedule,
) -> Result<ContinuousRun> {
    let model = cfg.drift_model();
    let n = cfg.n_x;
    let phi = localization_for(cfg)?;
    let diffusion = cfg.diffusion();
    let mut truth = spun_up_truth(cfg, rep)?;
    let mut ensemble = initial_ensemble(cfg, rep, &truth)?;
    let mut truth_rng = stream(cfg, rep, StreamRole::TruthNoise);
    let mut obs_rng = stream(cfg, rep, StreamRole::ObservationNoise);
    let mut subset_rng = stream(cfg, rep, StreamRole::SubsetSampler);
    let mut switcher = PoissonSwitcher::new(
        cfg.lambda,
        stream(cfg, rep, StreamRole::PoissonClock),
        stream(cfg, rep, StreamRole::SubsetSampler),
    )?;

    let mut h = match schedule {
        ObservationSchedule::Fixed(j) => ObservationOperator::new(j.clone(), n, eps)?,
        ObservationSchedule::Random { n_j, mode } => {
            let idx = match mode {
                SwitchMode::EveryStep => sample_subset_uniform(n, *n_j, &mut subset_rng)?,
                SwitchMode::Poisson => switcher.sample_indices(n, *n_j)?,
            };
            ObservationOperator::new(idx, n, eps)?
        }
    };

    let burn_start = (cfg.burn_in * cfg.steps as f64).floor() as usize;
    let half_start = cfg.steps / 2;
    let mut sq_sum = 0.0;
    let mut sq_count = 0usize;
    let mut rmse_sum = 0.0;
    let mut rmse_count = 0usize;

    let mut records = vec![continuous_record(cfg, 0, &ensemble, &truth, &h, true)?];
    let mut ws = EnkbfWorkspace::default();
    let mut noise = vec![0.0; n];
    let mut drift_buf = vec![0.0; n];
    let mut spread_cap_hits = 0u64;
    let mut diverged_at = None;

    for step in 0..cfg.steps {
        let mut switched = false;
        if step > 0 {
            if let ObservationSchedule::Random { n_j, mode } = schedule {
                let redraw = match mode {
                    SwitchMode::EveryStep => true,
                    SwitchMode::Poisson => switcher.draw_switch(),
                };
                if redraw {
                    let idx = match mode {
                        SwitchMode::EveryStep => sample_subset_uniform(n, *n_j, &mut subset_rng)?,
                        SwitchMode::Poisson => switcher.sample_indices(n, *n_j)?,
                    };
                    h = h.with_indices(idx)?;
                    switched = true;
                }
            }
        }

        obs_rng.fill_standard_normal(&mut noise);
        let dy = h.observation_increment_from(&truth, cfg.dt, &noise)?;
        let advanced = euler_maruyama_step_in_place(&model, &mut truth, cfg.dt, diffusion, &mut truth_rng, &mut drift_buf)
            .and_then(|_| {
                enkbf_step_in_place(&mut ensemble, &model, &phi, &h, &dy, cfg.dt, cfg.variance_floor, &mut ws)
            });
        let step_no = step + 1;
        match advanced {
            Ok(report) => spread_cap_hits += report.spread_cap_hits as u64,
            Err(e) if e.is_blow_up() => {
                diverged_at = Some(step_no);
                records.push(diverged_record(cfg, step_no, &h, switched));
                break;
            }
            Err(e) => return Err(e),
        }

        let mean = ensemble.matrix().column_mean();
        let sq: f64 = truth.iter().zip(mean.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        let rmse = sq.sqrt();
        if !(rmse <= cfg.divergence_threshold) {
            diverged_at = Some(step_no);
            records.push(diverged_record(cfg, step_no, &h, switched));
            break;
        }
        if step >= burn_start {
            sq_sum += sq;
            sq_count += 1;
        }
        if step >= half_start {
            rmse_sum += rmse;
            rmse_count += 1;
        }
        if step_no % cfg.record_every == 0 {
            records.push(continuous_record(cfg, step_no, &ensemble, &truth, &h, switched)?);
        }
    }

    let (mse, second_half_rmse) = if diverged_at.is_some() {
        (f64::NAN, f64::NAN)
    } else {
        (sq_sum / sq_count.max(1) as f64, rmse_sum / rmse_count.max(1) as f64)
    };
    Ok(ContinuousRun {
        records,
        diverged_at,
        mse,
        second_half_rmse,
        spread_cap_hits,
    })
}

/// Both streams of one `trajectory` repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRep {
    pub fixed: ContinuousRun,
    pub random: ContinuousRun,
}

pub fn run_trajectory_rep(cfg: &ExperimentConfig, rep: usize) -> Result<TrajectoryRep> {
    let fixed = run_continuous(cfg, cfg.eps, rep, &ObservationSchedule::Fixed(vec![cfg.fixed_index]))?;
    let random = run_continuous(
        cfg,
        cfg.eps,
        rep,
        &ObservationSchedule::Random {
            n_j: cfg.observed_count,
            mode: cfg.switching,
        },
    )?;
    Ok(TrajectoryRep { fixed, random })
}

pub fn run_experiment_e1(cfg: &ExperimentConfig) -> Result<Vec<TrajectoryRep>> {
    map_reps(cfg.n_reps, |rep| run_trajectory_rep(cfg, rep)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsePoint {
    pub eps: f64,
    /// Mean over non-diverged repetitions of the time-averaged `||e||^2`.
    pub mse: f64,
    pub n_ok: usize,
    pub n_diverged: usize,
    pub per_rep: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseSweep {
    pub points: Vec<MsePoint>,
    /// Least-squares slope and intercept of `ln mse` against `ln eps`.
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least-squares line through `(x, y)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn run_experiment_e2(cfg: &ExperimentConfig) -> Result<MseSweep> {
    let schedule = ObservationSchedule::Random {
        n_j: cfg.observed_count,
        mode: cfg.switching,
    };
    let jobs: Vec<(usize, usize)> = (0..cfg.eps_list.len())
        .flat_map(|e| (0..cfg.n_reps).map(move |r| (e, r)))
        .collect();
    let results: Vec<Result<f64>> = map_reps(jobs.len(), |k| {
        let (e, rep) = jobs[k];
        run_continuous(cfg, cfg.eps_list[e], rep, &schedule).map(|r| r.mse)
    });
    let mut points = Vec::new();
    for (e, &eps) in cfg.eps_list.iter().enumerate() {
        let per_rep: Vec<f64> = results[e * cfg.n_reps..(e + 1) * cfg.n_reps]
            .iter()
            .cloned()
            .collect::<Result<_>>()?;
        let ok: Vec<f64> = per_rep.iter().copied().filter(|v| v.is_finite()).collect();
        points.push(MsePoint {
            eps,
            mse: ok.iter().sum::<f64>() / ok.len().max(1) as f64,
            n_ok: ok.len(),
            n_diverged: per_rep.len() - ok.len(),
            per_rep,
        });
    }
    let usable: Vec<&MsePoint> = points.iter().filter(|p| p.n_ok > 0).collect();
    let xs: Vec<f64> = usable.iter().map(|p| p.eps.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.mse.ln()).collect();
    let (slope, intercept) = if xs.len() >= 2 { fit_line(&xs, &ys) } else { (f64::NAN, f64::NAN) };
    Ok(MseSweep { points, slope, intercept })
}

/// Everything carried from one assimilation cycle to the next.
#[derive(Debug, Clone)]
pub struct DaState {
    pub truth: StateVector,
    pub ensemble: Ensemble,
    pub bandit: BanditState,
    pub switcher: PoissonSwitcher,
    obs_rng: RngStream,
    /// Active arm index and operator; `None` before the first cycle.
    pub current: Option<(usize, ObservationOperator)>,
    pub cycle: usize,
    pending_initial: Option<usize>,
    scratch: Rk4Scratch,
    model: DriftModel,
}

pub fn init_da_state(cfg: &ExperimentConfig, rep: usize) -> Result<DaState> {
    let truth = spun_up_truth(cfg, rep)?;
    let ensemble = initial_ensemble(cfg, rep, &truth)?;
    let bandit = BanditState::new(cfg.arms.values(), cfg.ucb_coeff)?;
    let switcher = PoissonSwitcher::new(
        cfg.lambda,
        stream(cfg, rep, StreamRole::PoissonClock),
        stream(cfg, rep, StreamRole::SubsetSampler),
    )?;
    let pending_initial = match cfg.initial_n_j {
        Some(n) => Some(
            bandit
                .arm_index(n)
                .ok_or_else(|| Error::config("initial_n_j", "must be one of the arm values"))?,
        ),
        None => None,
    };
    Ok(DaState {
        scratch: Rk4Scratch::new(cfg.n_x),
        model: cfg.drift_model(),
        truth,
        ensemble,
        bandit,
        switcher,
        obs_rng: stream(cfg, rep, StreamRole::ObservationNoise),
        current: None,
        cycle: 0,
        pending_initial,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub record: RunRecord,
    pub p_diag_max: f64,
    pub p_diag_min: f64,
}

/// One forecast/analysis cycle:
///
/// 1. Poisson draw; on a jump (or before the first cycle) UCB1 picks `N_J`
///    and a fresh uniform index set of that size is drawn.
/// 2. The chosen arm's play count is incremented.
/// 3. `n_inner` RK4 steps for truth and every member.
/// 4. Observation of the new truth, inflation and LETKF analysis.
/// 5. Coverage, reward and the incremental mean-reward update.
pub fn da_cycle(state: &mut DaState, cfg: &ExperimentConfig) -> Result<CycleOutcome> {
    let n = cfg.n_x;
    let jump = state.switcher.draw_switch();
    let (arm, h, switched) = match (&state.current, state.pending_initial.take()) {
        (_, Some(arm)) => {
            let idx = state.switcher.sample_indices(n, state.bandit.arms()[arm])?;
            (arm, ObservationOperator::new(idx, n, cfg.eps)?, true)
        }
        (Some((arm, h)), None) if !jump => (*arm, h.clone(), false),
        _ => {
            let arm = state.bandit.choose_arm();
            let idx = state.switcher.sample_indices(n, state.bandit.arms()[arm])?;
            (arm, ObservationOperator::new(idx, n, cfg.eps)?, true)
        }
    };
    state.bandit.record_pull(arm);
    state.cycle += 1;

    for _ in 0..cfg.n_inner {
        rk4_step_in_place(&state.model, &mut state.truth, cfg.dt, &mut state.scratch)
            .map_err(|e| e.at_step(state.cycle))?;
        let m = state.ensemble.size();
        let members = state.ensemble.members_mut().as_mut_slice();
        for (i, col) in members.chunks_exact_mut(n).enumerate() {
            rk4_step_in_place(&state.model, col, cfg.dt, &mut state.scratch).map_err(|_| Error::NonFinite {
                step: state.cycle,
                member: Some(i),
            })?;
        }
        debug_assert_eq!(m, state.ensemble.size());
    }

    let y = h.discrete_observation(&state.truth, &mut state.obs_rng)?;
    state.ensemble = letkf_analysis(&state.ensemble, &y, &h, &cfg.analysis_config(), ObsLocalization::GaspariCohn)
        .map_err(|e| e.at_step(state.cycle))?;

    let p = state.ensemble.covariance()?;
    let kappa = coverage(h.indices(), cfg.r_loc, &p, cfg.tau_corr)?;
    let trace_p = p.trace();
    let r = reward(kappa, h.n_obs(), n, trace_p, &cfg.reward_params());
    state.bandit.update_arm(arm, r);

    let mean = state.ensemble.mean();
    let rmse = state
        .truth
        .iter()
        .zip(mean.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let diag = p.diagonal();
    let record = RunRecord {
        cycle: state.cycle,
        time: (state.cycle * cfg.n_inner) as f64 * cfg.dt,
        rmse,
        trace_p,
        kappa,
        reward: r,
        n_j: h.n_obs(),
        j_indices: h.indices().to_vec(),
        switched,
    };
    state.current = Some((arm, h));
    Ok(CycleOutcome {
        record,
        p_diag_max: diag.max(),
        p_diag_min: diag.min(),
    })
}

/// One `learn-nj` repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRep {
    pub records: Vec<RunRecord>,
    pub arms: Vec<usize>,
    pub plays: Vec<u64>,
    pub mu_hat: Vec<f64>,
    /// Most-played arm value.
    pub n_j_star: usize,
    pub total_pulls: u64,
    /// Set when the ensemble blew up; the run stops at that cycle.
    pub diverged_at: Option<usize>,
    pub p0_diag_max: f64,
    pub p0_diag_min: f64,
    /// `(max_k P_kk, min_k P_kk)` after each analysis.
    pub p_diag: Vec<(f64, f64)>,
}

pub fn run_learning_rep(cfg: &ExperimentConfig, rep: usize) -> Result<LearningRep> {
    let mut state = init_da_state(cfg, rep)?;
    let p0 = state.ensemble.variances()?;
    let mut records = Vec::with_capacity(cfg.cycles);
    let mut p_diag = Vec::with_capacity(cfg.cycles);
    let mut diverged_at = None;
    for _ in 0..cfg.cycles {
        match da_cycle(&mut state, cfg) {
            Ok(out) => {
                p_diag.push((out.p_diag_max, out.p_diag_min));
                records.push(out.record);
            }
            Err(e) if e.is_blow_up() => {
                diverged_at = Some(state.cycle);
                let (n_j, j) = state
                    .current
                    .as_ref()
                    .map(|(_, h)| (h.n_obs(), h.indices().to_vec()))
                    .unwrap_or_default();
                records.push(RunRecord {
                    cycle: state.cycle,
                    time: (state.cycle * cfg.n_inner) as f64 * cfg.dt,
                    rmse: f64::INFINITY,
                    trace_p: f64::NAN,
                    kappa: 0.0,
                    reward: f64::NAN,
                    n_j,
                    j_indices: j,
                    switched: false,
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(LearningRep {
        records,
        arms: state.bandit.arms().to_vec(),
        plays: state.bandit.plays().to_vec(),
        mu_hat: state.bandit.mu_hat().to_vec(),
        n_j_star: state.bandit.most_played(),
        total_pulls: state.bandit.total_pulls(),
        diverged_at,
        p0_diag_max: p0.max(),
        p0_diag_min: p0.min(),
        p_diag,
    })
}

pub fn run_experiment_e3(cfg: &ExperimentConfig) -> Result<Vec<LearningRep>> {
    map_reps(cfg.n_reps, |rep| run_learning_rep(cfg, rep)).into_iter().collect()
}

/// Most frequent value; ties go to the smallest.
pub fn mode(values: &[usize]) -> Option<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    let mut best: Option<(usize, usize)> = None;
    for (v, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v)
}

/// Writes `manifest.txt`: the resolved configuration plus generator and
/// burn-in metadata as comments. The file parses back as a config.
pub fn write_manifest(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("# generator: {GENERATOR_NAME}\n"));
    text.push_str(&format!("# generator_version: {GENERATOR_VERSION}\n"));
    text.push_str(&format!(
        "# statistics exclude the first {} of each run (burn_in)\n",
        cfg.burn_in
    ));
    text.push_str(&cfg.render());
    write_text(&out.join("manifest.txt"), &text)
}

fn opt_usize(v: Option<usize>) -> String {
    v.map_or_else(String::new, |s| s.to_string())
}

pub fn write_trajectory_outputs(out: &Path, reps: &[TrajectoryRep]) -> Result<()> {
    let mut rows = Vec::new();
    for (r, rep) in reps.iter().enumerate() {
        emit_csv(&rep.fixed.records, &out.join(format!("trajectory_fixed_rep{r:03}.csv")))?;
        emit_csv(&rep.random.records, &out.join(format!("trajectory_random_rep{r:03}.csv")))?;
        rows.push(vec![
            r.to_string(),
            u8::from(rep.fixed.diverged()).to_string(),
            opt_usize(rep.fixed.diverged_at),
            fmt_f64(rep.fixed.second_half_rmse),
            u8::from(rep.random.diverged()).to_string(),
            opt_usize(rep.random.diverged_at),
            fmt_f64(rep.random.second_half_rmse),
        ]);
    }
    write_text(
        &out.join("trajectory_summary.csv"),
        &render_table(
            &[
                "rep",
                "fixed_diverged",
                "fixed_diverged_at",
                "fixed_second_half_rmse",
                "random_diverged",
                "random_diverged_at",
                "random_second_half_rmse",
            ],
            &rows,
        ),
    )
}

pub fn write_mse_outputs(out: &Path, sweep: &MseSweep) -> Result<()> {
    let rows: Vec<Vec<String>> = sweep
        .points
        .iter()
        .map(|p| vec![fmt_f64(p.eps), fmt_f64(p.mse), p.n_ok.to_string(), p.n_diverged.to_string()])
        .collect();
    write_text(&out.join("mse_sweep.csv"), &render_table(&["eps", "mse", "n_ok", "n_diverged"], &rows))?;
    let mut per_rep = Vec::new();
    for p in &sweep.points {
        for (r, v) in p.per_rep.iter().enumerate() {
            per_rep.push(vec![fmt_f64(p.eps), r.to_string(), fmt_f64(*v)]);
        }
    }
    write_text(&out.join("mse_per_rep.csv"), &render_table(&["eps", "rep", "mse"], &per_rep))?;
    write_text(
        &out.join("mse_fit.csv"),
        &render_table(&["slope", "intercept"], &[vec![fmt_f64(sweep.slope), fmt_f64(sweep.intercept)]]),
    )
}

pub fn write_learning_outputs(out: &Path, reps: &[LearningRep]) -> Result<()> {
    let mut hist = Vec::new();
    let mut summary = Vec::new();
    for (r, rep) in reps.iter().enumerate() {
        emit_csv(&rep.records, &out.join(format!("learn_nj_rep{r:03}.csv")))?;
        for (k, &arm) in rep.arms.iter().enumerate() {
            hist.push(vec![r.to_string(), arm.to_string(), rep.plays[k].to_string(), fmt_f64(rep.mu_hat[k])]);
        }
        summary.push(vec![
            r.to_string(),
            rep.n_j_star.to_string(),
            rep.total_pulls.to_string(),
            opt_usize(rep.diverged_at),
        ]);
    }
    write_text(&out.join("learn_nj_histogram.csv"), &render_table(&["rep", "n_j", "plays", "mu_hat"], &hist))?;
    write_text(
        &out.join("learn_nj_summary.csv"),
        &render_table(&["rep", "n_j_star", "total_pulls", "diverged_at"], &summary),
    )
}

/// Runs the experiment selected by `cfg.experiment` and writes all outputs
/// plus the manifest under `out`.
pub fn run_and_write(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    write_manifest(out, cfg)?;
    match cfg.experiment {
        ExperimentKind::Trajectory => {
            let reps = run_experiment_e1(cfg)?;
            write_trajectory_outputs(out, &reps)?;
            let fixed = reps.iter().filter(|r| r.fixed.diverged()).count();
            let tracked = reps.iter().filter(|r| !r.random.diverged()).count();
            Ok(format!(
                "trajectory: fixed J={{{}}} diverged in {fixed}/{n}; random N_J={} stayed finite in {tracked}/{n}",
                cfg.fixed_index,
                cfg.observed_count,
                n = reps.len()
            ))
        }
        ExperimentKind::MseSweep => {
            let sweep = run_experiment_e2(cfg)?;
            write_mse_outputs(out, &sweep)?;
            let mut s = String::from("mse-sweep:\n");
            for p in &sweep.points {
                s.push_str(&format!("  eps {:<8} mse {:.6e} ({} ok, {} diverged)\n", p.eps, p.mse, p.n_ok, p.n_diverged));
            }
            s.push_str(&format!("  log-log slope {:.4}", sweep.slope));
            Ok(s)
        }
        ExperimentKind::LearnNj => {
            let reps = run_experiment_e3(cfg)?;
            write_learning_outputs(out, &reps)?;
            let stars: Vec<usize> = reps.iter().map(|r| r.n_j_star).collect();
            Ok(format!(
                "learn-nj: N_x={} most-played N_J per rep {:?}; mode {}",
                cfg.n_x,
                stars,
                mode(&stars).map_or("-".into(), |m| m.to_string())
            ))
        }
    }
}
