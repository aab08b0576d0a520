//! Browser bindings for the filtering simulator.
//!
//! Each export returns a flat `Float64Array`; the layout is documented on the
//! function. Errors surface in JS as thrown strings.

use wasm_bindgen::prelude::*;

use enkf_switch::config::{parse_config, ExperimentConfig};
use enkf_switch::harness::{run_continuous, run_learning_rep, ObservationSchedule};
use enkf_switch::localization::LocalizationSpec;
use enkf_switch::config::SwitchMode;

fn config(text: String) -> Result<ExperimentConfig, String> {
    parse_config(&text).map_err(|e| e.to_string())
}

/// Lorenz-63 tracking with only `z` observed versus one component redrawn
/// at random every step, sharing truth and noise.
///
/// Returns `[t_0, fixed_0, random_0, t_1, fixed_1, random_1, ...]`, one
/// triple per recorded step, where `fixed`/`random` are the ensemble-mean
/// errors. A diverged run reports `inf` from the blow-up onwards.
#[wasm_bindgen]
pub fn tracking_errors(seed: u32, steps: u32, eps: f64) -> Result<Vec<f64>, String> {
    let cfg = config(format!(
        "experiment = trajectory\nseed = {seed}\nsteps = {steps}\neps = {eps}\nrecord_every = 10\nn_reps = 1"
    ))?;
    let fixed = run_continuous(&cfg, eps, 0, &ObservationSchedule::Fixed(vec![cfg.fixed_index])).map_err(|e| e.to_string())?;
    let random = run_continuous(
        &cfg,
        eps,
        0,
        &ObservationSchedule::Random {
            n_j: 1,
            mode: SwitchMode::EveryStep,
        },
    )
    .map_err(|e| e.to_string())?;
    let n = fixed.records.len().max(random.records.len());
    let mut out = Vec::with_capacity(3 * n);
    for k in 0..n {
        let at = |recs: &[enkf_switch::record::RunRecord]| recs.get(k).map_or(f64::INFINITY, |r| r.rmse);
        let t = random.records.get(k).or(fixed.records.get(k)).map_or(0.0, |r| r.time);
        out.extend([t, at(&fixed.records), at(&random.records)]);
    }
    Ok(out)
}

/// Gaspari–Cohn taper between site 0 and every site of a ring of `n_x`.
#[wasm_bindgen]
pub fn taper_row(r_loc: f64, n_x: u32) -> Result<Vec<f64>, String> {
    if n_x == 0 || !(r_loc > 0.0) {
        return Err("need n_x > 0 and r_loc > 0".into());
    }
    let spec = LocalizationSpec::gaspari_cohn(r_loc);
    Ok((0..n_x as usize).map(|j| spec.weight(0, j, n_x as usize)).collect())
}

/// One bandit-learning run on Lorenz-96.
///
/// Returns `[arm_0, plays_0, mean_reward_0, arm_1, ...]` followed by the
/// most-played arm as the last element.
#[wasm_bindgen]
pub fn learn_observed_count(seed: u32, n_x: u32, cycles: u32) -> Result<Vec<f64>, String> {
    let cfg = config(format!(
        "experiment = learn-nj\nseed = {seed}\nn_x = {n_x}\ncycles = {cycles}\nn_reps = 1"
    ))?;
    let rep = run_learning_rep(&cfg, 0).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3 * rep.arms.len() + 1);
    for k in 0..rep.arms.len() {
        out.extend([rep.arms[k] as f64, rep.plays[k] as f64, rep.mu_hat[k]]);
    }
    out.push(rep.n_j_star as f64);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracking_layout() {
        let v = tracking_errors(1, 200, 0.25).unwrap();
        assert_eq!(v.len(), 3 * 21);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], v[2]);
    }

    #[test]
    fn taper_row_is_symmetric_on_the_ring() {
        let row = taper_row(2.0, 10).unwrap();
        assert_eq!(row[0], 1.0);
        assert_eq!(row[1], row[9]);
        assert_eq!(row[5], 0.0);
        assert!(taper_row(0.0, 10).is_err());
    }

    #[test]
    fn learning_layout() {
        let v = learn_observed_count(3, 12, 30).unwrap();
        // Arms 1, 3, ..., 11 for N_x = 12.
        assert_eq!(v.len(), 3 * 6 + 1);
        let plays: f64 = v.chunks(3).take(6).map(|c| c[1]).sum();
        assert_eq!(plays, 30.0);
        assert!(v[..18].chunks(3).any(|c| c[0] == v[18]));
        assert!(config("bogus = 1".into()).is_err());
    }
}
