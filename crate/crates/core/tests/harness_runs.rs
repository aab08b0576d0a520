//! Small end-to-end runs of the experiment drivers.

use std::fs;

use enkf_switch::config::{parse_config, SwitchMode};
use enkf_switch::harness::{
    da_cycle, init_da_state, run_and_write, run_continuous, run_learning_rep, run_trajectory_rep, ObservationSchedule,
};
use enkf_switch::record::{parse_csv, render_csv};

fn small_learn(extra: &str) -> enkf_switch::config::ExperimentConfig {
    parse_config(&format!("experiment = learn-nj\ncycles = 40\nn_reps = 1\n{extra}")).unwrap()
}

#[test]
fn zero_intensity_keeps_the_observed_set() {
    let cfg = small_learn("lambda = 0\ninitial_n_j = 9");
    let mut state = init_da_state(&cfg, 0).unwrap();
    let first = da_cycle(&mut state, &cfg).unwrap().record;
    assert_eq!(first.n_j, 9);
    assert!(first.switched);
    for _ in 0..20 {
        let r = da_cycle(&mut state, &cfg).unwrap().record;
        assert_eq!(r.n_j, 9);
        assert_eq!(r.j_indices, first.j_indices);
        assert!(!r.switched);
    }
}

#[test]
fn learning_rep_accounting() {
    let cfg = small_learn("");
    let rep = run_learning_rep(&cfg, 0).unwrap();
    assert!(rep.diverged_at.is_none());
    assert_eq!(rep.records.len(), cfg.cycles);
    assert_eq!(rep.plays.iter().sum::<u64>(), rep.total_pulls);
    assert_eq!(rep.total_pulls, cfg.cycles as u64);
    // 20 arms on N_x = 40, all tried during the first 20 cycles.
    assert_eq!(rep.arms.len(), 20);
    assert!(rep.plays.iter().all(|&p| p >= 1));
    assert!(rep.p_diag.iter().all(|&(hi, lo)| hi >= lo && lo > 0.0));
    for r in &rep.records {
        assert!((0.0..=1.0).contains(&r.kappa));
        assert_eq!(r.j_indices.len(), r.n_j);
        assert!(r.j_indices.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn learning_rep_is_reproducible() {
    let cfg = small_learn("seed = 99");
    let a = run_learning_rep(&cfg, 3).unwrap();
    let b = run_learning_rep(&cfg, 3).unwrap();
    assert_eq!(render_csv(&a.records), render_csv(&b.records));
    let c = run_learning_rep(&cfg, 4).unwrap();
    assert_ne!(render_csv(&a.records), render_csv(&c.records));
}

#[test]
fn trajectory_streams_share_their_start() {
    let cfg = parse_config("experiment = trajectory\nsteps = 500\nrecord_every = 50").unwrap();
    let rep = run_trajectory_rep(&cfg, 0).unwrap();
    let (f, r) = (&rep.fixed.records[0], &rep.random.records[0]);
    assert_eq!(f.cycle, 0);
    assert_eq!(f.rmse, r.rmse);
    assert_eq!(f.trace_p, r.trace_p);
    assert_eq!(f.j_indices, vec![cfg.fixed_index]);
    assert_eq!(r.n_j, 1);
    assert!(rep.fixed.records.iter().all(|x| x.j_indices == vec![2]));
    assert_eq!(rep.random.records.len(), 500 / 50 + 1);
}

#[test]
fn poisson_schedule_with_zero_intensity_never_switches() {
    let cfg = parse_config("experiment = trajectory\nsteps = 300\nrecord_every = 10\nlambda = 0").unwrap();
    let run = run_continuous(
        &cfg,
        cfg.eps,
        0,
        &ObservationSchedule::Random {
            n_j: 2,
            mode: SwitchMode::Poisson,
        },
    )
    .unwrap();
    let j0 = run.records[0].j_indices.clone();
    assert_eq!(j0.len(), 2);
    assert!(run.records.iter().all(|r| r.j_indices == j0));
    assert!(run.records.iter().skip(1).all(|r| !r.switched));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let cfg = parse_config("experiment = mse-sweep\nsteps = 2000\nn_reps = 2\neps_list = 0.1, 0.3").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_and_write(&cfg, &a).unwrap();
    run_and_write(&cfg, &b).unwrap();
    for name in ["mse_sweep.csv", "mse_per_rep.csv", "mse_fit.csv", "manifest.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn run_files_parse_back() {
    let cfg = small_learn("cycles = 15");
    let tmp = tempfile::tempdir().unwrap();
    run_and_write(&cfg, tmp.path()).unwrap();
    let text = fs::read_to_string(tmp.path().join("learn_nj_rep000.csv")).unwrap();
    let records = parse_csv(&text).unwrap();
    assert_eq!(records.len(), 15);
    assert_eq!(render_csv(&records), text);
    let manifest = fs::read_to_string(tmp.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("# generator: "));
    assert_eq!(parse_config(&manifest).unwrap(), cfg);
}
