use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use enkf_switch::bandit::bernoulli_selftest;
use enkf_switch::config::{parse_config_with, ExperimentKind};
use enkf_switch::harness::run_and_write;
use enkf_switch::record::{fmt_f64, render_table, write_text};
use enkf_switch::rng::{RngStream, StreamRole};
use enkf_switch::{Error, Result};

/// Ensemble Kalman filtering under fixed, random and bandit-sized partial
/// observations.
///
/// Component indices in configs and outputs are 0-based (L63: 0=x, 1=y, 2=z).
/// The continuous filter uses observation noise covariance R = eps I; the
/// cycled LETKF uses R = eps^2 I.
#[derive(Parser, Debug)]
#[command(name = "enkf-switch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; together with the repetition index it fixes every stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Use the full-length settings instead of the desk defaults.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Number of repetitions.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// L63 tracking with a fixed observed component versus one redrawn every step.
    Trajectory {
        #[command(flatten)]
        global: Global,
    },
    /// Mean squared tracking error of the randomized filter across noise levels.
    MseSweep {
        /// Comma-separated noise levels.
        #[arg(long)]
        eps_list: Option<String>,
        #[command(flatten)]
        global: Global,
    },
    /// Bandit learning of the observed-set size on Lorenz-96.
    LearnNj {
        /// State dimension; also selects the paired localization radius and arm stride.
        #[arg(long)]
        nx: Option<usize>,
        #[command(flatten)]
        global: Global,
    },
    /// UCB1 on Bernoulli(0.9/0.5/0.1) arms.
    BanditSelftest {
        #[arg(long, default_value_t = 10_000)]
        pulls: u64,
        #[command(flatten)]
        global: Global,
    },
}

fn overrides(global: &Global, kind: ExperimentKind, extra: Vec<(String, String)>) -> Result<Vec<(String, String)>> {
    let mut out = vec![("experiment".to_string(), kind.name().to_string())];
    if global.paper_scale {
        out.push(("paper_scale".into(), "true".into()));
    }
    out.extend(extra);
    if let Some(seed) = global.seed {
        out.push(("seed".into(), seed.to_string()));
    }
    if let Some(reps) = global.reps {
        out.push(("n_reps".into(), reps.to_string()));
    }
    for kv in &global.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override `{kv}` is not key=value")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn run_experiment(global: &Global, kind: ExperimentKind, extra: Vec<(String, String)>) -> Result<()> {
    let text = match &global.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?,
        None => String::new(),
    };
    let cfg = parse_config_with(&text, &overrides(global, kind, extra)?)?;
    if cfg.experiment != kind {
        return Err(Error::config(
            "experiment",
            format!("config selects `{}` but the subcommand is `{}`", cfg.experiment.name(), kind.name()),
        ));
    }
    let summary = run_and_write(&cfg, &global.out)?;
    println!("{summary}");
    println!("outputs written to {}", global.out.display());
    Ok(())
}

fn selftest(global: &Global, pulls: u64) -> Result<()> {
    let probs = [0.9, 0.5, 0.1];
    let seeds = global.reps.unwrap_or(20);
    let base = global.seed.unwrap_or(0);
    let mut rows = Vec::new();
    let (mut frac, mut regret) = (0.0, 0.0);
    for s in 0..seeds {
        let mut rng = RngStream::new(base, s as u64, StreamRole::Bandit);
        let o = bernoulli_selftest(&probs, pulls, 1.0, &mut rng)?;
        frac += o.best_fraction / seeds as f64;
        regret += o.regret / seeds as f64;
        rows.push(vec![
            s.to_string(),
            o.plays[0].to_string(),
            o.plays[1].to_string(),
            o.plays[2].to_string(),
            fmt_f64(o.best_fraction),
            fmt_f64(o.regret),
        ]);
    }
    write_text(
        &global.out.join("bandit_selftest.csv"),
        &render_table(&["seed", "plays_0.9", "plays_0.5", "plays_0.1", "best_fraction", "regret"], &rows),
    )?;
    let ok = frac > 0.8 && regret < 0.05 * pulls as f64;
    println!(
        "bandit-selftest: {seeds} seeds x {pulls} pulls, mean best-arm fraction {frac:.4}, mean regret {regret:.1} -> {}",
        if ok { "ok" } else { "FAILED" }
    );
    if ok {
        Ok(())
    } else {
        Err(Error::Numerical("bandit self-test thresholds not met".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Trajectory { global } => run_experiment(&global, ExperimentKind::Trajectory, vec![]),
        Command::MseSweep { eps_list, global } => {
            let extra = eps_list.map(|v| ("eps_list".to_string(), v)).into_iter().collect();
            run_experiment(&global, ExperimentKind::MseSweep, extra)
        }
        Command::LearnNj { nx, global } => {
            let extra = nx.map(|n| ("n_x".to_string(), n.to_string())).into_iter().collect();
            run_experiment(&global, ExperimentKind::LearnNj, extra)
        }
        Command::BanditSelftest { pulls, global } => selftest(&global, pulls),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
