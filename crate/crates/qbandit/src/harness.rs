//! Batch runner: repeated trials of one configured algorithm, aggregated
//! into a mean regret curve on a shared query grid.
//!
//! Trial `i` runs with seed `base + i`. GP environments are redrawn per
//! trial from a seed mixed out of the trial seed, so two batches with
//! different algorithms but the same base seed face the same sequence of
//! environments. Table environments are identical across trials. Trials run
//! in parallel; `QBANDIT_THREADS` caps the pool.

use crate::bandit::{self, QgpOptions, QmcSetup, Trajectory};
use crate::config::{Algo, BackendKind, BackingKind, EnvKind, RunSpec};
use crate::env::Environment;
use crate::kernel::{FeatureMap, KernelFamily};
use crate::wgp::{Backing, KernelEval};
use crate::{mix_seed, Error, Result};
use rayon::prelude::*;
use std::io::Write as _;
use std::path::Path;

/// Grid size the aggregated curve is downsampled to.
pub const MAX_GRID_POINTS: usize = 2000;

/// Seed-mixing tag for per-trial environment draws.
const ENV_TAG: u64 = 0x766e65;

/// One trial's run, or the error message it failed with.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub seed: u64,
    pub result: std::result::Result<Trajectory, String>,
}

/// Aggregated batch: per-trial outcomes plus the mean regret curve over the
/// trials that completed.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub trials: Vec<TrialOutcome>,
    /// Query indices the curve is sampled at (ascending, ends at `horizon`).
    pub grid: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_trials_ok: u32,
    pub horizon: u64,
}

/// Geometrically spaced query indices from 1 to `horizon` inclusive.
pub fn query_grid(horizon: u64, max_points: usize) -> Vec<u64> {
    let max_points = max_points.max(2);
    if horizon <= max_points as u64 {
        return (1..=horizon).collect();
    }
    let h = horizon as f64;
    let mut grid: Vec<u64> = (0..max_points)
        .map(|i| {
            let t = i as f64 / (max_points - 1) as f64;
            (h.powf(t).round() as u64).clamp(1, horizon)
        })
        .collect();
    grid.dedup();
    grid
}

/// Cumulative regret of one trajectory at each grid point, attributing each
/// stage's instantaneous regret to every query it charged.
fn regret_at_grid(traj: &Trajectory, grid: &[u64]) -> Vec<f64> {
    let n = traj.stages.len();
    let mut cum_q = Vec::with_capacity(n);
    let mut prefix = Vec::with_capacity(n);
    let mut acc = 0.0;
    for s in &traj.stages {
        acc += s.n_queries as f64 * s.regret;
        cum_q.push(s.cumulative_queries);
        prefix.push(acc);
    }
    grid.iter()
        .map(|&q| {
            let idx = cum_q.partition_point(|&c| c <= q);
            let full = if idx == 0 { 0.0 } else { prefix[idx - 1] };
            let partial = if idx < n {
                let start = if idx == 0 { 0 } else { cum_q[idx - 1] };
                q.saturating_sub(start) as f64 * traj.stages[idx].regret
            } else {
                0.0
            };
            full + partial
        })
        .collect()
}

fn build_backing(spec: &RunSpec, dim: usize, trial: u32) -> Result<Backing> {
    match spec.backing {
        BackingKind::Kernel => Ok(Backing::Kernel(KernelEval::Closed(spec.kernel))),
        BackingKind::Features => {
            if spec.kernel.family == KernelFamily::Linear {
                Ok(Backing::Features(FeatureMap::identity(dim, spec.kernel.output_scale)?))
            } else {
                let seed = mix_seed(spec.rff_seed, trial as u64);
                Ok(Backing::Features(FeatureMap::rff(
                    &spec.kernel,
                    spec.rff_features,
                    dim,
                    seed,
                )?))
            }
        }
    }
}

fn trial_environment(spec: &RunSpec, table: Option<&Environment>, trial_seed: u64) -> Result<Environment> {
    match spec.env_kind {
        EnvKind::Table => Ok(table.expect("table preloaded").clone()),
        EnvKind::Gp => Environment::sampled_gp(
            &spec.kernel,
            spec.dim,
            spec.grid_size,
            spec.noise_spec(),
            mix_seed(trial_seed, ENV_TAG),
        ),
    }
}

/// Runs one trial end to end.
pub fn run_trial(spec: &RunSpec, trial: u32) -> Result<Trajectory> {
    let trial_seed = spec.seed.wrapping_add(trial as u64);
    let table = match (&spec.env_kind, &spec.table_path) {
        (EnvKind::Table, Some(path)) => Some(Environment::from_table(path, spec.noise_spec())?),
        _ => None,
    };
    run_trial_inner(spec, table.as_ref(), trial, trial_seed)
}

fn run_trial_inner(
    spec: &RunSpec,
    table: Option<&Environment>,
    trial: u32,
    trial_seed: u64,
) -> Result<Trajectory> {
    let env = trial_environment(spec, table, trial_seed)?;
    if spec.algo.is_quantum() && spec.backend == BackendKind::Statevector {
        env.validate_encodings(spec.gaussian_qubits)?;
    }
    let lambda = spec.lambda();
    match spec.algo {
        Algo::QGpUcb => {
            let backing = build_backing(spec, env.dim(), trial)?;
            let setup = QmcSetup {
                backend: spec.qmc_backend(),
                constants: spec.constants,
                m_bar: spec.m_bar()?,
            };
            bandit::run_q_gp_ucb(
                &env,
                backing,
                lambda,
                &spec.beta_schedule(),
                &setup,
                spec.gaussian_qubits,
                spec.horizon,
                spec.delta,
                trial_seed,
                &QgpOptions::default(),
            )
        }
        Algo::GpUcb => {
            let backing = build_backing(spec, env.dim(), trial)?;
            bandit::run_gp_ucb(&env, backing, lambda, &spec.xi_schedule(), spec.horizon, trial_seed)
        }
        Algo::QLinUcb => {
            let setup = QmcSetup {
                backend: spec.qmc_backend(),
                constants: spec.constants,
                m_bar: spec.m_bar()?,
            };
            bandit::run_q_linucb(
                &env,
                lambda,
                spec.l_bound,
                spec.s_bound,
                &setup,
                spec.gaussian_qubits,
                spec.horizon,
                spec.delta,
                trial_seed,
            )
        }
        Algo::LinUcb => bandit::run_linucb(
            &env,
            lambda,
            spec.l_bound,
            spec.s_bound,
            spec.horizon,
            spec.delta,
            trial_seed,
        ),
    }
}

fn parse_thread_cap(raw: Option<String>) -> Option<usize> {
    raw.and_then(|s| s.trim().parse::<usize>().ok()).filter(|&n| n >= 1)
}

/// Runs `spec.trials` trials and aggregates them. Individual trial failures
/// are recorded in the outcome list; the batch itself fails only when no
/// trial completes.
pub fn run_batch(spec: &RunSpec) -> Result<BatchResult> {
    // Table environments are shared, so a bad file fails fast here instead
    // of once per trial.
    let table = match (&spec.env_kind, &spec.table_path) {
        (EnvKind::Table, Some(path)) => {
            let env = Environment::from_table(path, spec.noise_spec())?;
            if spec.algo.is_quantum() && spec.backend == BackendKind::Statevector {
                env.validate_encodings(spec.gaussian_qubits)?;
            }
            Some(env)
        }
        _ => None,
    };

    let run_all = || -> Vec<TrialOutcome> {
        (0..spec.trials)
            .into_par_iter()
            .map(|trial| {
                let trial_seed = spec.seed.wrapping_add(trial as u64);
                let result = run_trial_inner(spec, table.as_ref(), trial, trial_seed)
                    .map_err(|e| e.to_string());
                TrialOutcome { seed: trial_seed, result }
            })
            .collect()
    };
    let trials = match parse_thread_cap(std::env::var("QBANDIT_THREADS").ok()) {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Runtime(e.to_string()))?
            .install(run_all),
        None => run_all(),
    };

    let ok: Vec<&Trajectory> = trials.iter().filter_map(|t| t.result.as_ref().ok()).collect();
    if ok.is_empty() {
        let first = trials
            .iter()
            .find_map(|t| t.result.as_ref().err())
            .cloned()
            .unwrap_or_else(|| "no trials were run".to_string());
        return Err(Error::Runtime(format!(
            "all {} trials failed; first error: {first}",
            trials.len()
        )));
    }

    let grid = query_grid(spec.horizon, MAX_GRID_POINTS);
    let curves: Vec<Vec<f64>> = ok.iter().map(|t| regret_at_grid(t, &grid)).collect();
    let n = curves.len() as f64;
    let mut mean = vec![0.0; grid.len()];
    let mut stderr = vec![0.0; grid.len()];
    for (i, m) in mean.iter_mut().enumerate() {
        *m = curves.iter().map(|c| c[i]).sum::<f64>() / n;
    }
    if curves.len() > 1 {
        for (i, s) in stderr.iter_mut().enumerate() {
            let var = curves.iter().map(|c| (c[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0);
            *s = (var / n).sqrt();
        }
    }

    Ok(BatchResult {
        n_trials_ok: ok.len() as u32,
        trials,
        grid,
        mean,
        stderr,
        horizon: spec.horizon,
    })
}

/// Writes the aggregated curve as CSV. An empty grid produces a header-only
/// file.
pub fn emit_csv<P: AsRef<Path>>(batch: &BatchResult, path: P) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "query_index,mean_cum_regret,stderr_cum_regret,n_trials")?;
    for i in 0..batch.grid.len() {
        writeln!(
            out,
            "{},{},{},{}",
            batch.grid[i], batch.mean[i], batch.stderr[i], batch.n_trials_ok
        )?;
    }
    out.flush()?;
    Ok(())
}

/// A regret curve read back from [`emit_csv`] output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretCurve {
    pub grid: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_trials: Vec<u64>,
}

pub fn read_regret_csv<P: AsRef<Path>>(path: P) -> Result<RegretCurve> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    let mut curve = RegretCurve::default();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Io(format!("row {}: {e}", row + 2)))?;
        if record.len() != 4 {
            return Err(Error::Io(format!(
                "row {}: expected 4 columns, found {}",
                row + 2,
                record.len()
            )));
        }
        let field = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|e| Error::Io(format!("row {}: column {}: {e}", row + 2, i + 1)))
        };
        curve.grid.push(field(0)? as u64);
        curve.mean.push(field(1)?);
        curve.stderr.push(field(2)?);
        curve.n_trials.push(field(3)? as u64);
    }
    Ok(curve)
}
