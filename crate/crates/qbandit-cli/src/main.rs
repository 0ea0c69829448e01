//! Benchmark runner for the qbandit library.
//!
//! Four verbs: `run` executes one configuration and writes its regret curve,
//! `compare` runs several algorithms on paired environments and overlays
//! them in one plot, `validate` exercises the library's structural
//! invariants and prints one PASS/FAIL line per check, and `qae-bench`
//! tables the statevector estimator's accuracy-versus-queries tradeoff.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error,
//! 3 validation failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qbandit::bandit::{
    run_gp_ucb, run_q_gp_ucb, BetaSchedule, QgpOptions, QmcSetup, Trajectory, XiSchedule,
};
use qbandit::config::{self, RawConfig};
use qbandit::env::Environment;
use qbandit::harness::{self, BatchResult};
use qbandit::kernel::{FeatureMap, KernelSpec};
use qbandit::plot::{self, SeriesSpec};
use qbandit::qae::RewardEncoding;
use qbandit::qmc::{self, NoiseSpec, QmcBackend, QmcConstants, RewardOracle};
use qbandit::wgp::{Backing, KernelEval, WgpState};
use qbandit::{mix_seed, Error, Result};

#[derive(Parser)]
#[command(
    name = "qbandit",
    version,
    about = "Kernelized-bandit benchmarks with quantum Monte-Carlo reward estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory artifacts are written into.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Shorthand for `--set run.seed=N`, applied after every --set.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Shorthand for `--set run.trials=N`, applied after every --set.
    #[arg(long, value_name = "N")]
    trials: Option<u32>,

    /// Dotted-key override, e.g. `--set algo.beta_mode=practical`.
    /// Repeatable; later overrides win.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configuration; emits <algo>.csv, <algo>.svg and metadata.json.
    Run(CommonArgs),
    /// Run several algorithms on paired environments; emits one CSV per
    /// algorithm plus a combined compare.svg.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated algorithm list.
        #[arg(long, default_value = "qgpucb,gpucb")]
        algos: String,
    },
    /// Check library invariants; prints one PASS/FAIL line per check.
    Validate(CommonArgs),
    /// Statevector amplitude-estimation benchmark: accuracy vs queries.
    QaeBench {
        #[command(flatten)]
        common: CommonArgs,
        /// Estimation calls per accuracy row.
        #[arg(long, default_value_t = 100)]
        calls: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Cmd::Run(common) => cmd_run(&common),
        Cmd::Compare { common, algos } => cmd_compare(&common, &algos),
        Cmd::Validate(common) => cmd_validate(&common),
        Cmd::QaeBench { common, calls } => cmd_qae_bench(&common, calls),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

/// Layers the configuration sources: file, then --set pairs in order, then
/// the --seed/--trials shorthands.
fn load_raw(common: &CommonArgs) -> Result<RawConfig> {
    let mut raw = match &common.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    for pair in &common.set {
        raw.apply_override(pair)?;
    }
    if let Some(seed) = common.seed {
        raw.apply_override(&format!("run.seed={seed}"))?;
    }
    if let Some(trials) = common.trials {
        raw.apply_override(&format!("run.trials={trials}"))?;
    }
    Ok(raw)
}

fn ensure_out_dir(common: &CommonArgs) -> Result<()> {
    fs::create_dir_all(&common.out)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", common.out.display())))
}

fn batch_series(label: &str, batch: &BatchResult) -> SeriesSpec {
    SeriesSpec {
        label: label.to_string(),
        grid: batch.grid.clone(),
        mean: batch.mean.clone(),
        stderr: batch.stderr.clone(),
    }
}

fn report_batch(name: &str, batch: &BatchResult) {
    for trial in &batch.trials {
        if let Err(msg) = &trial.result {
            eprintln!("warning: {name} trial (seed {}) failed: {msg}", trial.seed);
        }
    }
    println!(
        "{name}: {}/{} trials ok, mean cumulative regret at T={} is {:.4}",
        batch.n_trials_ok,
        batch.trials.len(),
        batch.horizon,
        batch.mean.last().copied().unwrap_or(0.0)
    );
}

fn write_metadata(common: &CommonArgs, value: &serde_json::Value) -> Result<()> {
    let path = common.out.join("metadata.json");
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io(format!("cannot serialize metadata: {e}")))?;
    fs::write(&path, text + "\n")
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(common: &CommonArgs) -> Result<ExitCode> {
    let spec = config::resolve(&load_raw(common)?)?;
    ensure_out_dir(common)?;
    let batch = harness::run_batch(&spec)?;
    let name = spec.algo.name();
    report_batch(name, &batch);
    harness::emit_csv(&batch, common.out.join(format!("{name}.csv")))?;
    plot::plot_regret(
        &[batch_series(name, &batch)],
        "cumulative regret",
        common.out.join(format!("{name}.svg")),
    )?;
    write_metadata(common, &spec.metadata()?)?;
    println!("artifacts written to {}", common.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(common: &CommonArgs, algos: &str) -> Result<ExitCode> {
    let names: Vec<&str> = algos
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(Error::Config("--algos lists no algorithms".into()));
    }
    let raw = load_raw(common)?;
    ensure_out_dir(common)?;
    let mut series = Vec::new();
    let mut metadata = serde_json::Map::new();
    for name in &names {
        let mut raw_one = raw.clone();
        raw_one.apply_override(&format!("algo={name}"))?;
        let spec = config::resolve(&raw_one)?;
        let batch = harness::run_batch(&spec)?;
        report_batch(name, &batch);
        harness::emit_csv(&batch, common.out.join(format!("{name}.csv")))?;
        series.push(batch_series(name, &batch));
        metadata.insert((*name).to_string(), spec.metadata()?);
    }
    plot::plot_regret(&series, "cumulative regret", common.out.join("compare.svg"))?;
    write_metadata(common, &serde_json::Value::Object(metadata))?;
    println!("artifacts written to {}", common.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_qae_bench(common: &CommonArgs, calls: u32) -> Result<ExitCode> {
    if calls == 0 {
        return Err(Error::Config("--calls must be at least 1".into()));
    }
    let spec = config::resolve(&load_raw(common)?)?;
    let backend = QmcBackend::Statevector {
        shots_per_round: spec.shots_per_round,
        max_rounds: spec.max_rounds,
        noise_rate: spec.noise_rate,
    };
    let p = 0.5;
    let oracle = RewardOracle {
        true_mean: p,
        noise: NoiseSpec::Bounded01,
        encoding: RewardEncoding::bernoulli(p)?,
    };
    println!(
        "statevector amplitude estimation on Bernoulli({p}): {calls} calls per row, \
         {} shots per round, depolarizing rate {}",
        spec.shots_per_round, spec.noise_rate
    );
    println!(
        "{:>10} {:>14} {:>14} {:>10} {:>8}",
        "epsilon", "mean_queries", "planned", "success", "const"
    );
    let mut fitted = 0.0_f64;
    for (row, &eps) in [0.04, 0.02, 0.01, 0.005].iter().enumerate() {
        let budget = qmc::budget(NoiseSpec::Bounded01, eps, 0.1, 1, spec.constants)?;
        let mut total_queries: u128 = 0;
        let mut hits = 0u32;
        for call in 0..calls {
            let seed = mix_seed(spec.seed, ((row as u64) << 32) ^ u64::from(call));
            match qmc::estimate(&backend, &oracle, &budget, seed) {
                Ok(r) => {
                    total_queries += u128::from(r.oracle_queries);
                    if (r.value - p).abs() <= eps {
                        hits += 1;
                    }
                }
                // A non-converged call still spent its budget; it counts
                // as a miss.
                Err(_) => total_queries += u128::from(budget.n_queries),
            }
        }
        let mean_queries = total_queries as f64 / f64::from(calls);
        let constant = eps * mean_queries / (1.0 / budget.delta_per_call).ln();
        fitted = fitted.max(constant);
        println!(
            "{:>10} {:>14.1} {:>14} {:>10} {:>8.2}",
            eps,
            mean_queries,
            budget.n_queries,
            format!("{hits}/{calls}"),
            constant
        );
    }
    println!("fitted leading constant: max over rows of eps * mean_queries / ln(1/delta) = {fitted:.2}");
    Ok(ExitCode::SUCCESS)
}

// --- validate ---------------------------------------------------------

const VALIDATE_ENV_TAG: u64 = 0x6c61_7664;

/// Deterministic point generator for the self-checks (splitmix64). Keeps
/// the binary free of RNG dependencies it does not otherwise need.
struct SplitMix(u64);

impl SplitMix {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * 2f64.powi(-53)
    }
}

fn fail(msg: String) -> Error {
    Error::Runtime(msg)
}

fn cmd_validate(common: &CommonArgs) -> Result<ExitCode> {
    // The checks below run fixed protocols, but the provided configuration
    // is still resolved so config mistakes surface as exit code 1.
    config::resolve(&load_raw(common)?)?;

    let mut results: Vec<(&'static str, Result<String>)> = Vec::new();
    match staged_validation_runs() {
        Ok((kernel_runs, feature_runs)) => {
            results.push(("det-doubling", check_det_doubling(&kernel_runs)));
            let mut all: Vec<&Trajectory> = kernel_runs.iter().collect();
            all.extend(feature_runs.iter());
            results.push(("weight-budget", check_weight_budget(&all)));
        }
        Err(e) => {
            results.push(("det-doubling", Err(e.clone())));
            results.push(("weight-budget", Err(e)));
        }
    }
    results.push(("info-gain-identity", check_info_gain_identity()));
    results.push(("form-equivalence", check_form_equivalence()));
    results.push(("qmc-statevector", check_qmc_statevector()));
    results.push(("degenerate-reduction", check_degenerate_reduction()));

    let total = results.len();
    let mut failed = 0;
    for (name, outcome) in results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(err) => {
                failed += 1;
                let detail = match err {
                    Error::Runtime(msg) => msg,
                    other => other.to_string(),
                };
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        println!("all {total} checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{failed} of {total} checks failed");
        Ok(ExitCode::from(3))
    }
}

fn validate_env(seed: u64, arms: usize, kernel: &KernelSpec) -> Result<Environment> {
    Environment::sampled_gp(
        kernel,
        1,
        arms,
        NoiseSpec::Bounded01,
        mix_seed(seed, VALIDATE_ENV_TAG),
    )
}

/// Short staged runs shared by the det-doubling and weight-budget checks:
/// three with an exact-kernel posterior (where doubling is exact) and two with
/// a feature posterior (where the accuracy clamp makes growth exceed 2).
fn staged_validation_runs() -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    let kernel = KernelSpec::se(0.1)?;
    let horizon = 3_000u64;
    let lambda = 1.0 + 2.0 / horizon as f64;
    let setup = QmcSetup {
        backend: QmcBackend::Idealized { exact: false },
        constants: QmcConstants::default(),
        m_bar: horizon,
    };
    let mut kernel_runs = Vec::new();
    let mut feature_runs = Vec::new();
    for seed in 0..3u64 {
        let env = validate_env(seed, 20, &kernel)?;
        kernel_runs.push(run_q_gp_ucb(
            &env,
            Backing::Kernel(KernelEval::Closed(kernel)),
            lambda,
            &BetaSchedule::Practical,
            &setup,
            6,
            horizon,
            0.05,
            seed,
            &QgpOptions::default(),
        )?);
        if seed < 2 {
            let map = FeatureMap::rff(&kernel, 60, 1, mix_seed(seed, 0x7266_66))?;
            feature_runs.push(run_q_gp_ucb(
                &env,
                Backing::Features(map),
                lambda,
                &BetaSchedule::Practical,
                &setup,
                6,
                horizon,
                0.05,
                seed,
                &QgpOptions::default(),
            )?);
        }
    }
    Ok((kernel_runs, feature_runs))
}

fn check_det_doubling(runs: &[Trajectory]) -> Result<String> {
    let mut max_dev = 0.0_f64;
    let mut stages = 0usize;
    for traj in runs {
        let mut prev = 0.0;
        for st in &traj.stages {
            let ratio = (st.log_det_gain - prev).exp();
            max_dev = max_dev.max((ratio - 2.0).abs());
            prev = st.log_det_gain;
            stages += 1;
        }
    }
    if stages == 0 {
        return Err(fail("staged runs produced no stages".into()));
    }
    if max_dev <= 1e-6 {
        Ok(format!(
            "{stages} stages over {} exact-kernel runs, max |det ratio - 2| = {max_dev:.1e}",
            runs.len()
        ))
    } else {
        Err(fail(format!(
            "max |det ratio - 2| = {max_dev:.3e} exceeds 1e-6"
        )))
    }
}

fn check_weight_budget(runs: &[&Trajectory]) -> Result<String> {
    for traj in runs {
        let bound = (traj.horizon as f64).powi(2);
        if traj.sum_inv_eps_sq > bound {
            return Err(fail(format!(
                "sum 1/eps^2 = {:.3e} exceeds T^2 = {bound:.3e}",
                traj.sum_inv_eps_sq
            )));
        }
    }
    Ok(format!("sum 1/eps^2 <= T^2 on all {} runs", runs.len()))
}

/// The determinant identity behind the stage count analysis: the Gram-form
/// information gain and the feature-form volume growth agree when both
/// posteriors are built over the same induced kernel.
fn check_info_gain_identity() -> Result<String> {
    let kernel = KernelSpec::se(0.2)?;
    let mut gen = SplitMix(0x3067);
    let mut max_diff = 0.0_f64;
    let cases = 20;
    for case in 0..cases {
        let map = FeatureMap::rff(&kernel, 30, 1, 1000 + case)?;
        let mut gram = WgpState::new(Backing::Kernel(KernelEval::FeatureDot(map.clone())), 1.05)?;
        let mut feat = WgpState::new(Backing::Features(map), 1.05)?;
        let len = 1 + (gen.next_u64() % 40) as usize;
        for _ in 0..len {
            let x = vec![gen.unit()];
            let y = gen.unit();
            let eps = 0.02 + 0.98 * gen.unit();
            gram.update(&x, y, eps)?;
            feat.update(&x, y, eps)?;
        }
        let diff = (feat.log_det_gain() - 2.0 * gram.weighted_info_gain()).abs();
        max_diff = max_diff.max(diff);
    }
    if max_diff <= 1e-8 {
        Ok(format!(
            "max |log det(V_m/V_0) - 2 gamma| = {max_diff:.1e} over {cases} weight sequences"
        ))
    } else {
        Err(fail(format!(
            "identity violated by {max_diff:.3e} (tolerance 1e-8)"
        )))
    }
}

/// Kernel-matrix and feature-space posteriors must agree wherever they
/// describe the same model: linear kernel vs identity features, and a
/// squared-exponential approximated by one shared random-feature map.
fn check_form_equivalence() -> Result<String> {
    let mut gen = SplitMix(0x6571);
    let mut max_linear = 0.0_f64;
    for _ in 0..10 {
        let dim = 2 + (gen.next_u64() % 3) as usize;
        let mut gram = WgpState::new(Backing::Kernel(KernelEval::Closed(KernelSpec::linear())), 1.2)?;
        let mut feat = WgpState::new(Backing::Features(FeatureMap::identity(dim, 1.0)?), 1.2)?;
        max_linear = max_linear.max(posterior_gap(&mut gen, &mut gram, &mut feat, dim, 12)?);
    }
    let kernel = KernelSpec::se(0.15)?;
    let mut max_rff = 0.0_f64;
    for case in 0..5 {
        let map = FeatureMap::rff(&kernel, 40, 1, 2000 + case)?;
        let mut gram = WgpState::new(Backing::Kernel(KernelEval::FeatureDot(map.clone())), 1.2)?;
        let mut feat = WgpState::new(Backing::Features(map), 1.2)?;
        max_rff = max_rff.max(posterior_gap(&mut gen, &mut gram, &mut feat, 1, 12)?);
    }
    let worst = max_linear.max(max_rff);
    if worst <= 1e-8 {
        Ok(format!(
            "max posterior difference {worst:.1e} (exact features {max_linear:.1e}, shared map {max_rff:.1e})"
        ))
    } else {
        Err(fail(format!(
            "posterior forms disagree by {worst:.3e} (tolerance 1e-8)"
        )))
    }
}

/// Feeds both states the same weighted observations and returns the largest
/// mean/variance gap over random probe points.
fn posterior_gap(
    gen: &mut SplitMix,
    gram: &mut WgpState,
    feat: &mut WgpState,
    dim: usize,
    updates: usize,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for _ in 0..updates {
        let x: Vec<f64> = (0..dim).map(|_| 2.0 * gen.unit() - 1.0).collect();
        let y = 2.0 * gen.unit() - 1.0;
        let eps = 0.05 + 0.95 * gen.unit();
        gram.update(&x, y, eps)?;
        feat.update(&x, y, eps)?;
    }
    for _ in 0..8 {
        let p: Vec<f64> = (0..dim).map(|_| 2.0 * gen.unit() - 1.0).collect();
        let a = gram.posterior(&p)?;
        let b = feat.posterior(&p)?;
        worst = worst
            .max((a.mean - b.mean).abs())
            .max((a.variance - b.variance).abs());
    }
    Ok(worst)
}

fn check_qmc_statevector() -> Result<String> {
    let p = 0.3;
    let eps = 0.02;
    let oracle = RewardOracle {
        true_mean: p,
        noise: NoiseSpec::Bounded01,
        encoding: RewardEncoding::bernoulli(p)?,
    };
    // delta = 0.1 over 2 * m_bar = 2 calls prices each call at failure 0.05.
    let budget = qmc::budget(NoiseSpec::Bounded01, eps, 0.1, 1, QmcConstants::default())?;
    let backend = QmcBackend::Statevector {
        shots_per_round: 100,
        max_rounds: 48,
        noise_rate: 0.0,
    };
    let calls = 60u64;
    let allowed = 8u64;
    let mut misses = 0u64;
    for i in 0..calls {
        match qmc::estimate(&backend, &oracle, &budget, mix_seed(i, 0x716d_63)) {
            Ok(r) if (r.value - p).abs() <= eps => {}
            _ => misses += 1,
        }
    }
    if misses <= allowed {
        Ok(format!(
            "{misses}/{calls} calls missed accuracy {eps} (allowed {allowed} at per-call failure 0.05)"
        ))
    } else {
        Err(fail(format!(
            "{misses}/{calls} calls missed accuracy {eps} (allowed {allowed})"
        )))
    }
}

fn check_degenerate_reduction() -> Result<String> {
    let kernel = KernelSpec::se(0.2)?;
    let horizon = 400u64;
    let lambda = 1.0 + 2.0 / horizon as f64;
    let setup = QmcSetup {
        backend: QmcBackend::Idealized { exact: false },
        constants: QmcConstants::default(),
        m_bar: horizon,
    };
    let seeds = 2u64;
    for seed in 0..seeds {
        let env = validate_env(100 + seed, 15, &kernel)?;
        let unit = run_q_gp_ucb(
            &env,
            Backing::Kernel(KernelEval::Closed(kernel)),
            lambda,
            &BetaSchedule::Practical,
            &setup,
            6,
            horizon,
            0.05,
            seed,
            &QgpOptions {
                force_unit_stages: true,
            },
        )?;
        let classical = run_gp_ucb(
            &env,
            Backing::Kernel(KernelEval::Closed(kernel)),
            lambda,
            &XiSchedule::PracticalLog,
            horizon,
            seed,
        )?;
        let unit_arms: Vec<usize> = unit.stages.iter().map(|s| s.arm).collect();
        let classical_arms: Vec<usize> = classical.stages.iter().map(|s| s.arm).collect();
        if unit_arms != classical_arms {
            let at = unit_arms
                .iter()
                .zip(&classical_arms)
                .position(|(a, b)| a != b);
            return Err(fail(format!(
                "arm sequences diverge on seed {seed} (first difference at round {at:?}, lengths {} vs {})",
                unit_arms.len(),
                classical_arms.len()
            )));
        }
    }
    Ok(format!(
        "unit-stage runs reproduce the classical arm sequence over T={horizon} on {seeds} seeds"
    ))
}
