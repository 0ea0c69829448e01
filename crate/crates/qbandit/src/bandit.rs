//! The four sequential-decision algorithms.
//!
//! Two staged quantum algorithms share one loop: select the UCB-maximizing
//! arm, set the stage accuracy `eps_s = sigma_tilde(x_s) / sqrt(lambda)`,
//! price the estimation call, stop if the remaining query budget cannot
//! afford it, run the call, and fold the estimate into the posterior with
//! weight `1 / eps_s^2`. Q-GP-UCB scores arms with a GP posterior and a
//! beta schedule; Q-LinUCB is the same loop on identity features with a
//! self-normalized confidence-ellipsoid width. The classical baselines
//! (GP-UCB, LinUCB) take one noisy sample per round at weight 1.
//!
//! Regret is denominated in oracle queries: each of a stage's `N_eps`
//! queries incurs that stage's instantaneous regret, so quantum and
//! classical runs share an x-axis.

use crate::env::Environment;
use crate::kernel::FeatureMap;
use crate::qmc::{self, QmcBackend, QmcConstants};
use crate::wgp::{Backing, PosteriorStats, WgpState};
use crate::{invalid, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Confidence-width schedule for Q-GP-UCB's stage-indexed UCB.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum BetaSchedule {
    /// `B + sqrt(2 (gamma_tilde_{s-1} + 1 + ln(2 / delta)))` where
    /// `gamma_tilde` is the weighted information gain accumulated so far.
    Theoretical { b_bound: f64, delta: f64 },
    /// `1 + ln s`, the schedule used for the benchmark figures.
    Practical,
}

impl BetaSchedule {
    pub fn value(&self, stage: u64, info_gain: f64) -> f64 {
        match self {
            BetaSchedule::Theoretical { b_bound, delta } => {
                b_bound + (2.0 * (info_gain + 1.0 + (2.0 / delta).ln())).sqrt()
            }
            BetaSchedule::Practical => 1.0 + (stage as f64).ln(),
        }
    }
}

/// Confidence-width schedule for classical GP-UCB.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum XiSchedule {
    /// `1 + ln t`.
    PracticalLog,
    /// Constant `sqrt(2)`.
    Sqrt2,
    /// Constant `1`.
    One,
}

impl XiSchedule {
    pub fn value(&self, round: u64) -> f64 {
        match self {
            XiSchedule::PracticalLog => 1.0 + (round as f64).ln(),
            XiSchedule::Sqrt2 => std::f64::consts::SQRT_2,
            XiSchedule::One => 1.0,
        }
    }
}

/// One stage of a staged run, or one round of a classical run (which is a
/// stage with `epsilon = 1` and a single query).
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    /// 1-based stage index.
    pub stage: u64,
    pub arm: usize,
    /// Accuracy the stage's estimate was priced at.
    pub epsilon: f64,
    /// Oracle queries charged for the stage.
    pub n_queries: u64,
    /// Mean estimate the posterior was updated with.
    pub estimate: f64,
    /// Total queries charged through this stage.
    pub cumulative_queries: u64,
    /// Instantaneous regret of the chosen arm.
    pub regret: f64,
    /// Multiplier applied to the posterior sd during this stage's selection.
    pub beta: f64,
    /// `log det(V_s / V_0)` after the stage's update.
    pub log_det_gain: f64,
}

/// A completed run.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub stages: Vec<StageRecord>,
    /// Query budget the run was given.
    pub horizon: u64,
    /// Queries actually charged (at most `horizon`).
    pub total_queries: u64,
    /// Running total of the update weights `1 / eps_s^2`.
    pub sum_inv_eps_sq: f64,
    /// The environment's best mean reward, for regret bookkeeping.
    pub optimum: f64,
}

impl Trajectory {
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Total regret over the whole run: `sum_s N_s r_s`. Queries between
    /// `total_queries` and `horizon` were never made and contribute zero.
    pub fn final_cumulative_regret(&self) -> f64 {
        self.stages.iter().map(|s| s.n_queries as f64 * s.regret).sum()
    }

    /// Regret accrued by queries in the half-open window `(from, to]`.
    pub fn regret_in_window(&self, from: u64, to: u64) -> f64 {
        let mut total = 0.0;
        let mut prev = 0u64;
        for s in &self.stages {
            let lo = prev.max(from);
            let hi = s.cumulative_queries.min(to);
            if hi > lo {
                total += (hi - lo) as f64 * s.regret;
            }
            prev = s.cumulative_queries;
            if prev >= to {
                break;
            }
        }
        total
    }

    /// Cumulative regret after the first `queries` oracle queries.
    pub fn cumulative_regret_at(&self, queries: u64) -> f64 {
        self.regret_in_window(0, queries)
    }
}

/// Compensated accumulator for the `sum 1/eps^2` bookkeeping, which spans
/// many orders of magnitude over a long run.
#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

/// Index of the arm maximizing `mean + beta * sd`, ties broken toward the
/// lowest index.
pub fn select_arm(stats: &[PosteriorStats], beta: f64) -> Result<usize> {
    if stats.is_empty() {
        return Err(invalid("domain", "cannot select an arm from an empty domain"));
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in stats.iter().enumerate() {
        let score = s.mean + beta * s.sd();
        if !score.is_finite() {
            return Err(invalid("ucb", format!("non-finite score {score} at arm {i}")));
        }
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Ok(best)
}

/// UCB selection against a posterior state over a finite domain.
pub fn select_arm_qgpucb(state: &WgpState, domain: &[Vec<f64>], beta: f64) -> Result<usize> {
    select_arm(&state.posterior_all(domain)?, beta)
}

/// Confidence-ellipsoid radius for the weighted linear bandit:
/// `sqrt(2 d ln((1 + (L^2 / lambda) sum_k 1/eps_k^2) / delta)) +
/// sqrt(lambda) S`.
pub fn qlinucb_confidence_width(
    dim: usize,
    feature_bound: f64,
    lambda: f64,
    sum_inv_eps_sq: f64,
    delta: f64,
    theta_bound: f64,
) -> f64 {
    let inner = (1.0 + feature_bound * feature_bound / lambda * sum_inv_eps_sq) / delta;
    (2.0 * dim as f64 * inner.ln()).sqrt() + lambda.sqrt() * theta_bound
}

/// Classical self-normalized radius after `t` unit-weight observations:
/// `sqrt(lambda) S + sqrt(2 ln(1/delta) + d ln(1 + t L^2 / (lambda d)))`.
pub fn linucb_confidence_width(
    dim: usize,
    feature_bound: f64,
    lambda: f64,
    t: f64,
    delta: f64,
    theta_bound: f64,
) -> f64 {
    let d = dim as f64;
    lambda.sqrt() * theta_bound
        + (2.0 * (1.0 / delta).ln() + d * (1.0 + t * feature_bound * feature_bound / (lambda * d)).ln())
            .sqrt()
}

/// Largest arm norm in the domain, the `L` bound the linear widths need.
pub fn derive_feature_bound(env: &Environment) -> f64 {
    let max = env
        .domain
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    if max > 1e-12 {
        max
    } else {
        1.0
    }
}

/// Estimation-call pricing shared by the staged runners.
#[derive(Debug, Clone)]
pub struct QmcSetup {
    pub backend: QmcBackend,
    pub constants: QmcConstants,
    /// Bound on the number of estimation calls sharing the failure budget.
    pub m_bar: u64,
}

/// Switches for the staged loop.
#[derive(Debug, Clone, Copy, Default)]
pub struct QgpOptions {
    /// Degenerate-reduction mode: every stage uses `epsilon = 1`, charges
    /// exactly one query, and draws a single classical sample from the
    /// run's main RNG stream, reproducing classical GP-UCB decisions on an
    /// identical stream.
    pub force_unit_stages: bool,
}

enum StagePolicy<'a> {
    Gp(&'a BetaSchedule),
    Linear { feature_bound: f64, theta_bound: f64 },
}

fn run_staged(
    env: &Environment,
    backing: Backing,
    lambda: f64,
    policy: StagePolicy<'_>,
    setup: &QmcSetup,
    gaussian_qubits: u32,
    horizon: u64,
    delta: f64,
    seed: u64,
    options: &QgpOptions,
) -> Result<Trajectory> {
    let mut state = WgpState::new(backing, lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut cumulative: u64 = 0;
    let mut sum_w = Kahan::default();
    let mut stage: u64 = 1;

    loop {
        let beta = match &policy {
            StagePolicy::Gp(schedule) => schedule.value(stage, state.weighted_info_gain()),
            StagePolicy::Linear { feature_bound, theta_bound } => {
                qlinucb_confidence_width(
                    env.dim(),
                    *feature_bound,
                    lambda,
                    sum_w.value(),
                    delta,
                    *theta_bound,
                ) / lambda.sqrt()
            }
        };
        let stats = state.posterior_all(&env.domain)?;
        let arm = select_arm(&stats, beta)?;
        let x = &env.domain[arm];

        let (epsilon, estimate, charged) = if options.force_unit_stages {
            if cumulative + 1 > horizon {
                break;
            }
            (1.0, env.classical_sample(arm, &mut rng), 1)
        } else {
            let epsilon = state.epsilon_for(x)?;
            let budget = qmc::budget(env.noise, epsilon, delta, setup.m_bar, setup.constants)?;
            let planned = qmc::planned_queries(&setup.backend, &budget);
            if cumulative.saturating_add(planned) > horizon {
                break; // the stage is unaffordable; terminate before querying
            }
            let call_seed = rng.next_u64();
            let oracle = env.reward_oracle(arm, gaussian_qubits)?;
            let result = qmc::estimate(&setup.backend, &oracle, &budget, call_seed)?;
            (epsilon, result.value, result.oracle_queries)
        };

        state.update(x, estimate, epsilon)?;
        cumulative += charged;
        sum_w.add(1.0 / (epsilon * epsilon));
        stages.push(StageRecord {
            stage,
            arm,
            epsilon,
            n_queries: charged,
            estimate,
            cumulative_queries: cumulative,
            regret: env.regret(arm),
            beta,
            log_det_gain: state.log_det_gain(),
        });
        stage += 1;
    }

    Ok(Trajectory {
        stages,
        horizon,
        total_queries: cumulative,
        sum_inv_eps_sq: sum_w.value(),
        optimum: env.optimum(),
    })
}

/// Runs Q-GP-UCB: staged arm selection with adaptive-accuracy estimation
/// calls and a weighted GP posterior.
#[allow(clippy::too_many_arguments)]
pub fn run_q_gp_ucb(
    env: &Environment,
    backing: Backing,
    lambda: f64,
    beta: &BetaSchedule,
    setup: &QmcSetup,
    gaussian_qubits: u32,
    horizon: u64,
    delta: f64,
    seed: u64,
    options: &QgpOptions,
) -> Result<Trajectory> {
    run_staged(
        env,
        backing,
        lambda,
        StagePolicy::Gp(beta),
        setup,
        gaussian_qubits,
        horizon,
        delta,
        seed,
        options,
    )
}

/// Runs Q-LinUCB: the same staged loop on identity features with the
/// weighted ellipsoid width. `feature_bound` defaults to the largest arm
/// norm in the domain.
#[allow(clippy::too_many_arguments)]
pub fn run_q_linucb(
    env: &Environment,
    lambda: f64,
    feature_bound: Option<f64>,
    theta_bound: f64,
    setup: &QmcSetup,
    gaussian_qubits: u32,
    horizon: u64,
    delta: f64,
    seed: u64,
) -> Result<Trajectory> {
    let map = FeatureMap::identity(env.dim(), 1.0)?;
    let l = feature_bound.unwrap_or_else(|| derive_feature_bound(env));
    run_staged(
        env,
        Backing::Features(map),
        lambda,
        StagePolicy::Linear { feature_bound: l, theta_bound },
        setup,
        gaussian_qubits,
        horizon,
        delta,
        seed,
        &QgpOptions::default(),
    )
}

enum RoundPolicy<'a> {
    Gp(&'a XiSchedule),
    Linear { feature_bound: f64, theta_bound: f64, delta: f64 },
}

fn run_rounds(
    env: &Environment,
    backing: Backing,
    lambda: f64,
    policy: RoundPolicy<'_>,
    horizon: u64,
    seed: u64,
) -> Result<Trajectory> {
    let mut state = WgpState::new(backing, lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stages = Vec::with_capacity(horizon.min(1 << 20) as usize);
    let mut sum_w = Kahan::default();
    for round in 1..=horizon {
        let beta = match &policy {
            RoundPolicy::Gp(xi) => xi.value(round),
            RoundPolicy::Linear { feature_bound, theta_bound, delta } => {
                linucb_confidence_width(
                    env.dim(),
                    *feature_bound,
                    lambda,
                    (round - 1) as f64,
                    *delta,
                    *theta_bound,
                ) / lambda.sqrt()
            }
        };
        let stats = state.posterior_all(&env.domain)?;
        let arm = select_arm(&stats, beta)?;
        let y = env.classical_sample(arm, &mut rng);
        state.update(&env.domain[arm], y, 1.0)?;
        sum_w.add(1.0);
        stages.push(StageRecord {
            stage: round,
            arm,
            epsilon: 1.0,
            n_queries: 1,
            estimate: y,
            cumulative_queries: round,
            regret: env.regret(arm),
            beta,
            log_det_gain: state.log_det_gain(),
        });
    }
    Ok(Trajectory {
        stages,
        horizon,
        total_queries: horizon,
        sum_inv_eps_sq: sum_w.value(),
        optimum: env.optimum(),
    })
}

/// Runs classical GP-UCB: one noisy sample per round, unit weights.
pub fn run_gp_ucb(
    env: &Environment,
    backing: Backing,
    lambda: f64,
    xi: &XiSchedule,
    horizon: u64,
    seed: u64,
) -> Result<Trajectory> {
    run_rounds(env, backing, lambda, RoundPolicy::Gp(xi), horizon, seed)
}

/// Runs classical LinUCB with the standard self-normalized width.
pub fn run_linucb(
    env: &Environment,
    lambda: f64,
    feature_bound: Option<f64>,
    theta_bound: f64,
    horizon: u64,
    delta: f64,
    seed: u64,
) -> Result<Trajectory> {
    let map = FeatureMap::identity(env.dim(), 1.0)?;
    let l = feature_bound.unwrap_or_else(|| derive_feature_bound(env));
    run_rounds(
        env,
        Backing::Features(map),
        lambda,
        RoundPolicy::Linear { feature_bound: l, theta_bound, delta },
        horizon,
        seed,
    )
}
