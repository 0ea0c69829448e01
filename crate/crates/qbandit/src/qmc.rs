//! Quantum Monte Carlo mean estimation: query budgets and backends.
//!
//! `budget` prices an estimation call that must return a mean within
//! `epsilon` with per-call failure probability `delta / (2 m_bar)`, where
//! `m_bar` bounds the number of calls sharing the overall budget `delta`.
//! Three interchangeable backends execute a call: an idealized sampler that
//! draws the promised error distribution directly, a statevector-simulated
//! amplitude estimation run, and a classical Monte Carlo averager priced at
//! its own (quadratically worse) rate.

use crate::qae::{self, IqaeConfig, RewardEncoding};
use crate::{invalid, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Noise model of a reward oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Rewards lie in `[0, 1]` (Bernoulli observations here).
    Bounded01,
    /// Rewards are `mean + N(0, sigma^2)`. The quantum budget for this
    /// model additionally requires `sigma > 1/4` and `epsilon < 4 sigma`.
    BoundedVariance { sigma: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if let NoiseSpec::BoundedVariance { sigma } = self {
            if !sigma.is_finite() || *sigma < 0.0 {
                return Err(invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
            }
        }
        Ok(())
    }

    /// Draws one classical reward observation with the given mean.
    pub fn sample<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        match self {
            NoiseSpec::Bounded01 => {
                if rng.random_bool(mean.clamp(0.0, 1.0)) {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseSpec::BoundedVariance { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sigma * z
            }
        }
    }
}

/// Leading constants of the two quantum budget laws.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QmcConstants {
    pub c1: f64,
    pub c2: f64,
}

impl Default for QmcConstants {
    fn default() -> Self {
        QmcConstants { c1: 2.0, c2: 2.0 }
    }
}

/// Priced estimation call: `n_queries` oracle applications buy accuracy
/// `epsilon` except with probability `delta_per_call`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QmcBudget {
    pub epsilon: f64,
    pub delta_per_call: f64,
    pub n_queries: u64,
    /// Leading constant actually used (`c1` or `c2` by noise model).
    pub constant: f64,
}

/// Quantum query budget for one estimation call.
///
/// Bounded rewards: `n = ceil((c1 / eps) ln(2 m_bar / delta))`. Bounded
/// variance: `n = ceil((c2 sigma / eps) log2(8 sigma / eps)^(3/2)
/// log2(log2(8 sigma / eps)) ln(2 m_bar / delta))`, valid only when
/// `sigma > 1/4` and `eps < 4 sigma`. Both are clamped to at least one
/// query.
pub fn budget(
    noise: NoiseSpec,
    epsilon: f64,
    delta: f64,
    m_bar: u64,
    constants: QmcConstants,
) -> Result<QmcBudget> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1], got {epsilon}")));
    }
    let delta_cap = 2.0 / std::f64::consts::E;
    if !(delta > 0.0 && delta <= delta_cap) {
        return Err(invalid("delta", format!("must lie in (0, 2/e], got {delta}")));
    }
    if m_bar == 0 {
        return Err(invalid("m_bar", "must be at least 1"));
    }
    if !(constants.c1 >= 1.0 && constants.c2 >= 1.0) {
        return Err(invalid("constants", "budget constants must be at least 1"));
    }
    let delta_per_call = delta / (2.0 * m_bar as f64);
    let log_term = (1.0 / delta_per_call).ln();
    let (raw, constant) = match noise {
        NoiseSpec::Bounded01 => (constants.c1 / epsilon * log_term, constants.c1),
        NoiseSpec::BoundedVariance { sigma } => {
            if sigma <= 0.25 {
                return Err(invalid(
                    "sigma",
                    format!("bounded-variance budget needs sigma > 1/4, got {sigma}"),
                ));
            }
            if epsilon >= 4.0 * sigma {
                return Err(invalid(
                    "epsilon",
                    format!("bounded-variance budget needs epsilon < 4 sigma, got {epsilon}"),
                ));
            }
            let arg = (8.0 * sigma / epsilon).log2();
            let raw =
                constants.c2 * sigma / epsilon * arg.powf(1.5) * arg.log2() * log_term;
            (raw, constants.c2)
        }
    };
    Ok(QmcBudget {
        epsilon,
        delta_per_call,
        n_queries: (raw.ceil() as u64).max(1),
        constant,
    })
}

/// Classical Monte Carlo sample count achieving the same `(epsilon,
/// delta_per_call)` contract via Hoeffding: `ceil((1 / eps^2) ln(1 /
/// delta_per_call))`.
pub fn classical_queries(budget: &QmcBudget) -> u64 {
    let raw = (1.0 / budget.delta_per_call).ln() / (budget.epsilon * budget.epsilon);
    (raw.ceil() as u64).max(1)
}

/// A mean-estimation problem: the true mean, its noise model, and the
/// quantum encoding a simulated backend should run against.
#[derive(Debug, Clone)]
pub struct RewardOracle {
    pub true_mean: f64,
    pub noise: NoiseSpec,
    pub encoding: RewardEncoding,
}

/// Execution strategy for one estimation call.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QmcBackend {
    /// Draws the promised error distribution directly: within `epsilon`
    /// with probability `1 - delta_per_call`, within `3 epsilon` otherwise.
    /// With `exact` set it returns the true mean (a diagnostics mode).
    Idealized { exact: bool },
    /// Runs iterative amplitude estimation on the statevector simulator.
    Statevector { shots_per_round: u64, max_rounds: u32, noise_rate: f64 },
    /// Averages classically priced samples.
    ClassicalMc,
}

/// Result of one estimation call.
#[derive(Debug, Clone, Copy)]
pub struct QmcResult {
    pub value: f64,
    pub oracle_queries: u64,
}

/// Queries a call will consume, for budget-guard decisions made before the
/// call runs. Idealized and statevector backends are charged the priced
/// budget; the classical backend is charged its own sample count.
pub fn planned_queries(backend: &QmcBackend, budget: &QmcBudget) -> u64 {
    match backend {
        QmcBackend::Idealized { .. } | QmcBackend::Statevector { .. } => budget.n_queries,
        QmcBackend::ClassicalMc => classical_queries(budget),
    }
}

/// Runs one estimation call.
pub fn estimate(
    backend: &QmcBackend,
    oracle: &RewardOracle,
    budget: &QmcBudget,
    seed: u64,
) -> Result<QmcResult> {
    match backend {
        QmcBackend::Idealized { exact } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let value = if *exact {
                oracle.true_mean
            } else {
                let success = rng.random_bool(1.0 - budget.delta_per_call);
                let reach = if success { budget.epsilon } else { 3.0 * budget.epsilon };
                oracle.true_mean + rng.random_range(-reach..=reach)
            };
            Ok(QmcResult { value, oracle_queries: budget.n_queries })
        }
        QmcBackend::Statevector { shots_per_round, max_rounds, noise_rate } => {
            // The encoding rescales rewards to [0, 1]; ask for the rescaled
            // accuracy and map the estimate back.
            let scale = oracle.encoding.scale();
            let config = IqaeConfig {
                epsilon: (budget.epsilon / scale).min(0.4999),
                delta: budget.delta_per_call,
                shots_per_round: *shots_per_round,
                max_rounds: *max_rounds,
                noise_rate: *noise_rate,
            };
            let out = qae::iqae_estimate(&oracle.encoding, &config, seed)?;
            Ok(QmcResult {
                value: oracle.encoding.decode(out.estimate),
                oracle_queries: out.oracle_queries,
            })
        }
        QmcBackend::ClassicalMc => {
            let n = classical_queries(budget);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sum: f64 = (0..n).map(|_| oracle.noise.sample(oracle.true_mean, &mut rng)).sum();
            Ok(QmcResult { value: sum / n as f64, oracle_queries: n })
        }
    }
}
