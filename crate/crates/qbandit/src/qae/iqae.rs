//! Iterative amplitude estimation on the statevector simulator.
//!
//! Each round measures the ancilla after `k` Grover iterations, so shots are
//! Bernoulli with probability `sin^2((2k+1) theta)` where `a = sin^2 theta`
//! is the quantity being estimated. The schedule keeps a confidence interval
//! `[theta_l, theta_u]` and greedily picks the largest `k` for which the
//! scaled interval `(4k+2) [theta_l, theta_u]` stays inside a single
//! half-plane `[j pi, (j+1) pi]`, so the measurement probability remains
//! invertible. Counts are pooled while `k` is unchanged and the pooled
//! Clopper-Pearson interval at level `delta / max_rounds` is intersected
//! into the angle interval; a union bound over rounds gives the overall
//! failure probability `delta`.

use super::{grover_step, prepare, RewardEncoding, Statevector};
use crate::{invalid, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use statrs::distribution::{Beta, ContinuousCDF};
use std::f64::consts::PI;

/// Largest Grover power the schedule will request. Far beyond what the
/// precision range used here needs, but bounds per-round work.
const MAX_GROVER_POWER: u64 = 1 << 20;
/// How many candidate powers the half-plane scan inspects per round.
const SCAN_CANDIDATES: u64 = 64;

#[derive(Debug, Clone, Copy)]
pub struct IqaeConfig {
    /// Target half-width of the final amplitude interval, in `(0, 0.5)`.
    pub epsilon: f64,
    /// Overall failure probability, split evenly across rounds.
    pub delta: f64,
    /// Measurement shots collected per round.
    pub shots_per_round: u64,
    /// Round limit; exceeding it is reported as an estimation failure.
    pub max_rounds: u32,
    /// Per-oracle-application depolarizing rate, `0` for a noiseless run.
    pub noise_rate: f64,
}

impl IqaeConfig {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        IqaeConfig {
            epsilon,
            delta,
            shots_per_round: 100,
            max_rounds: 48,
            noise_rate: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(invalid("epsilon", format!("must lie in (0, 0.5), got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if self.shots_per_round == 0 {
            return Err(invalid("shots_per_round", "must be at least 1"));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) || !self.noise_rate.is_finite() {
            return Err(invalid("noise_rate", format!("must lie in [0, 1], got {}", self.noise_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IqaeOutcome {
    /// Midpoint of the final amplitude interval.
    pub estimate: f64,
    /// Oracle applications consumed: `(2k+1) * shots` summed over rounds.
    pub oracle_queries: u64,
    /// Final amplitude confidence interval.
    pub interval: (f64, f64),
    pub rounds: u32,
}

/// Exact Clopper-Pearson binomial interval at two-sided level `alpha`.
pub(crate) fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> (f64, f64) {
    let (c, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(c, n - c + 1.0).expect("valid Beta shape").inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(c + 1.0, n - c).expect("valid Beta shape").inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo.clamp(0.0, 1.0), hi.clamp(lo.clamp(0.0, 1.0), 1.0))
}

/// Largest power `k > current` (up to caps) whose scaled angle interval
/// stays in one half-plane, or `current` if no candidate qualifies.
fn find_next_k(current: u64, theta_l: f64, theta_u: f64) -> u64 {
    let width = theta_u - theta_l;
    if width <= f64::EPSILON {
        return current;
    }
    let k_from_width = ((PI / width - 2.0) / 4.0).floor();
    if !k_from_width.is_finite() || k_from_width <= current as f64 {
        return current;
    }
    let k_max = (k_from_width as u64).min(MAX_GROVER_POWER);
    let k_stop = k_max.saturating_sub(SCAN_CANDIDATES).max(current);
    let mut k = k_max;
    while k > k_stop {
        let scale = (4 * k + 2) as f64;
        if (scale * theta_l / PI).floor() == (scale * theta_u / PI).floor() {
            return k;
        }
        k -= 1;
    }
    current
}

/// Runs iterative amplitude estimation against `encoding`.
///
/// On success the returned interval has half-width at most
/// `config.epsilon` and covers the true amplitude with probability at least
/// `1 - config.delta` (noiseless case). Hitting `max_rounds` first yields
/// `Error::EstimationFailure` carrying the interval reached.
pub fn iqae_estimate(
    encoding: &RewardEncoding,
    config: &IqaeConfig,
    seed: u64,
) -> Result<IqaeOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = config.delta / config.max_rounds as f64;

    let base = prepare(encoding);
    let mut state: Statevector = base.clone();
    let mut k: u64 = 0;
    let mut theta_l = 0.0_f64;
    let mut theta_u = PI / 2.0;
    let mut pooled_shots: u64 = 0;
    let mut pooled_ones: u64 = 0;
    let mut queries: u64 = 0;

    for round in 1..=config.max_rounds {
        let next_k = find_next_k(k, theta_l, theta_u);
        if next_k != k {
            state = grover_step(&state, encoding, (next_k - k) as u32)?;
            k = next_k;
            pooled_shots = 0;
            pooled_ones = 0;
        }

        let applications = 2 * k + 1;
        let p_ideal = state.marked_probability().clamp(0.0, 1.0);
        // Depolarizing mixture: each oracle application survives with
        // probability 1 - rate; a depolarized shot is a fair coin.
        let survive = (1.0 - config.noise_rate).powi(applications as i32);
        let p_shot = (survive * p_ideal + (1.0 - survive) * 0.5).clamp(0.0, 1.0);
        let ones = rand_distr::Binomial::new(config.shots_per_round, p_shot)
            .expect("probability already clamped")
            .sample(&mut rng);
        pooled_shots += config.shots_per_round;
        pooled_ones += ones;
        queries += applications * config.shots_per_round;

        let (p_lo, p_hi) = clopper_pearson(pooled_ones, pooled_shots, alpha);
        let scale = (4 * k + 2) as f64;
        let half_plane = (scale * 0.5 * (theta_l + theta_u) / PI).floor();
        // Invert p = (1 - cos(scale * theta)) / 2 on the current half-plane.
        let (omega_lo, omega_hi) = if half_plane as i64 % 2 == 0 {
            (
                half_plane * PI + (1.0 - 2.0 * p_lo).clamp(-1.0, 1.0).acos(),
                half_plane * PI + (1.0 - 2.0 * p_hi).clamp(-1.0, 1.0).acos(),
            )
        } else {
            (
                (half_plane + 1.0) * PI - (1.0 - 2.0 * p_hi).clamp(-1.0, 1.0).acos(),
                (half_plane + 1.0) * PI - (1.0 - 2.0 * p_lo).clamp(-1.0, 1.0).acos(),
            )
        };
        theta_l = theta_l.max(omega_lo / scale);
        theta_u = theta_u.min(omega_hi / scale);
        if theta_l > theta_u {
            // Inconsistent evidence (possible under noise): collapse to the
            // midpoint rather than keep an empty interval.
            let mid = 0.5 * (theta_l + theta_u);
            theta_l = mid;
            theta_u = mid;
        }

        let a_lo = theta_l.sin().powi(2);
        let a_hi = theta_u.sin().powi(2);
        if 0.5 * (a_hi - a_lo) <= config.epsilon {
            return Ok(IqaeOutcome {
                estimate: 0.5 * (a_lo + a_hi),
                oracle_queries: queries,
                interval: (a_lo, a_hi),
                rounds: round,
            });
        }
    }

    Err(Error::EstimationFailure {
        lo: theta_l.sin().powi(2),
        hi: theta_u.sin().powi(2),
    })
}
