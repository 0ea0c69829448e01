//! Statevector simulation for amplitude estimation.
//!
//! A reward distribution is encoded as a preparation unitary `A` acting on
//! `|0>`: an index register holds the outcome distribution and one ancilla
//! qubit rotates by the (rescaled) reward value, so the probability of
//! measuring the ancilla in `|1>` equals the mean reward. Grover iterations
//! `Q = A S_0 A^dagger S_marked` amplify that probability to
//! `sin^2((2k+1) theta)` with `a = sin^2 theta`, which is what iterative
//! amplitude estimation exploits.
//!
//! The simulator never synthesizes gates: `A S_0 A^dagger` is the reflection
//! about the prepared state, applied directly to the amplitude vector, which
//! is exact for any preparation unitary.

mod iqae;

pub use iqae::{iqae_estimate, IqaeConfig, IqaeOutcome};

use crate::{invalid, Error, Result};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::Serialize;

/// Hard cap on simulated qubits (amplitude vectors of at most `2^12`).
pub const MAX_QUBITS: u32 = 12;

/// A pure state on `n_qubits` qubits. Amplitude index bit 0 is the reward
/// ancilla; the marked subspace is `ancilla = 1`.
#[derive(Debug, Clone)]
pub struct Statevector {
    n_qubits: u32,
    amps: Vec<Complex64>,
}

impl Statevector {
    pub fn n_qubits(&self) -> u32 {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Total probability of the marked (ancilla `|1>`) subspace.
    pub fn marked_probability(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & 1 == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// A reward distribution prepared for amplitude estimation. The encoding
/// carries the affine map between original reward units and the `[0, 1]`
/// scale the ancilla rotation uses.
#[derive(Debug, Clone, Serialize)]
pub enum RewardEncoding {
    /// Single-qubit encoding of a `{0, 1}` reward: `sqrt(1-p)|0> + sqrt(p)|1>`.
    Bernoulli { p: f64 },
    /// Gaussian reward discretized on a `2^qubits`-point grid over
    /// `[lo, hi]`, rescaled to `[0, 1]` for the ancilla rotation.
    DiscretizedGaussian {
        mean: f64,
        sigma: f64,
        qubits: u32,
        lo: f64,
        hi: f64,
        /// Normalized grid probabilities.
        probs: Vec<f64>,
        /// Rescaled reward levels in `[0, 1]`, one per grid point.
        levels: Vec<f64>,
        /// Marked probability `sum_j probs_j levels_j`.
        target: f64,
        /// `|encoded mean - true mean|` in original units.
        bias: f64,
    },
}

impl RewardEncoding {
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(invalid("p", format!("must lie in [0, 1], got {p}")));
        }
        Ok(RewardEncoding::Bernoulli { p })
    }

    /// Discretizes `N(mean, sigma^2)` clipped to `mean +/- 4 sigma` on a
    /// midpoint grid with `2^qubits` cells. Grid probabilities are
    /// density-proportional and renormalized; the clip interval is symmetric,
    /// so the recorded discretization bias is at machine-noise level.
    pub fn discretized_gaussian(mean: f64, sigma: f64, qubits: u32) -> Result<Self> {
        let lo = mean - 4.0 * sigma;
        let hi = mean + 4.0 * sigma;
        Self::discretized_gaussian_clipped(mean, sigma, qubits, lo, hi)
    }

    /// Variant with explicit clip bounds; exists so the bias bookkeeping can
    /// be exercised with asymmetric clipping.
    pub(crate) fn discretized_gaussian_clipped(
        mean: f64,
        sigma: f64,
        qubits: u32,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mean.is_finite() {
            return Err(invalid("sigma", format!("must be positive, got {sigma}")));
        }
        if qubits == 0 {
            return Err(invalid("qubits", "grid register needs at least 1 qubit"));
        }
        if qubits + 1 > MAX_QUBITS {
            return Err(Error::Capacity(format!(
                "{} grid qubits plus ancilla exceeds the {MAX_QUBITS}-qubit statevector cap",
                qubits
            )));
        }
        if !(hi > lo) {
            return Err(invalid("hi", "clip interval is empty"));
        }
        let n = 1usize << qubits;
        let h = (hi - lo) / n as f64;
        let mut probs = Vec::with_capacity(n);
        let mut levels = Vec::with_capacity(n);
        for j in 0..n {
            let omega = lo + (j as f64 + 0.5) * h;
            let z = (omega - mean) / sigma;
            probs.push((-0.5 * z * z).exp());
            levels.push((omega - lo) / (hi - lo));
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let target: f64 = probs.iter().zip(&levels).map(|(p, y)| p * y).sum();
        let encoded_mean = lo + (hi - lo) * target;
        Ok(RewardEncoding::DiscretizedGaussian {
            mean,
            sigma,
            qubits,
            lo,
            hi,
            probs,
            levels,
            target,
            bias: (encoded_mean - mean).abs(),
        })
    }

    /// The marked probability `a` the estimator targets.
    pub fn target_amplitude(&self) -> f64 {
        match self {
            RewardEncoding::Bernoulli { p } => *p,
            RewardEncoding::DiscretizedGaussian { target, .. } => *target,
        }
    }

    /// Width of the original reward interval represented by `[0, 1]`.
    pub fn scale(&self) -> f64 {
        match self {
            RewardEncoding::Bernoulli { .. } => 1.0,
            RewardEncoding::DiscretizedGaussian { lo, hi, .. } => hi - lo,
        }
    }

    /// Maps an estimate of the marked probability back to reward units.
    pub fn decode(&self, amplitude: f64) -> f64 {
        match self {
            RewardEncoding::Bernoulli { .. } => amplitude,
            RewardEncoding::DiscretizedGaussian { lo, hi, .. } => lo + (hi - lo) * amplitude,
        }
    }

    /// Recorded discretization bias in original reward units.
    pub fn bias(&self) -> f64 {
        match self {
            RewardEncoding::Bernoulli { .. } => 0.0,
            RewardEncoding::DiscretizedGaussian { bias, .. } => *bias,
        }
    }

    /// Register size including the reward ancilla.
    pub fn total_qubits(&self) -> u32 {
        match self {
            RewardEncoding::Bernoulli { .. } => 1,
            RewardEncoding::DiscretizedGaussian { qubits, .. } => qubits + 1,
        }
    }
}

/// Builds the prepared state `A|0>` for an encoding.
pub fn prepare(encoding: &RewardEncoding) -> Statevector {
    match encoding {
        RewardEncoding::Bernoulli { p } => Statevector {
            n_qubits: 1,
            amps: vec![
                Complex64::new((1.0 - p).max(0.0).sqrt(), 0.0),
                Complex64::new(p.max(0.0).sqrt(), 0.0),
            ],
        },
        RewardEncoding::DiscretizedGaussian { probs, levels, qubits, .. } => {
            let mut amps = vec![Complex64::new(0.0, 0.0); 1 << (qubits + 1)];
            for (j, (p, y)) in probs.iter().zip(levels).enumerate() {
                amps[j << 1] = Complex64::new((p * (1.0 - y)).max(0.0).sqrt(), 0.0);
                amps[(j << 1) | 1] = Complex64::new((p * y).max(0.0).sqrt(), 0.0);
            }
            Statevector { n_qubits: qubits + 1, amps }
        }
    }
}

/// Applies `power` Grover iterations `Q = A S_0 A^dagger S_marked` to
/// `state`, where `A` prepares `encoding`. Returns the new state.
///
/// `A S_0 A^dagger` is applied as the reflection `2|psi><psi| - I` with
/// `|psi> = A|0>`, which is algebraically identical and exact.
pub fn grover_step(state: &Statevector, encoding: &RewardEncoding, power: u32) -> Result<Statevector> {
    let psi = prepare(encoding);
    if psi.amps.len() != state.amps.len() {
        return Err(Error::DimensionMismatch { expected: psi.amps.len(), got: state.amps.len() });
    }
    let mut v = state.amps.clone();
    for _ in 0..power {
        // Oracle: flip the marked amplitudes.
        for (i, a) in v.iter_mut().enumerate() {
            if i & 1 == 1 {
                *a = -*a;
            }
        }
        // Reflection about the prepared state.
        let overlap: Complex64 = psi.amps.iter().zip(&v).map(|(p, x)| p.conj() * x).sum();
        for (x, p) in v.iter_mut().zip(&psi.amps) {
            *x = 2.0 * overlap * p - *x;
        }
    }
    Ok(Statevector { n_qubits: state.n_qubits, amps: v })
}

/// Samples `shots` measurements of the ancilla and returns the number of
/// marked (ancilla `|1>`) outcomes.
pub fn measure(state: &Statevector, shots: u64, rng_seed: u64) -> u64 {
    let p = state.marked_probability().clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rand_distr::Binomial::new(shots, p)
        .expect("probability already clamped to [0, 1]")
        .sample(&mut rng)
}

/// Sampling-level depolarizing-noise proxy: with probability `rate` the
/// state is replaced by the uniform superposition over all basis states
/// (whose marked probability is 1/2), otherwise it is returned unchanged.
/// Compounding over `c` oracle applications is therefore a mixture with
/// weight `(1 - rate)^c` on the ideal outcome distribution.
pub fn apply_depolarizing(state: &Statevector, rate: f64, rng_seed: u64) -> Result<Statevector> {
    if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
        return Err(invalid("rate", format!("must lie in [0, 1], got {rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let triggered = rate > 0.0 && rand::Rng::random_bool(&mut rng, rate);
    if !triggered {
        return Ok(state.clone());
    }
    let n = state.amps.len();
    let amp = Complex64::new((1.0 / n as f64).sqrt(), 0.0);
    Ok(Statevector { n_qubits: state.n_qubits, amps: vec![amp; n] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bernoulli_preparation() {
        let enc = RewardEncoding::bernoulli(0.25).unwrap();
        let sv = prepare(&enc);
        assert_eq!(sv.n_qubits(), 1);
        assert_eq!(sv.amplitudes().len(), 2);
        assert_relative_eq!(sv.amplitudes()[1].re, 0.5, max_relative = 1e-15);
        assert_relative_eq!(sv.marked_probability(), 0.25, max_relative = 1e-15);
        assert_relative_eq!(sv.norm_sqr(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn zero_amplitude_preparation() {
        let sv = prepare(&RewardEncoding::bernoulli(0.0).unwrap());
        assert_relative_eq!(sv.marked_probability(), 0.0);
    }

    #[test]
    fn gaussian_preparation_matches_grid_sum_oracle() {
        // Oracle: recompute sum p_j y_j from the grid definition by hand.
        let mean = 0.3;
        let sigma = 0.4;
        let qubits = 6u32;
        let enc = RewardEncoding::discretized_gaussian(mean, sigma, qubits).unwrap();
        let (lo, hi) = (mean - 4.0 * sigma, mean + 4.0 * sigma);
        let n = 1 << qubits;
        let h = (hi - lo) / n as f64;
        let mut ps = Vec::new();
        let mut ys = Vec::new();
        for j in 0..n {
            let w = lo + (j as f64 + 0.5) * h;
            ps.push((-0.5 * ((w - mean) / sigma).powi(2)).exp());
            ys.push((w - lo) / (hi - lo));
        }
        let z: f64 = ps.iter().sum();
        let oracle: f64 = ps.iter().zip(&ys).map(|(p, y)| p / z * y).sum();
        assert_relative_eq!(enc.target_amplitude(), oracle, max_relative = 1e-12);
        // With symmetric clipping the rescaled mean sits at 1/2 and the
        // recorded bias is numerically zero.
        assert!((enc.target_amplitude() - 0.5).abs() < 1e-12);
        assert!(enc.bias() < 1e-12, "bias = {}", enc.bias());
        let sv = prepare(&enc);
        assert_eq!(sv.n_qubits(), qubits + 1);
        assert_relative_eq!(sv.marked_probability(), oracle, max_relative = 1e-12);
        assert_relative_eq!(sv.norm_sqr(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(enc.decode(enc.target_amplitude()), mean, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_clipping_records_real_bias() {
        let enc =
            RewardEncoding::discretized_gaussian_clipped(0.0, 1.0, 6, -1.0, 4.0).unwrap();
        // Clipping one tail shifts the encoded mean; the recorded bias must
        // match an independent grid-sum of E[omega] - mean.
        let (lo, hi, n) = (-1.0, 4.0, 64);
        let h = (hi - lo) / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let w = lo + (j as f64 + 0.5) * h;
            let p = (-0.5 * w * w).exp();
            num += p * w;
            den += p;
        }
        let oracle_bias = (num / den - 0.0).abs();
        assert!(oracle_bias > 1e-3, "test premise: asymmetric clip biases the mean");
        assert_relative_eq!(enc.bias(), oracle_bias, max_relative = 1e-10);
    }

    #[test]
    fn capacity_and_argument_guards() {
        assert!(RewardEncoding::bernoulli(1.2).is_err());
        assert!(RewardEncoding::bernoulli(f64::NAN).is_err());
        assert!(RewardEncoding::discretized_gaussian(0.0, 0.0, 6).is_err());
        assert!(RewardEncoding::discretized_gaussian(0.0, 1.0, 0).is_err());
        assert!(matches!(
            RewardEncoding::discretized_gaussian(0.0, 1.0, 12),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn grover_closed_form_specific_values() {
        // a = 1/4 = sin^2(pi/6): one iteration lands on sin^2(pi/2) = 1.
        let enc = RewardEncoding::bernoulli(0.25).unwrap();
        let sv = grover_step(&prepare(&enc), &enc, 1).unwrap();
        assert_relative_eq!(sv.marked_probability(), 1.0, max_relative = 1e-12);
        // a = sin^2(pi/8): one iteration gives sin^2(3 pi/8).
        let a = (std::f64::consts::FRAC_PI_8).sin().powi(2);
        let enc = RewardEncoding::bernoulli(a).unwrap();
        let sv = grover_step(&prepare(&enc), &enc, 1).unwrap();
        assert_relative_eq!(
            sv.marked_probability(),
            0.853_553_390_593_273_7,
            max_relative = 1e-12
        );
    }

    #[test]
    fn grover_follows_closed_form_for_random_amplitudes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let a: f64 = rng.random_range(0.001..0.999);
            let k = rng.random_range(0u32..=6);
            let theta = a.sqrt().asin();
            let enc = RewardEncoding::bernoulli(a).unwrap();
            let sv = grover_step(&prepare(&enc), &enc, k).unwrap();
            let expect = ((2.0 * k as f64 + 1.0) * theta).sin().powi(2);
            assert_relative_eq!(sv.marked_probability(), expect, epsilon = 1e-8);
            assert_relative_eq!(sv.norm_sqr(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn grover_closed_form_holds_for_gaussian_encoding() {
        let enc = RewardEncoding::discretized_gaussian(0.2, 0.4, 5).unwrap();
        let a = enc.target_amplitude();
        let theta = a.sqrt().asin();
        for k in [1u32, 2, 3] {
            let sv = grover_step(&prepare(&enc), &enc, k).unwrap();
            let expect = ((2.0 * k as f64 + 1.0) * theta).sin().powi(2);
            assert_relative_eq!(sv.marked_probability(), expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn grover_powers_compose() {
        let enc = RewardEncoding::bernoulli(0.3).unwrap();
        let direct = grover_step(&prepare(&enc), &enc, 5).unwrap();
        let two = grover_step(&prepare(&enc), &enc, 2).unwrap();
        let composed = grover_step(&two, &enc, 3).unwrap();
        assert_relative_eq!(
            direct.marked_probability(),
            composed.marked_probability(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn measurement_edges_and_concentration() {
        let zero = prepare(&RewardEncoding::bernoulli(0.0).unwrap());
        assert_eq!(measure(&zero, 1000, 7), 0);
        let one = prepare(&RewardEncoding::bernoulli(1.0).unwrap());
        assert_eq!(measure(&one, 1000, 7), 1000);
        let mid = prepare(&RewardEncoding::bernoulli(0.3).unwrap());
        let shots = 100_000;
        let count = measure(&mid, shots, 11);
        let freq = count as f64 / shots as f64;
        assert!((freq - 0.3).abs() < 0.01, "empirical frequency {freq}");
        assert_eq!(measure(&mid, 500, 3), measure(&mid, 500, 3), "seeded determinism");
    }

    #[test]
    fn depolarizing_edge_rates() {
        let enc = RewardEncoding::bernoulli(0.2).unwrap();
        let sv = prepare(&enc);
        let untouched = apply_depolarizing(&sv, 0.0, 5).unwrap();
        assert_relative_eq!(untouched.marked_probability(), 0.2, max_relative = 1e-15);
        let scrambled = apply_depolarizing(&sv, 1.0, 5).unwrap();
        assert_relative_eq!(scrambled.marked_probability(), 0.5, max_relative = 1e-12);
        assert!(apply_depolarizing(&sv, 1.5, 5).is_err());
    }
}
