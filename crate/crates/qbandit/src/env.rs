//! Benchmark environments: finite arm domains with rewards in `[0, 1]`.
//!
//! An environment is a finite set of arms (points in `[0, 1]^d`), a true
//! mean-reward table, and a noise model. Reward functions come from three
//! sources: a Gaussian-process draw on a grid (rescaled to span `[0, 1]`),
//! a CSV table of precomputed values, or direct construction.

use crate::kernel::KernelSpec;
use crate::linalg::SpdFactor;
use crate::qae::RewardEncoding;
use crate::qmc::{NoiseSpec, RewardOracle};
use crate::{check_finite, invalid, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::path::Path;

/// Hard cap on the number of arms in a domain.
pub const DOMAIN_CAP: usize = 10_000;
/// Largest domain a GP draw will be sampled on (dense Cholesky cost).
pub const GP_SAMPLE_CAP: usize = 4_096;
/// Maximum tolerated discretization bias of a reward encoding, in reward
/// units. Symmetric clipping keeps the real bias at machine-noise level;
/// anything above this threshold means a broken encoding.
pub const ENCODING_BIAS_LIMIT: f64 = 0.0025;

#[derive(Debug, Clone)]
pub struct Environment {
    /// Arm locations, one `d`-dimensional point per arm.
    pub domain: Vec<Vec<f64>>,
    /// True mean rewards in `[0, 1]`, aligned with `domain`.
    pub f: Vec<f64>,
    /// Index of the (first) optimal arm.
    pub x_star: usize,
    pub noise: NoiseSpec,
}

/// Uniform grid over `[0, 1]^dim` with `per_axis` points per axis,
/// flattened in row-major order.
pub fn grid_domain(dim: usize, per_axis: usize) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || per_axis == 0 {
        return Err(invalid("grid", "dimension and per-axis count must be positive"));
    }
    let mut total: usize = 1;
    for _ in 0..dim {
        total = total
            .checked_mul(per_axis)
            .filter(|&t| t <= DOMAIN_CAP)
            .ok_or_else(|| {
                Error::Capacity(format!(
                    "grid of {per_axis}^{dim} arms exceeds the domain cap of {DOMAIN_CAP}"
                ))
            })?;
    }
    let coord = |j: usize| {
        if per_axis == 1 {
            0.0
        } else {
            j as f64 / (per_axis - 1) as f64
        }
    };
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    loop {
        points.push(idx.iter().map(|&j| coord(j)).collect());
        let mut axis = dim;
        loop {
            if axis == 0 {
                return Ok(points);
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Draws one sample path of a zero-mean GP with covariance `kernel` on
/// `domain` (a small jitter keeps the covariance factorizable). Values are
/// raw, not rescaled.
pub fn sample_gp_values(
    kernel: &KernelSpec,
    domain: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<f64>> {
    let n = domain.len();
    if n == 0 {
        return Err(invalid("domain", "cannot sample a GP on an empty domain"));
    }
    if n > GP_SAMPLE_CAP {
        return Err(Error::Capacity(format!(
            "GP sampling is limited to {GP_SAMPLE_CAP} arms (got {n}); use a table environment"
        )));
    }
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel.eval(&domain[i], &domain[j])?;
            cov[i * n + j] = k;
            cov[j * n + i] = k;
        }
        cov[i * n + i] += 1e-8;
    }
    let factor = SpdFactor::from_dense(&cov, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(factor.multiply_lower(&z))
}

/// Affinely rescales values so the minimum is 0 and the maximum is 1. A
/// near-constant input maps to all 1/2.
pub fn rescale_01(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo < 1e-9 {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

impl Environment {
    pub fn new(domain: Vec<Vec<f64>>, f: Vec<f64>, noise: NoiseSpec) -> Result<Self> {
        if domain.is_empty() {
            return Err(invalid("domain", "environment needs at least one arm"));
        }
        if domain.len() != f.len() {
            return Err(Error::DimensionMismatch { expected: domain.len(), got: f.len() });
        }
        if domain.len() > DOMAIN_CAP {
            return Err(Error::Capacity(format!(
                "{} arms exceeds the domain cap of {DOMAIN_CAP}",
                domain.len()
            )));
        }
        let dim = domain[0].len();
        if dim == 0 {
            return Err(invalid("domain", "arms must have at least one coordinate"));
        }
        for x in &domain {
            if x.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
            }
            check_finite("domain point", x)?;
        }
        check_finite("f", &f)?;
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("f", "mean rewards must lie in [0, 1]"));
        }
        let mut order: Vec<usize> = (0..domain.len()).collect();
        order.sort_by(|&a, &b| domain[a].partial_cmp(&domain[b]).expect("finite coordinates"));
        for w in order.windows(2) {
            if domain[w[0]] == domain[w[1]] {
                return Err(invalid("domain", format!("duplicate arm at {:?}", domain[w[0]])));
            }
        }
        noise.validate()?;
        let mut x_star = 0;
        for (i, v) in f.iter().enumerate() {
            if *v > f[x_star] {
                x_star = i;
            }
        }
        Ok(Environment { domain, f, x_star, noise })
    }

    /// GP-sampled benchmark on a uniform grid: draws a sample path of the
    /// kernel's GP and rescales it to span `[0, 1]` exactly.
    pub fn sampled_gp(
        kernel: &KernelSpec,
        dim: usize,
        per_axis: usize,
        noise: NoiseSpec,
        seed: u64,
    ) -> Result<Self> {
        let domain = grid_domain(dim, per_axis)?;
        if domain.len() < 2 {
            return Err(invalid("grid", "a GP-sampled environment needs at least two arms"));
        }
        let raw = sample_gp_values(kernel, &domain, seed)?;
        Environment::new(domain, rescale_01(&raw), noise)
    }

    /// Loads a tabular environment from CSV: one row per arm, coordinates
    /// in the leading columns, mean reward in `[0, 1]` in the last column.
    /// A non-numeric first row is treated as a header.
    pub fn from_table<P: AsRef<Path>>(path: P, noise: NoiseSpec) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        let mut domain = Vec::new();
        let mut f = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Io(format!("row {}: {e}", row + 1)))?;
            if record.len() < 2 {
                return Err(invalid(
                    "table",
                    format!("row {} has {} columns, need at least 2", row + 1, record.len()),
                ));
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|s| s.parse::<f64>()).collect();
            match parsed {
                Err(_) if row == 0 => continue, // header row
                Err(e) => {
                    return Err(invalid("table", format!("row {}: {e}", row + 1)));
                }
                Ok(mut vals) => {
                    let value = vals.pop().expect("at least two columns");
                    domain.push(vals);
                    f.push(value);
                }
            }
        }
        Environment::new(domain, f, noise)
    }

    pub fn num_arms(&self) -> usize {
        self.domain.len()
    }

    pub fn dim(&self) -> usize {
        self.domain[0].len()
    }

    pub fn true_mean(&self, arm: usize) -> f64 {
        self.f[arm]
    }

    pub fn optimum(&self) -> f64 {
        self.f[self.x_star]
    }

    /// Instantaneous regret of pulling `arm`.
    pub fn regret(&self, arm: usize) -> f64 {
        self.f[self.x_star] - self.f[arm]
    }

    /// One classical reward observation from `arm`.
    pub fn classical_sample<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        self.noise.sample(self.f[arm], rng)
    }

    /// Builds the estimation problem for `arm`. `gaussian_qubits` sizes the
    /// grid register used when the noise model is Gaussian. Fails if the
    /// encoding's recorded discretization bias exceeds
    /// [`ENCODING_BIAS_LIMIT`].
    pub fn reward_oracle(&self, arm: usize, gaussian_qubits: u32) -> Result<RewardOracle> {
        let mean = self.f[arm];
        let encoding = match self.noise {
            NoiseSpec::Bounded01 => RewardEncoding::bernoulli(mean)?,
            NoiseSpec::BoundedVariance { sigma } => {
                RewardEncoding::discretized_gaussian(mean, sigma, gaussian_qubits)?
            }
        };
        if encoding.bias() > ENCODING_BIAS_LIMIT {
            return Err(invalid(
                "encoding",
                format!(
                    "arm {arm}: discretization bias {} exceeds the limit {ENCODING_BIAS_LIMIT}",
                    encoding.bias()
                ),
            ));
        }
        Ok(RewardOracle { true_mean: mean, noise: self.noise, encoding })
    }

    /// Checks every arm's reward encoding up front; used before a
    /// statevector-backed run so a bad encoding fails loudly, not mid-run.
    pub fn validate_encodings(&self, gaussian_qubits: u32) -> Result<()> {
        for arm in 0..self.num_arms() {
            self.reward_oracle(arm, gaussian_qubits)?;
        }
        Ok(())
    }
}
