//! Simulation library for kernelized bandit optimization with quantum
//! Monte-Carlo reward estimation.
//!
//! The library is organized around one idea: a bandit algorithm that asks an
//! amplitude-estimation subroutine for a reward estimate of accuracy `epsilon`
//! pays roughly `1/epsilon` oracle queries instead of the classical
//! `1/epsilon^2`, and the resulting heteroscedastic estimates are folded into
//! a weighted Gaussian-process posterior. The modules compose bottom-up:
//!
//! * [`kernel`]: stationary kernels (squared-exponential, Matern, linear) and
//!   random Fourier feature maps.
//! * [`wgp`]: the weighted GP posterior in both kernel-matrix and
//!   feature-space forms, with determinant bookkeeping and information gain.
//! * [`qae`]: a small statevector simulator and iterative quantum amplitude
//!   estimation with a Clopper-Pearson confidence sequence.
//! * [`qmc`]: quantum Monte-Carlo mean estimation; query budgets for bounded
//!   and bounded-variance noise plus idealized, statevector and classical
//!   backends.
//! * [`env`]: benchmark reward environments (GP-sampled grids, tabular CSV).
//! * [`bandit`]: the staged weighted-UCB algorithm and its classical and
//!   linear baselines.
//! * [`harness`] / [`config`] / [`plot`]: batch runner, aggregation to
//!   regret-vs-query CSV, flat key-value configuration, and SVG plots.

pub mod bandit;
pub mod config;
pub mod env;
pub mod harness;
pub mod kernel;
mod linalg;
pub mod plot;
pub mod qae;
pub mod qmc;
pub mod wgp;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Input vectors disagree in length where they must match.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A scalar argument is outside its documented domain.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// A linear system became too ill-conditioned to trust, even after
    /// refactorization.
    #[error("ill-conditioned posterior system: {0}")]
    Conditioning(String),

    /// A capacity guard tripped (domain size, qubit count, ...).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Amplitude estimation did not reach the target accuracy within its
    /// round limit; carries the last confidence interval.
    #[error("amplitude estimation failed to converge: last interval [{lo}, {hi}]")]
    EstimationFailure { lo: f64, hi: f64 },

    /// Configuration file or override problem.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem or serialization problem while emitting artifacts.
    #[error("io error: {0}")]
    Io(String),

    /// A run or batch failed in a way none of the specific variants cover
    /// (for example, every trial of a batch erroring out).
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}

/// Checks that a slice of coordinates is finite; used at API boundaries.
pub(crate) fn check_finite(name: &'static str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(invalid(name, "contains a non-finite value"));
    }
    Ok(())
}

/// Deterministic seed derivation: mixes a stream tag into a base seed so that
/// independent random streams (environment draw, feature map, per-stage
/// estimation) never alias even when user seeds are small consecutive
/// integers. SplitMix64 finalizer.
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
