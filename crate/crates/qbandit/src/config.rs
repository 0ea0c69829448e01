//! Flat key-value run configuration.
//!
//! Config files are plain text, one `key = value` pair per line, `#` lines
//! are comments. Unknown keys are rejected by name. Overrides (`--set
//! key=value`) layer on top of the file, last writer wins. `resolve` turns
//! the raw map into a typed [`RunSpec`] with every default filled in, and
//! the spec serializes itself into the metadata emitted next to results.

use crate::bandit::{BetaSchedule, XiSchedule};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::qmc::{NoiseSpec, QmcBackend, QmcConstants};
use crate::{Error, Result};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::Path;

/// Every key the parser accepts, with its documented default.
const KNOWN_KEYS: &[(&str, &str)] = &[
    ("kernel.family", "se"),
    ("kernel.lengthscale", "0.1"),
    ("kernel.nu", "2.5"),
    ("kernel.output_scale", "1.0"),
    ("rff.num_features", "100"),
    ("rff.seed", "7"),
    ("gp.lambda_mode", "theoretical"),
    ("gp.lambda", "1.0"),
    ("gp.backing", "features"),
    ("qae.shots_per_round", "100"),
    ("qae.max_rounds", "48"),
    ("qae.gaussian_qubits", "6"),
    ("qae.noise_rate", "0.0"),
    ("qmc.backend", "ideal"),
    ("qmc.c1", "2.0"),
    ("qmc.c2", "2.0"),
    ("qmc.m_bar_mode", "t"),
    ("qmc.m_bar_c", "1.0"),
    ("algo", "qgpucb"),
    ("algo.beta_mode", "practical"),
    ("algo.B", "1.0"),
    ("algo.S", "1.0"),
    ("algo.L", "auto"),
    ("env.kind", "gp"),
    ("env.grid_size", "20"),
    ("env.dim", "1"),
    ("env.noise", "bernoulli"),
    ("env.sigma", "0.4"),
    ("env.table_path", ""),
    ("run.t", "30000"),
    ("run.delta", "0.05"),
    ("run.trials", "10"),
    ("run.seed", "42"),
];

/// Parsed but untyped configuration: the file's pairs plus any overrides.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    map: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses `key = value` lines. `#`-prefixed lines and blank lines are
    /// skipped. Later occurrences of a key overwrite earlier ones.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(RawConfig { map })
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not of the form key=value")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("override `{pair}` has an empty key")));
        }
        self.map.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    fn get<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.map.get(key).map(String::as_str).unwrap_or(default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    QGpUcb,
    GpUcb,
    QLinUcb,
    LinUcb,
}

impl Algo {
    pub fn name(&self) -> &'static str {
        match self {
            Algo::QGpUcb => "qgpucb",
            Algo::GpUcb => "gpucb",
            Algo::QLinUcb => "qlinucb",
            Algo::LinUcb => "linucb",
        }
    }

    pub fn is_quantum(&self) -> bool {
        matches!(self, Algo::QGpUcb | Algo::QLinUcb)
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qgpucb" => Ok(Algo::QGpUcb),
            "gpucb" => Ok(Algo::GpUcb),
            "qlinucb" => Ok(Algo::QLinUcb),
            "linucb" => Ok(Algo::LinUcb),
            other => Err(Error::Config(format!(
                "unknown algo `{other}` (expected qgpucb | gpucb | qlinucb | linucb)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    Practical,
    Theoretical,
    Sqrt2,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `1 + 2 / T`.
    Theoretical,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MBarMode {
    /// `m_bar = T` (a bound that is always valid: stages cost >= 1 query).
    T,
    /// Kernel-specific stage-count bound scaled by `qmc.m_bar_c`.
    Theory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackingKind {
    Features,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Ideal,
    Statevector,
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Gp,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Bernoulli,
    Gaussian,
}

/// Fully resolved run description: the harness consumes this directly.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunSpec {
    pub kernel: KernelSpec,
    pub rff_features: usize,
    pub rff_seed: u64,
    pub lambda_mode: LambdaMode,
    pub lambda_fixed: f64,
    pub backing: BackingKind,
    pub shots_per_round: u64,
    pub max_rounds: u32,
    pub gaussian_qubits: u32,
    pub noise_rate: f64,
    pub backend: BackendKind,
    pub constants: QmcConstants,
    pub m_bar_mode: MBarMode,
    pub m_bar_c: f64,
    pub algo: Algo,
    pub beta_mode: BetaMode,
    pub b_bound: f64,
    pub s_bound: f64,
    /// `None` means derive `L` from the domain.
    pub l_bound: Option<f64>,
    pub env_kind: EnvKind,
    pub grid_size: usize,
    pub dim: usize,
    pub noise: NoiseKind,
    pub sigma: f64,
    pub table_path: Option<String>,
    pub horizon: u64,
    pub delta: f64,
    pub trials: u32,
    pub seed: u64,
}

fn parse_with<T: std::str::FromStr>(raw: &RawConfig, key: &str, default: &str) -> Result<T> {
    let s = raw.get(key, default);
    s.parse().map_err(|_| {
        Error::Config(format!(
            "key `{key}`: cannot parse `{s}` as {}",
            std::any::type_name::<T>()
        ))
    })
}

/// Validates keys and types and fills defaults.
pub fn resolve(raw: &RawConfig) -> Result<RunSpec> {
    for key in raw.map.keys() {
        if !KNOWN_KEYS.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
    }

    let family = match raw.get("kernel.family", "se") {
        "se" => KernelFamily::SquaredExponential,
        "matern" => KernelFamily::Matern,
        "linear" => KernelFamily::Linear,
        other => {
            return Err(Error::Config(format!(
                "key `kernel.family`: unknown family `{other}` (expected se | matern | linear)"
            )))
        }
    };
    let lengthscale: f64 = parse_with(raw, "kernel.lengthscale", "0.1")?;
    let nu: f64 = parse_with(raw, "kernel.nu", "2.5")?;
    let output_scale: f64 = parse_with(raw, "kernel.output_scale", "1.0")?;
    let kernel = KernelSpec::new(family, lengthscale, nu, output_scale)
        .map_err(|e| Error::Config(format!("kernel.*: {e}")))?;

    let lambda_mode = match raw.get("gp.lambda_mode", "theoretical") {
        "theoretical" => LambdaMode::Theoretical,
        "fixed" => LambdaMode::Fixed,
        other => {
            return Err(Error::Config(format!(
                "key `gp.lambda_mode`: `{other}` (expected theoretical | fixed)"
            )))
        }
    };
    let lambda_fixed: f64 = parse_with(raw, "gp.lambda", "1.0")?;
    if lambda_mode == LambdaMode::Fixed && !(lambda_fixed > 0.0 && lambda_fixed.is_finite()) {
        return Err(Error::Config(format!("key `gp.lambda`: must be positive, got {lambda_fixed}")));
    }
    let backing = match raw.get("gp.backing", "features") {
        "features" => BackingKind::Features,
        "kernel" => BackingKind::Kernel,
        other => {
            return Err(Error::Config(format!(
                "key `gp.backing`: `{other}` (expected features | kernel)"
            )))
        }
    };

    let backend = match raw.get("qmc.backend", "ideal") {
        "ideal" => BackendKind::Ideal,
        "statevector" => BackendKind::Statevector,
        "classical" => BackendKind::Classical,
        other => {
            return Err(Error::Config(format!(
                "key `qmc.backend`: `{other}` (expected ideal | statevector | classical)"
            )))
        }
    };
    let m_bar_mode = match raw.get("qmc.m_bar_mode", "t") {
        "t" => MBarMode::T,
        "theory" => MBarMode::Theory,
        other => {
            return Err(Error::Config(format!(
                "key `qmc.m_bar_mode`: `{other}` (expected t | theory)"
            )))
        }
    };
    let constants = QmcConstants {
        c1: parse_with(raw, "qmc.c1", "2.0")?,
        c2: parse_with(raw, "qmc.c2", "2.0")?,
    };
    if !(constants.c1 >= 1.0 && constants.c2 >= 1.0) {
        return Err(Error::Config("keys `qmc.c1`/`qmc.c2` must be at least 1".into()));
    }

    let algo: Algo = raw.get("algo", "qgpucb").parse()?;
    let beta_mode = match raw.get("algo.beta_mode", "practical") {
        "practical" => BetaMode::Practical,
        "theoretical" => BetaMode::Theoretical,
        "sqrt2" => BetaMode::Sqrt2,
        "one" => BetaMode::One,
        other => {
            return Err(Error::Config(format!(
                "key `algo.beta_mode`: `{other}` (expected practical | theoretical | sqrt2 | one)"
            )))
        }
    };
    match (algo, beta_mode) {
        (Algo::QGpUcb, BetaMode::Practical | BetaMode::Theoretical) => {}
        (Algo::GpUcb, BetaMode::Practical | BetaMode::Sqrt2 | BetaMode::One) => {}
        (Algo::QLinUcb | Algo::LinUcb, BetaMode::Practical) => {}
        (a, m) => {
            return Err(Error::Config(format!(
                "key `algo.beta_mode`: {m:?} is not valid for algo {}",
                a.name()
            )))
        }
    }
    let b_bound: f64 = parse_with(raw, "algo.B", "1.0")?;
    let s_bound: f64 = parse_with(raw, "algo.S", "1.0")?;
    if b_bound < 0.0 || s_bound < 0.0 {
        return Err(Error::Config("keys `algo.B`/`algo.S` must be nonnegative".into()));
    }
    let l_bound = match raw.get("algo.L", "auto") {
        "auto" => None,
        s => {
            let v: f64 = s.parse().map_err(|_| {
                Error::Config(format!("key `algo.L`: expected `auto` or a number, got `{s}`"))
            })?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("key `algo.L`: must be positive, got {v}")));
            }
            Some(v)
        }
    };

    let env_kind = match raw.get("env.kind", "gp") {
        "gp" => EnvKind::Gp,
        "table" => EnvKind::Table,
        other => {
            return Err(Error::Config(format!("key `env.kind`: `{other}` (expected gp | table)")))
        }
    };
    let noise = match raw.get("env.noise", "bernoulli") {
        "bernoulli" => NoiseKind::Bernoulli,
        "gaussian" => NoiseKind::Gaussian,
        other => {
            return Err(Error::Config(format!(
                "key `env.noise`: `{other}` (expected bernoulli | gaussian)"
            )))
        }
    };
    let sigma: f64 = parse_with(raw, "env.sigma", "0.4")?;
    if noise == NoiseKind::Gaussian && !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("key `env.sigma`: must be >= 0, got {sigma}")));
    }
    let grid_size: usize = parse_with(raw, "env.grid_size", "20")?;
    let dim: usize = parse_with(raw, "env.dim", "1")?;
    let table_path = {
        let p = raw.get("env.table_path", "");
        if p.is_empty() {
            None
        } else {
            Some(p.to_string())
        }
    };
    if env_kind == EnvKind::Table && table_path.is_none() {
        return Err(Error::Config("env.kind=table requires `env.table_path`".into()));
    }
    if env_kind == EnvKind::Gp && (grid_size < 2 || dim == 0) {
        return Err(Error::Config(
            "env.kind=gp requires `env.grid_size` >= 2 and `env.dim` >= 1".into(),
        ));
    }

    let horizon: u64 = parse_with(raw, "run.t", "30000")?;
    if horizon == 0 {
        return Err(Error::Config("key `run.t`: budget must be at least 1".into()));
    }
    let delta: f64 = parse_with(raw, "run.delta", "0.05")?;
    let delta_cap = 2.0 / std::f64::consts::E;
    if algo.is_quantum() {
        if !(delta > 0.0 && delta <= delta_cap) {
            return Err(Error::Config(format!(
                "key `run.delta`: quantum algorithms need delta in (0, 2/e], got {delta}"
            )));
        }
    } else if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!(
            "key `run.delta`: must lie in (0, 1), got {delta}"
        )));
    }
    let trials: u32 = parse_with(raw, "run.trials", "10")?;
    if trials == 0 {
        return Err(Error::Config("key `run.trials`: must be at least 1".into()));
    }

    let spec = RunSpec {
        kernel,
        rff_features: parse_with(raw, "rff.num_features", "100")?,
        rff_seed: parse_with(raw, "rff.seed", "7")?,
        lambda_mode,
        lambda_fixed,
        backing,
        shots_per_round: parse_with(raw, "qae.shots_per_round", "100")?,
        max_rounds: parse_with(raw, "qae.max_rounds", "48")?,
        gaussian_qubits: parse_with(raw, "qae.gaussian_qubits", "6")?,
        noise_rate: parse_with(raw, "qae.noise_rate", "0.0")?,
        backend,
        constants,
        m_bar_mode,
        m_bar_c: parse_with(raw, "qmc.m_bar_c", "1.0")?,
        algo,
        beta_mode,
        b_bound,
        s_bound,
        l_bound,
        env_kind,
        grid_size,
        dim,
        noise,
        sigma,
        table_path,
        horizon,
        delta,
        trials,
        seed: parse_with(raw, "run.seed", "42")?,
    };

    if spec.rff_features == 0 && spec.backing == BackingKind::Features
        && spec.kernel.family != KernelFamily::Linear
    {
        return Err(Error::Config("key `rff.num_features`: must be at least 1".into()));
    }
    if spec.shots_per_round == 0 || spec.max_rounds == 0 {
        return Err(Error::Config(
            "keys `qae.shots_per_round` and `qae.max_rounds` must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.noise_rate) {
        return Err(Error::Config(format!(
            "key `qae.noise_rate`: must lie in [0, 1], got {}",
            spec.noise_rate
        )));
    }
    if spec.algo.is_quantum() && spec.noise == NoiseKind::Gaussian {
        if spec.sigma <= 0.25 {
            return Err(Error::Config(format!(
                "quantum estimation under Gaussian noise needs env.sigma > 0.25, got {}",
                spec.sigma
            )));
        }
        if spec.backend == BackendKind::Statevector && spec.gaussian_qubits + 1 > crate::qae::MAX_QUBITS
        {
            return Err(Error::Config(format!(
                "key `qae.gaussian_qubits`: {} plus the ancilla exceeds the {}-qubit cap",
                spec.gaussian_qubits,
                crate::qae::MAX_QUBITS
            )));
        }
    }
    // The theory-mode stage bound is only derived for the two families with
    // closed-form information-gain rates.
    if spec.m_bar_mode == MBarMode::Theory && spec.kernel.family == KernelFamily::Matern {
        return Err(Error::Config(
            "qmc.m_bar_mode=theory is unavailable for the matern family; use m_bar_mode=t".into(),
        ));
    }
    spec.m_bar()?;
    Ok(spec)
}

impl RunSpec {
    /// Regularization actually used: `1 + 2/T` in theoretical mode.
    pub fn lambda(&self) -> f64 {
        match self.lambda_mode {
            LambdaMode::Theoretical => 1.0 + 2.0 / self.horizon as f64,
            LambdaMode::Fixed => self.lambda_fixed,
        }
    }

    /// Bound on estimation calls sharing the failure budget.
    pub fn m_bar(&self) -> Result<u64> {
        match self.m_bar_mode {
            MBarMode::T => Ok(self.horizon),
            MBarMode::Theory => {
                let log_t = (self.horizon as f64).ln().max(1.0);
                let d = self.dim().max(1) as f64;
                let raw = match self.kernel.family {
                    KernelFamily::Linear => self.m_bar_c * d * log_t,
                    KernelFamily::SquaredExponential => self.m_bar_c * log_t.powf(d + 1.0),
                    KernelFamily::Matern => {
                        return Err(Error::Config(
                            "no theory-mode stage bound for the matern family".into(),
                        ))
                    }
                };
                Ok((raw.ceil() as u64).max(1))
            }
        }
    }

    /// Environment dimension (table environments report their configured
    /// dim only after loading; this is the grid dimension).
    fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        match self.noise {
            NoiseKind::Bernoulli => NoiseSpec::Bounded01,
            NoiseKind::Gaussian => NoiseSpec::BoundedVariance { sigma: self.sigma },
        }
    }

    pub fn qmc_backend(&self) -> QmcBackend {
        match self.backend {
            BackendKind::Ideal => QmcBackend::Idealized { exact: false },
            BackendKind::Statevector => QmcBackend::Statevector {
                shots_per_round: self.shots_per_round,
                max_rounds: self.max_rounds,
                noise_rate: self.noise_rate,
            },
            BackendKind::Classical => QmcBackend::ClassicalMc,
        }
    }

    pub fn beta_schedule(&self) -> BetaSchedule {
        match self.beta_mode {
            BetaMode::Theoretical => {
                BetaSchedule::Theoretical { b_bound: self.b_bound, delta: self.delta }
            }
            _ => BetaSchedule::Practical,
        }
    }

    pub fn xi_schedule(&self) -> XiSchedule {
        match self.beta_mode {
            BetaMode::Sqrt2 => XiSchedule::Sqrt2,
            BetaMode::One => XiSchedule::One,
            _ => XiSchedule::PracticalLog,
        }
    }

    /// Resolved metadata for result provenance: every configured value plus
    /// the derived quantities and the library version. No timestamps, so
    /// reruns are byte-identical.
    pub fn metadata(&self) -> Result<serde_json::Value> {
        Ok(json!({
            "config": self,
            "derived": {
                "lambda": self.lambda(),
                "m_bar": self.m_bar()?,
            },
            "version": env!("CARGO_PKG_VERSION"),
        }))
    }
}
