//! Experiment configuration: one JSON document per run or sweep.
//!
//! ```json
//! {
//!   "problem": {"kind": "least_squares", "seed": 1, "n": 50, "d": 20, "L": 1.0, "mu": 0.01},
//!   "algorithm": "dfinito",
//!   "sampling": {"regime": "cyclic", "order": "optimal"},
//!   "alpha": "theory",
//!   "theta": 0.5,
//!   "epochs": 100,
//!   "seeds": [1, 2, 3],
//!   "trace_every": 1,
//!   "output": "out"
//! }
//! ```
//!
//! Relative paths inside a config file resolve against the file's directory.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shuffle_vr::problems::{
    gen_heterogeneous, gen_least_squares, gen_logistic, io::load_instance, libsvm::load_libsvm,
    synthetic_classification, HeterogeneityCertificate,
};
use shuffle_vr::{ProblemInstance, Regularizer, ZTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    /// A serialized instance written by `generate`.
    File { path: PathBuf },
    LeastSquares {
        seed: u64,
        n: usize,
        d: usize,
        /// Rows per component; defaults to `d`.
        #[serde(default)]
        k: Option<usize>,
        #[serde(rename = "L")]
        l: f64,
        mu: f64,
    },
    /// Least squares with the planted importance profile `beta^(i-1)` at step `alpha`.
    Heterogeneous {
        seed: u64,
        n: usize,
        d: usize,
        #[serde(default)]
        k: Option<usize>,
        #[serde(rename = "L")]
        l: f64,
        mu: f64,
        alpha: f64,
        beta: f64,
    },
    /// Synthetic two-class logistic regression.
    Logistic {
        seed: u64,
        n: usize,
        d: usize,
        #[serde(default = "default_shift")]
        shift: f64,
        lambda: f64,
    },
    /// Logistic regression on a LIBSVM file.
    Libsvm { path: PathBuf, lambda: f64 },
}

fn default_shift() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    pub source: ProblemSource,
    /// Replaces the instance's regularizer when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<Regularizer>,
}

pub struct LoadedProblem {
    pub instance: ProblemInstance,
    pub certificate: Option<HeterogeneityCertificate>,
}

impl ProblemSpec {
    pub fn load(&self, base: &Path) -> Result<LoadedProblem> {
        let (instance, certificate) = match &self.source {
            ProblemSource::File { path } => {
                let path = base.join(path);
                load_instance(&path).with_context(|| format!("loading instance {}", path.display()))?
            }
            &ProblemSource::LeastSquares { seed, n, d, k, l, mu } => {
                (gen_least_squares(seed, n, d, k.unwrap_or(d), l, mu)?, None)
            }
            &ProblemSource::Heterogeneous { seed, n, d, k, l, mu, alpha, beta } => {
                let z0 = ZTable::zeros(n, d);
                let (p, c) = gen_heterogeneous(seed, n, d, k.unwrap_or(d), mu, l, alpha, beta, &z0)?;
                (p, Some(c))
            }
            &ProblemSource::Logistic { seed, n, d, shift, lambda } => {
                let (w, y) = synthetic_classification(seed, n, d, shift)?;
                (gen_logistic(w, y, lambda)?, None)
            }
            ProblemSource::Libsvm { path, lambda } => {
                let path = base.join(path);
                let (w, y) = load_libsvm(&path).with_context(|| format!("reading {}", path.display()))?;
                (gen_logistic(w, y, *lambda)?, None)
            }
        };
        let instance = match self.regularizer {
            Some(r) => instance.with_regularizer(r)?,
            None => instance,
        };
        Ok(LoadedProblem { instance, certificate })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    Dfinito,
    ProxGd,
    Sgd,
    Svrg,
    Saga,
    FinitoUniform,
}

impl fmt::Display for AlgorithmName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlgorithmName::Dfinito => "dfinito",
            AlgorithmName::ProxGd => "prox_gd",
            AlgorithmName::Sgd => "sgd",
            AlgorithmName::Svrg => "svrg",
            AlgorithmName::Saga => "saga",
            AlgorithmName::FinitoUniform => "finito_uniform",
        })
    }
}

/// Fixed cyclic order: a 1-based list or a named rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    Explicit(Vec<usize>),
    Named(NamedOrder),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedOrder {
    Identity,
    Reversed,
    /// Descending `||z0_i - z*_i||^2`.
    Optimal,
    /// Ascending `||z0_i - z*_i||^2`.
    Worst,
    /// A permutation drawn from the run seed.
    Random,
}

impl Default for OrderSpec {
    fn default() -> Self {
        OrderSpec::Named(NamedOrder::Identity)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingSpec {
    Cyclic {
        #[serde(default)]
        order: OrderSpec,
    },
    #[default]
    Reshuffle,
    ShuffleOnce,
    Uniform,
    /// Importance-ordered reshuffling; damping from the top-level `gamma`.
    Adaptive,
}

impl fmt::Display for SamplingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingSpec::Cyclic { order: OrderSpec::Named(o) } => {
                write!(f, "cyclic:{}", serde_json::to_value(o).map_err(|_| fmt::Error)?.as_str().unwrap_or("?"))
            }
            SamplingSpec::Cyclic { order: OrderSpec::Explicit(_) } => f.write_str("cyclic:explicit"),
            SamplingSpec::Reshuffle => f.write_str("reshuffle"),
            SamplingSpec::ShuffleOnce => f.write_str("shuffle_once"),
            SamplingSpec::Uniform => f.write_str("uniform"),
            SamplingSpec::Adaptive => f.write_str("adaptive"),
        }
    }
}

/// A positive step size or the token `"theory"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Value(f64),
    Token(String),
}

impl StepSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            StepSpec::Value(a) if !(a.is_finite() && *a > 0.0) => bail!("alpha must be > 0, got {a}"),
            StepSpec::Token(t) if t != "theory" => bail!("alpha must be a number or \"theory\", got {t:?}"),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    #[default]
    Constant,
    InvSqrt,
}

/// Sweep axes; an absent axis keeps the config's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub alpha: Option<Vec<StepSpec>>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub sampling: Option<Vec<SamplingSpec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub algorithm: AlgorithmName,
    #[serde(default)]
    pub sampling: SamplingSpec,
    pub alpha: StepSpec,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    pub epochs: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_trace_every")]
    pub trace_every: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// SGD step schedule.
    #[serde(default)]
    pub schedule: ScheduleName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
}

fn default_theta() -> f64 {
    0.5
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_trace_every() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and rebases its relative paths on the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let ProblemSource::File { path } | ProblemSource::Libsvm { path, .. } = &mut cfg.problem.source {
            *path = base.join(&*path);
        }
        if let Some(out) = &mut cfg.output {
            *out = base.join(&*out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha.validate()?;
        check_theta(self.theta)?;
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if self.trace_every == 0 {
            bail!("trace_every must be >= 1");
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                bail!("gamma must lie in (0, 1), got {g}");
            }
        }
        Ok(())
    }
}

pub fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= 1.0) {
        bail!("theta must lie in (0, 1], got {theta}");
    }
    Ok(())
}
