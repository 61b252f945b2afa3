//! Per-epoch index orders for every sampling regime.
//!
//! Randomness comes from ChaCha8 streams. The stream for epoch `k` of a run
//! seeded with `s` is keyed by `splitmix64(s ^ splitmix64(k))`, and
//! shuffle-once uses the reserved key `k = u64::MAX`. Bounded draws use
//! `u64` ranges, so the orders are identical on 32- and 64-bit targets.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ZTable;

/// A permutation of `0..n` (stored 0-based, displayed 1-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(Error::InvalidPermutation("empty order".into()));
        }
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n {
                return Err(Error::InvalidPermutation(format!("index {i} out of range for n = {n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!("index {i} repeated")));
            }
        }
        Ok(Self(order))
    }

    pub fn from_one_based(order: &[usize]) -> Result<Self> {
        if order.contains(&0) {
            return Err(Error::InvalidPermutation("1-based order contains 0".into()));
        }
        Self::new(order.iter().map(|&i| i - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&i| i + 1).collect()
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, ")")
    }
}

/// Nonnegative per-component importance scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceVector(Vec<f64>);

impl ImportanceVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("importance entries must be finite and >= 0"));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `w(i) = ||z0_i - zbar0||^2`, the adaptive scheme's initial scores.
    pub fn initial(z0: &ZTable) -> Self {
        let zbar = z0.mean();
        Self((0..z0.n()).map(|i| (z0.block(i) - &zbar).norm_squared()).collect())
    }

    /// `w(i) = ||z0_i - zstar_i||^2`.
    pub fn from_tables(z0: &ZTable, zstar: &ZTable) -> Result<Self> {
        Ok(Self(z0.checked_sub(zstar)?.block_norms_sq()))
    }
}

/// Which order the epochs follow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    Cyclic { order: Permutation },
    Reshuffle { seed: u64 },
    ShuffleOnce { seed: u64 },
    Uniform { seed: u64 },
    Adaptive { gamma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPlan {
    regime: Regime,
    n: usize,
}

impl SamplingPlan {
    pub fn new(regime: Regime, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("sampling plan needs n >= 1"));
        }
        match &regime {
            Regime::Cyclic { order } if order.len() != n => {
                return Err(Error::InvalidPermutation(format!(
                    "cyclic order has length {} but n = {n}",
                    order.len()
                )));
            }
            Regime::Adaptive { gamma } if !(*gamma > 0.0 && *gamma < 1.0) => {
                return Err(invalid(format!("adaptive gamma must lie in (0, 1), got {gamma}")));
            }
            _ => {}
        }
        Ok(Self { regime, n })
    }

    pub fn cyclic(order: Permutation) -> Self {
        let n = order.len();
        Self { regime: Regime::Cyclic { order }, n }
    }

    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// True when every epoch visits each index exactly once.
    pub fn is_without_replacement(&self) -> bool {
        !matches!(self.regime, Regime::Uniform { .. })
    }

    pub fn needs_importance(&self) -> bool {
        matches!(self.regime, Regime::Adaptive { .. })
    }
}

/// The index sequence of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub enum EpochOrder {
    Permutation(Permutation),
    /// `n` i.i.d. uniform draws; not a permutation.
    Draws(Vec<usize>),
}

impl EpochOrder {
    pub fn indices(&self) -> &[usize] {
        match self {
            EpochOrder::Permutation(p) => p.as_slice(),
            EpochOrder::Draws(d) => d,
        }
    }

    pub fn as_permutation(&self) -> Option<&Permutation> {
        match self {
            EpochOrder::Permutation(p) => Some(p),
            EpochOrder::Draws(_) => None,
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SHUFFLE_ONCE_STREAM: u64 = u64::MAX;

/// Deterministic generator for `(seed, epoch)`.
pub fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(epoch)))
}

/// Fisher-Yates shuffle of `0..n` with `u64` draws.
pub fn seeded_permutation(n: usize, rng: &mut impl Rng) -> Permutation {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        order.swap(i, j);
    }
    Permutation(order)
}

/// Indices sorted by descending score, ties broken by ascending index.
fn descending_order(scores: &[f64]) -> Permutation {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    Permutation(idx)
}

pub fn epoch_order(
    plan: &SamplingPlan,
    epoch: u64,
    importance: Option<&ImportanceVector>,
) -> Result<EpochOrder> {
    let n = plan.n;
    Ok(match &plan.regime {
        Regime::Cyclic { order } => EpochOrder::Permutation(order.clone()),
        Regime::ShuffleOnce { seed } => {
            EpochOrder::Permutation(seeded_permutation(n, &mut epoch_rng(*seed, SHUFFLE_ONCE_STREAM)))
        }
        Regime::Reshuffle { seed } => {
            EpochOrder::Permutation(seeded_permutation(n, &mut epoch_rng(*seed, epoch)))
        }
        Regime::Uniform { seed } => {
            let mut rng = epoch_rng(*seed, epoch);
            EpochOrder::Draws((0..n).map(|_| rng.random_range(0..n as u64) as usize).collect())
        }
        Regime::Adaptive { .. } => {
            let w = importance
                .ok_or_else(|| invalid("adaptive sampling requires an importance vector"))?;
            if w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: w.len() });
            }
            EpochOrder::Permutation(descending_order(w.as_slice()))
        }
    })
}

/// The order minimising `sum_i (i/n) * scores[pi(i)]`: descending scores.
pub fn optimal_cyclic_order(scores: &ImportanceVector) -> Result<Permutation> {
    if scores.is_empty() {
        return Err(invalid("cannot order an empty score vector"));
    }
    Ok(descending_order(scores.as_slice()))
}

/// `w'(i) = (1 - gamma) w(i) + gamma ||z0_i - z_i||^2`.
pub fn update_importance(
    w: &ImportanceVector,
    z0: &ZTable,
    z_now: &ZTable,
    gamma: f64,
) -> Result<ImportanceVector> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !z0.same_shape(z_now) || w.len() != z0.n() {
        return Err(Error::DimensionMismatch { expected: z0.n(), got: w.len().min(z_now.n()) });
    }
    let dev = z0.checked_sub(z_now)?.block_norms_sq();
    ImportanceVector::new(
        w.as_slice()
            .iter()
            .zip(dev)
            .map(|(&wi, di)| (1.0 - gamma) * wi + gamma * di)
            .collect(),
    )
}
