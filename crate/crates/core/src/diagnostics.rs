//! Error metrics, the order-specific norm and the theoretical envelopes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{ProblemInstance, Vector, ZTable};
use crate::prox::{prox, subgradient_residual};
use crate::sampling::Permutation;

/// Markers attached to a trace record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    /// `alpha > 2/L`: convex envelopes not certified.
    pub alpha_above_convex_limit: bool,
    /// `alpha > 2/(mu+L)`: strongly convex envelope not certified.
    pub alpha_above_sc_limit: bool,
    /// Uniform with-replacement sampling; excluded from the bound checks.
    pub uniform_mode: bool,
    /// The envelopes bound an expectation over random orders.
    pub expectation_bound: bool,
}

impl Flags {
    const NAMES: [&'static str; 4] =
        ["alpha_above_convex_limit", "alpha_above_sc_limit", "uniform_mode", "expectation_bound"];

    fn bits(&self) -> [bool; 4] {
        [
            self.alpha_above_convex_limit,
            self.alpha_above_sc_limit,
            self.uniform_mode,
            self.expectation_bound,
        ]
    }

    pub fn is_empty(&self) -> bool {
        !self.bits().iter().any(|&b| b)
    }

    /// Pipe-separated names of the set flags.
    pub fn encode(&self) -> String {
        Self::NAMES
            .iter()
            .zip(self.bits())
            .filter(|(_, b)| *b)
            .map(|(n, _)| *n)
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn decode(s: &str) -> Result<Self> {
        let mut f = Flags::default();
        for name in s.split('|').filter(|t| !t.is_empty()) {
            match name {
                "alpha_above_convex_limit" => f.alpha_above_convex_limit = true,
                "alpha_above_sc_limit" => f.alpha_above_sc_limit = true,
                "uniform_mode" => f.uniform_mode = true,
                "expectation_bound" => f.expectation_bound = true,
                other => return Err(invalid(format!("unknown flag {other:?}"))),
            }
        }
        Ok(f)
    }

    pub fn union(&self, other: &Flags) -> Flags {
        Flags {
            alpha_above_convex_limit: self.alpha_above_convex_limit || other.alpha_above_convex_limit,
            alpha_above_sc_limit: self.alpha_above_sc_limit || other.alpha_above_sc_limit,
            uniform_mode: self.uniform_mode || other.uniform_mode,
            expectation_bound: self.expectation_bound || other.expectation_bound,
        }
    }
}

/// Diagnostics recorded after `epoch` epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: u64,
    /// Component gradient evaluations divided by `n`.
    pub grad_evals: f64,
    /// `min_{g in dr(x)} ||grad F(x) + g||^2` at `x = x^{kn}`.
    pub grad_map_residual_sq: f64,
    /// `||grad F(x) + (zbar - x)/alpha||^2`.
    pub prox_residual_sq: Option<f64>,
    pub dist_sq_to_opt: Option<f64>,
    /// `||z^{kn} - z^{(k-1)n}||_pi^2` under the epoch's order.
    pub pi_norm_residual_sq: Option<f64>,
    pub bound_convex: Option<f64>,
    pub bound_sc: Option<f64>,
    pub flags: Flags,
}

fn check_order(n: usize, order: &Permutation) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidPermutation(format!(
            "order has length {} but the table has {n} blocks",
            order.len()
        )));
    }
    Ok(())
}

/// Weighted sum `sum_i (i/n) * values[pi(i)]` (1-based positions).
pub fn order_weighted_sum(values: &[f64], order: &Permutation) -> Result<f64> {
    check_order(values.len(), order)?;
    let n = values.len() as f64;
    Ok(order
        .as_slice()
        .iter()
        .enumerate()
        .map(|(pos, &i)| (pos + 1) as f64 / n * values[i])
        .sum())
}

/// `||z||_pi^2 = sum_i (i/n) ||z_{pi(i)}||^2`.
pub fn pi_norm_sq(z: &ZTable, order: &Permutation) -> Result<f64> {
    order_weighted_sum(&z.block_norms_sq(), order)
}

/// `||z0 - z*||_{pi*}^2 / ||z0 - z*||^2`.
pub fn rho_ratio(z0: &ZTable, zstar: &ZTable, order_opt: &Permutation) -> Result<f64> {
    let diff = z0.checked_sub(zstar)?;
    let denom = diff.norm_sq();
    if denom == 0.0 {
        return Err(invalid("rho is undefined when z0 = z*"));
    }
    Ok(pi_norm_sq(&diff, order_opt)? / denom)
}

/// The two convex-case optimality residuals at `x = prox(zbar)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradMapResidual {
    pub true_min: f64,
    pub prox_certified: f64,
}

pub fn grad_map_residual(p: &ProblemInstance, zbar: &Vector, alpha: f64) -> Result<GradMapResidual> {
    let x = prox(p.regularizer(), alpha, zbar)?;
    let g = p.grad_full(&x)?;
    let certified = &g + (zbar - &x) / alpha;
    let true_min = subgradient_residual(p.regularizer(), &x, &g)?;
    Ok(GradMapResidual { true_min, prox_certified: certified.norm_squared() })
}

/// Sampling regime selecting the envelope constant.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundRegime<'a> {
    Cyclic(&'a Permutation),
    Reshuffle,
    /// Expectation over a single up-front shuffle.
    ShuffleOnce,
}

/// Harmonic-sum bound `ln(n) + 1`.
pub fn log_factor(n: usize) -> f64 {
    (n as f64).ln() + 1.0
}

/// Sublinear envelope `C L^2 / ((k+1) theta (1-theta))` for convex problems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexEnvelope {
    pub constant: f64,
    pub l_smooth: f64,
    pub theta: f64,
}

impl ConvexEnvelope {
    pub fn new(
        alpha: f64,
        theta: f64,
        l_smooth: f64,
        z0: &ZTable,
        zstar: &ZTable,
        regime: BoundRegime<'_>,
    ) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid(format!("convex envelope needs theta in (0, 1), got {theta}")));
        }
        if !(alpha > 0.0 && alpha <= 2.0 / l_smooth * (1.0 + 1e-12)) {
            return Err(invalid(format!("convex envelope needs 0 < alpha <= 2/L, got {alpha}")));
        }
        let diff = z0.checked_sub(zstar)?;
        let n = diff.n();
        let nf = n as f64;
        let scale = 2.0 / (alpha * l_smooth);
        let constant = match regime {
            BoundRegime::Cyclic(order) => scale * scale * log_factor(n) / nf * pi_norm_sq(&diff, order)?,
            BoundRegime::Reshuffle => {
                let s = 5.0 / (3.0 * alpha * l_smooth);
                s * s / nf * diff.norm_sq()
            }
            BoundRegime::ShuffleOnce => {
                scale * scale * (nf + 1.0) * log_factor(n) / (2.0 * nf * nf) * diff.norm_sq()
            }
        };
        Ok(Self { constant, l_smooth, theta })
    }

    pub fn at(&self, k: u64) -> f64 {
        self.constant * self.l_smooth * self.l_smooth
            / ((k as f64 + 1.0) * self.theta * (1.0 - self.theta))
    }
}

/// Linear envelope `(1 - 2 theta alpha mu L/(mu+L))^k C` for strongly convex problems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StronglyConvexEnvelope {
    pub constant: f64,
    pub rate: f64,
}

impl StronglyConvexEnvelope {
    pub fn new(
        alpha: f64,
        theta: f64,
        l_smooth: f64,
        mu: f64,
        z0: &ZTable,
        zstar: &ZTable,
        regime: BoundRegime<'_>,
    ) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(invalid("strongly convex envelope needs mu > 0"));
        }
        if mu > l_smooth {
            return Err(invalid("strongly convex envelope needs mu <= L"));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(invalid(format!("theta must lie in (0, 1], got {theta}")));
        }
        if !(alpha > 0.0 && alpha <= 2.0 / (mu + l_smooth) * (1.0 + 1e-12)) {
            return Err(invalid(format!("strongly convex envelope needs 0 < alpha <= 2/(mu+L), got {alpha}")));
        }
        let diff = z0.checked_sub(zstar)?;
        let n = diff.n();
        let nf = n as f64;
        let constant = match regime {
            BoundRegime::Cyclic(order) => log_factor(n) / nf * pi_norm_sq(&diff, order)?,
            BoundRegime::Reshuffle | BoundRegime::ShuffleOnce => diff.norm_sq() / nf,
        };
        let rate = (1.0 - 2.0 * theta * alpha * mu * l_smooth / (mu + l_smooth)).max(0.0);
        Ok(Self { constant, rate })
    }

    pub fn at(&self, k: u64) -> f64 {
        if k == 0 {
            return self.constant;
        }
        self.rate.powf(k as f64) * self.constant
    }
}

#[allow(clippy::too_many_arguments)]
pub fn bound_convex(
    k: u64,
    alpha: f64,
    theta: f64,
    l_smooth: f64,
    z0: &ZTable,
    zstar: &ZTable,
    regime: BoundRegime<'_>,
) -> Result<f64> {
    Ok(ConvexEnvelope::new(alpha, theta, l_smooth, z0, zstar, regime)?.at(k))
}

#[allow(clippy::too_many_arguments)]
pub fn bound_strongly_convex(
    k: u64,
    alpha: f64,
    theta: f64,
    l_smooth: f64,
    mu: f64,
    z0: &ZTable,
    zstar: &ZTable,
    regime: BoundRegime<'_>,
) -> Result<f64> {
    Ok(StronglyConvexEnvelope::new(alpha, theta, l_smooth, mu, z0, zstar, regime)?.at(k))
}
