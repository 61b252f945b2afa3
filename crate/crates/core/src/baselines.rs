//! Comparison optimizers and their theoretical step sizes.
//!
//! Every trace counts component gradient evaluations in units of `n`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{Flags, TraceRecord};
use crate::error::{invalid, Error, Result};
use crate::finito::{self, DampedRunConfig, Reference, RunResult};
use crate::model::{ProblemInstance, Vector, ZTable};
use crate::prox::{prox_in_place, subgradient_residual};
use crate::sampling::{epoch_order, Regime, SamplingPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dfinito,
    Svrg,
    Saga,
}

/// Order family of a step-size rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderFamily {
    Rr,
    Cyclic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSizeRule {
    pub algorithm: Algorithm,
    pub regime: OrderFamily,
}

impl StepSizeRule {
    pub fn new(algorithm: Algorithm, regime: OrderFamily) -> Self {
        Self { algorithm, regime }
    }

    pub const ALL: [StepSizeRule; 6] = [
        StepSizeRule { algorithm: Algorithm::Dfinito, regime: OrderFamily::Rr },
        StepSizeRule { algorithm: Algorithm::Dfinito, regime: OrderFamily::Cyclic },
        StepSizeRule { algorithm: Algorithm::Svrg, regime: OrderFamily::Rr },
        StepSizeRule { algorithm: Algorithm::Svrg, regime: OrderFamily::Cyclic },
        StepSizeRule { algorithm: Algorithm::Saga, regime: OrderFamily::Rr },
        StepSizeRule { algorithm: Algorithm::Saga, regime: OrderFamily::Cyclic },
    ];
}

impl fmt::Display for StepSizeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.algorithm {
            Algorithm::Dfinito => "dfinito",
            Algorithm::Svrg => "svrg",
            Algorithm::Saga => "saga",
        };
        let r = match self.regime {
            OrderFamily::Rr => "rr",
            OrderFamily::Cyclic => "cyclic",
        };
        write!(f, "{a}-{r}")
    }
}

impl FromStr for StepSizeRule {
    type Err = Error;

    /// Parses `"<algorithm>-<rr|cyclic>"`, e.g. `"saga-rr"`.
    fn from_str(s: &str) -> Result<Self> {
        StepSizeRule::ALL
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| Error::Unsupported(format!("no theoretical step size for {s:?}")))
    }
}

/// Step sizes of the best known strongly convex analyses.
pub fn theoretical_step_size(rule: StepSizeRule, l: f64, mu: f64, n: usize) -> Result<f64> {
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(invalid(format!("theoretical step sizes need 0 < mu <= L, got mu={mu}, L={l}")));
    }
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    let nf = n as f64;
    let sqrt2 = std::f64::consts::SQRT_2;
    let alpha = match (rule.algorithm, rule.regime) {
        (Algorithm::Dfinito, _) => 2.0 / (l + mu),
        (Algorithm::Svrg, OrderFamily::Rr) => {
            if nf >= (2.0 * l / mu) / (1.0 - mu / (sqrt2 * l)) {
                1.0 / (sqrt2 * l * nf)
            } else {
                (mu / l).sqrt() / (2.0 * sqrt2 * l * nf)
            }
        }
        (Algorithm::Svrg, OrderFamily::Cyclic) => (mu / l).sqrt() / (4.0 * l * nf),
        (Algorithm::Saga, OrderFamily::Rr) => mu / (11.0 * l * l * nf),
        (Algorithm::Saga, OrderFamily::Cyclic) => mu / (65.0 * l * l * (nf * (nf + 1.0)).sqrt()),
    };
    Ok(alpha)
}

/// Trace cadence and optional reference point.
#[derive(Clone, Copy, Debug)]
pub struct Tracing<'a> {
    pub every: u64,
    pub xstar: Option<&'a Vector>,
}

impl Default for Tracing<'_> {
    fn default() -> Self {
        Self { every: 1, xstar: None }
    }
}

impl<'a> Tracing<'a> {
    pub fn with_reference(xstar: &'a Vector) -> Self {
        Self { every: 1, xstar: Some(xstar) }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub x: Vector,
    pub trace: Vec<TraceRecord>,
}

struct Tracer<'a> {
    tracing: Tracing<'a>,
    epochs: u64,
    flags: Flags,
    trace: Vec<TraceRecord>,
}

impl<'a> Tracer<'a> {
    fn new(tracing: Tracing<'a>, epochs: u64, plan: Option<&SamplingPlan>) -> Result<Self> {
        if tracing.every == 0 {
            return Err(invalid("trace_every must be >= 1"));
        }
        let flags = Flags { uniform_mode: plan.is_some_and(|p| !p.is_without_replacement()), ..Flags::default() };
        Ok(Self { tracing, epochs, flags, trace: Vec::new() })
    }

    fn push(&mut self, p: &ProblemInstance, epoch: u64, grad_evals: f64, x: &Vector) -> Result<()> {
        if epoch != 0 && !epoch.is_multiple_of(self.tracing.every) && epoch != self.epochs {
            return Ok(());
        }
        let g = p.grad_full(x)?;
        self.trace.push(TraceRecord {
            epoch,
            grad_evals,
            grad_map_residual_sq: subgradient_residual(p.regularizer(), x, &g)?,
            prox_residual_sq: None,
            dist_sq_to_opt: self.tracing.xstar.map(|s| (x - s).norm_squared()),
            pi_norm_residual_sq: None,
            bound_convex: None,
            bound_sc: None,
            flags: self.flags,
        });
        Ok(())
    }
}

fn check_start(p: &ProblemInstance, alpha: f64, x0: &Vector) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be > 0, got {alpha}")));
    }
    if x0.len() != p.d() {
        return Err(Error::DimensionMismatch { expected: p.d(), got: x0.len() });
    }
    Ok(())
}

fn check_plan(p: &ProblemInstance, plan: &SamplingPlan) -> Result<()> {
    if plan.n() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), got: plan.n() });
    }
    if plan.needs_importance() {
        return Err(Error::Unsupported("adaptive sampling needs a Finito table".into()));
    }
    Ok(())
}

/// `x <- prox(x - alpha grad F(x))`; one epoch per step.
pub fn prox_gd_run(p: &ProblemInstance, alpha: f64, epochs: u64, x0: &Vector, tracing: Tracing<'_>) -> Result<BaselineRun> {
    check_start(p, alpha, x0)?;
    let mut tr = Tracer::new(tracing, epochs, None)?;
    let mut x = x0.clone();
    tr.push(p, 0, 0.0, &x)?;
    for k in 1..=epochs {
        let g = p.grad_full(&x)?;
        x.axpy(-alpha, &g, 1.0);
        prox_in_place(p.regularizer(), alpha, &mut x)?;
        tr.push(p, k, k as f64, &x)?;
    }
    Ok(BaselineRun { x, trace: tr.trace })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha0", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant(f64),
    /// `alpha0 / sqrt(t + 1)` at the `t`-th inner step (0-based, global).
    InvSqrt(f64),
}

impl StepSchedule {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::InvSqrt(a) => a / ((t + 1) as f64).sqrt(),
        }
    }

    fn base(&self) -> f64 {
        match *self {
            StepSchedule::Constant(a) | StepSchedule::InvSqrt(a) => a,
        }
    }
}

/// Plain incremental gradient along the plan's orders. Smooth problems only.
pub fn sgd_run(
    p: &ProblemInstance,
    plan: &SamplingPlan,
    schedule: StepSchedule,
    epochs: u64,
    x0: &Vector,
    tracing: Tracing<'_>,
) -> Result<BaselineRun> {
    if !p.regularizer().is_zero() {
        return Err(Error::Unsupported("SGD does not handle a nonzero regularizer".into()));
    }
    check_start(p, schedule.base(), x0)?;
    check_plan(p, plan)?;
    let mut tr = Tracer::new(tracing, epochs, Some(plan))?;
    let mut x = x0.clone();
    let mut g = Vector::zeros(p.d());
    let mut t = 0u64;
    tr.push(p, 0, 0.0, &x)?;
    for k in 0..epochs {
        for &i in epoch_order(plan, k, None)?.indices() {
            p.grad_component_into(i, &x, &mut g)?;
            x.axpy(-schedule.at(t), &g, 1.0);
            t += 1;
        }
        tr.push(p, k + 1, (k + 1) as f64, &x)?;
    }
    Ok(BaselineRun { x, trace: tr.trace })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvrgOptions {
    /// Epochs between full-gradient refreshes.
    pub snapshot_every: u64,
    /// `false` drops the control variate, leaving plain incremental steps.
    pub correction: bool,
}

impl Default for SvrgOptions {
    fn default() -> Self {
        Self { snapshot_every: 2, correction: true }
    }
}

/// SVRG with a periodic snapshot `y`: steps use
/// `grad f_i(x) - grad f_i(y) + grad F(y)`, followed by the prox.
pub fn svrg_run(
    p: &ProblemInstance,
    plan: &SamplingPlan,
    alpha: f64,
    epochs: u64,
    x0: &Vector,
    options: SvrgOptions,
    tracing: Tracing<'_>,
) -> Result<BaselineRun> {
    check_start(p, alpha, x0)?;
    check_plan(p, plan)?;
    if options.snapshot_every == 0 {
        return Err(invalid("snapshot_every must be >= 1"));
    }
    let nf = p.n() as f64;
    let r = p.regularizer();
    let mut tr = Tracer::new(tracing, epochs, Some(plan))?;
    let mut x = x0.clone();
    let mut y = x.clone();
    let mut full = Vector::zeros(p.d());
    let mut gx = Vector::zeros(p.d());
    let mut gy = Vector::zeros(p.d());
    let mut evals = 0u64;
    tr.push(p, 0, 0.0, &x)?;
    for k in 0..epochs {
        if options.correction && k % options.snapshot_every == 0 {
            y.copy_from(&x);
            full = p.grad_full(&y)?;
            evals += p.n() as u64;
        }
        for &i in epoch_order(plan, k, None)?.indices() {
            p.grad_component_into(i, &x, &mut gx)?;
            evals += 1;
            if options.correction {
                p.grad_component_into(i, &y, &mut gy)?;
                evals += 1;
                gx -= &gy;
                gx += &full;
            }
            x.axpy(-alpha, &gx, 1.0);
            prox_in_place(r, alpha, &mut x)?;
        }
        tr.push(p, k + 1, evals as f64 / nf, &x)?;
    }
    Ok(BaselineRun { x, trace: tr.trace })
}

/// SAGA gradient table with its incrementally maintained mean.
#[derive(Clone, Debug, PartialEq)]
pub struct SagaState {
    pub table: ZTable,
    pub mean: Vector,
}

impl SagaState {
    /// Table of `grad f_i(x)` for all `i`.
    pub fn at(p: &ProblemInstance, x: &Vector) -> Result<Self> {
        let mut table = ZTable::zeros(p.n(), p.d());
        let mut g = Vector::zeros(p.d());
        for i in 0..p.n() {
            p.grad_component_into(i, x, &mut g)?;
            table.block_mut(i).copy_from(&g);
        }
        let mean = table.mean();
        Ok(Self { table, mean })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SagaOptions {
    /// `false` drops the table correction, leaving plain incremental steps.
    pub correction: bool,
    /// Count the initial table fill as one pass of gradient evaluations.
    pub count_initial_fill: bool,
}

impl Default for SagaOptions {
    fn default() -> Self {
        Self { correction: true, count_initial_fill: true }
    }
}

/// SAGA with its table initialized at `x0`.
pub fn saga_run(
    p: &ProblemInstance,
    plan: &SamplingPlan,
    alpha: f64,
    epochs: u64,
    x0: &Vector,
    tracing: Tracing<'_>,
) -> Result<(BaselineRun, SagaState)> {
    check_start(p, alpha, x0)?;
    let state = SagaState::at(p, x0)?;
    saga_run_from(p, plan, alpha, epochs, x0, state, SagaOptions::default(), tracing)
}

/// SAGA from an explicit table.
#[allow(clippy::too_many_arguments)]
pub fn saga_run_from(
    p: &ProblemInstance,
    plan: &SamplingPlan,
    alpha: f64,
    epochs: u64,
    x0: &Vector,
    mut state: SagaState,
    options: SagaOptions,
    tracing: Tracing<'_>,
) -> Result<(BaselineRun, SagaState)> {
    check_start(p, alpha, x0)?;
    check_plan(p, plan)?;
    if state.table.n() != p.n() || state.table.d() != p.d() || state.mean.len() != p.d() {
        return Err(Error::DimensionMismatch { expected: p.n(), got: state.table.n() });
    }
    let nf = p.n() as f64;
    let r = p.regularizer();
    let mut tr = Tracer::new(tracing, epochs, Some(plan))?;
    let mut x = x0.clone();
    let mut g = Vector::zeros(p.d());
    let mut step = Vector::zeros(p.d());
    let start = if options.count_initial_fill { 1.0 } else { 0.0 };
    tr.push(p, 0, start, &x)?;
    for k in 0..epochs {
        for &i in epoch_order(plan, k, None)?.indices() {
            p.grad_component_into(i, &x, &mut g)?;
            step.copy_from(&g);
            if options.correction {
                step -= state.table.block(i);
                x.axpy(-alpha, &state.mean, 1.0);
                state.mean.axpy(1.0 / nf, &step, 1.0);
                state.table.block_mut(i).copy_from(&g);
            }
            x.axpy(-alpha, &step, 1.0);
            prox_in_place(r, alpha, &mut x)?;
        }
        tr.push(p, k + 1, start + (k + 1) as f64, &x)?;
    }
    Ok((BaselineRun { x, trace: tr.trace }, state))
}

/// Finito with `n` i.i.d. uniform draws per epoch, damped per `n` draws.
#[allow(clippy::too_many_arguments)]
pub fn finito_uniform_run(
    p: &ProblemInstance,
    alpha: f64,
    theta: f64,
    epochs: u64,
    seed: u64,
    z0: &ZTable,
    trace_every: u64,
    reference: Option<&Reference>,
) -> Result<RunResult> {
    let plan = SamplingPlan::new(Regime::Uniform { seed }, p.n())?;
    let cfg = DampedRunConfig::new(alpha, theta, epochs, plan).trace_every(trace_every);
    finito::run(p, &cfg, z0, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Components, Regularizer};
    use crate::sampling::Permutation;
    use nalgebra::DMatrix;

    fn rule(s: &str) -> StepSizeRule {
        s.parse().unwrap()
    }

    #[test]
    fn table_examples() {
        assert!((theoretical_step_size(rule("dfinito-rr"), 1.0, 0.1, 10).unwrap() - 2.0 / 1.1).abs() < 1e-15);
        assert!((theoretical_step_size(rule("saga-rr"), 1.0, 0.1, 10).unwrap() - 0.1 / 110.0).abs() < 1e-18);
        assert!((theoretical_step_size(rule("svrg-cyclic"), 1.0, 0.25, 4).unwrap() - 0.03125).abs() < 1e-17);
    }

    #[test]
    fn svrg_rr_branches() {
        let r = rule("svrg-rr");
        // threshold (2L/mu)/(1 - mu/(sqrt2 L)) at L=1, mu=0.5 is 4/(1-0.3536) = 6.19
        let big = theoretical_step_size(r, 1.0, 0.5, 7).unwrap();
        assert!((big - 1.0 / (std::f64::consts::SQRT_2 * 7.0)).abs() < 1e-15);
        let small = theoretical_step_size(r, 1.0, 0.5, 6).unwrap();
        assert!((small - 0.5f64.sqrt() / (2.0 * std::f64::consts::SQRT_2 * 6.0)).abs() < 1e-15);
    }

    #[test]
    fn step_size_errors() {
        assert!(theoretical_step_size(rule("saga-rr"), 1.0, 0.0, 10).is_err());
        assert!(theoretical_step_size(rule("saga-rr"), 1.0, 2.0, 10).is_err());
        assert!("sgd-rr".parse::<StepSizeRule>().is_err());
        for r in StepSizeRule::ALL {
            assert_eq!(r.to_string().parse::<StepSizeRule>().unwrap(), r);
        }
    }

    fn quad_1d() -> ProblemInstance {
        let a = vec![DMatrix::from_element(1, 1, 1.0)];
        let b = vec![Vector::from_element(1, 0.0)];
        ProblemInstance::new(Components::LeastSquares { a, b }, Regularizer::None, 1.0, 1.0).unwrap()
    }

    #[test]
    fn prox_gd_one_step() {
        let run = prox_gd_run(&quad_1d(), 1.0, 1, &Vector::from_element(1, 2.0), Tracing::default()).unwrap();
        assert_eq!(run.x[0], 0.0);
        assert_eq!(run.trace.len(), 2);
        assert_eq!(run.trace[1].grad_evals, 1.0);
    }

    #[test]
    fn prox_gd_l1_absorbs() {
        let p = quad_1d().with_regularizer(Regularizer::L1(10.0)).unwrap();
        let run = prox_gd_run(&p, 0.5, 5, &Vector::from_element(1, 3.0), Tracing::default()).unwrap();
        assert!(run.trace[1..].iter().all(|r| r.grad_map_residual_sq == 0.0));
        assert_eq!(run.x[0], 0.0);
    }

    #[test]
    fn sgd_rejects_composite_and_adaptive() {
        let p = quad_1d().with_regularizer(Regularizer::L1(0.1)).unwrap();
        let plan = SamplingPlan::cyclic(Permutation::identity(1));
        let x0 = Vector::from_element(1, 1.0);
        assert!(sgd_run(&p, &plan, StepSchedule::Constant(0.1), 1, &x0, Tracing::default()).is_err());
        let adaptive = SamplingPlan::new(Regime::Adaptive { gamma: 0.5 }, 1).unwrap();
        assert!(sgd_run(&quad_1d(), &adaptive, StepSchedule::Constant(0.1), 1, &x0, Tracing::default()).is_err());
    }

    #[test]
    fn inv_sqrt_schedule() {
        let s = StepSchedule::InvSqrt(2.0);
        assert_eq!(s.at(0), 2.0);
        assert_eq!(s.at(3), 1.0);
    }

    #[test]
    fn svrg_accounting() {
        let p = quad_1d();
        let plan = SamplingPlan::cyclic(Permutation::identity(1));
        let run = svrg_run(&p, &plan, 0.5, 4, &Vector::from_element(1, 1.0), SvrgOptions::default(), Tracing::default())
            .unwrap();
        let evals: Vec<f64> = run.trace.iter().map(|r| r.grad_evals).collect();
        assert_eq!(evals, vec![0.0, 3.0, 5.0, 8.0, 10.0]);
    }
}
