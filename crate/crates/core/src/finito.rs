//! Prox-DFinito: damped proximal Finito/MISO.
//!
//! Two realisations of one epoch are provided. [`epoch_step`] follows the
//! textbook loop and damps against a snapshot of the epoch-start table;
//! [`epoch_step_efficient`] folds the damping into each block update and
//! keeps only a `d`-vector snapshot of `zbar`. Both recompute `zbar` from the
//! table at the epoch boundary.
//!
//! The block operators `T_i` and `T_pi` are exposed for the operator-level
//! checks in [`crate::verify`].

use crate::diagnostics::{
    grad_map_residual, pi_norm_sq, BoundRegime, ConvexEnvelope, Flags, StronglyConvexEnvelope,
    TraceRecord,
};
use crate::error::{invalid, Error, Result};
use crate::model::{MemoryState, ProblemInstance, Vector, ZTable};
use crate::prox::{prox, prox_in_place};
use crate::sampling::{
    epoch_order, update_importance, EpochOrder, ImportanceVector, Permutation, Regime,
    SamplingPlan,
};

fn check_table(p: &ProblemInstance, z: &ZTable) -> Result<()> {
    if z.n() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), got: z.n() });
    }
    if z.d() != p.d() {
        return Err(Error::DimensionMismatch { expected: p.d(), got: z.d() });
    }
    Ok(())
}

/// `T_i z`: replace block `i` by `(I - alpha grad f_i)(prox(mean(z)))`.
pub fn apply_ti(p: &ProblemInstance, i: usize, z: &ZTable, alpha: f64) -> Result<ZTable> {
    let mut out = z.clone();
    apply_ti_in_place(p, i, &mut out, alpha)?;
    Ok(out)
}

fn apply_ti_in_place(p: &ProblemInstance, i: usize, z: &mut ZTable, alpha: f64) -> Result<()> {
    check_table(p, z)?;
    if i >= p.n() {
        return Err(Error::IndexOutOfRange { index: i, n: p.n() });
    }
    let x = prox(p.regularizer(), alpha, &z.mean())?;
    let g = p.grad_component(i, &x)?;
    z.block_mut(i).copy_from(&(&x - g * alpha));
    Ok(())
}

/// `T_pi = T_{pi(n)} o ... o T_{pi(1)}`, each block operator applied literally.
pub fn apply_tpi(p: &ProblemInstance, order: &Permutation, z: &ZTable, alpha: f64) -> Result<ZTable> {
    if order.len() != p.n() {
        return Err(Error::InvalidPermutation(format!(
            "order has length {} but n = {}",
            order.len(),
            p.n()
        )));
    }
    let mut out = z.clone();
    for &i in order.as_slice() {
        apply_ti_in_place(p, i, &mut out, alpha)?;
    }
    Ok(out)
}

/// `S_pi z = (1 - theta) z + theta T_pi z`.
pub fn apply_spi(
    p: &ProblemInstance,
    order: &Permutation,
    z: &ZTable,
    alpha: f64,
    theta: f64,
) -> Result<ZTable> {
    z.lerp(&apply_tpi(p, order, z, alpha)?, theta)
}

fn check_state(p: &ProblemInstance, s: &MemoryState) -> Result<()> {
    check_table(p, &s.z)?;
    if s.zbar.len() != p.d() {
        return Err(Error::DimensionMismatch { expected: p.d(), got: s.zbar.len() });
    }
    Ok(())
}

/// One epoch of the literal algorithm. `indices` may contain repeats
/// (uniform sampling); damping is still applied against the epoch start.
pub fn epoch_step(p: &ProblemInstance, s: &MemoryState, indices: &[usize]) -> Result<MemoryState> {
    epoch_step_observed(p, s, indices, &mut |_| {})
}

/// [`epoch_step`] reporting every inner iterate `x^{t-1}` to `observe`.
pub fn epoch_step_observed(
    p: &ProblemInstance,
    s: &MemoryState,
    indices: &[usize],
    observe: &mut dyn FnMut(&Vector),
) -> Result<MemoryState> {
    check_state(p, s)?;
    let n = p.n() as f64;
    let alpha = s.alpha;
    let mut next = s.clone();
    let mut x = Vector::zeros(p.d());
    let mut g = Vector::zeros(p.d());
    for &i in indices {
        if i >= p.n() {
            return Err(Error::IndexOutOfRange { index: i, n: p.n() });
        }
        x.copy_from(&next.zbar);
        prox_in_place(p.regularizer(), alpha, &mut x)?;
        observe(&x);
        p.grad_component_into(i, &x, &mut g)?;
        let new_block = &x - &g * alpha;
        next.zbar += (&new_block - next.z.block(i)) / n;
        next.z.block_mut(i).copy_from(&new_block);
    }
    if s.theta < 1.0 {
        next.z = s.z.lerp(&next.z, s.theta)?;
        next.zbar = &s.zbar * (1.0 - s.theta) + &next.zbar * s.theta;
    }
    next.recompute_zbar();
    Ok(next)
}

/// One epoch of the memory-lean variant, updating `s` in place.
///
/// Allocates only `O(d)` scratch space; requires a permutation because the
/// folded damping relies on each block being visited once.
pub fn epoch_step_efficient(p: &ProblemInstance, s: &mut MemoryState, order: &Permutation) -> Result<()> {
    epoch_step_efficient_observed(p, s, order, &mut |_| {})
}

pub fn epoch_step_efficient_observed(
    p: &ProblemInstance,
    s: &mut MemoryState,
    order: &Permutation,
    observe: &mut dyn FnMut(&Vector),
) -> Result<()> {
    check_state(p, s)?;
    if order.len() != p.n() {
        return Err(Error::InvalidPermutation(format!(
            "order has length {} but n = {}",
            order.len(),
            p.n()
        )));
    }
    let n = p.n() as f64;
    let (alpha, theta) = (s.alpha, s.theta);
    let zbar_start = s.zbar.clone();
    let mut x = Vector::zeros(p.d());
    let mut g = Vector::zeros(p.d());
    for &i in order.as_slice() {
        x.copy_from(&s.zbar);
        prox_in_place(p.regularizer(), alpha, &mut x)?;
        observe(&x);
        p.grad_component_into(i, &x, &mut g)?;
        // g <- d_i = x - alpha grad f_i(x) - z_i
        g *= -alpha;
        g += &x;
        g -= s.z.block(i);
        s.zbar.axpy(1.0 / n, &g, 1.0);
        s.z.block_mut(i).axpy(theta, &g, 1.0);
    }
    // zbar damping; recompute_zbar below supersedes rounding in it
    s.zbar.axpy(1.0 - theta, &zbar_start, theta);
    s.recompute_zbar();
    Ok(())
}

/// Which epoch realisation [`run`] uses for permutation epochs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Implementation {
    Literal,
    #[default]
    Efficient,
}

#[derive(Clone, Debug)]
pub struct DampedRunConfig {
    pub alpha: f64,
    pub theta: f64,
    pub epochs: u64,
    pub plan: SamplingPlan,
    pub trace_every: u64,
    pub implementation: Implementation,
}

impl DampedRunConfig {
    pub fn new(alpha: f64, theta: f64, epochs: u64, plan: SamplingPlan) -> Self {
        Self { alpha, theta, epochs, plan, trace_every: 1, implementation: Implementation::Efficient }
    }

    pub fn trace_every(mut self, every: u64) -> Self {
        self.trace_every = every;
        self
    }

    pub fn implementation(mut self, imp: Implementation) -> Self {
        self.implementation = imp;
        self
    }
}

/// Reference solution used for distances and envelopes.
#[derive(Clone, Debug)]
pub struct Reference {
    pub xstar: Vector,
    pub zstar: ZTable,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub state: MemoryState,
    pub trace: Vec<TraceRecord>,
}

impl RunResult {
    /// `x = prox(zbar)` of the final state.
    pub fn x(&self, p: &ProblemInstance) -> Result<Vector> {
        prox(p.regularizer(), self.state.alpha, &self.state.zbar)
    }
}

struct Envelopes {
    convex: Option<ConvexEnvelope>,
    sc: Option<StronglyConvexEnvelope>,
    flags: Flags,
}

fn envelopes(
    p: &ProblemInstance,
    cfg: &DampedRunConfig,
    z0: &ZTable,
    reference: Option<&Reference>,
) -> Result<Envelopes> {
    let l = p.l_smooth();
    let mu = p.mu();
    let alpha = cfg.alpha;
    let mut flags = Flags {
        alpha_above_convex_limit: alpha > 2.0 / l * (1.0 + 1e-12),
        alpha_above_sc_limit: mu > 0.0 && alpha > 2.0 / (mu + l) * (1.0 + 1e-12),
        uniform_mode: !cfg.plan.is_without_replacement(),
        expectation_bound: false,
    };
    let mut env = Envelopes { convex: None, sc: None, flags };
    let Some(reference) = reference else { return Ok(env) };
    // fixed order for the pathwise envelopes; shuffle-once is one fixed order per run
    let fixed_order = match cfg.plan.regime() {
        Regime::Cyclic { order } => Some(order.clone()),
        Regime::ShuffleOnce { .. } => epoch_order(&cfg.plan, 0, None)?.as_permutation().cloned(),
        _ => None,
    };
    let regime = match (cfg.plan.regime(), fixed_order.as_ref()) {
        (_, Some(order)) => BoundRegime::Cyclic(order),
        (Regime::Reshuffle { .. }, None) => {
            flags.expectation_bound = true;
            BoundRegime::Reshuffle
        }
        _ => return Ok(env),
    };
    env.flags = flags;
    if !flags.alpha_above_convex_limit && cfg.theta < 1.0 {
        env.convex = Some(ConvexEnvelope::new(alpha, cfg.theta, l, z0, &reference.zstar, regime.clone())?);
    }
    if mu > 0.0 && !flags.alpha_above_sc_limit {
        env.sc = Some(StronglyConvexEnvelope::new(alpha, cfg.theta, l, mu, z0, &reference.zstar, regime)?);
    }
    Ok(env)
}

fn record(
    p: &ProblemInstance,
    s: &MemoryState,
    epoch: u64,
    grad_evals: f64,
    pi_residual: Option<f64>,
    reference: Option<&Reference>,
    env: &Envelopes,
) -> Result<TraceRecord> {
    let res = grad_map_residual(p, &s.zbar, s.alpha)?;
    let dist = match reference {
        Some(r) => Some((prox(p.regularizer(), s.alpha, &s.zbar)? - &r.xstar).norm_squared()),
        None => None,
    };
    Ok(TraceRecord {
        epoch,
        grad_evals,
        grad_map_residual_sq: res.true_min,
        prox_residual_sq: Some(res.prox_certified),
        dist_sq_to_opt: dist,
        pi_norm_residual_sq: pi_residual,
        bound_convex: env.convex.map(|e| e.at(epoch)),
        bound_sc: env.sc.map(|e| e.at(epoch)),
        flags: env.flags,
    })
}

/// Runs `cfg.epochs` epochs from `z0`, tracing every `cfg.trace_every` epochs
/// (the initial and final states are always traced).
///
/// Step sizes beyond the theoretical limits are accepted; the records carry
/// the corresponding flags and omit the uncertified envelopes.
pub fn run(
    p: &ProblemInstance,
    cfg: &DampedRunConfig,
    z0: &ZTable,
    reference: Option<&Reference>,
) -> Result<RunResult> {
    check_table(p, z0)?;
    if cfg.plan.n() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), got: cfg.plan.n() });
    }
    if cfg.trace_every == 0 {
        return Err(invalid("trace_every must be >= 1"));
    }
    if let Some(r) = reference {
        check_table(p, &r.zstar)?;
    }
    let mut state = MemoryState::new(z0.clone(), cfg.alpha, cfg.theta)?;
    let env = envelopes(p, cfg, z0, reference)?;
    let mut importance = cfg.plan.needs_importance().then(|| ImportanceVector::initial(z0));
    let mut trace = vec![record(p, &state, 0, 0.0, None, reference, &env)?];
    for k in 0..cfg.epochs {
        let order = epoch_order(&cfg.plan, k, importance.as_ref())?;
        let traced = (k + 1) % cfg.trace_every == 0 || k + 1 == cfg.epochs;
        let snapshot = traced.then(|| state.z.clone());
        match (&order, cfg.implementation) {
            (EpochOrder::Permutation(pi), Implementation::Efficient) => {
                epoch_step_efficient(p, &mut state, pi)?
            }
            _ => state = epoch_step(p, &state, order.indices())?,
        }
        if let (Some(w), Regime::Adaptive { gamma }) = (importance.as_ref(), cfg.plan.regime()) {
            importance = Some(update_importance(w, z0, &state.z, *gamma)?);
        }
        if let Some(prev) = snapshot {
            let pi_res = match order.as_permutation() {
                Some(pi) => Some(pi_norm_sq(&state.z.checked_sub(&prev)?, pi)?),
                None => None,
            };
            trace.push(record(p, &state, k + 1, (k + 1) as f64, pi_res, reference, &env)?);
        }
    }
    Ok(RunResult { state, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Components, Regularizer};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ls(seed: u64, n: usize, d: usize, reg: Regularizer) -> ProblemInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<DMatrix<f64>> =
            (0..n).map(|_| DMatrix::from_fn(d + 1, d, |_, _| rng.random_range(-1.0..1.0))).collect();
        let b = (0..n).map(|_| Vector::from_fn(d + 1, |_, _| rng.random_range(-1.0..1.0))).collect();
        let l = a
            .iter()
            .map(|m| (m.transpose() * m).symmetric_eigenvalues().max())
            .fold(0.0, f64::max);
        ProblemInstance::new(Components::LeastSquares { a, b }, reg, l, 0.0).unwrap()
    }

    fn random_table(seed: u64, n: usize, d: usize) -> ZTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ZTable::from_blocks(&(0..n).map(|_| Vector::from_fn(d, |_, _| rng.random_range(-2.0..2.0))).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn ti_touches_only_block_i() {
        let p = random_ls(1, 5, 3, Regularizer::L1(0.1));
        let z = random_table(2, 5, 3);
        let out = apply_ti(&p, 2, &z, 1.0 / p.l_smooth()).unwrap();
        for j in 0..5 {
            if j != 2 {
                assert_eq!(out.block(j), z.block(j));
            }
        }
        assert_ne!(out.block(2), z.block(2));
        assert!(apply_ti(&p, 5, &z, 0.1).is_err());
    }

    #[test]
    fn single_block_ti_is_gradient_step() {
        let p = random_ls(3, 1, 2, Regularizer::None);
        let z = random_table(4, 1, 2);
        let alpha = 0.3;
        let x = z.block(0).into_owned();
        let expect = &x - p.grad_component(0, &x).unwrap() * alpha;
        let out = apply_ti(&p, 0, &z, alpha).unwrap();
        assert!((out.block(0) - expect).amax() < 1e-15);
        let pi = Permutation::identity(1);
        assert_eq!(apply_tpi(&p, &pi, &z, alpha).unwrap(), out);
    }

    #[test]
    fn undamped_epoch_matches_tpi() {
        let p = random_ls(5, 6, 3, Regularizer::L1(0.05));
        let z = random_table(6, 6, 3);
        let alpha = 1.0 / p.l_smooth();
        let pi = Permutation::new(vec![3, 0, 5, 1, 4, 2]).unwrap();
        let t = apply_tpi(&p, &pi, &z, alpha).unwrap();
        let s = MemoryState::new(z.clone(), alpha, 1.0).unwrap();
        let lit = epoch_step(&p, &s, pi.as_slice()).unwrap();
        assert!(lit.z.max_abs_diff(&t) <= 1e-12);
        let mut eff = s.clone();
        epoch_step_efficient(&p, &mut eff, &pi).unwrap();
        assert!(eff.z.max_abs_diff(&t) <= 1e-12);
    }

    #[test]
    fn damped_epoch_is_convex_combination() {
        let p = random_ls(7, 5, 2, Regularizer::L2Sq(0.2));
        let z = random_table(8, 5, 2);
        let alpha = 1.5 / p.l_smooth();
        let pi = Permutation::new(vec![4, 2, 0, 1, 3]).unwrap();
        for theta in [0.3, 0.9] {
            let s = MemoryState::new(z.clone(), alpha, theta).unwrap();
            let expect = apply_spi(&p, &pi, &z, alpha, theta).unwrap();
            assert!(epoch_step(&p, &s, pi.as_slice()).unwrap().z.max_abs_diff(&expect) <= 1e-12);
        }
        let tiny = 1e-8;
        let s = MemoryState::new(z.clone(), alpha, tiny).unwrap();
        let out = epoch_step(&p, &s, pi.as_slice()).unwrap();
        let full = apply_tpi(&p, &pi, &z, alpha).unwrap();
        // per-entry change is theta * (T z - z)
        let lhs = out.z.checked_sub(&z).unwrap();
        let rhs = full.checked_sub(&z).unwrap();
        for (a, b) in lhs.as_matrix().iter().zip(rhs.as_matrix().iter()) {
            assert!((a - tiny * b).abs() <= 1e-14);
        }
    }

    #[test]
    fn efficient_epoch_rejects_draws() {
        let p = random_ls(9, 3, 2, Regularizer::None);
        let mut s = MemoryState::new(random_table(1, 3, 2), 0.1, 0.5).unwrap();
        assert!(epoch_step_efficient(&p, &mut s, &Permutation::identity(2)).is_err());
        // literal epoch accepts repeats
        assert!(epoch_step(&p, &s, &[0, 0, 2]).is_ok());
        assert!(epoch_step(&p, &s, &[0, 3, 2]).is_err());
    }

    #[test]
    fn zbar_drift_stays_small_before_recompute() {
        let n = 400;
        let d = 30;
        let p = random_ls(10, n, d, Regularizer::None);
        let mut s = MemoryState::new(random_table(11, n, d), 1.0 / p.l_smooth(), 1.0).unwrap();
        let pi = Permutation::identity(n);
        let mut drift = 0.0f64;
        let zbar0 = s.zbar.clone();
        let mut x = Vector::zeros(d);
        let mut g = Vector::zeros(d);
        // incremental running average only, compared to the exact mean afterwards
        for &i in pi.as_slice() {
            x.copy_from(&s.zbar);
            p.grad_component_into(i, &x, &mut g).unwrap();
            let new_block = &x - &g * s.alpha;
            s.zbar += (&new_block - s.z.block(i)) / n as f64;
            s.z.block_mut(i).copy_from(&new_block);
        }
        drift = drift.max(s.zbar_drift());
        assert!(drift <= 1e-10, "drift {drift}");
        assert_ne!(zbar0, s.zbar);
    }

    #[test]
    fn run_traces_and_flags() {
        let p = random_ls(12, 4, 2, Regularizer::None);
        let plan = SamplingPlan::cyclic(Permutation::identity(4));
        let alpha = 3.0 / p.l_smooth();
        let cfg = DampedRunConfig::new(alpha, 0.5, 5, plan).trace_every(2);
        let z0 = ZTable::zeros(4, 2);
        let res = run(&p, &cfg, &z0, None).unwrap();
        let epochs: Vec<u64> = res.trace.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 2, 4, 5]);
        assert!(res.trace.iter().all(|r| r.flags.alpha_above_convex_limit));
        assert!(res.trace.windows(2).all(|w| w[0].grad_evals < w[1].grad_evals));

        let zero = DampedRunConfig::new(0.1, 0.5, 0, SamplingPlan::cyclic(Permutation::identity(4)));
        assert_eq!(run(&p, &zero, &z0, None).unwrap().trace.len(), 1);
    }
}
