//! Turning a config into traces: problem loading, step-size resolution and
//! one run per seed.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use shuffle_vr::baselines::{
    finito_uniform_run, prox_gd_run, saga_run, sgd_run, svrg_run, theoretical_step_size, Algorithm, OrderFamily,
    StepSchedule, StepSizeRule, SvrgOptions, Tracing,
};
use shuffle_vr::diagnostics::TraceRecord;
use shuffle_vr::finito::{self, DampedRunConfig, Reference};
use shuffle_vr::problems::HeterogeneityCertificate;
use shuffle_vr::reference::{solve_reference, zstar_table, DEFAULT_TOL};
use shuffle_vr::sampling::{epoch_rng, optimal_cyclic_order, seeded_permutation, ImportanceVector};
use shuffle_vr::{Permutation, ProblemInstance, Regime, SamplingPlan, Vector, ZTable};

use crate::config::{AlgorithmName, ExperimentConfig, NamedOrder, OrderSpec, SamplingSpec, ScheduleName, StepSpec};

/// Environment variable capping the number of concurrent runs.
pub const THREADS_ENV: &str = "SHUFFLE_VR_THREADS";

/// A loaded problem with its reference minimizer.
pub struct Prepared {
    pub p: ProblemInstance,
    pub certificate: Option<HeterogeneityCertificate>,
    pub xstar: Vector,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let loaded = cfg.problem.load(std::path::Path::new(""))?;
        let xstar = solve_reference(&loaded.instance, DEFAULT_TOL).context("computing the reference minimizer")?;
        Ok(Self { p: loaded.instance, certificate: loaded.certificate, xstar })
    }

    /// `z*` for step `alpha`.
    pub fn zstar(&self, alpha: f64) -> Result<ZTable> {
        Ok(zstar_table(&self.p, &self.xstar, alpha)?)
    }
}

/// One point of an experiment: everything except the seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub algorithm: AlgorithmName,
    pub sampling: SamplingSpec,
    pub alpha: f64,
    pub theta: f64,
    pub gamma: Option<f64>,
    pub epochs: u64,
    pub trace_every: u64,
    pub schedule: ScheduleName,
}

impl Cell {
    pub fn from_config(cfg: &ExperimentConfig, p: &ProblemInstance) -> Result<Self> {
        Ok(Self {
            algorithm: cfg.algorithm,
            sampling: cfg.sampling.clone(),
            alpha: resolve_alpha(cfg.algorithm, &cfg.sampling, &cfg.alpha, p)?,
            theta: cfg.theta,
            gamma: cfg.gamma,
            epochs: cfg.epochs,
            trace_every: cfg.trace_every,
            schedule: cfg.schedule,
        })
    }
}

/// Resolves `"theory"`: `2/(L+mu)` for dfinito, the table entries for SVRG and SAGA.
pub fn resolve_alpha(algorithm: AlgorithmName, sampling: &SamplingSpec, step: &StepSpec, p: &ProblemInstance) -> Result<f64> {
    step.validate()?;
    if let StepSpec::Value(a) = step {
        return Ok(*a);
    }
    let family = match sampling {
        SamplingSpec::Cyclic { .. } => OrderFamily::Cyclic,
        _ => OrderFamily::Rr,
    };
    let algo = match algorithm {
        AlgorithmName::Dfinito => return Ok(2.0 / (p.l_smooth() + p.mu())),
        AlgorithmName::Svrg => Algorithm::Svrg,
        AlgorithmName::Saga => Algorithm::Saga,
        other => bail!("\"theory\" step size is not defined for {other}"),
    };
    let rule = StepSizeRule::new(algo, family);
    theoretical_step_size(rule, p.l_smooth(), p.mu(), p.n())
        .with_context(|| format!("resolving the theoretical step size for {rule}"))
}

fn fixed_order(prep: &Prepared, order: &OrderSpec, alpha: f64, seed: u64) -> Result<Permutation> {
    let n = prep.p.n();
    Ok(match order {
        OrderSpec::Explicit(list) => Permutation::from_one_based(list)?,
        OrderSpec::Named(NamedOrder::Identity) => Permutation::identity(n),
        OrderSpec::Named(NamedOrder::Reversed) => Permutation::identity(n).reversed(),
        OrderSpec::Named(NamedOrder::Random) => seeded_permutation(n, &mut epoch_rng(seed, 0)),
        OrderSpec::Named(named @ (NamedOrder::Optimal | NamedOrder::Worst)) => {
            let z0 = ZTable::zeros(n, prep.p.d());
            let scores = ImportanceVector::from_tables(&z0, &prep.zstar(alpha)?)?;
            let best = optimal_cyclic_order(&scores)?;
            if *named == NamedOrder::Worst {
                best.reversed()
            } else {
                best
            }
        }
    })
}

fn plan(prep: &Prepared, cell: &Cell, seed: u64) -> Result<SamplingPlan> {
    let regime = match &cell.sampling {
        SamplingSpec::Cyclic { order } => Regime::Cyclic { order: fixed_order(prep, order, cell.alpha, seed)? },
        SamplingSpec::Reshuffle => Regime::Reshuffle { seed },
        SamplingSpec::ShuffleOnce => Regime::ShuffleOnce { seed },
        SamplingSpec::Uniform => Regime::Uniform { seed },
        SamplingSpec::Adaptive => {
            Regime::Adaptive { gamma: cell.gamma.context("adaptive sampling needs \"gamma\"")? }
        }
    };
    Ok(SamplingPlan::new(regime, prep.p.n())?)
}

/// Runs one cell for one seed. Every algorithm starts from `x = 0` (`z = 0`).
pub fn run_cell(prep: &Prepared, cell: &Cell, seed: u64) -> Result<Vec<TraceRecord>> {
    let p = &prep.p;
    let x0 = Vector::zeros(p.d());
    let tracing = Tracing { every: cell.trace_every, xstar: Some(&prep.xstar) };
    let trace = match cell.algorithm {
        AlgorithmName::Dfinito => {
            let reference = Reference { xstar: prep.xstar.clone(), zstar: prep.zstar(cell.alpha)? };
            let cfg = DampedRunConfig::new(cell.alpha, cell.theta, cell.epochs, plan(prep, cell, seed)?)
                .trace_every(cell.trace_every);
            finito::run(p, &cfg, &ZTable::zeros(p.n(), p.d()), Some(&reference))?.trace
        }
        AlgorithmName::FinitoUniform => {
            let reference = Reference { xstar: prep.xstar.clone(), zstar: prep.zstar(cell.alpha)? };
            let z0 = ZTable::zeros(p.n(), p.d());
            finito_uniform_run(p, cell.alpha, cell.theta, cell.epochs, seed, &z0, cell.trace_every, Some(&reference))?
                .trace
        }
        AlgorithmName::ProxGd => prox_gd_run(p, cell.alpha, cell.epochs, &x0, tracing)?.trace,
        AlgorithmName::Sgd => {
            let schedule = match cell.schedule {
                ScheduleName::Constant => StepSchedule::Constant(cell.alpha),
                ScheduleName::InvSqrt => StepSchedule::InvSqrt(cell.alpha),
            };
            sgd_run(p, &plan(prep, cell, seed)?, schedule, cell.epochs, &x0, tracing)?.trace
        }
        AlgorithmName::Svrg => {
            svrg_run(p, &plan(prep, cell, seed)?, cell.alpha, cell.epochs, &x0, SvrgOptions::default(), tracing)?
                .trace
        }
        AlgorithmName::Saga => saga_run(p, &plan(prep, cell, seed)?, cell.alpha, cell.epochs, &x0, tracing)?.0.trace,
    };
    Ok(trace)
}

/// Pool sized by [`THREADS_ENV`] when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads: usize = v.trim().parse().ok().filter(|&t| t > 0).with_context(|| {
            format!("{THREADS_ENV} must be a positive integer, got {v:?}")
        })?;
        builder = builder.num_threads(threads);
    }
    builder.build().context("starting the thread pool")
}

/// Runs every `(cell, seed)` pair concurrently; results keep the input order.
pub fn run_all(prep: &Prepared, cells: &[Cell], seeds: &[u64]) -> Result<Vec<Vec<Vec<TraceRecord>>>> {
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let results: Vec<Result<Vec<TraceRecord>>> = thread_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(c, s)| run_cell(prep, &cells[c], s).with_context(|| format!("cell {c}, seed {s}")))
            .collect()
    });
    let mut out: Vec<Vec<Vec<TraceRecord>>> = vec![Vec::with_capacity(seeds.len()); cells.len()];
    for ((c, _), r) in jobs.into_iter().zip(results) {
        out[c].push(r?);
    }
    Ok(out)
}
