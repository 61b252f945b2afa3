//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string; the pure
//! functions behind them are usable (and tested) natively.

use serde::Serialize;
use shuffle_vr::diagnostics::{rho_ratio, TraceRecord};
use shuffle_vr::finito::{run, DampedRunConfig, Reference};
use shuffle_vr::problems::{gen_heterogeneous, gen_least_squares};
use shuffle_vr::reference::{solve_reference, zstar_table, DEFAULT_TOL};
use shuffle_vr::sampling::{epoch_rng, optimal_cyclic_order, seeded_permutation, ImportanceVector};
use shuffle_vr::{Permutation, Regime, Regularizer, SamplingPlan, ZTable};
use wasm_bindgen::prelude::*;

/// Upper limits keeping a page interaction under a second or so.
pub const MAX_N: usize = 1000;
pub const MAX_D: usize = 50;
pub const MAX_EPOCHS: u64 = 500;

fn check_size(n: usize, d: usize, epochs: u64) -> shuffle_vr::Result<()> {
    if n == 0 || n > MAX_N || d == 0 || d > MAX_D || epochs > MAX_EPOCHS {
        return Err(shuffle_vr::Error::InvalidParameter(format!(
            "demo limits: 1 <= n <= {MAX_N}, 1 <= d <= {MAX_D}, epochs <= {MAX_EPOCHS}"
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RhoProfile {
    /// `||z0_i - z*_i||^2` in index order.
    pub scores: Vec<f64>,
    pub rho: f64,
    pub rho_planted: f64,
    pub one_over_n: f64,
}

/// Importance scores and `rho` of a planted geometric profile `beta^(i-1)`.
pub fn rho_profile_data(n: usize, d: usize, beta: f64, seed: u64) -> shuffle_vr::Result<RhoProfile> {
    check_size(n, d, 0)?;
    let alpha = 1.0;
    let z0 = ZTable::zeros(n, d);
    let (p, cert) = gen_heterogeneous(seed, n, d, d, 0.1, 1.0, alpha, beta, &z0)?;
    let xstar = solve_reference(&p, DEFAULT_TOL)?;
    let zstar = zstar_table(&p, &xstar, alpha)?;
    let scores = ImportanceVector::from_tables(&z0, &zstar)?;
    let order = optimal_cyclic_order(&scores)?;
    Ok(RhoProfile {
        rho: rho_ratio(&z0, &zstar, &order)?,
        rho_planted: cert.rho_target(),
        one_over_n: 1.0 / n as f64,
        scores: scores.as_slice().to_vec(),
    })
}

#[derive(Debug, Serialize)]
pub struct Series {
    pub label: String,
    pub epoch: Vec<u64>,
    pub value: Vec<f64>,
}

fn series(label: &str, trace: &[TraceRecord], f: impl Fn(&TraceRecord) -> Option<f64>) -> Series {
    let mut s = Series { label: label.to_owned(), epoch: Vec::new(), value: Vec::new() };
    for r in trace {
        if let Some(v) = f(r) {
            s.epoch.push(r.epoch);
            s.value.push(v);
        }
    }
    s
}

#[derive(Debug, Serialize)]
pub struct Race {
    /// `||x - x*||^2` per epoch for each sampling rule.
    pub series: Vec<Series>,
}

/// Damped Finito on a heterogeneous instance under the optimal, a random and
/// the worst fixed order, and under reshuffling.
pub fn ordering_race_data(n: usize, d: usize, beta: f64, theta: f64, epochs: u64, seed: u64) -> shuffle_vr::Result<Race> {
    check_size(n, d, epochs)?;
    let alpha = 1.0;
    let z0 = ZTable::zeros(n, d);
    let (p, _) = gen_heterogeneous(seed, n, d, d, 0.01, 1.0, alpha, beta, &z0)?;
    let xstar = solve_reference(&p, DEFAULT_TOL)?;
    let zstar = zstar_table(&p, &xstar, alpha)?;
    let best = optimal_cyclic_order(&ImportanceVector::from_tables(&z0, &zstar)?)?;
    let reference = Reference { xstar, zstar };
    let random = seeded_permutation(n, &mut epoch_rng(seed, 0));
    let plans = [
        ("optimal cyclic", SamplingPlan::cyclic(best.clone())),
        ("random cyclic", SamplingPlan::cyclic(random)),
        ("worst cyclic", SamplingPlan::cyclic(best.reversed())),
        ("reshuffling", SamplingPlan::new(Regime::Reshuffle { seed }, n)?),
    ];
    let mut out = Vec::new();
    for (label, plan) in plans {
        let r = run(&p, &DampedRunConfig::new(alpha, theta, epochs, plan), &z0, Some(&reference))?;
        out.push(series(label, &r.trace, |t| t.dist_sq_to_opt));
    }
    Ok(Race { series: out })
}

#[derive(Debug, Serialize)]
pub struct Envelope {
    pub residual: Series,
    pub bound: Series,
}

/// Prox-certified residual of a convex l1 least-squares run under the
/// identity order, next to its `O(1/k)` envelope.
pub fn convex_envelope_data(n: usize, d: usize, theta: f64, epochs: u64, seed: u64) -> shuffle_vr::Result<Envelope> {
    check_size(n, d, epochs)?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(shuffle_vr::Error::InvalidParameter("the envelope needs 0 < theta < 1".into()));
    }
    let p = gen_least_squares(seed, n, d, d.div_ceil(2), 1.0, 0.0)?.with_regularizer(Regularizer::L1(0.05))?;
    let alpha = 2.0 / p.l_smooth();
    let xstar = solve_reference(&p, DEFAULT_TOL)?;
    let zstar = zstar_table(&p, &xstar, alpha)?;
    let z0 = ZTable::zeros(n, d);
    let cfg = DampedRunConfig::new(alpha, theta, epochs, SamplingPlan::cyclic(Permutation::identity(n)));
    let r = run(&p, &cfg, &z0, Some(&Reference { xstar, zstar }))?;
    Ok(Envelope {
        residual: series("residual", &r.trace, |t| t.prox_residual_sq),
        bound: series("envelope", &r.trace, |t| t.bound_convex),
    })
}

fn to_js<T: Serialize>(r: shuffle_vr::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn rho_profile(n: usize, d: usize, beta: f64, seed: u32) -> Result<String, JsError> {
    to_js(rho_profile_data(n, d, beta, u64::from(seed)))
}

#[wasm_bindgen]
pub fn ordering_race(n: usize, d: usize, beta: f64, theta: f64, epochs: u32, seed: u32) -> Result<String, JsError> {
    to_js(ordering_race_data(n, d, beta, theta, u64::from(epochs), u64::from(seed)))
}

#[wasm_bindgen]
pub fn convex_envelope(n: usize, d: usize, theta: f64, epochs: u32, seed: u32) -> Result<String, JsError> {
    to_js(convex_envelope_data(n, d, theta, u64::from(epochs), u64::from(seed)))
}
