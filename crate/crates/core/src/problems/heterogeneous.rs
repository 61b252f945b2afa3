use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_vector, spectral_factor};
use crate::diagnostics::rho_ratio;
use crate::error::{invalid, Error, Result};
use crate::model::{Components, ProblemInstance, Regularizer, Vector, ZTable};
use crate::sampling::{optimal_cyclic_order, ImportanceVector};

/// Planted witnesses of a heterogeneous least-squares instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityCertificate {
    /// Planted minimizer.
    pub v: Vector,
    /// Directions with `||t_i|| = sqrt(n)`.
    pub t: Vec<Vector>,
    /// Residuals with `A_i^T delta_i = c_i`.
    pub delta: Vec<Vector>,
    pub beta: f64,
    pub alpha_used: f64,
}

impl HeterogeneityCertificate {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    /// `q^(i-1)` for 0-based `i`.
    pub fn scale(&self, i: usize) -> f64 {
        self.beta.sqrt().powi(i as i32)
    }

    /// `z*_i = z0_i - q^(i-1) t_i`.
    pub fn planted_zstar(&self, z0: &ZTable) -> Result<ZTable> {
        if z0.n() != self.n() || z0.d() != self.v.len() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: z0.n() });
        }
        let mut z = z0.clone();
        for (i, t) in self.t.iter().enumerate() {
            z.block_mut(i).axpy(-self.scale(i), t, 1.0);
        }
        Ok(z)
    }

    /// `n beta^(i-1)` for `i = 1..n`.
    pub fn profile(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.n()).map(|i| n * self.beta.powi(i as i32)).collect()
    }

    /// `1 / (n (1 - beta))`, the large-`n` limit of the planted ratio.
    pub fn rho_target(&self) -> f64 {
        1.0 / (self.n() as f64 * (1.0 - self.beta))
    }
}

/// Least-squares instance with planted minimizer `v` and importance profile
/// `||z0_i - z*_i||^2 = n beta^(i-1)` for step `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn gen_heterogeneous(
    seed: u64,
    n: usize,
    d: usize,
    k: usize,
    mu: f64,
    l: f64,
    alpha: f64,
    beta: f64,
    z0: &ZTable,
) -> Result<(ProblemInstance, HeterogeneityCertificate)> {
    if n == 0 || d == 0 {
        return Err(invalid("heterogeneous instance needs n, d >= 1"));
    }
    if k < d {
        return Err(invalid(format!("need k >= d, got k = {k}, d = {d}")));
    }
    if !(mu > 0.0 && mu < l && l.is_finite()) {
        return Err(invalid(format!("need 0 < mu < L, got mu={mu}, L={l}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta must lie in (0, 1), got {beta}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be > 0, got {alpha}")));
    }
    if z0.n() != n || z0.d() != d {
        return Err(Error::DimensionMismatch { expected: n, got: z0.n() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root_n = (n as f64).sqrt();
    let t: Vec<Vector> = (0..n)
        .map(|_| {
            let g = gaussian_vector(&mut rng, d);
            let norm = g.norm();
            g * (root_n / norm)
        })
        .collect();
    let q = beta.sqrt();
    let shifted: Vec<Vector> = (0..n).map(|i| z0.block(i) - &t[i] * q.powi(i as i32)).collect();
    let mut v = Vector::zeros(d);
    for s in &shifted {
        v += s;
    }
    v /= n as f64;

    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    for s in &shifted {
        let f = spectral_factor(&mut rng, k, d, l, mu);
        let c = (s - &v) / alpha;
        // A (A^T A)^{-1} c = U diag(1/s) V^T c
        let mut coef = f.v.tr_mul(&c);
        for (j, sj) in f.s.iter().enumerate() {
            if *sj <= 0.0 {
                return Err(invalid("degenerate component Gram matrix"));
            }
            coef[j] /= sj;
        }
        let dlt = &f.u * coef;
        b.push(&f.a * &v + &dlt);
        a.push(f.a);
        delta.push(dlt);
    }
    let p = ProblemInstance::new(Components::LeastSquares { a, b }, Regularizer::None, l, mu)?;
    Ok((p, HeterogeneityCertificate { v, t, delta, beta, alpha_used: alpha }))
}

/// One named check of a verification report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub observed: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckItem {
    fn at_most(name: &str, observed: f64, tolerance: f64) -> Self {
        Self { name: name.into(), observed, tolerance, passed: observed <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeterogeneityReport {
    pub items: Vec<CheckItem>,
    pub rho: f64,
    pub rho_target: f64,
}

impl HeterogeneityReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }

    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|c| c.name == name)
    }
}

/// Re-derives every planted property of `p` from the certificate.
///
/// The profile deviation is measured against the planted table
/// `v + alpha A_i^T delta_i` and normalized by `n`, since the trailing
/// entries of `n beta^(i-1)` sit far below rounding level.
pub fn verify_heterogeneous(
    p: &ProblemInstance,
    cert: &HeterogeneityCertificate,
    z0: &ZTable,
    alpha: f64,
) -> Result<HeterogeneityReport> {
    let Components::LeastSquares { a, .. } = p.components() else {
        return Err(invalid("certificate needs a least-squares instance"));
    };
    let n = p.n();
    if cert.n() != n || cert.delta.len() != n || cert.v.len() != p.d() || z0.n() != n || z0.d() != p.d() {
        return Err(invalid("certificate does not match the instance"));
    }
    if (alpha - cert.alpha_used).abs() > 1e-15 * alpha.abs().max(1.0) {
        return Err(invalid(format!("certificate built with alpha {}, got {alpha}", cert.alpha_used)));
    }
    let planted = cert.planted_zstar(z0)?;
    if (planted.mean() - &cert.v).amax() > 1e-8 * (1.0 + z0.as_matrix().amax()) {
        return Err(invalid("certificate was built from a different z0"));
    }
    let nf = n as f64;
    let (l, mu) = (p.l_smooth(), p.mu());

    let mut spectrum = 0.0f64;
    for ai in a {
        let e = (ai.transpose() * ai).symmetric_eigenvalues();
        spectrum = spectrum.max(mu - e.min()).max(e.max() - l);
    }
    let grad = p.grad_full(&cert.v)?.norm();
    let t_norm = cert.t.iter().map(|t| (t.norm() - nf.sqrt()).abs()).fold(0.0, f64::max);
    let mut identity = 0.0f64;
    let mut zstar = ZTable::filled(n, &cert.v);
    for i in 0..n {
        let atd = a[i].tr_mul(&cert.delta[i]);
        let c = (z0.block(i) - &cert.v - &cert.t[i] * cert.scale(i)) / alpha;
        identity = identity.max((&atd - c).amax());
        zstar.block_mut(i).axpy(alpha, &atd, 1.0);
    }
    let dev = z0.checked_sub(&zstar)?.block_norms_sq();
    let profile = cert.profile();
    let profile_dev = dev.iter().zip(&profile).map(|(o, e)| (o - e).abs()).fold(0.0, f64::max) / nf;
    let order = optimal_cyclic_order(&ImportanceVector::new(dev)?)?;
    let rho = rho_ratio(z0, &zstar, &order)?;
    let rho_target = cert.rho_target();
    let items = vec![
        CheckItem::at_most("spectrum", spectrum.max(0.0), 1e-8),
        CheckItem::at_most("gradient_at_v", grad, 1e-10),
        CheckItem::at_most("t_norms", t_norm, 1e-10),
        CheckItem::at_most("delta_identity", identity, 1e-8),
        CheckItem::at_most("profile", profile_dev, 1e-8),
        CheckItem::at_most("rho_relative", ((rho - rho_target) / rho_target).abs(), 1e-3),
    ];
    Ok(HeterogeneityReport { items, rho, rho_target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{solve_reference, zstar_table, DEFAULT_TOL};

    fn small(seed: u64, n: usize, beta: f64) -> (ProblemInstance, HeterogeneityCertificate, ZTable, f64) {
        let d = 4;
        let z0 = ZTable::zeros(n, d);
        let alpha = 0.5;
        let (p, c) = gen_heterogeneous(seed, n, d, 6, 0.2, 1.0, alpha, beta, &z0).unwrap();
        (p, c, z0, alpha)
    }

    #[test]
    fn planted_minimizer_and_profile() {
        let (p, cert, z0, alpha) = small(1, 30, 0.5);
        let x = solve_reference(&p, DEFAULT_TOL).unwrap();
        assert!((&x - &cert.v).amax() < 1e-8);
        let z = zstar_table(&p, &x, alpha).unwrap();
        let dev = z0.checked_sub(&z).unwrap().block_norms_sq();
        for (i, (o, e)) in dev.iter().zip(cert.profile()).enumerate().take(10) {
            assert!(((o - e) / e).abs() <= 1e-8, "i={i}: {o} vs {e}");
        }
    }

    #[test]
    fn fresh_instance_passes() {
        let (p, cert, z0, alpha) = small(2, 40, 0.3);
        let rep = verify_heterogeneous(&p, &cert, &z0, alpha).unwrap();
        for item in &rep.items {
            if item.name != "rho_relative" {
                assert!(item.passed, "{item:?}");
            }
        }
    }

    #[test]
    fn perturbed_rhs_fails_only_gradient() {
        let (p, cert, z0, alpha) = small(3, 20, 0.3);
        let Components::LeastSquares { a, mut b } = p.components().clone() else { unreachable!() };
        b[0][0] += 1e-2;
        let q = ProblemInstance::new(Components::LeastSquares { a, b }, Regularizer::None, p.l_smooth(), p.mu()).unwrap();
        let rep = verify_heterogeneous(&q, &cert, &z0, alpha).unwrap();
        assert!(!rep.item("gradient_at_v").unwrap().passed);
        for name in ["spectrum", "t_norms", "delta_identity", "profile"] {
            assert!(rep.item(name).unwrap().passed, "{name}");
        }
    }

    #[test]
    fn weak_decay_approaches_uniform_ratio() {
        let (p, cert, z0, alpha) = small(4, 100, 0.999);
        let rep = verify_heterogeneous(&p, &cert, &z0, alpha).unwrap();
        let uniform = 101.0 / 200.0;
        assert!((rep.rho - uniform).abs() / uniform < 0.05, "{}", rep.rho);
    }

    #[test]
    fn same_profile_across_seeds() {
        let (_, c1, ..) = small(5, 10, 0.4);
        let (_, c2, ..) = small(6, 10, 0.4);
        assert_eq!(c1.profile(), c2.profile());
        assert_ne!(c1.v, c2.v);
        let (_, c3, ..) = small(5, 10, 0.4);
        assert_eq!(c1, c3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let z0 = ZTable::zeros(3, 4);
        assert!(gen_heterogeneous(0, 3, 4, 3, 0.1, 1.0, 0.5, 0.5, &z0).is_err());
        assert!(gen_heterogeneous(0, 3, 4, 4, 0.0, 1.0, 0.5, 0.5, &z0).is_err());
        assert!(gen_heterogeneous(0, 3, 4, 4, 0.1, 1.0, 0.5, 1.0, &z0).is_err());
        let (p, cert, z0, _) = small(7, 5, 0.5);
        assert!(verify_heterogeneous(&p, &cert, &z0, 0.25).is_err());
        let other = ZTable::filled(5, &Vector::from_element(4, 1.0));
        assert!(verify_heterogeneous(&p, &cert, &other, 0.5).is_err());
    }
}
