use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{gaussian_vector, spectral_factor};
use crate::error::{invalid, Result};
use crate::model::{Components, ProblemInstance, Regularizer};

/// `n` least-squares components with `k x d` matrices whose Gram spectra lie
/// in `[mu, l]`; regularizer none.
///
/// `mu = 0` with `k < d` gives rank-deficient components.
pub fn gen_least_squares(seed: u64, n: usize, d: usize, k: usize, l: f64, mu: f64) -> Result<ProblemInstance> {
    if n == 0 || d == 0 || k == 0 {
        return Err(invalid("least squares needs n, d, k >= 1"));
    }
    if !(l.is_finite() && l > 0.0 && mu >= 0.0 && mu <= l) {
        return Err(invalid(format!("need 0 <= mu <= L with L > 0, got L={l}, mu={mu}")));
    }
    if k < d && mu > 0.0 {
        return Err(invalid(format!("k = {k} < d = {d} cannot reach full rank for mu > 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        a.push(spectral_factor(&mut rng, k, d, l, mu).a);
        b.push(gaussian_vector(&mut rng, k));
    }
    ProblemInstance::new(Components::LeastSquares { a, b }, Regularizer::None, l, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{solve_reference, DEFAULT_TOL};

    fn gram_extremes(p: &ProblemInstance) -> Vec<(f64, f64)> {
        let Components::LeastSquares { a, .. } = p.components() else { unreachable!() };
        a.iter()
            .map(|ai| {
                let e = (ai.transpose() * ai).symmetric_eigenvalues();
                (e.min(), e.max())
            })
            .collect()
    }

    #[test]
    fn spectrum_within_bounds() {
        let p = gen_least_squares(1, 10, 8, 12, 4.0, 0.5).unwrap();
        for (lo, hi) in gram_extremes(&p) {
            assert!(lo >= 0.5 - 1e-8 && hi <= 4.0 + 1e-8, "{lo} {hi}");
            assert!((hi - 4.0).abs() < 1e-8 && (lo - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn forced_spectrum_gives_scaled_identity() {
        let p = gen_least_squares(2, 3, 4, 4, 2.5, 2.5).unwrap();
        let Components::LeastSquares { a, .. } = p.components() else { unreachable!() };
        for ai in a {
            let g = ai.transpose() * ai;
            assert!((g - nalgebra::DMatrix::identity(4, 4) * 2.5).amax() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_when_convex() {
        let p = gen_least_squares(3, 4, 6, 3, 1.0, 0.0).unwrap();
        for (lo, hi) in gram_extremes(&p) {
            assert!(lo.abs() < 1e-12 && hi <= 1.0 + 1e-8);
        }
        assert!(gen_least_squares(3, 4, 6, 3, 1.0, 0.1).is_err());
        assert!(gen_least_squares(3, 4, 6, 6, 1.0, 2.0).is_err());
    }

    #[test]
    fn closed_form_solution_zeroes_gradient() {
        let p = gen_least_squares(4, 20, 5, 5, 1.0, 0.1).unwrap();
        let x = solve_reference(&p, DEFAULT_TOL).unwrap();
        assert!(p.grad_full(&x).unwrap().norm() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(gen_least_squares(9, 3, 3, 3, 1.0, 0.2).unwrap(), gen_least_squares(9, 3, 3, 3, 1.0, 0.2).unwrap());
        assert_ne!(gen_least_squares(9, 3, 3, 3, 1.0, 0.2).unwrap(), gen_least_squares(10, 3, 3, 3, 1.0, 0.2).unwrap());
    }
}
