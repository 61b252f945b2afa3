use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::gaussian_vector;
use crate::error::{invalid, Result};
use crate::model::{Components, ProblemInstance, Regularizer};

/// `lambda_max(W^T W) / (4 n)`.
pub fn logistic_smoothness(features: &DMatrix<f64>) -> f64 {
    let n = features.nrows().max(1) as f64;
    let gram = features.tr_mul(features);
    gram.symmetric_eigenvalues().max().max(0.0) / (4.0 * n)
}

/// Ridge-regularized logistic regression with the ridge folded into each
/// component: `L = lambda_max(W^T W)/(4n) + lambda`, `mu = lambda`.
///
/// `L` is the constant of the average `F`; single components can be less smooth.
pub fn gen_logistic(features: DMatrix<f64>, labels: Vec<f64>, lambda: f64) -> Result<ProblemInstance> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut l = logistic_smoothness(&features) + lambda;
    if l == 0.0 {
        // W = 0 and lambda = 0: F is constant, any positive L is valid
        l = f64::MIN_POSITIVE;
    }
    ProblemInstance::new(Components::Logistic { features, labels, lambda }, Regularizer::None, l, lambda)
}

/// Two-class data around a shared offset: `w_i = shift * m + g_i / sqrt(d)`,
/// labels from a planted separator with 10% label noise.
pub fn synthetic_classification(seed: u64, n: usize, d: usize, shift: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if n == 0 || d == 0 {
        return Err(invalid("classification data needs n, d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = gaussian_vector(&mut rng, d).normalize();
    let sep = gaussian_vector(&mut rng, d).normalize();
    let scale = 1.0 / (d as f64).sqrt();
    let mut w = DMatrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..d {
            let g: f64 = rng.sample(StandardNormal);
            w[(i, j)] = shift * m[j] + g * scale;
        }
        let margin = w.row(i).transpose().dot(&sep) - shift * m.dot(&sep);
        let mut label = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < 0.1 {
            label = -label;
        }
        y.push(label);
    }
    Ok((w, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vector;

    #[test]
    fn ridge_only() {
        let p = gen_logistic(DMatrix::zeros(3, 2), vec![1.0, -1.0, 1.0], 0.7).unwrap();
        assert_eq!(p.l_smooth(), 0.7);
        assert_eq!(p.mu(), 0.7);
        let x = Vector::from_vec(vec![0.5, -2.0]);
        let g = p.grad_component(1, &x).unwrap();
        assert!((g - &x * 0.7).amax() < 1e-15);
    }

    #[test]
    fn single_sample_constant() {
        let p = gen_logistic(DMatrix::from_element(1, 1, 2.0), vec![1.0], 0.0).unwrap();
        assert!((p.l_smooth() - 1.0).abs() < 1e-14);
        assert_eq!(p.mu(), 0.0);
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(gen_logistic(DMatrix::zeros(2, 1), vec![1.0, 0.0], 0.1).is_err());
        assert!(gen_logistic(DMatrix::zeros(2, 1), vec![1.0], 0.1).is_err());
    }

    #[test]
    fn synthetic_data_is_balanced_enough() {
        let (w, y) = synthetic_classification(3, 400, 10, 3.0).unwrap();
        assert_eq!(w.shape(), (400, 10));
        let pos = y.iter().filter(|&&v| v > 0.0).count();
        assert!((100..300).contains(&pos));
        // the shared offset keeps per-sample smoothness close to the global one
        let global = logistic_smoothness(&w);
        let worst = w.row_iter().map(|r| r.norm_squared() / 4.0).fold(0.0, f64::max);
        assert!(worst < 2.0 * global, "{worst} vs {global}");
    }
}
