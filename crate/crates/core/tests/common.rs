// Shared fixtures for the integration tests (included with `mod common;`).
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shuffle_vr::{Components, ProblemInstance, Regularizer, Vector, ZTable};

/// Random least squares with `L` set to the largest component curvature.
pub fn random_ls(seed: u64, n: usize, d: usize, mu_shift: f64, reg: Regularizer) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = mu_shift.sqrt();
    let a: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let mut m = DMatrix::from_fn(d + 2, d, |_, _| rng.random_range(-1.0..1.0));
            // stack sqrt(mu) I underneath so every component is mu-strongly convex
            if shift > 0.0 {
                m = m.resize_vertically(d + 2 + d, 0.0);
                for j in 0..d {
                    m[(d + 2 + j, j)] = shift;
                }
            }
            m
        })
        .collect();
    let b = a.iter().map(|m| Vector::from_fn(m.nrows(), |_, _| rng.random_range(-1.0..1.0))).collect();
    let l = a.iter().map(|m| m.tr_mul(m).symmetric_eigenvalues().max()).fold(0.0, f64::max);
    ProblemInstance::new(Components::LeastSquares { a, b }, reg, l, mu_shift).unwrap()
}

pub fn random_table(rng: &mut impl Rng, n: usize, d: usize, scale: f64) -> ZTable {
    let blocks: Vec<Vector> = (0..n).map(|_| Vector::from_fn(d, |_, _| rng.random_range(-scale..scale))).collect();
    ZTable::from_blocks(&blocks).unwrap()
}
