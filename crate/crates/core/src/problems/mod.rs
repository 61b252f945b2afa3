//! Problem instance generators, dataset ingestion and serialization.

mod heterogeneous;
pub mod io;
pub mod libsvm;
mod least_squares;
mod logistic;

pub use heterogeneous::{
    gen_heterogeneous, verify_heterogeneous, CheckItem, HeterogeneityCertificate, HeterogeneityReport,
};
pub use least_squares::gen_least_squares;
pub use logistic::{gen_logistic, logistic_smoothness, synthetic_classification};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::Vector;

pub(crate) fn gaussian_vector(rng: &mut impl Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub(crate) fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed `m x m` orthogonal matrix (QR of a Gaussian with sign fix).
pub(crate) fn random_orthogonal(rng: &mut impl Rng, m: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, m, m).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `A = U diag(s) V^T` with `U: k x m`, `V: d x m`, `m = min(k, d)`.
pub(crate) struct SpectralFactor {
    pub a: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Random `k x d` matrix whose Gram spectrum lies in `[mu, l]`, with both
/// extremes attained when `k >= d` (the top one always).
pub(crate) fn spectral_factor(rng: &mut impl Rng, k: usize, d: usize, l: f64, mu: f64) -> SpectralFactor {
    let m = k.min(d);
    let u = random_orthogonal(rng, k).columns(0, m).into_owned();
    let v = random_orthogonal(rng, d).columns(0, m).into_owned();
    let mut eig: Vec<f64> = (0..m).map(|_| rng.random_range(mu..=l)).collect();
    eig[0] = l;
    if m == d && m > 1 {
        eig[m - 1] = mu;
    }
    let s: Vec<f64> = eig.iter().map(|e| e.sqrt()).collect();
    let mut us = u.clone();
    for (j, sj) in s.iter().enumerate() {
        us.column_mut(j).scale_mut(*sj);
    }
    let a = &us * v.transpose();
    SpectralFactor { a, u, s, v }
}
