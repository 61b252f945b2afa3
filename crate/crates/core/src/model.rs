//! Problem abstraction and the memory table shared by every optimizer.
//!
//! The objective is `F(x) + r(x)` with `F(x) = (1/n) sum_i f_i(x)`. Every
//! average in this crate is accumulated left to right over `i = 0..n`, so a
//! run is bit-reproducible for a fixed seed.

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Vector = DVector<f64>;

/// Convex regularizer `r(x)` with a closed-form prox.
///
/// `L2Sq(lambda)` is `(lambda / 2) * ||x||^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "lambda", rename_all = "snake_case")]
pub enum Regularizer {
    None,
    L1(f64),
    L2Sq(f64),
}

impl Regularizer {
    pub fn lambda(&self) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1(l) | Regularizer::L2Sq(l) => l,
        }
    }

    /// True when `r` is identically zero (`none`, `l1(0)` or `l2sq(0)`).
    pub fn is_zero(&self) -> bool {
        self.lambda() == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.lambda();
        if !l.is_finite() || l < 0.0 {
            return Err(invalid(format!("regularizer weight must be finite and >= 0, got {l}")));
        }
        Ok(())
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1(l) => l * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::L2Sq(l) => 0.5 * l * x.norm_squared(),
        }
    }
}

/// The smooth components `f_i`.
#[derive(Clone, Debug, PartialEq)]
pub enum Components {
    /// `f_i(x) = 0.5 * ||A_i x - b_i||^2` with `A_i` of shape `k x d`.
    LeastSquares { a: Vec<DMatrix<f64>>, b: Vec<Vector> },
    /// `f_i(x) = log(1 + exp(-y_i <w_i, x>)) + (lambda / 2) ||x||^2`, with
    /// `w_i` the i-th row of `features`.
    Logistic {
        features: DMatrix<f64>,
        labels: Vec<f64>,
        lambda: f64,
    },
}

/// A finite-sum composite problem with its smoothness constants.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    n: usize,
    d: usize,
    components: Components,
    regularizer: Regularizer,
    l_smooth: f64,
    mu: f64,
}

impl ProblemInstance {
    pub fn new(
        components: Components,
        regularizer: Regularizer,
        l_smooth: f64,
        mu: f64,
    ) -> Result<Self> {
        regularizer.validate()?;
        let (n, d) = match &components {
            Components::LeastSquares { a, b } => {
                if a.is_empty() || a.len() != b.len() {
                    return Err(invalid("least squares needs n >= 1 matching (A_i, b_i) pairs"));
                }
                let d = a[0].ncols();
                for (ai, bi) in a.iter().zip(b) {
                    if ai.ncols() != d {
                        return Err(Error::DimensionMismatch { expected: d, got: ai.ncols() });
                    }
                    if ai.nrows() != bi.len() {
                        return Err(Error::DimensionMismatch { expected: ai.nrows(), got: bi.len() });
                    }
                    if ai.iter().chain(bi.iter()).any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("least squares data"));
                    }
                }
                (a.len(), d)
            }
            Components::Logistic { features, labels, lambda } => {
                if features.nrows() == 0 || features.nrows() != labels.len() {
                    return Err(invalid("logistic needs n >= 1 rows with one label each"));
                }
                if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                    return Err(invalid("logistic labels must be -1 or +1"));
                }
                if !lambda.is_finite() || *lambda < 0.0 {
                    return Err(invalid("logistic ridge weight must be >= 0"));
                }
                if features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("logistic features"));
                }
                (features.nrows(), features.ncols())
            }
        };
        if d == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        if !(l_smooth.is_finite() && l_smooth > 0.0) {
            return Err(invalid(format!("L must be > 0, got {l_smooth}")));
        }
        if !(mu.is_finite() && mu >= 0.0 && mu <= l_smooth) {
            return Err(invalid(format!("mu must lie in [0, L], got {mu}")));
        }
        Ok(Self { n, d, components, regularizer, l_smooth, mu })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    /// Copy of the instance with another regularizer.
    pub fn with_regularizer(&self, regularizer: Regularizer) -> Result<Self> {
        regularizer.validate()?;
        Ok(Self { regularizer, ..self.clone() })
    }

    pub fn l_smooth(&self) -> f64 {
        self.l_smooth
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn is_strongly_convex(&self) -> bool {
        self.mu > 0.0
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, n: self.n });
        }
        Ok(())
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: len });
        }
        Ok(())
    }

    /// `f_i(x)`.
    pub fn value_component(&self, i: usize, x: &Vector) -> Result<f64> {
        self.check_index(i)?;
        self.check_dim(x.len())?;
        Ok(match &self.components {
            Components::LeastSquares { a, b } => 0.5 * (&a[i] * x - &b[i]).norm_squared(),
            Components::Logistic { features, labels, lambda } => {
                let s = labels[i] * features.row(i).transpose().dot(x);
                softplus(-s) + 0.5 * lambda * x.norm_squared()
            }
        })
    }

    /// `F(x) + r(x)`.
    pub fn objective(&self, x: &Vector) -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.value_component(i, x)?;
        }
        Ok(acc / self.n as f64 + self.regularizer.value(x))
    }

    /// `grad f_i(x)`.
    pub fn grad_component(&self, i: usize, x: &Vector) -> Result<Vector> {
        let mut out = Vector::zeros(self.d);
        self.grad_component_into(i, x, &mut out)?;
        Ok(out)
    }

    /// Writes `grad f_i(x)` into `out` (length `d`).
    pub fn grad_component_into(&self, i: usize, x: &Vector, out: &mut Vector) -> Result<()> {
        self.check_index(i)?;
        self.check_dim(x.len())?;
        self.check_dim(out.len())?;
        match &self.components {
            Components::LeastSquares { a, b } => {
                let mut resid = &a[i] * x;
                resid -= &b[i];
                out.gemv_tr(1.0, &a[i], &resid, 0.0);
            }
            Components::Logistic { features, labels, lambda } => {
                let y = labels[i];
                let row = features.row(i);
                let s = y * row.transpose().dot(x);
                // d/ds log(1 + exp(-s)) = -sigmoid(-s)
                let coef = -y * sigmoid(-s);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = coef * row[j] + lambda * x[j];
                }
            }
        }
        Ok(())
    }

    /// `grad F(x) = (1/n) sum_i grad f_i(x)`, summed in index order.
    pub fn grad_full(&self, x: &Vector) -> Result<Vector> {
        self.check_dim(x.len())?;
        let mut acc = Vector::zeros(self.d);
        let mut g = Vector::zeros(self.d);
        for i in 0..self.n {
            self.grad_component_into(i, x, &mut g)?;
            acc += &g;
        }
        acc /= self.n as f64;
        Ok(acc)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// The table `{z_i}`, stored as a `d x n` matrix whose column `i` is `z_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZTable {
    data: DMatrix<f64>,
}

impl ZTable {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { data: DMatrix::zeros(d, n) }
    }

    pub fn from_blocks(blocks: &[Vector]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(invalid("table needs at least one block"));
        }
        let d = blocks[0].len();
        if let Some(b) = blocks.iter().find(|b| b.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: b.len() });
        }
        Ok(Self { data: DMatrix::from_columns(blocks) })
    }

    /// Every block set to `x`.
    pub fn filled(n: usize, x: &Vector) -> Self {
        Self { data: DMatrix::from_fn(x.len(), n, |r, _| x[r]) }
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn d(&self) -> usize {
        self.data.nrows()
    }

    pub fn block(&self, i: usize) -> DVectorView<'_, f64> {
        self.data.column(i)
    }

    pub fn block_mut(&mut self, i: usize) -> DVectorViewMut<'_, f64> {
        self.data.column_mut(i)
    }

    pub fn blocks(&self) -> Vec<Vector> {
        (0..self.n()).map(|i| self.block(i).into_owned()).collect()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// `(1/n) sum_i z_i`, summed in index order.
    pub fn mean(&self) -> Vector {
        let mut acc = Vector::zeros(self.d());
        for col in self.data.column_iter() {
            acc += col;
        }
        acc / self.n() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.norm_squared()
    }

    pub fn block_norms_sq(&self) -> Vec<f64> {
        self.data.column_iter().map(|c| c.norm_squared()).collect()
    }

    pub fn same_shape(&self, other: &ZTable) -> bool {
        self.n() == other.n() && self.d() == other.d()
    }

    pub fn checked_sub(&self, other: &ZTable) -> Result<ZTable> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch {
                expected: self.n() * self.d(),
                got: other.n() * other.d(),
            });
        }
        Ok(ZTable { data: &self.data - &other.data })
    }

    /// `(1 - theta) * self + theta * other`.
    pub fn lerp(&self, other: &ZTable, theta: f64) -> Result<ZTable> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch {
                expected: self.n() * self.d(),
                got: other.n() * other.d(),
            });
        }
        Ok(ZTable { data: &self.data * (1.0 - theta) + &other.data * theta })
    }

    pub fn max_abs_diff(&self, other: &ZTable) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Mutable algorithm state: the table, its running average, step size and damping.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryState {
    pub z: ZTable,
    pub zbar: Vector,
    pub alpha: f64,
    pub theta: f64,
}

impl MemoryState {
    pub fn new(z: ZTable, alpha: f64, theta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid(format!("step size must be > 0, got {alpha}")));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(invalid(format!("damping must lie in (0, 1], got {theta}")));
        }
        if !z.is_finite() {
            return Err(Error::NonFinite("initial table"));
        }
        let zbar = z.mean();
        Ok(Self { z, zbar, alpha, theta })
    }

    pub fn n(&self) -> usize {
        self.z.n()
    }

    pub fn d(&self) -> usize {
        self.z.d()
    }

    /// Resets `zbar` to the exact mean of the table.
    pub fn recompute_zbar(&mut self) {
        self.zbar = self.z.mean();
    }

    /// Relative distance between `zbar` and the table mean.
    pub fn zbar_drift(&self) -> f64 {
        let exact = self.z.mean();
        (&self.zbar - &exact).norm() / exact.norm().max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_ls(a: &[f64], b: &[f64]) -> ProblemInstance {
        let mats = a.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        let vecs = b.iter().map(|&v| Vector::from_element(1, v)).collect();
        let l = a.iter().map(|v| v * v).fold(0.0, f64::max).max(1e-12);
        ProblemInstance::new(Components::LeastSquares { a: mats, b: vecs }, Regularizer::None, l, 0.0)
            .unwrap()
    }

    #[test]
    fn least_squares_gradient_example() {
        let p = scalar_ls(&[1.0], &[0.0]);
        let g = p.grad_component(0, &Vector::from_element(1, 2.0)).unwrap();
        assert_eq!(g[0], 2.0);
    }

    #[test]
    fn logistic_gradient_at_zero_margin() {
        let w = dmatrix![3.0, -1.0];
        let p = ProblemInstance::new(
            Components::Logistic { features: w, labels: vec![-1.0], lambda: 0.0 },
            Regularizer::None,
            1.0,
            0.0,
        )
        .unwrap();
        let x = Vector::from_vec(vec![1.0, 3.0]); // <w, x> = 0
        let g = p.grad_component(0, &x).unwrap();
        assert!((g[0] - 1.5).abs() < 1e-15);
        assert!((g[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn grad_full_cancels_and_reduces_for_single_component() {
        let p = scalar_ls(&[1.0, 1.0], &[1.0, -1.0]);
        let g = p.grad_full(&Vector::zeros(1)).unwrap();
        assert_eq!(g[0], 0.0);

        let single = scalar_ls(&[2.0], &[1.0]);
        let x = Vector::from_element(1, 0.7);
        assert_eq!(single.grad_full(&x).unwrap(), single.grad_component(0, &x).unwrap());
    }

    #[test]
    fn index_and_dimension_errors() {
        let p = scalar_ls(&[1.0], &[0.0]);
        assert!(matches!(
            p.grad_component(1, &Vector::zeros(1)),
            Err(Error::IndexOutOfRange { index: 1, n: 1 })
        ));
        assert!(matches!(
            p.grad_component(0, &Vector::zeros(2)),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(p.grad_full(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn rejects_bad_constants() {
        let c = Components::LeastSquares {
            a: vec![DMatrix::identity(1, 1)],
            b: vec![Vector::zeros(1)],
        };
        assert!(ProblemInstance::new(c.clone(), Regularizer::None, 0.0, 0.0).is_err());
        assert!(ProblemInstance::new(c.clone(), Regularizer::None, 1.0, 2.0).is_err());
        assert!(ProblemInstance::new(c, Regularizer::L1(-1.0), 1.0, 0.0).is_err());
    }

    #[test]
    fn central_differences_match_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 4;
        let a: Vec<DMatrix<f64>> =
            (0..3).map(|_| DMatrix::from_fn(5, d, |_, _| rng.random_range(-1.0..1.0))).collect();
        let b: Vec<Vector> = (0..3).map(|_| Vector::from_fn(5, |_, _| rng.random_range(-1.0..1.0))).collect();
        let ls = ProblemInstance::new(Components::LeastSquares { a, b }, Regularizer::None, 50.0, 0.0)
            .unwrap();
        let w = DMatrix::from_fn(3, d, |_, _| rng.random_range(-2.0..2.0));
        let logit = ProblemInstance::new(
            Components::Logistic { features: w, labels: vec![1.0, -1.0, 1.0], lambda: 0.1 },
            Regularizer::None,
            10.0,
            0.1,
        )
        .unwrap();
        for p in [&ls, &logit] {
            for _ in 0..100 {
                let x = Vector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
                let i = rng.random_range(0..p.n());
                let g = p.grad_component(i, &x).unwrap();
                let h = 1e-5;
                let fd = Vector::from_fn(d, |j, _| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    (p.value_component(i, &xp).unwrap() - p.value_component(i, &xm).unwrap()) / (2.0 * h)
                });
                let rel = (&fd - &g).norm() / g.norm().max(1e-3);
                assert!(rel <= 1e-5, "relative error {rel}");
            }
        }
    }

    #[test]
    fn recompute_zbar_examples() {
        let z = ZTable::from_blocks(&[Vector::from_element(1, 1.0), Vector::from_element(1, 3.0)]).unwrap();
        let mut s = MemoryState::new(z, 1.0, 1.0).unwrap();
        s.zbar[0] = 10.0;
        s.recompute_zbar();
        assert_eq!(s.zbar[0], 2.0);

        let s = MemoryState::new(ZTable::zeros(4, 3), 1.0, 0.5).unwrap();
        assert!(s.zbar.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_matches_compensated_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let d = 7;
        let blocks: Vec<Vector> =
            (0..n).map(|_| Vector::from_fn(d, |_, _| rng.random_range(-1e3..1e3))).collect();
        let z = ZTable::from_blocks(&blocks).unwrap();
        let mean = z.mean();
        for j in 0..d {
            // Kahan-Babuska summation as an independent oracle.
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for b in &blocks {
                let v = b[j];
                let t = sum + v;
                if sum.abs() >= v.abs() {
                    comp += (sum - t) + v;
                } else {
                    comp += (v - t) + sum;
                }
                sum = t;
            }
            let exact = (sum + comp) / n as f64;
            assert!((mean[j] - exact).abs() <= 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn memory_state_rejects_bad_parameters() {
        assert!(MemoryState::new(ZTable::zeros(2, 2), 0.0, 0.5).is_err());
        assert!(MemoryState::new(ZTable::zeros(2, 2), 1.0, 0.0).is_err());
        assert!(MemoryState::new(ZTable::zeros(2, 2), 1.0, 1.5).is_err());
        assert!(MemoryState::new(ZTable::zeros(2, 2), 1.0, 1.0).is_ok());
    }
}
