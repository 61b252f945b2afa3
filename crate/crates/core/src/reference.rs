//! High-accuracy minimizers, fixed-point tables and brute-force enumeration.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::finito::{apply_spi, apply_tpi};
use crate::model::{Components, ProblemInstance, Regularizer, Vector, ZTable};
use crate::prox::{prox_in_place, subgradient_residual};
use crate::sampling::{ImportanceVector, Permutation};

/// Default first-order residual target for the iterative path.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Iteration cap for the iterative path.
pub const MAX_ITERATIONS: usize = 10_000_000;

/// Largest `n` accepted by [`brute_force_best_order`].
pub const MAX_BRUTE_FORCE_N: usize = 8;

/// Largest `n` accepted by [`expected_contraction`].
pub const MAX_EXPECTATION_N: usize = 6;

/// Minimizer of `F + r`.
///
/// Least squares with `r` in {none, l2sq} is solved through the normal
/// equations; every other combination runs proximal gradient with step
/// `1/L` until the subdifferential residual is at most `tol^2`.
pub fn solve_reference(p: &ProblemInstance, tol: f64) -> Result<Vector> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be > 0, got {tol}")));
    }
    match (p.components(), p.regularizer()) {
        (Components::LeastSquares { .. }, Regularizer::None | Regularizer::L2Sq(_)) => {
            solve_normal_equations(p)
        }
        _ => solve_reference_iterative(p, tol),
    }
}

/// `(1/n) sum A_i^T A_i` and `(1/n) sum A_i^T b_i`.
fn normal_system(a: &[DMatrix<f64>], b: &[Vector]) -> (DMatrix<f64>, Vector) {
    let d = a[0].ncols();
    let n = a.len() as f64;
    let mut h = DMatrix::zeros(d, d);
    let mut c = Vector::zeros(d);
    for (ai, bi) in a.iter().zip(b) {
        h.gemm_tr(1.0, ai, ai, 1.0);
        c.gemv_tr(1.0, ai, bi, 1.0);
    }
    (h / n, c / n)
}

fn solve_normal_equations(p: &ProblemInstance) -> Result<Vector> {
    let Components::LeastSquares { a, b } = p.components() else {
        return Err(Error::Unsupported("normal equations need least squares".into()));
    };
    let (mut h, c) = normal_system(a, b);
    if let Regularizer::L2Sq(lambda) = p.regularizer() {
        for j in 0..h.nrows() {
            h[(j, j)] += lambda;
        }
    }
    if let Some(chol) = h.clone().cholesky() {
        let x = chol.solve(&c);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    // singular system: minimum-norm solution
    let svd = h.svd(true, true);
    let eps = svd.singular_values.max() * 1e-13;
    svd.solve(&c, eps).map_err(|e| invalid(e.to_string()))
}

/// Proximal gradient with step `1/L` from zero, stopping at residual `tol^2`.
pub fn solve_reference_iterative(p: &ProblemInstance, tol: f64) -> Result<Vector> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be > 0, got {tol}")));
    }
    let alpha = 1.0 / p.l_smooth();
    let target = tol * tol;
    let quad = match p.components() {
        Components::LeastSquares { a, b } => Some(normal_system(a, b)),
        Components::Logistic { .. } => None,
    };
    let grad = |x: &Vector| -> Result<Vector> {
        match &quad {
            Some((h, c)) => Ok(h * x - c),
            None => p.grad_full(x),
        }
    };
    let r = p.regularizer();
    let mut x = Vector::zeros(p.d());
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let g = grad(&x)?;
        residual = subgradient_residual(r, &x, &g)?;
        if residual <= target {
            return Ok(x);
        }
        if !residual.is_finite() {
            return Err(Error::NonFinite("reference iterate"));
        }
        x.axpy(-alpha, &g, 1.0);
        prox_in_place(r, alpha, &mut x)?;
    }
    Err(Error::NoConvergence { iterations: MAX_ITERATIONS, residual })
}

/// `z*_i = x* - alpha grad f_i(x*)`.
pub fn zstar_table(p: &ProblemInstance, xstar: &Vector, alpha: f64) -> Result<ZTable> {
    if !(alpha > 0.0) {
        return Err(invalid(format!("alpha must be > 0, got {alpha}")));
    }
    let mut z = ZTable::filled(p.n(), xstar);
    let mut g = Vector::zeros(p.d());
    for i in 0..p.n() {
        p.grad_component_into(i, xstar, &mut g)?;
        z.block_mut(i).axpy(-alpha, &g, 1.0);
    }
    Ok(z)
}

/// Advances `v` to the next permutation in lexicographic order.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("a larger element exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Calls `f` on every permutation of `0..n` in lexicographic order.
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut v: Vec<usize> = (0..n).collect();
    loop {
        f(&v);
        if !next_permutation(&mut v) {
            break;
        }
    }
}

/// Exhaustive minimizer of `sum_i (i/n) scores[pi(i)]`; ties keep the
/// lexicographically smallest order.
pub fn brute_force_best_order(scores: &ImportanceVector) -> Result<(Permutation, f64)> {
    let n = scores.len();
    if n == 0 || n > MAX_BRUTE_FORCE_N {
        return Err(invalid(format!("brute force needs 1 <= n <= {MAX_BRUTE_FORCE_N}, got {n}")));
    }
    let s = scores.as_slice();
    let nf = n as f64;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_permutation(n, |pi| {
        let value: f64 = pi.iter().enumerate().map(|(k, &j)| (k + 1) as f64 / nf * s[j]).sum();
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((pi.to_vec(), value));
        }
    });
    let (order, value) = best.expect("at least one permutation");
    Ok((Permutation::new(order)?, value))
}

/// `E_tau ||T_tau u - T_tau v||^2`, averaged exactly over all `n!` orders.
pub fn expected_contraction(p: &ProblemInstance, u: &ZTable, v: &ZTable, alpha: f64) -> Result<f64> {
    expected_damped_contraction(p, u, v, alpha, 1.0)
}

/// As [`expected_contraction`] for `S_tau = (1 - theta) I + theta T_tau`.
pub fn expected_damped_contraction(
    p: &ProblemInstance,
    u: &ZTable,
    v: &ZTable,
    alpha: f64,
    theta: f64,
) -> Result<f64> {
    let n = p.n();
    if n > MAX_EXPECTATION_N {
        return Err(invalid(format!("exact expectation needs n <= {MAX_EXPECTATION_N}, got {n}")));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    let mut err = None;
    for_each_permutation(n, |pi| {
        if err.is_some() {
            return;
        }
        let order = Permutation::new(pi.to_vec()).expect("enumerated permutation");
        let pair = if theta == 1.0 {
            apply_tpi(p, &order, u, alpha).and_then(|tu| Ok((tu, apply_tpi(p, &order, v, alpha)?)))
        } else {
            apply_spi(p, &order, u, alpha, theta)
                .and_then(|su| Ok((su, apply_spi(p, &order, v, alpha, theta)?)))
        };
        match pair.and_then(|(a, b)| a.checked_sub(&b)) {
            Ok(diff) => {
                total += diff.norm_sq();
                count += 1;
            }
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(total / count as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finito::apply_ti;
    use crate::prox::prox;
    use crate::sampling::optimal_cyclic_order;

    fn scalar_ls(a: &[f64], b: &[f64], reg: Regularizer) -> ProblemInstance {
        let am = a.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        let bm = b.iter().map(|&v| Vector::from_element(1, v)).collect();
        let l = a.iter().map(|v| v * v).fold(0.0, f64::max);
        ProblemInstance::new(Components::LeastSquares { a: am, b: bm }, reg, l, 0.0).unwrap()
    }

    #[test]
    fn scalar_examples() {
        let p = scalar_ls(&[1.0], &[3.0], Regularizer::None);
        assert!((solve_reference(&p, DEFAULT_TOL).unwrap()[0] - 3.0).abs() < 1e-14);
        let ridge = scalar_ls(&[1.0], &[0.0], Regularizer::L2Sq(1.0));
        assert_eq!(solve_reference(&ridge, DEFAULT_TOL).unwrap()[0], 0.0);
        assert!(solve_reference(&p, 0.0).is_err());
    }

    #[test]
    fn zstar_example() {
        let p = scalar_ls(&[1.0, 1.0], &[0.0, 2.0], Regularizer::None);
        let x = solve_reference(&p, DEFAULT_TOL).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        let z = zstar_table(&p, &x, 0.5).unwrap();
        assert!((z.block(0)[0] - 0.5).abs() < 1e-14);
        assert!((z.block(1)[0] - 1.5).abs() < 1e-14);
        assert!((z.mean()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn iterative_and_closed_form_agree() {
        let p = ProblemInstance::new(
            Components::LeastSquares {
                a: vec![
                    DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.8]),
                    DMatrix::from_row_slice(2, 2, &[0.5, -0.1, 0.3, 1.0]),
                ],
                b: vec![Vector::from_vec(vec![1.0, -2.0]), Vector::from_vec(vec![0.5, 0.7])],
            },
            Regularizer::L2Sq(1.0),
            2.0,
            0.0,
        )
        .unwrap();
        let closed = solve_reference(&p, DEFAULT_TOL).unwrap();
        let iter = solve_reference_iterative(&p, DEFAULT_TOL).unwrap();
        // strong convexity >= 1 turns the residual bound into a distance bound
        assert!((closed - iter).norm() <= 2.0 * DEFAULT_TOL);
    }

    #[test]
    fn l1_fixed_point() {
        let p = scalar_ls(&[1.0, 2.0, 0.5], &[0.3, 1.0, -2.0], Regularizer::L1(0.4));
        let x = solve_reference(&p, DEFAULT_TOL).unwrap();
        let alpha = 0.7 / p.l_smooth();
        let z = zstar_table(&p, &x, alpha).unwrap();
        assert!((prox(p.regularizer(), alpha, &z.mean()).unwrap() - &x).amax() <= 1e-10);
        for i in 0..3 {
            assert!(apply_ti(&p, i, &z, alpha).unwrap().max_abs_diff(&z) <= 1e-10);
        }
    }

    #[test]
    fn lexicographic_enumeration() {
        let mut seen = Vec::new();
        for_each_permutation(3, |p| seen.push(p.to_vec()));
        assert_eq!(
            seen,
            vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2], vec![1, 2, 0], vec![2, 0, 1], vec![2, 1, 0]]
        );
        let mut count = 0;
        for_each_permutation(1, |_| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn brute_force_examples() {
        let (pi, v) = brute_force_best_order(&ImportanceVector::new(vec![9.0, 1.0, 4.0]).unwrap()).unwrap();
        assert_eq!(pi.to_one_based(), vec![1, 3, 2]);
        assert!((v - 20.0 / 3.0).abs() < 1e-12);
        let (pi, v) = brute_force_best_order(&ImportanceVector::new(vec![1.0; 3]).unwrap()).unwrap();
        assert_eq!(pi, Permutation::identity(3));
        assert!((v - 2.0).abs() < 1e-12);
        assert!(brute_force_best_order(&ImportanceVector::new(vec![1.0; 9]).unwrap()).is_err());
    }

    #[test]
    fn brute_force_agrees_with_sorting_on_ties() {
        let s = ImportanceVector::new(vec![2.0, 5.0, 2.0, 5.0, 1.0]).unwrap();
        assert_eq!(brute_force_best_order(&s).unwrap().0, optimal_cyclic_order(&s).unwrap());
    }

    #[test]
    fn expectation_of_equal_tables_is_zero() {
        let p = scalar_ls(&[1.0, 2.0, 0.5], &[0.3, 1.0, -2.0], Regularizer::None);
        let u = ZTable::from_blocks(&[Vector::from_element(1, 1.0), Vector::from_element(1, -1.0), Vector::from_element(1, 0.5)])
            .unwrap();
        assert_eq!(expected_contraction(&p, &u, &u, 0.3).unwrap(), 0.0);
        let big = scalar_ls(&[1.0; 7], &[0.0; 7], Regularizer::None);
        let z = ZTable::zeros(7, 1);
        assert!(expected_contraction(&big, &z, &z, 0.3).is_err());
    }
}
