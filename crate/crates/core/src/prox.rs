//! Closed-form proximal operators and subdifferential residuals.

use crate::error::{invalid, Error, Result};
use crate::model::{Regularizer, Vector};

/// `argmin_y { alpha * r(y) + 0.5 * ||y - v||^2 }`.
pub fn prox(r: Regularizer, alpha: f64, v: &Vector) -> Result<Vector> {
    let mut out = v.clone();
    prox_in_place(r, alpha, &mut out)?;
    Ok(out)
}

pub fn prox_in_place(r: Regularizer, alpha: f64, v: &mut Vector) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid(format!("prox step must be > 0, got {alpha}")));
    }
    r.validate()?;
    match r {
        Regularizer::None => {}
        Regularizer::L1(lambda) => {
            let t = alpha * lambda;
            for x in v.iter_mut() {
                *x = soft_threshold(*x, t);
            }
        }
        Regularizer::L2Sq(lambda) => {
            *v /= 1.0 + alpha * lambda;
        }
    }
    Ok(())
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `min_{g in dr(x)} ||g_smooth + g||^2`, solved coordinatewise.
pub fn subgradient_residual(r: Regularizer, x: &Vector, g_smooth: &Vector) -> Result<f64> {
    if x.len() != g_smooth.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: g_smooth.len() });
    }
    r.validate()?;
    Ok(match r {
        Regularizer::None => g_smooth.norm_squared(),
        Regularizer::L1(lambda) => x
            .iter()
            .zip(g_smooth.iter())
            .map(|(&xi, &gi)| {
                let e = if xi == 0.0 {
                    (gi.abs() - lambda).max(0.0)
                } else {
                    gi + lambda * xi.signum()
                };
                e * e
            })
            .sum(),
        Regularizer::L2Sq(lambda) => x
            .iter()
            .zip(g_smooth.iter())
            .map(|(&xi, &gi)| {
                let e = gi + lambda * xi;
                e * e
            })
            .sum(),
    })
}
