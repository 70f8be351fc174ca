//! Auxiliary function and its per-coordinate W+/W- decomposition.
//!
//! `A(delta, q) = sum_i q_i (e^{-(delta^T A)_i} - 1)` upper-bounds the change
//! in `D_B(0 || q)` along a parameter update, and under the column
//! normalization `sum_j |A_ji| <= 1` it is itself upper-bounded by the sum of
//! decoupled coordinate losses
//! `G(delta_j) = W_j^+ (e^{-delta_j} - 1) + W_j^- (e^{delta_j} - 1)`.

use crate::bregman::{ConstraintMatrix, DistPoint};
use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Exponent saturation for diagnostics; optimized deltas are box-bounded and
/// never get near this.
const EXP_CLAMP: f64 = 500.0;

fn exp_clamped(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// Per-coordinate split of the auxiliary bound by entry sign.
#[derive(Debug, Clone)]
pub struct CoordWeights {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
}

/// `A(delta, q) = sum_i q_i (e^{-(delta^T A)_i} - 1)`; zero at `delta = 0`.
pub fn auxiliary_value(delta: &[f64], q: &DistPoint, a: &ConstraintMatrix) -> Result<f64> {
    if q.len() != a.n_examples() {
        return Err(Error::Dimension(format!(
            "auxiliary_value: q has {} coordinates, matrix has {} examples",
            q.len(),
            a.n_examples()
        )));
    }
    let v = a.margins(delta)?;
    Ok(v
        .iter()
        .zip(q.values())
        .map(|(&vi, &qi)| qi * (exp_clamped(-vi) - 1.0))
        .sum())
}

fn coord_weight_pair(row: &[f64], q: &[f64]) -> (f64, f64) {
    let mut wp = 0.0;
    let mut wm = 0.0;
    for (&aji, &qi) in row.iter().zip(q) {
        if aji > 0.0 {
            wp += qi * aji;
        } else if aji < 0.0 {
            wm += qi * (-aji);
        }
        // zero entries contribute to neither side
    }
    (wp, wm)
}

/// `W_j^+ = sum_{A_ji > 0} q_i |A_ji|` and `W_j^-` over the negative entries.
pub fn coord_weights(q: &DistPoint, a: &ConstraintMatrix) -> Result<CoordWeights> {
    if q.len() != a.n_examples() {
        return Err(Error::Dimension(format!(
            "coord_weights: q has {} coordinates, matrix has {} examples",
            q.len(),
            a.n_examples()
        )));
    }
    let n = a.n_features();
    let pairs: Vec<(f64, f64)> = {
        #[cfg(feature = "parallel")]
        {
            (0..n)
                .into_par_iter()
                .map(|j| coord_weight_pair(a.row(j), q.values()))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n).map(|j| coord_weight_pair(a.row(j), q.values())).collect()
        }
    };
    Ok(CoordWeights {
        w_plus: pairs.iter().map(|p| p.0).collect(),
        w_minus: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Coordinate loss `G(d) = w+ (e^{-d} - 1) + w- (e^{d} - 1)`.
#[inline]
pub fn coord_loss(delta_j: f64, w_plus_j: f64, w_minus_j: f64) -> f64 {
    w_plus_j * (exp_clamped(-delta_j) - 1.0) + w_minus_j * (exp_clamped(delta_j) - 1.0)
}

/// `G'(d) = -w+ e^{-d} + w- e^{d}`.
#[inline]
pub fn coord_loss_grad(delta_j: f64, w_plus_j: f64, w_minus_j: f64) -> f64 {
    -w_plus_j * exp_clamped(-delta_j) + w_minus_j * exp_clamped(delta_j)
}

/// `G''(d) = w+ e^{-d} + w- e^{d} >= 0`.
#[inline]
pub fn coord_loss_hess(delta_j: f64, w_plus_j: f64, w_minus_j: f64) -> f64 {
    w_plus_j * exp_clamped(-delta_j) + w_minus_j * exp_clamped(delta_j)
}
