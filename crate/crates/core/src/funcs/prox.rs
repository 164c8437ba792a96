//! Closed-form proximal and conjugate-proximal maps under diagonal metrics.
//!
//! Every metric prox here solves `argmin_x f(x) + 1/2 ||x - u||_D^2`, where
//! `D` is the metric whose norm appears in the argmin.

use super::{ConvexFunction, FuncError};
use crate::linops::{BlockStructure, DiagonalScaling};
use crate::vector;

/// Soft-thresholding: `argmin nu ||x||_1 + 1/2 ||x - u||_D^2`.
pub fn prox_weighted_l1(u: &[f64], metric: &DiagonalScaling, nu: f64) -> Vec<f64> {
    u.iter()
        .zip(metric.entries())
        .map(|(&ui, &di)| soft_threshold(ui, nu / di))
        .collect()
}

#[inline]
pub fn soft_threshold(u: f64, threshold: f64) -> f64 {
    u.signum() * (u.abs() - threshold).max(0.0)
}

/// Clips `u - c` to `[-nu, nu]` entrywise and adds `c` back.
///
/// This is the conjugate metric prox of `nu ||.||_1 + <., c>` for every
/// diagonal metric.
pub fn truncate_tilted(u: &[f64], nu: f64, c: &[f64]) -> Vec<f64> {
    debug_assert_eq!(u.len(), c.len());
    u.iter()
        .zip(c)
        .map(|(&ui, &ci)| (ui - ci).clamp(-nu, nu) + ci)
        .collect()
}

/// Scales each block by `min(1, nu / ||u_B||_2)`.
pub fn truncate_blocks(u: &[f64], nu: f64, blocks: &BlockStructure) -> Vec<f64> {
    debug_assert_eq!(u.len(), blocks.total_len());
    let mut out = u.to_vec();
    for r in blocks.ranges() {
        let norm = vector::norm2(&u[r.clone()]);
        if norm > nu {
            let factor = nu / norm;
            out[r.clone()].iter_mut().for_each(|v| *v *= factor);
        }
    }
    out
}

/// Block soft-thresholding: each block shrunk by `max(0, 1 - t_B / ||u_B||)`.
pub fn block_soft_threshold(u: &[f64], thresholds: &[f64], blocks: &BlockStructure) -> Vec<f64> {
    let mut out = u.to_vec();
    for (r, &t) in blocks.ranges().iter().zip(thresholds) {
        let norm = vector::norm2(&u[r.clone()]);
        let factor = if norm > t { 1.0 - t / norm } else { 0.0 };
        out[r.clone()].iter_mut().for_each(|v| *v *= factor);
    }
    out
}

pub const L1_BALL_TOL: f64 = 1e-10;
pub const L1_BALL_MAX_BISECTIONS: usize = 200;

/// `argmin_{||x||_1 <= R} 1/2 ||x - q||_D^2`, by bisection on the multiplier
/// of the weighted soft-threshold `x_i = sign(q_i) (|q_i| - mu / D_i)_+`.
pub fn project_weighted_l1_ball(q: &[f64], metric: &DiagonalScaling, radius: f64) -> Vec<f64> {
    if vector::norm1(q) <= radius {
        return q.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; q.len()];
    }
    let d = metric.entries();
    let shrink = |mu: f64| -> Vec<f64> {
        q.iter()
            .zip(d)
            .map(|(&qi, &di)| soft_threshold(qi, mu / di))
            .collect()
    };
    let mut lo = 0.0;
    let mut hi = q
        .iter()
        .zip(d)
        .fold(0.0_f64, |m, (qi, di)| m.max(qi.abs() * di));
    let mut best = shrink(hi);
    for _ in 0..L1_BALL_MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let x = shrink(mid);
        let n = vector::norm1(&x);
        if n > radius {
            lo = mid;
        } else {
            hi = mid;
            best = x;
            if radius - n <= L1_BALL_TOL {
                break;
            }
        }
    }
    best
}

/// Conjugate metric prox through the diagonal-metric Moreau decomposition.
///
/// Returns `w' = argmin_w f*(w) + 1/2 ||w - u||_D^2` as `u - D^{-1} x'` with
/// `x' = argmin_x f(x) + 1/2 ||x - D u||_{D^{-1}}^2`. With `D = Sigma^{-1}`
/// the inner problem is `f(x) - <u, x> + 1/2 ||x||_Sigma^2`.
pub fn moreau_conj_prox<F: ConvexFunction + ?Sized>(
    u: &[f64],
    metric: &DiagonalScaling,
    f: &F,
) -> Result<Vec<f64>, FuncError> {
    let inner = f.prox(&metric.apply(u), &metric.inverse())?;
    Ok(vector::sub(u, &metric.apply_inverse(&inner)))
}
