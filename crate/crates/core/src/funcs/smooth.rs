//! Smooth terms: the log-sum concave remainder `h_beta`, the
//! errors-in-variables loss and a few helpers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::SmoothFunction;
use crate::linops::LinearOperator;
use crate::vector;

/// `sum_i beta log(1 + |w_i| / beta)`.
pub fn logl1(w: &[f64], beta: f64) -> f64 {
    w.iter().map(|wi| beta * (wi.abs() / beta).ln_1p()).sum()
}

/// `logl1(w) - ||w||_1`; concave and differentiable.
pub fn h_beta(w: &[f64], beta: f64) -> f64 {
    w.iter()
        .map(|wi| beta * (wi.abs() / beta).ln_1p() - wi.abs())
        .sum()
}

/// `(grad h_beta(w))_i = -w_i / (beta + |w_i|)`.
pub fn grad_h_beta(w: &[f64], beta: f64) -> Vec<f64> {
    w.iter().map(|wi| -wi / (beta + wi.abs())).collect()
}

/// `weight * h_beta` on `R^dim`.
#[derive(Debug, Clone)]
pub struct HBeta {
    dim: usize,
    beta: f64,
    weight: f64,
}

impl HBeta {
    pub fn new(dim: usize, beta: f64, weight: f64) -> Self {
        assert!(beta > 0.0, "beta must be positive");
        Self { dim, beta, weight }
    }
}

impl SmoothFunction for HBeta {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.weight * h_beta(x, self.beta)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|xi| -self.weight * xi / (self.beta + xi.abs()))
            .collect()
    }
}

/// `x -> inner(K x)`.
#[derive(Debug, Clone)]
pub struct Composed {
    inner: Arc<dyn SmoothFunction>,
    op: Arc<LinearOperator>,
}

impl Composed {
    pub fn new(inner: Arc<dyn SmoothFunction>, op: Arc<LinearOperator>) -> Self {
        assert_eq!(inner.dim(), op.rows());
        Self { inner, op }
    }
}

impl SmoothFunction for Composed {
    fn dim(&self) -> usize {
        self.op.cols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(&self.op.apply(x))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.op.adjoint(&self.inner.gradient(&self.op.apply(x)))
    }
}

/// `coef/2 ||x||^2`; with a negative coefficient this is a concave term.
#[derive(Debug, Clone)]
pub struct ScaledSquaredNorm {
    dim: usize,
    coef: f64,
}

impl ScaledSquaredNorm {
    pub fn new(dim: usize, coef: f64) -> Self {
        Self { dim, coef }
    }
}

impl SmoothFunction for ScaledSquaredNorm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.coef * vector::dot(x, x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vector::scale(x, self.coef)
    }
}

/// Bias-corrected least-squares loss for a noisy design `Z`:
/// `1/2 x^T (c Z^T Z - s I) x - x^T (c Z^T b)`.
///
/// The normalized form uses `c = 1/n`, `s = sigma_A^2`; the unnormalized
/// form uses `c = 1`, `s = n sigma_A^2`.
#[derive(Debug, Clone)]
pub struct EivLoss {
    z: DMatrix<f64>,
    linear: Vec<f64>,
    gram_scale: f64,
    shift: f64,
    sigma_a: f64,
}

impl EivLoss {
    fn build(z: DMatrix<f64>, b: &[f64], sigma_a: f64, gram_scale: f64, shift: f64) -> Self {
        assert_eq!(z.nrows(), b.len(), "Z rows must match b length");
        let ztb = z.tr_mul(&DVector::from_column_slice(b));
        let linear = ztb.iter().map(|v| v * gram_scale).collect();
        Self {
            z,
            linear,
            gram_scale,
            shift,
            sigma_a,
        }
    }

    /// `1/2 x^T (Z^T Z / n - sigma_A^2 I) x - x^T (Z^T b / n)`.
    pub fn normalized(z: DMatrix<f64>, b: &[f64], sigma_a: f64) -> Self {
        let n = z.nrows() as f64;
        Self::build(z, b, sigma_a, 1.0 / n, sigma_a * sigma_a)
    }

    /// `1/2 x^T (Z^T Z - n sigma_A^2 I) x - x^T Z^T b`.
    pub fn unnormalized(z: DMatrix<f64>, b: &[f64], sigma_a: f64) -> Self {
        let n = z.nrows() as f64;
        Self::build(z, b, sigma_a, 1.0, n * sigma_a * sigma_a)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// The linear coefficient `c Z^T b`.
    pub fn linear_term(&self) -> &[f64] {
        &self.linear
    }

    pub fn gram_scale(&self) -> f64 {
        self.gram_scale
    }

    /// The subtracted curvature `s` (`sigma_A^2` or `n sigma_A^2`).
    pub fn curvature_shift(&self) -> f64 {
        self.shift
    }

    pub fn sigma_a(&self) -> f64 {
        self.sigma_a
    }

    /// `c Z^T Z x`.
    pub fn gram_apply(&self, x: &[f64]) -> Vec<f64> {
        let zx = &self.z * DVector::from_column_slice(x);
        self.z
            .tr_mul(&zx)
            .iter()
            .map(|v| v * self.gram_scale)
            .collect()
    }
}

impl SmoothFunction for EivLoss {
    fn dim(&self) -> usize {
        self.z.ncols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let zx = &self.z * DVector::from_column_slice(x);
        0.5 * self.gram_scale * zx.norm_squared() - 0.5 * self.shift * vector::dot(x, x)
            - vector::dot(x, &self.linear)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.gram_apply(x);
        for ((gi, xi), li) in g.iter_mut().zip(x).zip(&self.linear) {
            *gi -= self.shift * xi + li;
        }
        g
    }
}

/// Centered finite-difference gradient, used to validate hand-coded ones.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
