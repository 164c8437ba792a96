//! Function framework: convex terms with metric proxes, smooth terms, and
//! families of local convex approximations.
//!
//! A composite problem is `F(Kx) + G(x)`. Each of `F` and `G` is held as an
//! [`ApproxFamily`]: it evaluates the (possibly nonconvex) base function and
//! produces a convex approximation at any expansion point, accurate to first
//! order there. The solvers only ever touch the convex approximations,
//! through [`ConvexFunction::prox`] and [`ConvexFunction::conj_prox`].
//!
//! Functions taking the value `+inf` report it as `f64::INFINITY` from
//! `value`; proxes always return points in the domain.

use std::fmt::Debug;
use std::sync::Arc;

use thiserror::Error;

use crate::linops::{DiagonalScaling, LinearOperator};

pub mod convex;
pub mod family;
pub mod prox;
pub mod smooth;

pub use convex::{
    DenseQuadratic, ElasticL1, GroupL1, L1Ball, L1Norm, LeastSquares, SquaredError, Tilted, ZeroFn,
};
pub use family::{
    make_logtv_natural, make_logtv_split, CurvatureFamily, Exact, Linearized,
};
pub use prox::{
    moreau_conj_prox, project_weighted_l1_ball, prox_weighted_l1, truncate_blocks,
    truncate_tilted,
};
pub use smooth::{grad_h_beta, h_beta, logl1, Composed, EivLoss, HBeta, ScaledSquaredNorm};

#[derive(Debug, Error)]
pub enum FuncError {
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("point outside the function domain")]
    OutsideDomain,
}

/// A differentiable (possibly nonconvex) term.
pub trait SmoothFunction: Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// A closed convex function with a metric proximal map.
pub trait ConvexFunction: Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Function value, `f64::INFINITY` outside the domain.
    fn value(&self, x: &[f64]) -> f64;

    /// `argmin_x f(x) + 1/2 ||x - u||_D^2`.
    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError>;

    /// `argmin_w f*(w) + 1/2 ||w - u||_D^2`. Defaults to the Moreau route.
    fn conj_prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        prox::moreau_conj_prox(u, metric, self)
    }

    /// The element of `df(x)` closest to `target`.
    fn subgradient_nearest(&self, _x: &[f64], _target: &[f64]) -> Result<Vec<f64>, FuncError> {
        Err(FuncError::Unsupported(format!(
            "no subgradient selector for {self:?}"
        )))
    }

    /// The element of `df*(w)` closest to `target`.
    fn conj_subgradient_nearest(
        &self,
        _w: &[f64],
        _target: &[f64],
    ) -> Result<Vec<f64>, FuncError> {
        Err(FuncError::Unsupported(format!(
            "no conjugate subgradient selector for {self:?}"
        )))
    }
}

/// A base function together with its local convex approximations.
pub trait ApproxFamily: Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// The base function value (may be nonconvex, `+inf` off-domain).
    fn value(&self, x: &[f64]) -> f64;

    /// The convex approximation at the expansion point.
    fn expand(&self, point: &[f64]) -> Arc<dyn ConvexFunction>;
}

/// `min_x F(Kx) + G(x)`.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub k: Arc<LinearOperator>,
    pub f: Arc<dyn ApproxFamily>,
    pub g: Arc<dyn ApproxFamily>,
}

impl CompositeProblem {
    pub fn new(
        k: Arc<LinearOperator>,
        f: Arc<dyn ApproxFamily>,
        g: Arc<dyn ApproxFamily>,
    ) -> Result<Self, FuncError> {
        if f.dim() != k.rows() {
            return Err(FuncError::Dimension(format!(
                "F acts on R^{} but K has {} rows",
                f.dim(),
                k.rows()
            )));
        }
        if g.dim() != k.cols() {
            return Err(FuncError::Dimension(format!(
                "G acts on R^{} but K has {} columns",
                g.dim(),
                k.cols()
            )));
        }
        Ok(Self { k, f, g })
    }

    pub fn primal_dim(&self) -> usize {
        self.k.cols()
    }

    pub fn dual_dim(&self) -> usize {
        self.k.rows()
    }

    /// `F(Kx) + G(x)`, `+inf` off-domain.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let kx = self.k.apply(x);
        self.objective_with_kx(x, &kx)
    }

    /// Objective when `Kx` is already available.
    pub fn objective_with_kx(&self, x: &[f64], kx: &[f64]) -> f64 {
        let g = self.g.value(x);
        if g == f64::INFINITY {
            return f64::INFINITY;
        }
        self.f.value(kx) + g
    }
}
