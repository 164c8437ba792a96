//! Families of local convex approximations.
//!
//! Each family keeps the base function and hands out a convex approximation
//! at an expansion point that agrees with the base to first order there:
//! `base - approx` is differentiable with zero gradient at the point.

use std::sync::Arc;

use super::convex::{GramSolver, L1Norm, Tilted};
use super::prox::project_weighted_l1_ball;
use super::smooth::{Composed, EivLoss, HBeta};
use super::{ApproxFamily, ConvexFunction, FuncError, SmoothFunction};
use crate::linops::{operator_norm, DiagonalScaling, LinearOperator};
use crate::vector;

/// A convex function used as its own approximation everywhere.
#[derive(Debug, Clone)]
pub struct Exact {
    f: Arc<dyn ConvexFunction>,
}

impl Exact {
    pub fn new(f: Arc<dyn ConvexFunction>) -> Self {
        Self { f }
    }
}

impl ApproxFamily for Exact {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.f.value(x)
    }

    fn expand(&self, _point: &[f64]) -> Arc<dyn ConvexFunction> {
        self.f.clone()
    }
}

/// `base + smooth`, approximated by `base`'s own approximation plus the
/// first-order Taylor expansion of `smooth`.
#[derive(Debug, Clone)]
pub struct Linearized {
    base: Arc<dyn ApproxFamily>,
    smooth: Arc<dyn SmoothFunction>,
}

impl Linearized {
    /// Convex part plus a differentiable part linearized at the expansion point.
    pub fn new(convex: Arc<dyn ConvexFunction>, smooth: Arc<dyn SmoothFunction>) -> Self {
        Self::over_family(Arc::new(Exact::new(convex)), smooth)
    }

    pub fn over_family(base: Arc<dyn ApproxFamily>, smooth: Arc<dyn SmoothFunction>) -> Self {
        assert_eq!(base.dim(), smooth.dim(), "family dimensions differ");
        Self { base, smooth }
    }
}

impl ApproxFamily for Linearized {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let b = self.base.value(x);
        if b == f64::INFINITY {
            return b;
        }
        b + self.smooth.value(x)
    }

    fn expand(&self, point: &[f64]) -> Arc<dyn ConvexFunction> {
        let grad = self.smooth.gradient(point);
        let offset = self.smooth.value(point) - vector::dot(&grad, point);
        Arc::new(Tilted::new(self.base.expand(point), grad, offset))
    }
}

/// Inner iterations of the projected solve used when the l1 bound is active.
pub const PROJECTED_SOLVE_ITERS: usize = 500;

/// The errors-in-variables loss convexified by adding back the subtracted
/// curvature: `G_z(x) = L(x) + s/2 ||x - z||^2`, optionally restricted to
/// `||x||_1 <= R`.
///
/// The metric prox solves `(c Z^T Z + D) x = D u + c Z^T b + s z`. With an
/// active bound the non-diagonal metric rules out a closed form, so an
/// accelerated projected gradient run of [`PROJECTED_SOLVE_ITERS`] steps is
/// used; that constrained step is inexact.
#[derive(Debug, Clone)]
pub struct CurvatureFamily {
    loss: Arc<EivLoss>,
    solver: Arc<GramSolver>,
    radius: Option<f64>,
    gram_norm: f64,
}

impl CurvatureFamily {
    pub fn new(loss: Arc<EivLoss>, radius: Option<f64>) -> Self {
        let z = loss.design().clone();
        let op_norm = operator_norm(&LinearOperator::Dense(z.clone())).value;
        let gram_norm = loss.gram_scale() * op_norm * op_norm;
        let solver = Arc::new(GramSolver::new(z, loss.gram_scale()));
        Self {
            loss,
            solver,
            radius,
            gram_norm,
        }
    }

    pub fn loss(&self) -> &Arc<EivLoss> {
        &self.loss
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        match self.radius {
            Some(r) => vector::norm1(x) <= r * (1.0 + 1e-12) + 1e-12,
            None => true,
        }
    }
}

impl ApproxFamily for CurvatureFamily {
    fn dim(&self) -> usize {
        self.loss.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        if !self.in_domain(x) {
            return f64::INFINITY;
        }
        self.loss.value(x)
    }

    fn expand(&self, point: &[f64]) -> Arc<dyn ConvexFunction> {
        Arc::new(CurvatureApprox {
            family: self.clone(),
            z: point.to_vec(),
        })
    }
}

/// `L(x) + s/2 ||x - z||^2` at a fixed `z`.
#[derive(Debug, Clone)]
pub struct CurvatureApprox {
    family: CurvatureFamily,
    z: Vec<f64>,
}

impl CurvatureApprox {
    fn unconstrained(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        let s = self.family.loss.curvature_shift();
        let rhs: Vec<f64> = metric
            .apply(u)
            .iter()
            .zip(self.family.loss.linear_term())
            .zip(&self.z)
            .map(|((du, l), z)| du + l + s * z)
            .collect();
        self.family.solver.solve(metric, &rhs)
    }

    /// Accelerated projected gradient for
    /// `1/2 x^T H x - r^T x` over the l1 ball, `H = c Z^T Z + D`.
    fn projected(
        &self,
        u: &[f64],
        metric: &DiagonalScaling,
        start: Vec<f64>,
        radius: f64,
    ) -> Vec<f64> {
        let loss = &self.family.loss;
        let s = loss.curvature_shift();
        let r: Vec<f64> = metric
            .apply(u)
            .iter()
            .zip(loss.linear_term())
            .zip(&self.z)
            .map(|((du, l), z)| du + l + s * z)
            .collect();
        let lip = self.family.gram_norm + metric.max();
        let id = DiagonalScaling::identity(u.len());
        let grad = |x: &[f64]| -> Vec<f64> {
            let mut g = loss.gram_apply(x);
            for ((gi, xi), (di, ri)) in g.iter_mut().zip(x).zip(metric.entries().iter().zip(&r)) {
                *gi += di * xi - ri;
            }
            g
        };
        let mut x = project_weighted_l1_ball(&start, &id, radius);
        let mut y = x.clone();
        let mut t = 1.0_f64;
        for _ in 0..PROJECTED_SOLVE_ITERS {
            let g = grad(&y);
            let step: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / lip).collect();
            let x_next = project_weighted_l1_ball(&step, &id, radius);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            y = x_next
                .iter()
                .zip(&x)
                .map(|(a, b)| a + mom * (a - b))
                .collect();
            x = x_next;
            t = t_next;
        }
        x
    }
}

impl ConvexFunction for CurvatureApprox {
    fn dim(&self) -> usize {
        self.z.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        if !self.family.in_domain(x) {
            return f64::INFINITY;
        }
        self.family.loss.value(x)
            + 0.5 * self.family.loss.curvature_shift() * vector::dist2_sq(x, &self.z)
    }

    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        let x = self.unconstrained(u, metric)?;
        match self.family.radius {
            Some(r) if vector::norm1(&x) > r => Ok(self.projected(u, metric, x, r)),
            _ => Ok(x),
        }
    }

    fn subgradient_nearest(&self, x: &[f64], _target: &[f64]) -> Result<Vec<f64>, FuncError> {
        if let Some(r) = self.family.radius {
            if vector::norm1(x) >= r * (1.0 - 1e-12) {
                return Err(FuncError::Unsupported(
                    "subgradient on the l1 boundary".into(),
                ));
            }
        }
        let mut g = self.family.loss.gradient(x);
        vector::axpy(
            self.family.loss.curvature_shift(),
            &vector::sub(x, &self.z),
            &mut g,
        );
        Ok(g)
    }
}

/// Log-TV with the whole penalty in `F`: `F(w) = nu logl1_beta(w)` split as
/// `nu ||w||_1` plus the concave `nu h_beta`, linearized at `v`.
/// `G` is the supplied loss family on `R^d`; `m` is the row count of `K`.
pub fn make_logtv_natural(
    nu: f64,
    beta: f64,
    loss: Arc<dyn ApproxFamily>,
    m: usize,
) -> (Arc<dyn ApproxFamily>, Arc<dyn ApproxFamily>) {
    assert!(nu > 0.0 && beta > 0.0);
    let f = Linearized::new(
        Arc::new(L1Norm::new(m, nu)),
        Arc::new(HBeta::new(m, beta, nu)),
    );
    (Arc::new(f), loss)
}

/// Log-TV with the concave remainder moved into `G`:
/// `F = nu ||.||_1` and `G(x) = loss(x) + nu h_beta(Kx)`, the latter
/// linearized at `z`.
pub fn make_logtv_split(
    nu: f64,
    beta: f64,
    k: Arc<LinearOperator>,
    loss: Arc<dyn ApproxFamily>,
) -> (Arc<dyn ApproxFamily>, Arc<dyn ApproxFamily>) {
    assert!(nu > 0.0 && beta > 0.0);
    let m = k.rows();
    let f = Exact::new(Arc::new(L1Norm::new(m, nu)));
    let g = Linearized::over_family(
        loss,
        Arc::new(Composed::new(Arc::new(HBeta::new(m, beta, nu)), k)),
    );
    (Arc::new(f), Arc::new(g))
}
