//! Approximate proximal gradient for a smooth loss plus `nu ||Kx||_1`.
//!
//! Each outer step takes a gradient step on the loss, then approximates the
//! total-variation prox with a warm-started primal-dual inner loop:
//!
//! ```text
//! xt     = x_t - grad G(x_t) / eta
//! x'_l   = (1 + 1/(4 lambda))^{-1} (x'_{l-1} + xt/(4 lambda) - K^T u'_{l-1}/(4 lambda))
//! u'_l   = clip_{nu/eta}(u'_{l-1} + (lambda/2) K (2 x'_l - x'_{l-1}))
//! ```
//!
//! starting from `(x'_0, u'_0) = (x_t, u_t)`.

use std::sync::Arc;

use super::{drive, Solution, SolveError, StepInfo, Stepper, DEFAULT_DIVERGENCE_GUARD, DEFAULT_STOP_TOL};
use crate::diagnostics::{change_norm, IterationTrace};
use crate::funcs::SmoothFunction;
use crate::linops::LinearOperator;
use crate::vector;

/// Hard cap on inner steps for the relative-change rule.
pub const APGD_MAX_INNER: usize = 10_000;

/// When to leave the inner loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerStop {
    /// A fixed number of inner steps.
    Steps(usize),
    /// Stop once `||x'_l - x'_{l-1}|| <= eps ||x'_{l-1}||` (consecutive inner
    /// iterates), or at [`APGD_MAX_INNER`].
    RelChange(f64),
}

#[derive(Debug, Clone)]
pub struct ApgdConfig {
    pub eta: f64,
    pub lambda: f64,
    pub nu: f64,
    pub inner: InnerStop,
    pub max_outer: usize,
    pub stop_tol: f64,
    pub divergence_guard: f64,
}

impl ApgdConfig {
    pub fn new(eta: f64, lambda: f64, nu: f64, inner: InnerStop) -> Self {
        Self {
            eta,
            lambda,
            nu,
            inner,
            max_outer: 1000,
            stop_tol: DEFAULT_STOP_TOL,
            divergence_guard: DEFAULT_DIVERGENCE_GUARD,
        }
    }

    fn validate(&self) -> Result<(), SolveError> {
        let ok = self.eta > 0.0
            && self.lambda > 0.0
            && self.nu >= 0.0
            && match self.inner {
                InnerStop::Steps(n) => n >= 1,
                InnerStop::RelChange(e) => e > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(SolveError::InvalidConfig(format!("bad approximate-prox settings: {self:?}")))
        }
    }
}

#[derive(Debug)]
pub struct Apgd<'a> {
    loss: Arc<dyn SmoothFunction>,
    k: &'a LinearOperator,
    config: ApgdConfig,
    x: Vec<f64>,
    u: Vec<f64>,
    kx: Vec<f64>,
    last_inner: usize,
}

impl<'a> Apgd<'a> {
    /// Starts from `x0` with `u0 = 0`.
    pub fn new(
        loss: Arc<dyn SmoothFunction>,
        k: &'a LinearOperator,
        config: ApgdConfig,
        x0: Vec<f64>,
    ) -> Result<Self, SolveError> {
        config.validate()?;
        if loss.dim() != k.cols() || x0.len() != k.cols() {
            return Err(SolveError::InvalidConfig("dimension mismatch".into()));
        }
        let kx = k.apply(&x0);
        Ok(Self {
            loss,
            k,
            u: vec![0.0; k.rows()],
            config,
            x: x0,
            kx,
            last_inner: 0,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// The inner-loop dual variable.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn last_inner_steps(&self) -> usize {
        self.last_inner
    }

    /// `G(x) + nu ||Kx||_1`.
    pub fn objective(&self) -> f64 {
        self.loss.value(&self.x) + self.config.nu * vector::norm1(&self.kx)
    }

    /// One outer step; returns the change in `(x, eta u)`.
    pub fn step(&mut self) -> Result<f64, SolveError> {
        let c = &self.config;
        let denom = 4.0 * c.lambda + 1.0;
        let bound = c.nu / c.eta;
        // xt = x_t - step, kept implicit so that x'_{l-1} - xt rounds well
        let step: Vec<f64> = self
            .loss
            .gradient(&self.x)
            .iter()
            .map(|g| g / c.eta)
            .collect();

        let mut xp = self.x.clone();
        let mut up = self.u.clone();
        let mut kxp = self.kx.clone();
        let cap = match c.inner {
            InnerStop::Steps(n) => n,
            InnerStop::RelChange(_) => APGD_MAX_INNER,
        };
        let mut steps = 0;
        for l in 1..=cap {
            steps = l;
            let ktu = self.k.adjoint(&up);
            // the displayed update rearranged as a dual step followed by the
            // pull towards xt:
            // x'_l = (x'_{l-1} - K^T u' / (4 lambda + 1)) - (x'_{l-1} - xt) / (4 lambda + 1)
            let xn: Vec<f64> = (0..xp.len())
                .map(|j| {
                    let dual = xp[j] - ktu[j] / denom;
                    dual - ((xp[j] - self.x[j]) + step[j]) / denom
                })
                .collect();
            // K xbar from K x'_l and K x'_{l-1}, two applies per inner step
            let kxn = self.k.apply(&xn);
            let kxb: Vec<f64> = kxn.iter().zip(&kxp).map(|(a, b)| 2.0 * a - b).collect();
            let un: Vec<f64> = up
                .iter()
                .zip(&kxb)
                .map(|(u, k)| (u + 0.5 * c.lambda * k).clamp(-bound, bound))
                .collect();
            let done = match c.inner {
                InnerStop::Steps(_) => false,
                InnerStop::RelChange(eps) => {
                    let base = vector::norm2(&xp);
                    base > 0.0 && vector::dist2_sq(&xn, &xp).sqrt() <= eps * base
                }
            };
            let blown = !vector::all_finite(&xn) || vector::norm_inf(&xn) > c.divergence_guard;
            xp = xn;
            up = un;
            kxp = kxn;
            if done || blown {
                break;
            }
        }
        let eta = c.eta;
        let change = {
            let w_old = vector::scale(&self.u, eta);
            let w_new = vector::scale(&up, eta);
            change_norm(&self.x, &w_old, &xp, &w_new)
        };
        self.kx = kxp;
        self.x = xp;
        self.u = up;
        self.last_inner = steps;
        Ok(change)
    }

    pub fn run(mut self) -> Result<Solution, SolveError> {
        let c = self.config.clone();
        let trace = drive(
            &mut self,
            c.max_outer,
            c.stop_tol,
            c.divergence_guard,
            IterationTrace::new(),
        )?;
        let w = vector::scale(&self.u, c.eta);
        Ok(Solution {
            x: self.x,
            w,
            trace,
        })
    }
}

impl Stepper for Apgd<'_> {
    fn advance(&mut self) -> Result<StepInfo, SolveError> {
        let change = self.step()?;
        Ok(StepInfo {
            objective: self.objective(),
            change,
            inner_steps: self.last_inner,
            opt_gap: None,
        })
    }

    fn iterate(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.u)
    }
}
