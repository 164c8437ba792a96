//! Proximal gradient descent, the `K = 0` special case of the mirrored
//! iteration with the smooth part of `G` linearized.

use std::sync::Arc;

use super::{drive, Solution, SolveError, StepInfo, Stepper, DEFAULT_DIVERGENCE_GUARD, DEFAULT_STOP_TOL};
use crate::diagnostics::IterationTrace;
use crate::funcs::{ConvexFunction, SmoothFunction};
use crate::linops::DiagonalScaling;
use crate::vector;

/// `x+ = prox_{tau g}(x - tau grad h(x))`.
#[derive(Debug)]
pub struct ProxGrad {
    g: Arc<dyn ConvexFunction>,
    h: Arc<dyn SmoothFunction>,
    metric: DiagonalScaling,
    tau: f64,
    x: Vec<f64>,
    objective: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub divergence_guard: f64,
}

impl ProxGrad {
    pub fn new(
        g: Arc<dyn ConvexFunction>,
        h: Arc<dyn SmoothFunction>,
        tau: f64,
        x0: Vec<f64>,
        max_iters: usize,
    ) -> Result<Self, SolveError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(SolveError::InvalidConfig(format!("step size must be positive, got {tau}")));
        }
        if g.dim() != h.dim() || x0.len() != g.dim() {
            return Err(SolveError::InvalidConfig("dimension mismatch".into()));
        }
        let metric = DiagonalScaling::uniform(x0.len(), 1.0 / tau)?;
        let objective = g.value(&x0) + h.value(&x0);
        Ok(Self {
            g,
            h,
            metric,
            tau,
            x: x0,
            objective,
            max_iters,
            stop_tol: DEFAULT_STOP_TOL,
            divergence_guard: DEFAULT_DIVERGENCE_GUARD,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn step(&mut self) -> Result<f64, SolveError> {
        let mut u = self.h.gradient(&self.x);
        for (ui, xi) in u.iter_mut().zip(&self.x) {
            *ui = xi - self.tau * *ui;
        }
        let x_new = self.g.prox(&u, &self.metric)?;
        let change = vector::dist2_sq(&x_new, &self.x).sqrt();
        self.objective = self.g.value(&x_new) + self.h.value(&x_new);
        self.x = x_new;
        Ok(change)
    }

    pub fn run(mut self) -> Result<Solution, SolveError> {
        let (iters, tol, guard) = (self.max_iters, self.stop_tol, self.divergence_guard);
        let trace = drive(&mut self, iters, tol, guard, IterationTrace::new())?;
        Ok(Solution {
            x: self.x,
            w: Vec::new(),
            trace,
        })
    }
}

impl Stepper for ProxGrad {
    fn advance(&mut self) -> Result<StepInfo, SolveError> {
        let change = self.step()?;
        Ok(StepInfo {
            objective: self.objective,
            change,
            inner_steps: 1,
            opt_gap: None,
        })
    }

    fn iterate(&self) -> (&[f64], &[f64]) {
        (&self.x, &[])
    }
}
