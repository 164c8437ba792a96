//! Convex baselines: preconditioned Chambolle-Pock, and the ADMM form of the
//! mirrored iteration.

use std::sync::Arc;

use super::{drive, Solution, SolveError, SolverConfig, StepInfo, Stepper};
use crate::diagnostics::{change_norm, IterationTrace};
use crate::funcs::{CompositeProblem, ConvexFunction};
use crate::linops::{op_norm_estimate, LinearOperator, POWER_MAX_ITERS, POWER_TOL};

/// Preconditioned Chambolle-Pock for convex `F`, `G`, coded independently
/// of the mirrored iteration:
///
/// ```text
/// x+   = argmin_y G(y) + <Ky, w> + 1/2 ||y - x||^2_{T^{-1}}
/// xbar = x+ + theta (x+ - x)
/// w+   = argmin_q F*(q) - <K xbar, q> + 1/2 ||q - w||^2_{Sigma^{-1}}
/// ```
#[derive(Debug)]
pub struct ChambollePock<'a> {
    k: &'a LinearOperator,
    f: Arc<dyn ConvexFunction>,
    g: Arc<dyn ConvexFunction>,
    config: SolverConfig,
    x: Vec<f64>,
    w: Vec<f64>,
    objective: f64,
}

impl<'a> ChambollePock<'a> {
    pub fn new(
        k: &'a LinearOperator,
        f: Arc<dyn ConvexFunction>,
        g: Arc<dyn ConvexFunction>,
        config: SolverConfig,
        x0: Vec<f64>,
        w0: Vec<f64>,
    ) -> Result<Self, SolveError> {
        config.validate(k)?;
        if x0.len() != k.cols() || w0.len() != k.rows() {
            return Err(SolveError::InvalidConfig("initial point has wrong size".into()));
        }
        let objective = f.value(&k.apply(&x0)) + g.value(&x0);
        Ok(Self {
            k,
            f,
            g,
            config,
            x: x0,
            w: w0,
            objective,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn step(&mut self) -> Result<f64, SolveError> {
        let c = &self.config;
        let ktw = self.k.adjoint(&self.w);
        let mut u = self.x.clone();
        for ((ui, gi), ti) in u.iter_mut().zip(&ktw).zip(c.tau.entries()) {
            *ui -= ti * gi;
        }
        let x_new = self.g.prox(&u, &c.tau.inverse())?;
        let xbar: Vec<f64> = x_new
            .iter()
            .zip(&self.x)
            .map(|(a, b)| a + c.theta * (a - b))
            .collect();
        let kxbar = self.k.apply(&xbar);
        let mut q = self.w.clone();
        for ((qi, ki), si) in q.iter_mut().zip(&kxbar).zip(c.sigma.entries()) {
            *qi += si * ki;
        }
        let w_new = self.f.conj_prox(&q, &c.sigma.inverse())?;
        let change = change_norm(&self.x, &self.w, &x_new, &w_new);
        self.objective = self.f.value(&self.k.apply(&x_new)) + self.g.value(&x_new);
        self.x = x_new;
        self.w = w_new;
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
        Ok(Solution {
            x: self.x,
            w: self.w,
            trace,
        })
    }
}

impl Stepper for ChambollePock<'_> {
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
        (&self.x, &self.w)
    }
}

/// Split-variable form state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: Vec<f64>,
    /// Split variable standing in for `Kx`.
    pub u: Vec<f64>,
    /// Scaled multiplier.
    pub delta: Vec<f64>,
}

/// The ADMM form with `G` expanded at `x_t` and `F` at `u_t`:
///
/// ```text
/// x+     = prox_{G_{x_t}}(x_t - T K^T (Delta_t + Sigma (K x_t - u_t)))   metric T^{-1}
/// Delta+ = Delta_t + Sigma (K x+ - u_t)
/// u+     = prox_{F_{u_t}}(K x+ + Sigma^{-1} Delta+)                     metric Sigma
/// ```
///
/// The dual iterate of the primal-dual form is `Delta + Sigma (K x - u)`.
/// The scheme expects `T^{-1} - K^T Sigma K` to be positive semidefinite;
/// a violation is recorded as a warning on the trace.
#[derive(Debug)]
pub struct Admm<'a> {
    problem: &'a CompositeProblem,
    config: SolverConfig,
    state: AdmmState,
    kx: Vec<f64>,
    w: Vec<f64>,
    warning: Option<String>,
}

impl<'a> Admm<'a> {
    /// Starts from `x0` with `u0 = K x0` and `Delta0 = w0`.
    pub fn new(
        problem: &'a CompositeProblem,
        config: SolverConfig,
        x0: Vec<f64>,
        w0: Vec<f64>,
    ) -> Result<Self, SolveError> {
        let k = &problem.k;
        config.validate(k)?;
        if x0.len() != k.cols() || w0.len() != k.rows() {
            return Err(SolveError::InvalidConfig("initial point has wrong size".into()));
        }
        let est = op_norm_estimate(&config.sigma, k, &config.tau, POWER_MAX_ITERS, POWER_TOL);
        let warning = (est.value > 1.0 + 1e-8).then(|| {
            format!(
                "T^-1 - K^T Sigma K is not positive semidefinite: ||Sigma^1/2 K T^1/2|| ~ {:.6}",
                est.value
            )
        });
        let kx = k.apply(&x0);
        Ok(Self {
            problem,
            config,
            state: AdmmState {
                u: kx.clone(),
                x: x0,
                delta: w0.clone(),
            },
            kx,
            w: w0,
            warning,
        })
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    /// `Delta + Sigma (K x - u)`.
    pub fn recovered_dual(&self) -> &[f64] {
        &self.w
    }

    pub fn precondition_warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn objective(&self) -> f64 {
        self.problem.objective_with_kx(&self.state.x, &self.kx)
    }

    pub fn step(&mut self) -> Result<f64, SolveError> {
        let c = &self.config;
        let k = &self.problem.k;
        let s = c.sigma.entries();
        let g_x = self.problem.g.expand(&self.state.x);
        let f_u = self.problem.f.expand(&self.state.u);

        let r: Vec<f64> = (0..s.len())
            .map(|i| self.state.delta[i] + s[i] * (self.kx[i] - self.state.u[i]))
            .collect();
        let ktr = k.adjoint(&r);
        let arg: Vec<f64> = self
            .state
            .x
            .iter()
            .zip(&ktr)
            .zip(c.tau.entries())
            .map(|((xi, gi), ti)| xi - ti * gi)
            .collect();
        let x_new = g_x.prox(&arg, &c.tau.inverse())?;
        let kx_new = k.apply(&x_new);
        let delta_new: Vec<f64> = (0..s.len())
            .map(|i| self.state.delta[i] + s[i] * (kx_new[i] - self.state.u[i]))
            .collect();
        let q: Vec<f64> = (0..s.len())
            .map(|i| kx_new[i] + delta_new[i] / s[i])
            .collect();
        let u_new = f_u.prox(&q, &c.sigma)?;
        let w_new: Vec<f64> = (0..s.len())
            .map(|i| delta_new[i] + s[i] * (kx_new[i] - u_new[i]))
            .collect();

        let change = change_norm(&self.state.x, &self.w, &x_new, &w_new);
        self.state = AdmmState {
            x: x_new,
            u: u_new,
            delta: delta_new,
        };
        self.kx = kx_new;
        self.w = w_new;
        Ok(change)
    }

    pub fn run(mut self) -> Result<Solution, SolveError> {
        let c = self.config.clone();
        let mut trace = IterationTrace::new();
        if let Some(msg) = &self.warning {
            trace.warn(msg.clone());
        }
        let trace = drive(&mut self, c.max_outer, c.stop_tol, c.divergence_guard, trace)?;
        Ok(Solution {
            x: self.state.x,
            w: self.w,
            trace,
        })
    }
}

impl Stepper for Admm<'_> {
    fn advance(&mut self) -> Result<StepInfo, SolveError> {
        let change = self.step()?;
        Ok(StepInfo {
            objective: self.objective(),
            change,
            inner_steps: 1,
            opt_gap: None,
        })
    }

    fn iterate(&self) -> (&[f64], &[f64]) {
        (&self.state.x, &self.w)
    }
}
