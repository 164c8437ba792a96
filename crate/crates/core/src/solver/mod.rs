//! Iteration schemes for `min F(Kx) + G(x)`.
//!
//! Every solver is a small state machine with a `step` method, so that two
//! schemes can be compared iterate by iterate, and a `run` method that loops
//! until the change norm drops below `stop_tol`, the iteration cap is hit,
//! or the divergence guard trips.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::diagnostics::{IterationTrace, Status, TraceRecord};
use crate::funcs::{ConvexFunction, FuncError};
use crate::linops::{DiagonalScaling, LinearOperator, LinopError};
use crate::vector;

mod apgd;
mod cp;
mod mocca;
mod proxgrad;

pub use apgd::{Apgd, ApgdConfig, InnerStop, APGD_MAX_INNER};
pub use cp::{Admm, AdmmState, ChambollePock};
pub use mocca::{MoccaBasic, MoccaStable, OuterReport};
pub use proxgrad::ProxGrad;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Func(#[from] FuncError),
    #[error(transparent)]
    Linop(#[from] LinopError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("iterates diverged after {} recorded iterations", trace.len())]
    Diverged { trace: IterationTrace },
}

/// Inner-loop lengths `L_t` for the averaged scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerSchedule {
    Constant(usize),
    /// `L_t = ceil(base^t)` for `t = 1, 2, ...`.
    Geometric(f64),
    /// Explicit list; the last entry repeats.
    List(Vec<usize>),
}

impl InnerSchedule {
    /// Length of the inner loop for outer iteration `t` (1-based).
    pub fn length(&self, t: usize) -> usize {
        match self {
            InnerSchedule::Constant(l) => *l,
            InnerSchedule::Geometric(b) => b.powi(t as i32).ceil().max(1.0) as usize,
            InnerSchedule::List(v) => v[(t - 1).min(v.len() - 1)],
        }
    }

    fn validate(&self) -> Result<(), SolveError> {
        let ok = match self {
            InnerSchedule::Constant(l) => *l >= 1,
            InnerSchedule::Geometric(b) => b.is_finite() && *b >= 1.0,
            InnerSchedule::List(v) => !v.is_empty() && v.iter().all(|&l| l >= 1),
        };
        if ok {
            Ok(())
        } else {
            Err(SolveError::InvalidConfig(format!(
                "inner schedule needs every L_t >= 1: {self:?}"
            )))
        }
    }
}

pub const DEFAULT_STOP_TOL: f64 = 1e-8;
pub const DEFAULT_DIVERGENCE_GUARD: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Extrapolation weight in `[0, 1]`.
    pub theta: f64,
    /// Dual step `Sigma` (length m).
    pub sigma: DiagonalScaling,
    /// Primal step `T` (length d).
    pub tau: DiagonalScaling,
    pub max_outer: usize,
    pub inner: InnerSchedule,
    pub stop_tol: f64,
    pub divergence_guard: f64,
    /// Record the optimality gap each iteration (costs extra operator applies).
    pub track_gap: bool,
}

impl SolverConfig {
    pub fn new(sigma: DiagonalScaling, tau: DiagonalScaling) -> Self {
        Self {
            theta: 1.0,
            sigma,
            tau,
            max_outer: 1000,
            inner: InnerSchedule::Constant(1),
            stop_tol: DEFAULT_STOP_TOL,
            divergence_guard: DEFAULT_DIVERGENCE_GUARD,
            track_gap: false,
        }
    }

    pub fn validate(&self, k: &LinearOperator) -> Result<(), SolveError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(SolveError::InvalidConfig(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if !(self.stop_tol > 0.0) {
            return Err(SolveError::InvalidConfig("stop_tol must be positive".into()));
        }
        if !(self.divergence_guard > 0.0) {
            return Err(SolveError::InvalidConfig(
                "divergence_guard must be positive".into(),
            ));
        }
        if self.sigma.len() != k.rows() || self.tau.len() != k.cols() {
            return Err(SolveError::InvalidConfig(format!(
                "step sizes have lengths ({}, {}) but K is {}x{}",
                self.sigma.len(),
                self.tau.len(),
                k.rows(),
                k.cols()
            )));
        }
        self.inner.validate()
    }
}

/// Starting point; missing pieces default to `x0 = 0`, `w0 = 0`, `z0 = x0`,
/// `v0 = K x0`.
#[derive(Debug, Clone, Default)]
pub struct InitialPoint {
    pub x: Option<Vec<f64>>,
    pub w: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
}

impl InitialPoint {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn primal(x: Vec<f64>) -> Self {
        Self {
            x: Some(x),
            ..Self::default()
        }
    }

    pub(crate) fn resolve(&self, k: &LinearOperator) -> Result<SolverState, SolveError> {
        let (m, d) = (k.rows(), k.cols());
        let x = self.x.clone().unwrap_or_else(|| vec![0.0; d]);
        let w = self.w.clone().unwrap_or_else(|| vec![0.0; m]);
        let z = self.z.clone().unwrap_or_else(|| x.clone());
        let v = self.v.clone().unwrap_or_else(|| k.apply(&x));
        for (name, got, want) in [
            ("x0", x.len(), d),
            ("w0", w.len(), m),
            ("z0", z.len(), d),
            ("v0", v.len(), m),
        ] {
            if got != want {
                return Err(SolveError::InvalidConfig(format!(
                    "{name} has length {got}, expected {want}"
                )));
            }
        }
        Ok(SolverState {
            x_prev: x.clone(),
            x,
            w,
            z,
            v,
        })
    }
}

/// Primal/dual iterate and expansion points.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub trace: IterationTrace,
}

/// Output of one primal-dual step with frozen approximations.
#[derive(Debug, Clone)]
pub struct ZvStep {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    /// `K x'`.
    pub kx: Vec<f64>,
    /// `K xbar'`.
    pub kxbar: Vec<f64>,
}

/// One primal-dual step on `min F_v(Kx) + G_z(x)` with `(z, v)` frozen:
///
/// ```text
/// x'    = prox_{G_z} (x - T K^T w)        in the T^{-1} metric
/// xbar  = x' + theta (x' - x)
/// w'    = prox_{F_v*}(w + Sigma K xbar)   in the Sigma^{-1} metric
/// ```
///
/// `kx` is `K x`; it is reused so that `K xbar = (1 + theta) K x' - theta K x`
/// costs no extra operator apply. Two applies per call: `K^T w` and `K x'`.
#[allow(clippy::too_many_arguments)]
pub fn step_zv(
    k: &LinearOperator,
    f_v: &dyn ConvexFunction,
    g_z: &dyn ConvexFunction,
    sigma: &DiagonalScaling,
    tau: &DiagonalScaling,
    theta: f64,
    x: &[f64],
    w: &[f64],
    kx: &[f64],
) -> Result<ZvStep, FuncError> {
    let ktw = k.adjoint(w);
    let u: Vec<f64> = x
        .iter()
        .zip(&ktw)
        .zip(tau.entries())
        .map(|((xi, gi), ti)| xi - ti * gi)
        .collect();
    let x_new = g_z.prox(&u, &tau.inverse())?;
    let kx_new = k.apply(&x_new);
    let kxbar: Vec<f64> = kx_new
        .iter()
        .zip(kx)
        .map(|(a, b)| (1.0 + theta) * a - theta * b)
        .collect();
    let q: Vec<f64> = w
        .iter()
        .zip(&kxbar)
        .zip(sigma.entries())
        .map(|((wi, ki), si)| wi + si * ki)
        .collect();
    let w_new = f_v.conj_prox(&q, &sigma.inverse())?;
    Ok(ZvStep {
        x: x_new,
        w: w_new,
        kx: kx_new,
        kxbar,
    })
}

/// `Sigma^{-1}(w_prev - w_cur) + K xbar`, given `K xbar`.
pub fn mirror_point(
    sigma: &DiagonalScaling,
    w_prev: &[f64],
    w_cur: &[f64],
    kxbar: &[f64],
) -> Vec<f64> {
    w_prev
        .iter()
        .zip(w_cur)
        .zip(kxbar)
        .zip(sigma.entries())
        .map(|(((a, b), k), s)| (a - b) / s + k)
        .collect()
}

/// Expansion-point update of the basic scheme: `z = x_cur` and
/// `v = Sigma^{-1}(w_prev - w_cur) + K xbar_cur`.
pub fn update_expansion_basic(
    w_prev: &[f64],
    w_cur: &[f64],
    xbar_cur: &[f64],
    k: &LinearOperator,
    sigma: &DiagonalScaling,
    x_cur: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let v = mirror_point(sigma, w_prev, w_cur, &k.apply(xbar_cur));
    (x_cur.to_vec(), v)
}

/// Smallest eigenvalue of `M = [[T^{-1}, -K^T], [-K, Sigma^{-1}]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assumption1Report {
    pub min_eig: f64,
    pub satisfied: bool,
}

pub const ASSUMPTION1_MAX_SIZE: usize = 5000;
pub const ASSUMPTION1_TOL: f64 = 1e-10;

/// Dense check that the step sizes make `M` positive semidefinite.
pub fn check_assumption1(
    sigma: &DiagonalScaling,
    tau: &DiagonalScaling,
    k: &LinearOperator,
) -> Result<Assumption1Report, SolveError> {
    let (m, d) = (k.rows(), k.cols());
    if m + d > ASSUMPTION1_MAX_SIZE {
        return Err(SolveError::Unsupported(format!(
            "dense eigen check limited to d + m <= {ASSUMPTION1_MAX_SIZE}, got {}",
            m + d
        )));
    }
    let kd = k.to_dense();
    let mut big = DMatrix::zeros(d + m, d + m);
    for j in 0..d {
        big[(j, j)] = 1.0 / tau.entries()[j];
    }
    for i in 0..m {
        big[(d + i, d + i)] = 1.0 / sigma.entries()[i];
        for j in 0..d {
            big[(d + i, j)] = -kd[(i, j)];
            big[(j, d + i)] = -kd[(i, j)];
        }
    }
    let min_eig = SymmetricEigen::new(big)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(Assumption1Report {
        min_eig,
        satisfied: min_eig >= -ASSUMPTION1_TOL,
    })
}

/// Per-step summary passed to the shared driver loop.
#[derive(Debug, Clone)]
pub(crate) struct StepInfo {
    pub objective: f64,
    pub change: f64,
    pub inner_steps: usize,
    pub opt_gap: Option<f64>,
}

/// Something that advances one outer iteration at a time.
pub(crate) trait Stepper {
    fn advance(&mut self) -> Result<StepInfo, SolveError>;
    fn iterate(&self) -> (&[f64], &[f64]);
}

/// Shared run loop: records the trace, applies the stopping rule and the
/// divergence guard.
pub(crate) fn drive<S: Stepper>(
    s: &mut S,
    max_outer: usize,
    stop_tol: f64,
    guard: f64,
    mut trace: IterationTrace,
) -> Result<IterationTrace, SolveError> {
    let start = Instant::now();
    let mut inner_total = 0usize;
    for outer in 1..=max_outer {
        let info = match s.advance() {
            Ok(info) => info,
            Err(SolveError::Func(FuncError::Numeric(_))) => {
                trace.finish(Status::Diverged);
                return Err(SolveError::Diverged { trace });
            }
            Err(e) => return Err(e),
        };
        inner_total += info.inner_steps;
        trace.push(TraceRecord {
            outer_iter: outer,
            inner_iter: inner_total,
            objective: info.objective,
            change: info.change,
            opt_gap: info.opt_gap,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        let (x, w) = s.iterate();
        let blown = !info.objective.is_finite()
            || info.objective.abs() > guard
            || !vector::all_finite(x)
            || !vector::all_finite(w)
            || vector::norm_inf(x) > guard
            || vector::norm_inf(w) > guard;
        if blown {
            trace.finish(Status::Diverged);
            return Err(SolveError::Diverged { trace });
        }
        if info.change < stop_tol {
            trace.finish(Status::Converged);
            return Ok(trace);
        }
    }
    trace.finish(Status::MaxIters);
    Ok(trace)
}
