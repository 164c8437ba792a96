//! The mirrored convex/concave iteration, basic and inner-loop forms.

use std::sync::Arc;

use super::{
    drive, mirror_point, step_zv, InitialPoint, Solution, SolveError, SolverConfig, SolverState,
    StepInfo, Stepper,
};
use crate::diagnostics::{change_norm, optimality_gap_terms, IterationTrace};
use crate::funcs::{CompositeProblem, ConvexFunction};

/// Basic scheme: one primal-dual step, then re-expand at
/// `z = x_{t+1}`, `v = Sigma^{-1}(w_t - w_{t+1}) + K xbar_{t+1}`.
#[derive(Debug)]
pub struct MoccaBasic<'a> {
    problem: &'a CompositeProblem,
    config: SolverConfig,
    state: SolverState,
    kx: Vec<f64>,
    f_v: Arc<dyn ConvexFunction>,
    g_z: Arc<dyn ConvexFunction>,
    used: Option<Used>,
    t: usize,
}

/// Approximations and expansion points used by the most recent step.
#[derive(Debug, Clone)]
struct Used {
    f_v: Arc<dyn ConvexFunction>,
    g_z: Arc<dyn ConvexFunction>,
    z: Vec<f64>,
    v: Vec<f64>,
}

impl<'a> MoccaBasic<'a> {
    pub fn new(
        problem: &'a CompositeProblem,
        config: SolverConfig,
        init: &InitialPoint,
    ) -> Result<Self, SolveError> {
        config.validate(&problem.k)?;
        let state = init.resolve(&problem.k)?;
        let kx = problem.k.apply(&state.x);
        let f_v = problem.f.expand(&state.v);
        let g_z = problem.g.expand(&state.z);
        Ok(Self {
            problem,
            config,
            state,
            kx,
            f_v,
            g_z,
            used: None,
            t: 0,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    /// `F_{v_t}` used by the last step, for inclusion checks on `w_{t+1}`.
    pub fn last_f_v(&self) -> Option<&Arc<dyn ConvexFunction>> {
        self.used.as_ref().map(|u| &u.f_v)
    }

    /// `(z_t, v_t)` used by the last step.
    pub fn last_expansion(&self) -> Option<(&[f64], &[f64])> {
        self.used.as_ref().map(|u| (u.z.as_slice(), u.v.as_slice()))
    }

    /// Optimality gap at `(x_{t+1}, w_{t+1}, z_t, v_t)`.
    pub fn last_gap(&self) -> Result<Option<f64>, SolveError> {
        let Some(u) = &self.used else {
            return Ok(None);
        };
        let terms = optimality_gap_terms(
            &self.problem.k,
            u.f_v.as_ref(),
            u.g_z.as_ref(),
            &self.state.x,
            &self.state.w,
            &u.z,
            &u.v,
        )?;
        Ok(Some(terms.total()))
    }

    /// One iteration; returns the change norm.
    pub fn step(&mut self) -> Result<f64, SolveError> {
        let c = &self.config;
        let st = step_zv(
            &self.problem.k,
            self.f_v.as_ref(),
            self.g_z.as_ref(),
            &c.sigma,
            &c.tau,
            c.theta,
            &self.state.x,
            &self.state.w,
            &self.kx,
        )?;
        let mirror = mirror_point(&c.sigma, &self.state.w, &st.w, &st.kxbar);
        let change = change_norm(&self.state.x, &self.state.w, &st.x, &st.w);
        let new_f = self.problem.f.expand(&mirror);
        let new_g = self.problem.g.expand(&st.x);
        let old_z = std::mem::replace(&mut self.state.z, st.x.clone());
        let old_v = std::mem::replace(&mut self.state.v, mirror);
        self.used = Some(Used {
            f_v: std::mem::replace(&mut self.f_v, new_f),
            g_z: std::mem::replace(&mut self.g_z, new_g),
            z: old_z,
            v: old_v,
        });
        self.state.x_prev = std::mem::replace(&mut self.state.x, st.x);
        self.state.w = st.w;
        self.kx = st.kx;
        self.t += 1;
        Ok(change)
    }

    pub fn objective(&self) -> f64 {
        self.problem.objective_with_kx(&self.state.x, &self.kx)
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
            x: self.state.x,
            w: self.state.w,
            trace,
        })
    }
}

impl Stepper for MoccaBasic<'_> {
    fn advance(&mut self) -> Result<StepInfo, SolveError> {
        let change = self.step()?;
        let opt_gap = if self.config.track_gap {
            self.last_gap()?
        } else {
            None
        };
        Ok(StepInfo {
            objective: self.objective(),
            change,
            inner_steps: 1,
            opt_gap,
        })
    }

    fn iterate(&self) -> (&[f64], &[f64]) {
        (&self.state.x, &self.state.w)
    }
}

/// Start and end points of the inner loop of one outer iteration.
#[derive(Debug, Clone)]
pub struct OuterReport {
    pub x_start: Vec<f64>,
    pub w_start: Vec<f64>,
    pub x_end: Vec<f64>,
    pub w_end: Vec<f64>,
    pub inner_steps: usize,
    pub change: f64,
}

/// Inner-loop scheme: `L_t` steps with frozen `(z_t, v_t)`, after which the
/// primal, dual and both expansion points are inner-loop averages.
#[derive(Debug)]
pub struct MoccaStable<'a> {
    problem: &'a CompositeProblem,
    config: SolverConfig,
    state: SolverState,
    kx: Vec<f64>,
    f_v: Arc<dyn ConvexFunction>,
    g_z: Arc<dyn ConvexFunction>,
    used: Option<Used>,
    t: usize,
}

impl<'a> MoccaStable<'a> {
    pub fn new(
        problem: &'a CompositeProblem,
        config: SolverConfig,
        init: &InitialPoint,
    ) -> Result<Self, SolveError> {
        config.validate(&problem.k)?;
        let state = init.resolve(&problem.k)?;
        let kx = problem.k.apply(&state.x);
        let f_v = problem.f.expand(&state.v);
        let g_z = problem.g.expand(&state.z);
        Ok(Self {
            problem,
            config,
            state,
            kx,
            f_v,
            g_z,
            used: None,
            t: 0,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn objective(&self) -> f64 {
        self.problem.objective_with_kx(&self.state.x, &self.kx)
    }

    pub fn last_gap(&self) -> Result<Option<f64>, SolveError> {
        let Some(u) = &self.used else {
            return Ok(None);
        };
        let terms = optimality_gap_terms(
            &self.problem.k,
            u.f_v.as_ref(),
            u.g_z.as_ref(),
            &self.state.x,
            &self.state.w,
            &u.z,
            &u.v,
        )?;
        Ok(Some(terms.total()))
    }

    /// One outer iteration.
    pub fn step(&mut self) -> Result<OuterReport, SolveError> {
        self.t += 1;
        let len = self.config.inner.length(self.t);
        let c = &self.config;
        let (d, m) = (self.state.x.len(), self.state.w.len());
        let mut x = self.state.x.clone();
        let mut w = self.state.w.clone();
        let mut kx = self.kx.clone();
        let (mut sx, mut sw, mut skx, mut sv) =
            (vec![0.0; d], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for _ in 0..len {
            let st = step_zv(
                &self.problem.k,
                self.f_v.as_ref(),
                self.g_z.as_ref(),
                &c.sigma,
                &c.tau,
                c.theta,
                &x,
                &w,
                &kx,
            )?;
            let mirror = mirror_point(&c.sigma, &w, &st.w, &st.kxbar);
            accumulate(&mut sx, &st.x);
            accumulate(&mut sw, &st.w);
            accumulate(&mut skx, &st.kx);
            accumulate(&mut sv, &mirror);
            x = st.x;
            w = st.w;
            kx = st.kx;
        }
        let l = len as f64;
        let avg = |s: Vec<f64>| -> Vec<f64> { s.into_iter().map(|v| v / l).collect() };
        let (ax, aw, akx, av) = (avg(sx), avg(sw), avg(skx), avg(sv));

        let change = change_norm(&self.state.x, &self.state.w, &ax, &aw);
        let new_f = self.problem.f.expand(&av);
        let new_g = self.problem.g.expand(&ax);
        let old_z = std::mem::replace(&mut self.state.z, ax.clone());
        let old_v = std::mem::replace(&mut self.state.v, av);
        self.used = Some(Used {
            f_v: std::mem::replace(&mut self.f_v, new_f),
            g_z: std::mem::replace(&mut self.g_z, new_g),
            z: old_z,
            v: old_v,
        });
        let x_start = std::mem::replace(&mut self.state.x, ax);
        let w_start = std::mem::replace(&mut self.state.w, aw);
        self.state.x_prev = x_start.clone();
        self.kx = akx;
        Ok(OuterReport {
            x_start,
            w_start,
            x_end: x,
            w_end: w,
            inner_steps: len,
            change,
        })
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
            x: self.state.x,
            w: self.state.w,
            trace,
        })
    }
}

fn accumulate(sum: &mut [f64], v: &[f64]) {
    for (s, x) in sum.iter_mut().zip(v) {
        *s += x;
    }
}

impl Stepper for MoccaStable<'_> {
    fn advance(&mut self) -> Result<StepInfo, SolveError> {
        let report = self.step()?;
        let opt_gap = if self.config.track_gap {
            self.last_gap()?
        } else {
            None
        };
        Ok(StepInfo {
            objective: self.objective(),
            change: report.change,
            inner_steps: report.inner_steps,
            opt_gap,
        })
    }

    fn iterate(&self) -> (&[f64], &[f64]) {
        (&self.state.x, &self.state.w)
    }
}
