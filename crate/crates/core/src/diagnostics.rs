//! Convergence instrumentation: change norms, the optimality gap, and
//! per-iteration traces.

use std::fmt;
use std::io::{self, Write};

use crate::funcs::{CompositeProblem, ConvexFunction, FuncError};
use crate::linops::{DiagonalScaling, LinearOperator};
use crate::vector;

/// `||(x_prev - x_cur; w_prev - w_cur)||_2`.
pub fn change_norm(x_prev: &[f64], w_prev: &[f64], x_cur: &[f64], w_cur: &[f64]) -> f64 {
    (vector::dist2_sq(x_prev, x_cur) + vector::dist2_sq(w_prev, w_cur)).sqrt()
}

/// The four squared residuals that make up the optimality gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapTerms {
    pub dual: f64,
    pub primal: f64,
    pub z: f64,
    pub v: f64,
}

impl GapTerms {
    pub fn total(&self) -> f64 {
        self.dual + self.primal + self.z + self.v
    }
}

/// Optimality gap for given approximations `F_v` and `G_z`:
///
/// `||Kx - s1||^2 + ||-K^T w - s2||^2 + ||z - x||^2 + ||v - Kx||^2`
///
/// with `s1` the element of `dF_v*(w)` nearest `Kx` and `s2` the element of
/// `dG_z(x)` nearest `-K^T w`.
#[allow(clippy::too_many_arguments)]
pub fn optimality_gap_terms(
    k: &LinearOperator,
    f_v: &dyn ConvexFunction,
    g_z: &dyn ConvexFunction,
    x: &[f64],
    w: &[f64],
    z: &[f64],
    v: &[f64],
) -> Result<GapTerms, FuncError> {
    let kx = k.apply(x);
    let neg_ktw = vector::scale(&k.adjoint(w), -1.0);
    let s1 = f_v.conj_subgradient_nearest(w, &kx)?;
    let s2 = g_z.subgradient_nearest(x, &neg_ktw)?;
    Ok(GapTerms {
        dual: vector::dist2_sq(&kx, &s1),
        primal: vector::dist2_sq(&neg_ktw, &s2),
        z: vector::dist2_sq(z, x),
        v: vector::dist2_sq(v, &kx),
    })
}

/// Optimality gap with the approximations built from `problem` at `(z, v)`.
pub fn optimality_gap(
    problem: &CompositeProblem,
    x: &[f64],
    w: &[f64],
    z: &[f64],
    v: &[f64],
) -> Result<f64, FuncError> {
    let f_v = problem.f.expand(v);
    let g_z = problem.g.expand(z);
    Ok(optimality_gap_terms(&problem.k, f_v.as_ref(), g_z.as_ref(), x, w, z, v)?.total())
}

/// Gap at `(z, v) = (x, Kx)`; zero exactly when `x` is a critical point
/// with dual certificate `w`.
pub fn critical_point_gap(problem: &CompositeProblem, x: &[f64], w: &[f64]) -> Result<f64, FuncError> {
    let kx = problem.k.apply(x);
    optimality_gap(problem, x, w, x, &kx)
}

/// Constant `C` in `gap_t <= C (Change_t^2 + Change_{t-1}^2)` for the basic
/// iteration with `theta = 1`, where the gap is taken at
/// `(x_{t+1}, w_{t+1}, z_t, v_t)`.
///
/// With `a = ||K||`, `s = max Sigma^{-1}`, `tau = max T^{-1}`, the residuals
/// are bounded by `2(s^2 |dw|^2 + a^2 |dx|^2)`, `2(a^2 |dw|^2 + tau^2 |dx|^2)`,
/// `|dx|^2` and `3(s^2 |dw'|^2 + a^2 |dx|^2 + a^2 |dx'|^2)`.
pub fn gap_bound_constant(sigma: &DiagonalScaling, tau: &DiagonalScaling, k_norm: f64) -> f64 {
    let a2 = k_norm * k_norm;
    let s = 1.0 / sigma.min();
    let t = 1.0 / tau.min();
    let (s2, t2) = (s * s, t * t);
    (5.0 * a2 + 2.0 * t2 + 1.0)
        .max(2.0 * (a2 + s2))
        .max(3.0 * a2)
        .max(3.0 * s2)
}

/// Largest coordinate distance from `mirror` to `dF_v*(w)`; zero when the
/// mirrored expansion point is a valid subgradient.
pub fn mirror_inclusion_residual(
    f_v: &dyn ConvexFunction,
    w: &[f64],
    mirror: &[f64],
) -> Result<f64, FuncError> {
    let nearest = f_v.conj_subgradient_nearest(w, mirror)?;
    Ok(vector::max_abs_diff(&nearest, mirror))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIters => "max_iters",
            Status::Diverged => "diverged",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub outer_iter: usize,
    /// Cumulative inner steps so far.
    pub inner_iter: usize,
    pub objective: f64,
    pub change: f64,
    pub opt_gap: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    records: Vec<TraceRecord>,
    status: Option<Status>,
    warnings: Vec<String>,
}

pub const CSV_HEADER: &str = "outer_iter,inner_iter,objective,change,opt_gap,elapsed_ms";

impl IterationTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; `(outer, inner)` must strictly increase.
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                (record.outer_iter, record.inner_iter) > (last.outer_iter, last.inner_iter),
                "trace records must increase"
            );
        }
        self.records.push(record);
    }

    /// Sets the terminal status. Panics when called twice.
    pub fn finish(&mut self, status: Status) {
        assert!(self.status.is_none(), "trace status already set");
        self.status = Some(status);
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn status(&self) -> Option<Status> {
        self.status
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the trace as CSV with round-trip-safe floats.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        self.write_csv_with(out, true)
    }

    /// As [`write_csv`](Self::write_csv); with `timing` off the wall-clock
    /// column is left empty so repeated runs give identical files.
    pub fn write_csv_with<W: Write>(&self, mut out: W, timing: bool) -> io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            let gap = r.opt_gap.map(fmt_float).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.outer_iter,
                r.inner_iter,
                fmt_float(r.objective),
                fmt_float(r.change),
                gap,
                if timing { fmt_float(r.elapsed_ms) } else { String::new() }
            )?;
        }
        Ok(())
    }
}

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}
