//! Generic entry point: an operator, a registered `F` and `G`, a solver.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mocca::experiments::write_vector_csv;
use mocca::funcs::{
    ApproxFamily, ConvexFunction, EivLoss, Exact, GroupL1, HBeta, L1Norm,
    LeastSquares, Linearized, SquaredError, ZeroFn,
};
use mocca::linops::{make_diff_1d, make_diff_2d, make_preconditioners, read_csv_rows};
use mocca::solver::{
    Admm, ChambollePock, InitialPoint, InnerSchedule, MoccaBasic, MoccaStable, Solution,
    SolveError,
};
use mocca::{BlockStructure, CompositeProblem, DiagonalScaling, LinearOperator, SolverConfig, Status};
use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::Value;

use crate::config::{check_positive, config_err, reject_unused, Loaded};
use crate::output::OutDir;
use crate::{out_dir, CliError, Outcome};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub k: OperatorSpec,
    pub f: FSpec,
    pub g: GSpec,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// Dense matrix, one row per line.
    Csv { path: PathBuf },
    Identity { n: usize },
    Diff1d { n: usize },
    Diff2d { d1: usize, d2: usize },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FSpec {
    Zero,
    L1 { nu: f64 },
    /// `nu` times the sum of block Euclidean norms; `blocks` lists sizes.
    GroupL1 { nu: f64, blocks: Vec<usize> },
    /// `nu sum beta log(1 + |w_i| / beta)`, linearized concave part.
    Logl1 { nu: f64, beta: f64 },
}

/// A vector given inline or as a one-column CSV file.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum VecSource {
    Inline(Vec<f64>),
    Path(PathBuf),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum GSpec {
    /// `1/2 ||x - data||^2`.
    Quadratic { data: VecSource },
    /// `1/2 ||b - A x||^2`.
    LeastSquares { a: PathBuf, b: VecSource },
    /// Errors-in-variables loss, linearized at the expansion point.
    Eiv {
        z: PathBuf,
        b: VecSource,
        sigma_a: f64,
        #[serde(default)]
        normalized: bool,
    },
}

/// Resolves the `problem` value: an inline object, or a path to a JSON
/// file whose relative paths are taken from its own directory.
fn load_spec(loaded: &Loaded) -> Result<(ProblemSpec, PathBuf), CliError> {
    let value = loaded
        .config
        .problem
        .as_ref()
        .ok_or_else(|| config_err("solve needs a problem (inline object or file path)"))?;
    match value {
        Value::String(p) => {
            let path = loaded.resolve(Path::new(p));
            let file = File::open(&path)
                .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            let spec = serde_json::from_reader(BufReader::new(file))
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            Ok((spec, base))
        }
        other => {
            let spec = serde_json::from_value(other.clone())
                .map_err(|e| config_err(format!("problem: {e}")))?;
            Ok((spec, loaded.base_dir.clone()))
        }
    }
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let file = File::open(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    read_csv_rows(BufReader::new(file)).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let rows = read_rows(path)?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(config_err(format!("{} holds no matrix", path.display())));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(config_err(format!("{} has ragged rows", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn read_vec(src: &VecSource, base: &Path) -> Result<Vec<f64>, CliError> {
    match src {
        VecSource::Inline(v) => Ok(v.clone()),
        VecSource::Path(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            let rows = read_rows(&path)?;
            if rows.iter().any(|r| r.len() != 1) {
                return Err(config_err(format!("{} must have one value per line", path.display())));
            }
            Ok(rows.into_iter().map(|r| r[0]).collect())
        }
    }
}

fn build_operator(spec: &OperatorSpec, base: &Path) -> Result<LinearOperator, CliError> {
    let op = match spec {
        OperatorSpec::Csv { path } => {
            let p = if path.is_absolute() { path.clone() } else { base.join(path) };
            LinearOperator::Dense(read_matrix(&p)?)
        }
        OperatorSpec::Identity { n } if *n >= 1 => LinearOperator::Identity(*n),
        OperatorSpec::Identity { .. } => return Err(config_err("identity needs n >= 1")),
        OperatorSpec::Diff1d { n } => make_diff_1d(*n).map_err(|e| config_err(e.to_string()))?,
        OperatorSpec::Diff2d { d1, d2 } => {
            make_diff_2d(*d1, *d2).map_err(|e| config_err(e.to_string()))?
        }
    };
    Ok(op)
}

/// `F` as an approximation family, plus its convex form when it has one.
fn build_f(
    spec: &FSpec,
    m: usize,
) -> Result<(Arc<dyn ApproxFamily>, Option<Arc<dyn ConvexFunction>>), CliError> {
    let convex: Arc<dyn ConvexFunction> = match spec {
        FSpec::Zero => Arc::new(ZeroFn::new(m)),
        FSpec::L1 { nu } => {
            if !(nu.is_finite() && *nu >= 0.0) {
                return Err(config_err(format!("f.nu must be nonnegative, got {nu}")));
            }
            Arc::new(L1Norm::new(m, *nu))
        }
        FSpec::GroupL1 { nu, blocks } => {
            if !(nu.is_finite() && *nu >= 0.0) {
                return Err(config_err(format!("f.nu must be nonnegative, got {nu}")));
            }
            let bs = BlockStructure::from_sizes(blocks);
            if bs.total_len() != m {
                return Err(config_err(format!(
                    "group_l1 blocks cover {} entries but K has {m} rows",
                    bs.total_len()
                )));
            }
            Arc::new(GroupL1::new(*nu, bs))
        }
        FSpec::Logl1 { nu, beta } => {
            check_positive("f.nu", &[*nu])?;
            check_positive("f.beta", &[*beta])?;
            let f = Linearized::new(Arc::new(L1Norm::new(m, *nu)), Arc::new(HBeta::new(m, *beta, *nu)));
            return Ok((Arc::new(f), None));
        }
    };
    Ok((Arc::new(Exact::new(convex.clone())), Some(convex)))
}

fn build_g(
    spec: &GSpec,
    base: &Path,
) -> Result<(Arc<dyn ApproxFamily>, Option<Arc<dyn ConvexFunction>>), CliError> {
    let convex: Arc<dyn ConvexFunction> = match spec {
        GSpec::Quadratic { data } => Arc::new(SquaredError::new(read_vec(data, base)?)),
        GSpec::LeastSquares { a, b } => {
            let p = if a.is_absolute() { a.clone() } else { base.join(a) };
            let ls = LeastSquares::new(read_matrix(&p)?, read_vec(b, base)?)
                .map_err(|e| config_err(format!("least_squares: {e}")))?;
            Arc::new(ls)
        }
        GSpec::Eiv {
            z,
            b,
            sigma_a,
            normalized,
        } => {
            if !(sigma_a.is_finite() && *sigma_a >= 0.0) {
                return Err(config_err(format!("g.sigma_a must be nonnegative, got {sigma_a}")));
            }
            let p = if z.is_absolute() { z.clone() } else { base.join(z) };
            let zm = read_matrix(&p)?;
            let bv = read_vec(b, base)?;
            if bv.len() != zm.nrows() {
                return Err(config_err(format!(
                    "eiv: b has {} entries but Z has {} rows",
                    bv.len(),
                    zm.nrows()
                )));
            }
            let d = zm.ncols();
            let loss = if *normalized {
                EivLoss::normalized(zm, &bv, *sigma_a)
            } else {
                EivLoss::unnormalized(zm, &bv, *sigma_a)
            };
            let g = Linearized::new(Arc::new(ZeroFn::new(d)), Arc::new(loss));
            return Ok((Arc::new(g), None));
        }
    };
    Ok((Arc::new(Exact::new(convex.clone())), Some(convex)))
}

fn steps(loaded: &Loaded, k: &LinearOperator) -> Result<(DiagonalScaling, DiagonalScaling), CliError> {
    let s = &loaded.config.solver;
    match (s.sigma, s.tau) {
        (Some(sig), Some(tau)) => {
            check_positive("solver.sigma", &[sig])?;
            check_positive("solver.tau", &[tau])?;
            Ok((
                DiagonalScaling::uniform(k.rows(), sig).map_err(|e| config_err(e.to_string()))?,
                DiagonalScaling::uniform(k.cols(), tau).map_err(|e| config_err(e.to_string()))?,
            ))
        }
        (None, None) => {
            let lambda = s.precondition_lambda.unwrap_or(1.0);
            check_positive("solver.precondition_lambda", &[lambda])?;
            make_preconditioners(k, lambda).map_err(|e| config_err(format!("preconditioners: {e}")))
        }
        _ => Err(config_err("solver.sigma and solver.tau must be given together")),
    }
}

enum Kind {
    Cp,
    Mocca,
    MoccaStable,
    Admm,
}

pub fn cmd_solve(loaded: &Loaded) -> Result<Outcome, CliError> {
    let c = &loaded.config;
    let sw = &c.sweep;
    reject_unused(
        &[
            ("sweep.lambdas", sw.lambdas.is_some()),
            ("sweep.variants", sw.variants.is_some()),
            ("sweep.step_sizes", sw.step_sizes.is_some()),
            ("sweep.methods", sw.methods.is_some()),
            ("sweep.inner_stops", sw.inner_stops.is_some()),
            ("sweep.threads", sw.threads.is_some()),
            ("output.export_instance", c.output.export_instance),
            ("output.gnuplot", c.output.gnuplot),
        ],
        "solve",
    )?;
    let s = &c.solver;
    let kind = match s.kind.as_deref().unwrap_or("mocca") {
        "cp" => Kind::Cp,
        "mocca" => Kind::Mocca,
        "mocca_stable" => Kind::MoccaStable,
        "admm" => Kind::Admm,
        other => {
            return Err(config_err(format!(
                "unknown solver {other:?}; expected cp, mocca, mocca_stable or admm"
            )))
        }
    };
    if s.inner.is_some() && !matches!(kind, Kind::MoccaStable) {
        return Err(config_err("solver.inner is only used by mocca_stable"));
    }

    let (spec, base) = load_spec(loaded)?;
    let k = build_operator(&spec.k, &base)?;
    let (f, f_convex) = build_f(&spec.f, k.rows())?;
    let (g, g_convex) = build_g(&spec.g, &base)?;
    let k = Arc::new(k);
    let problem = CompositeProblem::new(k.clone(), f, g).map_err(|e| config_err(e.to_string()))?;
    let d = k.cols();
    let x0 = spec.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    if x0.len() != d {
        return Err(config_err(format!("x0 has length {} but K has {d} columns", x0.len())));
    }

    let (sigma, tau) = steps(loaded, &k)?;
    let mut config = SolverConfig::new(sigma, tau);
    if let Some(t) = s.theta {
        config.theta = t;
    }
    if let Some(n) = s.max_iters {
        config.max_outer = n;
    }
    if let Some(t) = s.stop_tol {
        config.stop_tol = t;
    }
    if let Some(g) = s.divergence_guard {
        config.divergence_guard = g;
    }
    config.track_gap = s.track_gap;
    if let Some(list) = &s.inner {
        config.inner = InnerSchedule::List(list.clone());
    }
    if config.max_outer == 0 {
        return Err(config_err("solver.max_iters must be at least 1"));
    }
    config.validate(&k).map_err(|e| config_err(e.to_string()))?;

    let m = k.rows();
    let result = match kind {
        Kind::Cp => {
            let (Some(fc), Some(gc)) = (f_convex, g_convex) else {
                return Err(config_err(
                    "cp needs convex f and g (zero, l1, group_l1 with quadratic or least_squares)",
                ));
            };
            if config.track_gap {
                return Err(config_err("solver.track_gap is not available for cp"));
            }
            ChambollePock::new(&k, fc, gc, config, x0, vec![0.0; m])?.run()
        }
        Kind::Mocca => MoccaBasic::new(&problem, config, &InitialPoint::primal(x0))?.run(),
        Kind::MoccaStable => MoccaStable::new(&problem, config, &InitialPoint::primal(x0))?.run(),
        Kind::Admm => Admm::new(&problem, config, x0, vec![0.0; m])?.run(),
    };

    let timing = c.output.timing;
    let out = OutDir::create(out_dir(loaded))?;
    match result {
        Ok(Solution { x, trace, .. }) => {
            for w in trace.warnings() {
                eprintln!("warning: {w}");
            }
            out.write("trace.csv", |w| trace.write_csv_with(w, timing))?;
            out.write("x.csv", |w| write_vector_csv(&x, w))?;
            let status = trace.status().unwrap_or(Status::MaxIters);
            let last = trace.last().map_or(f64::NAN, |r| r.objective);
            println!("status {status} after {} iterations, objective {last:.12e}", trace.len());
            Ok(Outcome::Success)
        }
        Err(SolveError::Diverged { trace }) => {
            out.write("trace.csv", |w| trace.write_csv_with(w, timing))?;
            println!("status diverged after {} iterations", trace.len());
            Ok(Outcome::AllDiverged)
        }
        Err(e) => Err(e.into()),
    }
}
