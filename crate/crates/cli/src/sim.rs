//! The two simulation sweeps.

use std::path::PathBuf;

use mocca::diagnostics::fmt_float;
use mocca::experiments::{
    gen_sim1, gen_sim2, run_sim1, run_sim2, write_matrix_csv, write_penalty_curve,
    write_vector_csv, RunOptions, RunOutcome, Sim2Method, Variant, SIM1_LAMBDAS, SIM1_MAX_ITERS,
    SIM2_MAX_ITERS, SIM2_STEP_SIZES,
};
use mocca::solver::{InnerStop, DEFAULT_STOP_TOL};
use mocca::Status;
use rayon::prelude::*;

use crate::config::{check_positive, config_err, reject_unused, InnerStopSpec, Loaded, DEFAULT_SEED};
use crate::output::{gnuplot_script, OutDir};
use crate::{out_dir, thread_pool, CliError, Outcome};

const PENALTY_BETAS: [Option<f64>; 4] = [Some(1.0), Some(2.0), Some(10.0), None];

fn run_options(loaded: &Loaded, default_iters: usize) -> Result<RunOptions, CliError> {
    let s = &loaded.config.solver;
    let mut opts = RunOptions::new(s.max_iters.unwrap_or(default_iters));
    opts.stop_tol = s.stop_tol.unwrap_or(DEFAULT_STOP_TOL);
    opts.track_gap = s.track_gap;
    if opts.max_iters == 0 {
        return Err(config_err("solver.max_iters must be at least 1"));
    }
    check_positive("solver.stop_tol", &[opts.stop_tol])?;
    Ok(opts)
}

/// Solver keys that only `solve` reads.
fn reject_solve_keys(loaded: &Loaded, command: &str) -> Result<(), CliError> {
    let c = &loaded.config;
    let s = &c.solver;
    reject_unused(
        &[
            ("problem", c.problem.is_some()),
            ("solver.kind", s.kind.is_some()),
            ("solver.theta", s.theta.is_some()),
            ("solver.sigma", s.sigma.is_some()),
            ("solver.tau", s.tau.is_some()),
            ("solver.precondition_lambda", s.precondition_lambda.is_some()),
            ("solver.inner", s.inner.is_some()),
            ("solver.divergence_guard", s.divergence_guard.is_some()),
        ],
        command,
    )
}

struct CellResult {
    row: String,
    status: Status,
    title: String,
    path: PathBuf,
}

fn final_values(out: &RunOutcome) -> (usize, usize, String, String) {
    match out.trace.last() {
        Some(r) => (
            r.outer_iter,
            r.inner_iter,
            fmt_float(r.objective),
            fmt_float(r.change),
        ),
        None => (0, 0, String::new(), String::new()),
    }
}

fn finish(
    out: &OutDir,
    cells: Vec<CellResult>,
    summary_name: &str,
    header: &str,
    script: Option<&str>,
) -> Result<Outcome, CliError> {
    out.write(summary_name, |w| {
        writeln!(w, "{header}")?;
        for c in &cells {
            writeln!(w, "{}", c.row)?;
        }
        Ok(())
    })?;
    if let Some(name) = script {
        let traces: Vec<(String, PathBuf)> =
            cells.iter().map(|c| (c.title.clone(), c.path.clone())).collect();
        let text = gnuplot_script(&traces, "change", 4);
        out.write(name, |w| w.write_all(text.as_bytes()))?;
    }
    for c in &cells {
        println!("{:<28} {}", c.title, c.status);
    }
    if cells.iter().all(|c| c.status == Status::Diverged) {
        Ok(Outcome::AllDiverged)
    } else {
        Ok(Outcome::Success)
    }
}

pub fn cmd_sim1(loaded: &Loaded) -> Result<Outcome, CliError> {
    let c = &loaded.config;
    reject_solve_keys(loaded, "sim1")?;
    reject_unused(
        &[
            ("sweep.step_sizes", c.sweep.step_sizes.is_some()),
            ("sweep.methods", c.sweep.methods.is_some()),
            ("sweep.inner_stops", c.sweep.inner_stops.is_some()),
        ],
        "sim1",
    )?;
    let opts = run_options(loaded, SIM1_MAX_ITERS)?;
    let lambdas = c.sweep.lambdas.clone().unwrap_or_else(|| SIM1_LAMBDAS.to_vec());
    if lambdas.is_empty() {
        return Err(config_err("sweep.lambdas is empty"));
    }
    check_positive("sweep.lambdas", &lambdas)?;
    let variants = match &c.sweep.variants {
        None => vec![Variant::Natural, Variant::Split],
        Some(names) if names.is_empty() => return Err(config_err("sweep.variants is empty")),
        Some(names) => names
            .iter()
            .map(|n| match n.as_str() {
                "natural" => Ok(Variant::Natural),
                "split" => Ok(Variant::Split),
                other => Err(config_err(format!(
                    "unknown variant {other:?}; expected natural or split"
                ))),
            })
            .collect::<Result<_, _>>()?,
    };
    let pool = thread_pool(c.sweep.threads)?;
    let out = OutDir::create(out_dir(loaded))?;

    let inst = gen_sim1(c.seed.unwrap_or(DEFAULT_SEED));
    let grid: Vec<(Variant, f64)> = variants
        .iter()
        .flat_map(|&v| lambdas.iter().map(move |&l| (v, l)))
        .collect();
    let timing = c.output.timing;
    let cells: Vec<CellResult> = pool.install(|| {
        grid.par_iter()
            .map(|&(variant, lambda)| -> Result<CellResult, CliError> {
                let res = run_sim1(&inst, variant, lambda, opts)?;
                let title = format!("{}_lambda{lambda}", variant.as_str());
                let path = out.write(&format!("sim1_{title}.csv"), |w| {
                    res.trace.write_csv_with(w, timing)
                })?;
                let status = res.trace.status().unwrap_or(Status::MaxIters);
                let (outer, _, obj, change) = final_values(&res);
                Ok(CellResult {
                    row: format!("{},{lambda},{status},{outer},{obj},{change}", variant.as_str()),
                    status,
                    title,
                    path,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    out.write("penalty_curve.csv", |w| write_penalty_curve(&PENALTY_BETAS, w))?;
    if c.output.export_instance {
        out.write("instance_x_true.csv", |w| write_vector_csv(&inst.x_true, w))?;
        out.write("instance_A.csv", |w| write_matrix_csv(&inst.a, w))?;
        out.write("instance_b.csv", |w| write_vector_csv(&inst.b, w))?;
    }
    finish(
        &out,
        cells,
        "sim1_summary.csv",
        "variant,lambda,status,outer_iters,final_objective,final_change",
        c.output.gnuplot.then_some("sim1.gp"),
    )
}

fn parse_inner_stop(spec: &InnerStopSpec) -> Result<InnerStop, CliError> {
    match (spec.n_step, spec.eps) {
        (Some(n), None) if n >= 1 => Ok(InnerStop::Steps(n)),
        (None, Some(e)) if e.is_finite() && e > 0.0 => Ok(InnerStop::RelChange(e)),
        _ => Err(config_err(format!(
            "inner stop needs exactly one of n_step >= 1 or eps > 0, got {spec:?}"
        ))),
    }
}

pub fn default_inner_stops() -> Vec<InnerStop> {
    vec![
        InnerStop::Steps(1),
        InnerStop::Steps(5),
        InnerStop::RelChange(0.1),
        InnerStop::RelChange(0.05),
        InnerStop::RelChange(0.01),
    ]
}

pub fn cmd_sim2(loaded: &Loaded) -> Result<Outcome, CliError> {
    let c = &loaded.config;
    reject_solve_keys(loaded, "sim2")?;
    reject_unused(
        &[
            ("sweep.lambdas", c.sweep.lambdas.is_some()),
            ("sweep.variants", c.sweep.variants.is_some()),
        ],
        "sim2",
    )?;
    let opts = run_options(loaded, SIM2_MAX_ITERS)?;
    let steps = c.sweep.step_sizes.clone().unwrap_or_else(|| SIM2_STEP_SIZES.to_vec());
    if steps.is_empty() {
        return Err(config_err("sweep.step_sizes is empty"));
    }
    check_positive("sweep.step_sizes", &steps)?;
    let names = c.sweep.methods.clone().unwrap_or_else(|| vec!["apgd".into()]);
    if names.is_empty() {
        return Err(config_err("sweep.methods is empty"));
    }
    if let Some(bad) = names.iter().find(|n| !matches!(n.as_str(), "mocca" | "apgd")) {
        return Err(config_err(format!("unknown method {bad:?}; expected mocca or apgd")));
    }
    let with_apgd = names.iter().any(|n| n == "apgd");
    let rules = match &c.sweep.inner_stops {
        Some(_) if !with_apgd => {
            return Err(config_err("sweep.inner_stops is only used by the apgd method"))
        }
        Some(specs) if specs.is_empty() => return Err(config_err("sweep.inner_stops is empty")),
        Some(specs) => specs.iter().map(parse_inner_stop).collect::<Result<_, _>>()?,
        None => default_inner_stops(),
    };
    let pool = thread_pool(c.sweep.threads)?;
    let out = OutDir::create(out_dir(loaded))?;

    let inst = gen_sim2(c.seed.unwrap_or(DEFAULT_SEED));
    let mut grid = Vec::new();
    for &step in &steps {
        for name in &names {
            if name == "mocca" {
                grid.push((step, Sim2Method::Mocca));
            } else {
                grid.extend(rules.iter().map(|&r| (step, Sim2Method::Apgd(r))));
            }
        }
    }
    let timing = c.output.timing;
    let cells: Vec<CellResult> = pool.install(|| {
        grid.par_iter()
            .map(|&(step, method)| -> Result<CellResult, CliError> {
                let res = run_sim2(&inst, method, step, step, opts)?;
                let title = format!("{}_eta{step}", method.label());
                let path = out.write(&format!("sim2_{title}.csv"), |w| {
                    res.trace.write_csv_with(w, timing)
                })?;
                let status = res.trace.status().unwrap_or(Status::MaxIters);
                let (outer, inner, obj, change) = final_values(&res);
                let (kind, rule) = match method {
                    Sim2Method::Mocca => ("mocca", String::new()),
                    Sim2Method::Apgd(InnerStop::Steps(n)) => ("apgd", format!("n_step={n}")),
                    Sim2Method::Apgd(InnerStop::RelChange(e)) => ("apgd", format!("eps={e}")),
                };
                Ok(CellResult {
                    row: format!(
                        "{kind},{rule},{step},{step},{status},{outer},{inner},{obj},{change}"
                    ),
                    status,
                    title,
                    path,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    if c.output.export_instance {
        out.write("instance_x_true.csv", |w| write_vector_csv(&inst.base.x_true, w))?;
        out.write("instance_A.csv", |w| write_matrix_csv(&inst.base.a, w))?;
        out.write("instance_b.csv", |w| write_vector_csv(&inst.base.b, w))?;
        out.write("instance_Z.csv", |w| write_matrix_csv(&inst.z, w))?;
    }
    finish(
        &out,
        cells,
        "sim2_summary.csv",
        "method,inner_stop,eta,lambda,status,outer_iters,inner_iters,final_objective,final_change",
        c.output.gnuplot.then_some("sim2.gp"),
    )
}
