//! Built-in self checks on tiny instances, run in a fixed order.

use std::sync::Arc;

use mocca::diagnostics::critical_point_gap;
use mocca::funcs::{
    make_logtv_natural, ConvexFunction, EivLoss, ElasticL1, Exact, GroupL1, L1Norm, LeastSquares,
    Linearized, SquaredError, Tilted, ZeroFn,
};
use mocca::linops::{
    make_diff_1d, make_diff_2d, make_preconditioners, op_norm_estimate, stack_operators,
    POWER_MAX_ITERS, POWER_TOL,
};
use mocca::solver::{
    check_assumption1, Admm, Apgd, ApgdConfig, ChambollePock, InitialPoint, InnerStop, MoccaBasic,
    ProxGrad,
};
use mocca::vector::{dot, max_abs_diff, scale, sub};
use mocca::{BlockStructure, CompositeProblem, DiagonalScaling, LinearOperator, SolverConfig};
use nalgebra::DMatrix;

use crate::{CliError, Outcome};

/// Deliberate defects for exercising the failure path.
#[derive(Debug, Clone, Copy, Default)]
pub struct Faults {
    pub adjoint_sign: bool,
}

struct Check {
    name: &'static str,
    run: fn(&Faults) -> Result<String, String>,
}

/// Deterministic pseudo-random entries in `[-1, 1]`.
fn wave(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 + 1.0) * 1.618 + phase).sin()).collect()
}

fn adjoint_check(k: &LinearOperator, faults: &Faults) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for trial in 0..5 {
        let x = wave(k.cols(), trial as f64);
        let w = wave(k.rows(), 10.0 + trial as f64);
        let mut ktw = k.adjoint(&w);
        if faults.adjoint_sign {
            ktw = scale(&ktw, -1.0);
        }
        let (lhs, rhs) = (dot(&k.apply(&x), &w), dot(&x, &ktw));
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    let msg = format!("relative error {worst:.2e}");
    if worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn small_ops() -> Vec<LinearOperator> {
    vec![
        make_diff_1d(7).unwrap(),
        make_diff_2d(4, 3).unwrap(),
        LinearOperator::Dense(DMatrix::from_fn(4, 6, |i, j| ((i * 6 + j) as f64).cos())),
    ]
}

fn moreau_check(f: &dyn ConvexFunction, metric: Vec<f64>) -> Result<String, String> {
    let d = DiagonalScaling::new(metric).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for trial in 0..5 {
        let u = scale(&wave(d.len(), trial as f64 * 0.7), 2.5);
        let q = f.conj_prox(&u, &d).map_err(|e| e.to_string())?;
        let p = f.prox(&d.apply(&u), &d.inverse()).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&q, &sub(&u, &d.apply_inverse(&p))));
    }
    let msg = format!("max deviation {worst:.2e}");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(worst: f64, tol: f64, what: &str) -> Result<String, String> {
    let msg = format!("{what} {worst:.2e} (tol {tol:.0e})");
    if worst <= tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn denoise(d: usize, nu: f64) -> CompositeProblem {
    CompositeProblem::new(
        Arc::new(make_diff_1d(d).unwrap()),
        Arc::new(Exact::new(Arc::new(L1Norm::new(d - 1, nu)))),
        Arc::new(Exact::new(Arc::new(SquaredError::new(scale(&wave(d, 0.3), 2.0))))),
    )
    .unwrap()
}

fn tiny_logtv() -> CompositeProblem {
    let (n, d) = (12, 8);
    let a = DMatrix::from_fn(n, d, |i, j| ((i * d + j) as f64 * 0.91).sin());
    let x_true: Vec<f64> = (0..d).map(|j| if j < 4 { 1.0 } else { -0.5 }).collect();
    let b: Vec<f64> = (0..n)
        .map(|i| (0..d).map(|j| a[(i, j)] * x_true[j]).sum::<f64>() + 0.05 * (i as f64).cos())
        .collect();
    let loss = Arc::new(Exact::new(Arc::new(LeastSquares::new(a, b).unwrap())));
    let k = Arc::new(make_diff_1d(d).unwrap());
    let (f, g) = make_logtv_natural(0.5, 1.0, loss, d - 1);
    CompositeProblem::new(k, f, g).unwrap()
}

fn uniform_steps(m: usize, d: usize, s: f64, t: f64) -> SolverConfig {
    SolverConfig::new(
        DiagonalScaling::uniform(m, s).unwrap(),
        DiagonalScaling::uniform(d, t).unwrap(),
    )
}

const CHECKS: &[Check] = &[
    Check {
        name: "adjoint/diff1d",
        run: |f| adjoint_check(&make_diff_1d(9).unwrap(), f),
    },
    Check {
        name: "adjoint/diff2d",
        run: |f| adjoint_check(&make_diff_2d(4, 5).unwrap(), f),
    },
    Check {
        name: "adjoint/dense",
        run: |f| {
            let k = LinearOperator::Dense(DMatrix::from_fn(5, 7, |i, j| ((i + 3 * j) as f64).sin()));
            adjoint_check(&k, f)
        },
    },
    Check {
        name: "adjoint/stack",
        run: |f| {
            let (k, _) = stack_operators(vec![make_diff_1d(6).unwrap(), LinearOperator::Identity(6)])
                .map_err(|e| e.to_string())?;
            adjoint_check(&k, f)
        },
    },
    Check {
        name: "preconditioner/norm",
        run: |_| {
            let mut worst: f64 = 0.0;
            for k in small_ops() {
                for lambda in [0.25, 1.0, 4.0] {
                    let (s, t) = make_preconditioners(&k, lambda).map_err(|e| e.to_string())?;
                    worst = worst.max(op_norm_estimate(&s, &k, &t, POWER_MAX_ITERS, POWER_TOL).value);
                }
            }
            let msg = format!("largest ||Sigma^1/2 K T^1/2|| {worst:.10}");
            if worst <= 1.0 + 1e-8 {
                Ok(msg)
            } else {
                Err(msg)
            }
        },
    },
    Check {
        name: "preconditioner/assumption1",
        run: |_| {
            let mut lowest = f64::INFINITY;
            let mut ok = true;
            for k in small_ops() {
                for lambda in [0.25, 1.0, 4.0] {
                    let (s, t) = make_preconditioners(&k, lambda).map_err(|e| e.to_string())?;
                    let r = check_assumption1(&s, &t, &k).map_err(|e| e.to_string())?;
                    ok &= r.satisfied;
                    lowest = lowest.min(r.min_eig);
                }
            }
            let msg = format!("smallest eigenvalue {lowest:.3e}");
            if ok {
                Ok(msg)
            } else {
                Err(msg)
            }
        },
    },
    Check {
        name: "moreau/l1",
        run: |_| moreau_check(&L1Norm::new(5, 0.8), wave(5, 2.0).iter().map(|v| 1.5 + v).collect()),
    },
    Check {
        name: "moreau/group_l1",
        run: |_| moreau_check(&GroupL1::new(0.8, BlockStructure::from_sizes(&[2, 3])), vec![1.7; 5]),
    },
    Check {
        name: "moreau/elastic_l1",
        run: |_| {
            moreau_check(&ElasticL1::new(5, 0.6, 0.9), wave(5, 4.0).iter().map(|v| 1.5 + v).collect())
        },
    },
    Check {
        name: "moreau/squared_error",
        run: |_| {
            moreau_check(&SquaredError::new(wave(5, 1.0)), wave(5, 5.0).iter().map(|v| 1.5 + v).collect())
        },
    },
    Check {
        name: "moreau/tilted_l1",
        run: |_| {
            let f = Tilted::new(Arc::new(L1Norm::new(5, 0.7)), scale(&wave(5, 3.0), 0.3), 0.2);
            moreau_check(&f, wave(5, 6.0).iter().map(|v| 1.5 + v).collect())
        },
    },
    Check {
        name: "reduction/chambolle_pock",
        run: |_| {
            let p = denoise(10, 0.4);
            let config = uniform_steps(9, 10, 0.45, 0.45);
            let mut a = MoccaBasic::new(&p, config.clone(), &InitialPoint::zeros())
                .map_err(|e| e.to_string())?;
            let mut b = ChambollePock::new(
                &p.k,
                p.f.expand(&[0.0; 9]),
                p.g.expand(&[0.0; 10]),
                config,
                vec![0.0; 10],
                vec![0.0; 9],
            )
            .map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                a.step().map_err(|e| e.to_string())?;
                b.step().map_err(|e| e.to_string())?;
                worst = worst
                    .max(max_abs_diff(&a.state().x, b.x()))
                    .max(max_abs_diff(&a.state().w, b.w()));
            }
            within(worst, 1e-10, "max deviation")
        },
    },
    Check {
        name: "reduction/prox_grad",
        run: |_| {
            let (n, d) = (9, 6);
            let a = DMatrix::from_fn(n, d, |i, j| ((2 * i + j) as f64 * 0.7).cos());
            let ls = Arc::new(LeastSquares::new(a.clone(), wave(n, 0.9)).map_err(|e| e.to_string())?);
            let tau = 1.0 / a.norm().powi(2);
            let p = CompositeProblem::new(
                Arc::new(LinearOperator::Zero { rows: 1, cols: d }),
                Arc::new(Exact::new(Arc::new(ZeroFn::new(1)))),
                Arc::new(Linearized::new(Arc::new(L1Norm::new(d, 0.2)), ls.clone())),
            )
            .map_err(|e| e.to_string())?;
            let mut a_run = MoccaBasic::new(&p, uniform_steps(1, d, 1.0, tau), &InitialPoint::zeros())
                .map_err(|e| e.to_string())?;
            let mut b_run = ProxGrad::new(Arc::new(L1Norm::new(d, 0.2)), ls, tau, vec![0.0; d], 200)
                .map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                a_run.step().map_err(|e| e.to_string())?;
                b_run.step().map_err(|e| e.to_string())?;
                worst = worst.max(max_abs_diff(&a_run.state().x, b_run.x()));
            }
            within(worst, 1e-12, "max deviation")
        },
    },
    Check {
        name: "reduction/approx_prox_grad",
        run: |_| {
            let (n, d) = (10, 8);
            let z = DMatrix::from_fn(n, d, |i, j| ((i * d + j) as f64 * 1.37).sin());
            let b = wave(n, 0.2);
            let (eta, lambda, nu) = (50.0, 50.0, 0.5);
            let k = Arc::new(make_diff_1d(d).unwrap());
            let loss = Arc::new(EivLoss::unnormalized(z, &b, 0.1));
            let p = CompositeProblem::new(
                k.clone(),
                Arc::new(Exact::new(Arc::new(L1Norm::new(d - 1, nu)))),
                Arc::new(Linearized::new(Arc::new(ZeroFn::new(d)), loss.clone())),
            )
            .map_err(|e| e.to_string())?;
            let config = uniform_steps(d - 1, d, lambda * eta / 2.0, 1.0 / ((4.0 * lambda + 1.0) * eta));
            let mut a_run =
                MoccaBasic::new(&p, config, &InitialPoint::zeros()).map_err(|e| e.to_string())?;
            let mut b_run = Apgd::new(
                loss,
                &k,
                ApgdConfig::new(eta, lambda, nu, InnerStop::Steps(1)),
                vec![0.0; d],
            )
            .map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            for _ in 0..300 {
                a_run.step().map_err(|e| e.to_string())?;
                b_run.step().map_err(|e| e.to_string())?;
                worst = worst
                    .max(max_abs_diff(&a_run.state().x, b_run.x()))
                    .max(max_abs_diff(&a_run.state().w, &scale(b_run.u(), eta)));
            }
            within(worst, 1e-10, "max deviation in x and w = eta u")
        },
    },
    Check {
        name: "correspondence/admm",
        run: |_| {
            let p = tiny_logtv();
            let (m, d) = (p.dual_dim(), p.primal_dim());
            let config = uniform_steps(m, d, 2.0, 0.1);
            let mut a_run = MoccaBasic::new(&p, config.clone(), &InitialPoint::zeros())
                .map_err(|e| e.to_string())?;
            let mut b_run =
                Admm::new(&p, config, vec![0.0; d], vec![0.0; m]).map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            for _ in 0..300 {
                a_run.step().map_err(|e| e.to_string())?;
                b_run.step().map_err(|e| e.to_string())?;
                worst = worst.max(max_abs_diff(&a_run.state().w, b_run.recovered_dual()));
            }
            within(worst, 1e-10, "max dual deviation")
        },
    },
    Check {
        name: "critical_point",
        run: |_| {
            let p = tiny_logtv();
            let (m, d) = (p.dual_dim(), p.primal_dim());
            let mut config = uniform_steps(m, d, 2.0, 0.1);
            config.max_outer = 200_000;
            config.stop_tol = 1e-12;
            let sol = MoccaBasic::new(&p, config, &InitialPoint::zeros())
                .and_then(|s| s.run())
                .map_err(|e| e.to_string())?;
            let gap = critical_point_gap(&p, &sol.x, &sol.w).map_err(|e| e.to_string())?;
            within(gap, 1e-10, "gap at the limit")
        },
    },
];

pub fn cmd_check(faults: Faults) -> Result<Outcome, CliError> {
    let mut failed = 0;
    for c in CHECKS {
        let (tag, msg) = match (c.run)(&faults) {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("{:<30} {tag}  {msg}", c.name);
    }
    println!("{} of {} checks passed", CHECKS.len() - failed, CHECKS.len());
    Ok(if failed == 0 {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    })
}
