//! Seeded instance generators and runners for the two total-variation
//! simulations: log-TV penalized least squares, and TV-penalized
//! errors-in-variables regression.
//!
//! Random draws come from a single ChaCha8 stream per seed, consumed in a
//! fixed order: `A` row-major, then the noise of `b`, then the noise of `Z`
//! row-major. `x_true` is deterministic. The second simulation therefore
//! shares `A`, `b` with the first for the same seed.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diagnostics::{fmt_float, IterationTrace};
use crate::funcs::{
    make_logtv_natural, make_logtv_split, ApproxFamily, CompositeProblem, EivLoss, Exact, L1Norm,
    LeastSquares, Linearized, ZeroFn,
};
use crate::linops::{make_diff_2d, DiagonalScaling, LinearOperator};
use crate::solver::{
    Apgd, ApgdConfig, InitialPoint, InnerStop, MoccaBasic, SolveError, SolverConfig,
};

pub const GRID_SIDE: usize = 25;
pub const N_OBS: usize = 200;
pub const NU: f64 = 20.0;
pub const BETA: f64 = 3.0;
pub const SIGMA_A: f64 = 0.2;
pub const SIM1_MAX_ITERS: usize = 20_000;
pub const SIM2_MAX_ITERS: usize = 5_000;
pub const SIM1_LAMBDAS: [f64; 5] = [4.0, 8.0, 16.0, 32.0, 64.0];
pub const SIM2_STEP_SIZES: [f64; 2] = [100.0, 200.0];

/// The 25x25 three-block 0/1 image, vectorized column-major: a 5x5 block in
/// the top-left corner, a 15x15 block in the middle and a 5x5 block in the
/// bottom-right corner.
pub fn block_pattern() -> Vec<f64> {
    let n = GRID_SIDE;
    let block = |i: usize| -> usize {
        if i < 5 {
            0
        } else if i < 20 {
            1
        } else {
            2
        }
    };
    let mut x = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            if block(i) == block(j) {
                x[i + j * n] = 1.0;
            }
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct Sim1Instance {
    pub x_true: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub nu: f64,
    pub beta: f64,
    pub k: Arc<LinearOperator>,
}

impl Sim1Instance {
    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.k.rows()
    }
}

#[derive(Debug, Clone)]
pub struct Sim2Instance {
    pub base: Sim1Instance,
    pub z: DMatrix<f64>,
    pub sigma_a: f64,
}

fn draw_sim1(rng: &mut ChaCha8Rng) -> Sim1Instance {
    let x_true = block_pattern();
    let d = x_true.len();
    let mut a = DMatrix::zeros(N_OBS, d);
    for i in 0..N_OBS {
        for j in 0..d {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let ax: nalgebra::DVector<f64> = &a * nalgebra::DVector::from_column_slice(&x_true);
    let b = ax
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(rng);
            v + e
        })
        .collect();
    let k = make_diff_2d(GRID_SIDE, GRID_SIDE).expect("grid is at least 2x2");
    Sim1Instance {
        x_true,
        a,
        b,
        nu: NU,
        beta: BETA,
        k: Arc::new(k),
    }
}

pub fn gen_sim1(seed: u64) -> Sim1Instance {
    draw_sim1(&mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn gen_sim2(seed: u64) -> Sim2Instance {
    gen_sim2_with_sigma(seed, SIGMA_A)
}

/// `Z = A + sigma_A N(0, 1)` entrywise.
pub fn gen_sim2_with_sigma(seed: u64, sigma_a: f64) -> Sim2Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = draw_sim1(&mut rng);
    let mut z = base.a.clone();
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            let e: f64 = StandardNormal.sample(&mut rng);
            z[(i, j)] += sigma_a * e;
        }
    }
    Sim2Instance { base, z, sigma_a }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Whole log penalty in `F`.
    Natural,
    /// Concave remainder moved into `G`.
    Split,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Natural => "natural",
            Variant::Split => "split",
        }
    }
}

/// `1/2 ||b - Ax||^2 + nu logl1_beta(grad_2d x)` in the chosen form.
pub fn sim1_problem(inst: &Sim1Instance, variant: Variant) -> CompositeProblem {
    let ls = LeastSquares::new(inst.a.clone(), inst.b.clone()).expect("consistent instance");
    let loss: Arc<dyn ApproxFamily> = Arc::new(Exact::new(Arc::new(ls)));
    let (f, g) = match variant {
        Variant::Natural => make_logtv_natural(inst.nu, inst.beta, loss, inst.m()),
        Variant::Split => make_logtv_split(inst.nu, inst.beta, inst.k.clone(), loss),
    };
    CompositeProblem::new(inst.k.clone(), f, g).expect("consistent instance")
}

/// `Sigma = lambda/2 I_m`, `T = 1/(4 lambda) I_d`.
pub fn sim1_steps(inst: &Sim1Instance, lambda: f64) -> (DiagonalScaling, DiagonalScaling) {
    (
        DiagonalScaling::uniform(inst.m(), lambda / 2.0).expect("positive lambda"),
        DiagonalScaling::uniform(inst.d(), 1.0 / (4.0 * lambda)).expect("positive lambda"),
    )
}

/// The unnormalized errors-in-variables loss
/// `1/2 x^T (Z^T Z - n sigma_A^2 I) x - x^T Z^T b`.
pub fn sim2_loss(inst: &Sim2Instance) -> EivLoss {
    EivLoss::unnormalized(inst.z.clone(), &inst.base.b, inst.sigma_a)
}

/// Loss plus `nu ||grad_2d x||_1`, with the loss linearized in `G_z`.
pub fn sim2_problem(inst: &Sim2Instance) -> CompositeProblem {
    let base = &inst.base;
    let f = Exact::new(Arc::new(L1Norm::new(base.m(), base.nu)));
    let g = Linearized::new(Arc::new(ZeroFn::new(base.d())), Arc::new(sim2_loss(inst)));
    CompositeProblem::new(base.k.clone(), Arc::new(f), Arc::new(g)).expect("consistent instance")
}

/// `Sigma = lambda eta / 2 I_m`, `T = 1/((4 lambda + 1) eta) I_d`: the step
/// sizes under which the mirrored iteration coincides with the one-step
/// approximate prox scheme.
pub fn sim2_steps(inst: &Sim2Instance, eta: f64, lambda: f64) -> (DiagonalScaling, DiagonalScaling) {
    let base = &inst.base;
    (
        DiagonalScaling::uniform(base.m(), lambda * eta / 2.0).expect("positive steps"),
        DiagonalScaling::uniform(base.d(), 1.0 / ((4.0 * lambda + 1.0) * eta))
            .expect("positive steps"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_iters: usize,
    pub stop_tol: f64,
    pub track_gap: bool,
}

impl RunOptions {
    pub fn new(max_iters: usize) -> Self {
        Self {
            max_iters,
            stop_tol: crate::solver::DEFAULT_STOP_TOL,
            track_gap: false,
        }
    }
}

/// Trace plus final iterate; `x` is `None` when the run diverged.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: IterationTrace,
    pub x: Option<Vec<f64>>,
}

fn outcome(res: Result<crate::solver::Solution, SolveError>) -> Result<RunOutcome, SolveError> {
    match res {
        Ok(sol) => Ok(RunOutcome {
            trace: sol.trace,
            x: Some(sol.x),
        }),
        Err(SolveError::Diverged { trace }) => Ok(RunOutcome { trace, x: None }),
        Err(e) => Err(e),
    }
}

/// Basic mirrored iteration on the first simulation.
pub fn run_sim1(
    inst: &Sim1Instance,
    variant: Variant,
    lambda: f64,
    opts: RunOptions,
) -> Result<RunOutcome, SolveError> {
    if !(lambda > 0.0) {
        return Err(SolveError::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let problem = sim1_problem(inst, variant);
    let (sigma, tau) = sim1_steps(inst, lambda);
    let mut config = SolverConfig::new(sigma, tau);
    config.max_outer = opts.max_iters;
    config.stop_tol = opts.stop_tol;
    config.track_gap = opts.track_gap;
    outcome(MoccaBasic::new(&problem, config, &InitialPoint::zeros())?.run())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sim2Method {
    Mocca,
    Apgd(InnerStop),
}

impl Sim2Method {
    pub fn label(&self) -> String {
        match self {
            Sim2Method::Mocca => "mocca".into(),
            Sim2Method::Apgd(InnerStop::Steps(n)) => format!("apgd_n{n}"),
            Sim2Method::Apgd(InnerStop::RelChange(e)) => format!("apgd_eps{e}"),
        }
    }
}

pub fn run_sim2(
    inst: &Sim2Instance,
    method: Sim2Method,
    eta: f64,
    lambda: f64,
    opts: RunOptions,
) -> Result<RunOutcome, SolveError> {
    if !(eta > 0.0 && lambda > 0.0) {
        return Err(SolveError::InvalidConfig("eta and lambda must be positive".into()));
    }
    match method {
        Sim2Method::Mocca => {
            let problem = sim2_problem(inst);
            let (sigma, tau) = sim2_steps(inst, eta, lambda);
            let mut config = SolverConfig::new(sigma, tau);
            config.max_outer = opts.max_iters;
            config.stop_tol = opts.stop_tol;
            config.track_gap = opts.track_gap;
            outcome(MoccaBasic::new(&problem, config, &InitialPoint::zeros())?.run())
        }
        Sim2Method::Apgd(stop) => {
            let mut config = ApgdConfig::new(eta, lambda, inst.base.nu, stop);
            config.max_outer = opts.max_iters;
            config.stop_tol = opts.stop_tol;
            let x0 = vec![0.0; inst.base.d()];
            outcome(Apgd::new(Arc::new(sim2_loss(inst)), &inst.base.k, config, x0)?.run())
        }
    }
}

/// `beta log(1 + |t|/beta)`, with `beta = None` meaning the `|t|` limit.
pub fn log_penalty(t: f64, beta: Option<f64>) -> f64 {
    match beta {
        Some(b) => b * (t.abs() / b).ln_1p(),
        None => t.abs(),
    }
}

/// Penalty curves on `t in [-10, 10]` (step 0.05) for each `beta`, as CSV.
pub fn write_penalty_curve<W: Write>(betas: &[Option<f64>], mut out: W) -> io::Result<()> {
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(betas.iter().map(|b| match b {
            Some(b) => format!("beta_{b}"),
            None => "beta_inf".to_string(),
        }))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..=400 {
        let t = -10.0 + 0.05 * i as f64;
        let row: Vec<String> = std::iter::once(fmt_float(t))
            .chain(betas.iter().map(|&b| fmt_float(log_penalty(t, b))))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// One column per line.
pub fn write_vector_csv<W: Write>(v: &[f64], mut out: W) -> io::Result<()> {
    for x in v {
        writeln!(out, "{}", fmt_float(*x))?;
    }
    Ok(())
}

/// One matrix row per line, comma-separated.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| fmt_float(*v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
