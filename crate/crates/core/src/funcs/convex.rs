//! Convex building blocks with metric proximal maps.

use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::prox::{
    block_soft_threshold, project_weighted_l1_ball, prox_weighted_l1, truncate_blocks,
    truncate_tilted,
};
use super::{ConvexFunction, FuncError, SmoothFunction};
use crate::linops::{BlockStructure, DiagonalScaling};
use crate::vector;

/// Relative slack used when deciding whether a dual point sits on the
/// boundary of a box or ball.
pub const BOUNDARY_TOL: f64 = 1e-10;

fn check_len(what: &str, got: usize, want: usize) -> Result<(), FuncError> {
    if got != want {
        return Err(FuncError::Dimension(format!(
            "{what}: expected length {want}, got {got}"
        )));
    }
    Ok(())
}

/// The zero function. Its conjugate is the indicator of `{0}`.
#[derive(Debug, Clone)]
pub struct ZeroFn {
    dim: usize,
}

impl ZeroFn {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ConvexFunction for ZeroFn {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn prox(&self, u: &[f64], _metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        Ok(u.to_vec())
    }

    fn conj_prox(&self, u: &[f64], _metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        Ok(vec![0.0; u.len()])
    }

    fn subgradient_nearest(&self, x: &[f64], _target: &[f64]) -> Result<Vec<f64>, FuncError> {
        Ok(vec![0.0; x.len()])
    }

    fn conj_subgradient_nearest(&self, w: &[f64], target: &[f64]) -> Result<Vec<f64>, FuncError> {
        if w.iter().any(|&wi| wi != 0.0) {
            return Err(FuncError::OutsideDomain);
        }
        Ok(target.to_vec())
    }
}

/// `nu ||x||_1`.
#[derive(Debug, Clone)]
pub struct L1Norm {
    dim: usize,
    nu: f64,
}

impl L1Norm {
    pub fn new(dim: usize, nu: f64) -> Self {
        assert!(nu >= 0.0, "nu must be nonnegative");
        Self { dim, nu }
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

/// Nearest element of the normal cone of `[-nu, nu]` at `w` to `target`.
fn box_normal_nearest(w: f64, nu: f64, target: f64) -> Result<f64, FuncError> {
    let tol = BOUNDARY_TOL * (1.0 + nu);
    if w.abs() > nu + tol {
        return Err(FuncError::OutsideDomain);
    }
    Ok(if w >= nu - tol && nu > 0.0 {
        target.max(0.0)
    } else if w <= -nu + tol && nu > 0.0 {
        target.min(0.0)
    } else if nu == 0.0 {
        target
    } else {
        0.0
    })
}

impl ConvexFunction for L1Norm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.nu * vector::norm1(x)
    }

    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        check_len("l1 prox", u.len(), self.dim)?;
        Ok(prox_weighted_l1(u, metric, self.nu))
    }

    fn conj_prox(&self, u: &[f64], _metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        check_len("l1 conj prox", u.len(), self.dim)?;
        Ok(truncate_tilted(u, self.nu, &vec![0.0; u.len()]))
    }

    fn subgradient_nearest(&self, x: &[f64], target: &[f64]) -> Result<Vec<f64>, FuncError> {
        Ok(x.iter()
            .zip(target)
            .map(|(&xi, &ti)| {
                if xi == 0.0 {
                    ti.clamp(-self.nu, self.nu)
                } else {
                    self.nu * xi.signum()
                }
            })
            .collect())
    }

    fn conj_subgradient_nearest(&self, w: &[f64], target: &[f64]) -> Result<Vec<f64>, FuncError> {
        w.iter()
            .zip(target)
            .map(|(&wi, &ti)| box_normal_nearest(wi, self.nu, ti))
            .collect()
    }
}

/// `nu sum_l ||x_{B_l}||_2` over a block partition.
#[derive(Debug, Clone)]
pub struct GroupL1 {
    nu: f64,
    blocks: BlockStructure,
}

impl GroupL1 {
    pub fn new(nu: f64, blocks: BlockStructure) -> Self {
        assert!(nu >= 0.0, "nu must be nonnegative");
        Self { nu, blocks }
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    /// Per-block metric value; errors if the metric varies inside a block.
    fn block_metric(&self, metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        let d = metric.entries();
        self.blocks
            .ranges()
            .iter()
            .map(|r| {
                let first = d[r.start];
                if d[r.clone()].iter().any(|&v| v != first) {
                    Err(FuncError::Unsupported(
                        "group prox needs a metric that is constant on each block".into(),
                    ))
                } else {
                    Ok(first)
                }
            })
            .collect()
    }
}

impl ConvexFunction for GroupL1 {
    fn dim(&self) -> usize {
        self.blocks.total_len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.blocks
            .ranges()
            .iter()
            .map(|r| vector::norm2(&x[r.clone()]))
            .sum::<f64>()
            * self.nu
    }

    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        check_len("group prox", u.len(), self.dim())?;
        let thresholds: Vec<f64> = self
            .block_metric(metric)?
            .into_iter()
            .map(|d| self.nu / d)
            .collect();
        Ok(block_soft_threshold(u, &thresholds, &self.blocks))
    }

    fn conj_prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        check_len("group conj prox", u.len(), self.dim())?;
        self.block_metric(metric)?;
        Ok(truncate_blocks(u, self.nu, &self.blocks))
    }

    fn subgradient_nearest(&self, x: &[f64], target: &[f64]) -> Result<Vec<f64>, FuncError> {
        let mut out = vec![0.0; x.len()];
        for r in self.blocks.ranges() {
            let xb = &x[r.clone()];
            let norm = vector::norm2(xb);
            if norm > 0.0 {
                for (o, xi) in out[r.clone()].iter_mut().zip(xb) {
                    *o = self.nu * xi / norm;
                }
            } else {
                let tb = &target[r.clone()];
                let tn = vector::norm2(tb);
                let f = if tn > self.nu { self.nu / tn } else { 1.0 };
                for (o, ti) in out[r.clone()].iter_mut().zip(tb) {
                    *o = f * ti;
                }
            }
        }
        Ok(out)
    }

    fn conj_subgradient_nearest(&self, w: &[f64], target: &[f64]) -> Result<Vec<f64>, FuncError> {
        let tol = BOUNDARY_TOL * (1.0 + self.nu);
        let mut out = vec![0.0; w.len()];
        for r in self.blocks.ranges() {
            let wb = &w[r.clone()];
            let norm = vector::norm2(wb);
            if norm > self.nu + tol {
                return Err(FuncError::OutsideDomain);
            }
            if norm >= self.nu - tol && norm > 0.0 {
                // normal cone {t w_B : t >= 0}
                let t = (vector::dot(&target[r.clone()], wb) / (norm * norm)).max(0.0);
                for (o, wi) in out[r.clone()].iter_mut().zip(wb) {
                    *o = t * wi;
                }
            } else if self.nu == 0.0 {
                out[r.clone()].copy_from_slice(&target[r.clone()]);
            }
        }
        Ok(out)
    }
}

/// `nu ||x||_1 + a/2 ||x||^2` with `a > 0`.
#[derive(Debug, Clone)]
pub struct ElasticL1 {
    dim: usize,
    nu: f64,
    ridge: f64,
}

impl ElasticL1 {
    pub fn new(dim: usize, nu: f64, ridge: f64) -> Self {
        assert!(nu >= 0.0 && ridge > 0.0);
        Self { dim, nu, ridge }
    }
}

impl ConvexFunction for ElasticL1 {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.nu * vector::norm1(x) + 0.5 * self.ridge * vector::dot(x, x)
    }

    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        check_len("elastic prox", u.len(), self.dim)?;
        Ok(u.iter()
            .zip(metric.entries())
            .map(|(&ui, &di)| {
                super::prox::soft_threshold(di * ui, self.nu) / (self.ridge + di)
            })
            .collect())
    }

    fn subgradient_nearest(&self, x: &[f64], target: &[f64]) -> Result<Vec<f64>, FuncError> {
        Ok(x.iter()
            .zip(target)
            .map(|(&xi, &ti)| {
                if xi == 0.0 {
                    ti.clamp(-self.nu, self.nu)
                } else {
                    self.nu * xi.signum() + self.ridge * xi
                }
            })
            .collect())
    }

    fn conj_subgradient_nearest(&self, w: &[f64], _target: &[f64]) -> Result<Vec<f64>, FuncError> {
        Ok(w.iter()
            .map(|&wi| super::prox::soft_threshold(wi, self.nu) / self.ridge)
            .collect())
    }
}

/// `1/2 ||x - y||^2`.
#[derive(Debug, Clone)]
pub struct SquaredError {
    target: Vec<f64>,
}

impl SquaredError {
    pub fn new(target: Vec<f64>) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }
}

impl ConvexFunction for SquaredError {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * vector::dist2_sq(x, &self.target)
    }

    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        check_len("squared-error prox", u.len(), self.target.len())?;
        Ok(u.iter()
            .zip(&self.target)
            .zip(metric.entries())
            .map(|((&ui, &yi), &di)| (di * ui + yi) / (1.0 + di))
            .collect())
    }

    fn subgradient_nearest(&self, x: &[f64], _target: &[f64]) -> Result<Vec<f64>, FuncError> {
        Ok(vector::sub(x, &self.target))
    }

    fn conj_subgradient_nearest(&self, w: &[f64], _target: &[f64]) -> Result<Vec<f64>, FuncError> {
        Ok(vector::add(w, &self.target))
    }
}

impl SmoothFunction for SquaredError {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * vector::dist2_sq(x, &self.target)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vector::sub(x, &self.target)
    }
}

/// Cached Cholesky factor keyed by the metric it was built for.
#[derive(Debug, Default)]
struct FactorCache {
    slot: Mutex<Option<(Vec<f64>, Cholesky<f64, Dyn>)>>,
}

impl FactorCache {
    fn with_factor<R>(
        &self,
        key: &[f64],
        build: impl FnOnce() -> DMatrix<f64>,
        use_factor: impl FnOnce(&Cholesky<f64, Dyn>) -> R,
    ) -> Result<R, FuncError> {
        let mut slot = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        let fresh = !matches!(&*slot, Some((k, _)) if k.as_slice() == key);
        if fresh {
            let chol = Cholesky::new(build())
                .ok_or_else(|| FuncError::Numeric("matrix not positive definite".into()))?;
            *slot = Some((key.to_vec(), chol));
        }
        let (_, chol) = slot.as_ref().expect("factor present");
        Ok(use_factor(chol))
    }
}

/// Solves `(D + c A^T A) x = r` for diagonal `D`, caching the factorization
/// for the most recent `D`. Uses the Woodbury identity when `A` is wide.
#[derive(Debug)]
pub struct GramSolver {
    a: DMatrix<f64>,
    scale: f64,
    gram: Option<DMatrix<f64>>,
    cache: FactorCache,
}

impl GramSolver {
    pub fn new(a: DMatrix<f64>, scale: f64) -> Self {
        assert!(scale > 0.0);
        let gram = (a.nrows() >= a.ncols()).then(|| a.tr_mul(&a) * scale);
        Self {
            a,
            scale,
            gram,
            cache: FactorCache::default(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn solve(&self, metric: &DiagonalScaling, rhs: &[f64]) -> Result<Vec<f64>, FuncError> {
        let d = metric.entries();
        check_len("gram solve", rhs.len(), self.a.ncols())?;
        let x = if let Some(gram) = &self.gram {
            self.cache.with_factor(
                d,
                || {
                    let mut m = gram.clone();
                    for (i, di) in d.iter().enumerate() {
                        m[(i, i)] += di;
                    }
                    m
                },
                |chol| chol.solve(&DVector::from_column_slice(rhs)),
            )?
        } else {
            // (D + c A^T A)^{-1} = D^{-1} - D^{-1} A^T (I/c + A D^{-1} A^T)^{-1} A D^{-1}
            let dinv_r = DVector::from_iterator(rhs.len(), rhs.iter().zip(d).map(|(r, di)| r / di));
            let a_dinv_r = &self.a * &dinv_r;
            let y = self.cache.with_factor(
                d,
                || {
                    let mut scaled = self.a.clone();
                    for (j, di) in d.iter().enumerate() {
                        scaled.column_mut(j).scale_mut(1.0 / di);
                    }
                    let mut m = &scaled * self.a.transpose();
                    for i in 0..m.nrows() {
                        m[(i, i)] += 1.0 / self.scale;
                    }
                    m
                },
                |chol| chol.solve(&a_dinv_r),
            )?;
            let aty = self.a.tr_mul(&y);
            DVector::from_iterator(
                rhs.len(),
                dinv_r.iter().zip(aty.iter()).zip(d).map(|((v, t), di)| v - t / di),
            )
        };
        let x: Vec<f64> = x.iter().copied().collect();
        if !vector::all_finite(&x) {
            return Err(FuncError::Numeric("non-finite linear solve".into()));
        }
        Ok(x)
    }
}

/// `1/2 ||b - A x||^2`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    solver: Arc<GramSolver>,
    b: Vec<f64>,
    atb: Vec<f64>,
}

impl LeastSquares {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Result<Self, FuncError> {
        check_len("least squares data", b.len(), a.nrows())?;
        let atb = a.tr_mul(&DVector::from_column_slice(&b)).iter().copied().collect();
        Ok(Self {
            solver: Arc::new(GramSolver::new(a, 1.0)),
            b,
            atb,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        self.solver.matrix()
    }

    pub fn data(&self) -> &[f64] {
        &self.b
    }

    fn residual(&self, x: &[f64]) -> DVector<f64> {
        self.solver.matrix() * DVector::from_column_slice(x) - DVector::from_column_slice(&self.b)
    }
}

impl ConvexFunction for LeastSquares {
    fn dim(&self) -> usize {
        self.solver.matrix().ncols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.residual(x).norm_squared()
    }

    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        let mut rhs = metric.apply(u);
        vector::axpy(1.0, &self.atb, &mut rhs);
        self.solver.solve(metric, &rhs)
    }

    fn subgradient_nearest(&self, x: &[f64], _target: &[f64]) -> Result<Vec<f64>, FuncError> {
        Ok(SmoothFunction::gradient(self, x))
    }
}

impl SmoothFunction for LeastSquares {
    fn dim(&self) -> usize {
        self.solver.matrix().ncols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.residual(x).norm_squared()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.solver.matrix().tr_mul(&self.residual(x)).iter().copied().collect()
    }
}

/// `1/2 x^T Q x + q^T x + c0` with `Q` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct DenseQuadratic {
    q_mat: DMatrix<f64>,
    q_lin: Vec<f64>,
    c0: f64,
    cache: Arc<FactorCache>,
}

impl DenseQuadratic {
    pub fn new(q_mat: DMatrix<f64>, q_lin: Vec<f64>, c0: f64) -> Result<Self, FuncError> {
        if !q_mat.is_square() {
            return Err(FuncError::Dimension("Q must be square".into()));
        }
        check_len("quadratic linear term", q_lin.len(), q_mat.nrows())?;
        Ok(Self {
            q_mat,
            q_lin,
            c0,
            cache: Arc::new(FactorCache::default()),
        })
    }

    fn qx(&self, x: &[f64]) -> Vec<f64> {
        (&self.q_mat * DVector::from_column_slice(x)).iter().copied().collect()
    }
}

impl ConvexFunction for DenseQuadratic {
    fn dim(&self) -> usize {
        self.q_lin.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * vector::dot(x, &self.qx(x)) + vector::dot(x, &self.q_lin) + self.c0
    }

    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        check_len("quadratic prox", u.len(), self.q_lin.len())?;
        let d = metric.entries();
        let rhs = DVector::from_iterator(
            u.len(),
            u.iter().zip(d).zip(&self.q_lin).map(|((ui, di), qi)| di * ui - qi),
        );
        let x = self.cache.with_factor(
            d,
            || {
                let mut m = self.q_mat.clone();
                for (i, di) in d.iter().enumerate() {
                    m[(i, i)] += di;
                }
                m
            },
            |chol| chol.solve(&rhs),
        )?;
        Ok(x.iter().copied().collect())
    }

    fn subgradient_nearest(&self, x: &[f64], _target: &[f64]) -> Result<Vec<f64>, FuncError> {
        Ok(SmoothFunction::gradient(self, x))
    }
}

impl SmoothFunction for DenseQuadratic {
    fn dim(&self) -> usize {
        self.q_lin.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        ConvexFunction::value(self, x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vector::add(&self.qx(x), &self.q_lin)
    }
}

/// Indicator of the ball `||x||_1 <= R`.
#[derive(Debug, Clone)]
pub struct L1Ball {
    dim: usize,
    radius: f64,
}

impl L1Ball {
    pub fn new(dim: usize, radius: f64) -> Self {
        assert!(radius >= 0.0);
        Self { dim, radius }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        vector::norm1(x) <= self.radius * (1.0 + 1e-12) + 1e-12
    }
}

impl ConvexFunction for L1Ball {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        Ok(project_weighted_l1_ball(u, metric, self.radius))
    }
}

/// `base(x) + <c, x> + offset`.
#[derive(Debug, Clone)]
pub struct Tilted {
    base: Arc<dyn ConvexFunction>,
    tilt: Vec<f64>,
    offset: f64,
}

impl Tilted {
    pub fn new(base: Arc<dyn ConvexFunction>, tilt: Vec<f64>, offset: f64) -> Self {
        assert_eq!(base.dim(), tilt.len());
        Self { base, tilt, offset }
    }

    pub fn tilt(&self) -> &[f64] {
        &self.tilt
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn base(&self) -> &Arc<dyn ConvexFunction> {
        &self.base
    }
}

impl ConvexFunction for Tilted {
    fn dim(&self) -> usize {
        self.tilt.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(x) + vector::dot(x, &self.tilt) + self.offset
    }

    fn prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        let shifted = vector::sub(u, &metric.apply_inverse(&self.tilt));
        self.base.prox(&shifted, metric)
    }

    // (base + <c,.>)*(w) = base*(w - c), so the conjugate prox is a shift.
    fn conj_prox(&self, u: &[f64], metric: &DiagonalScaling) -> Result<Vec<f64>, FuncError> {
        let inner = self.base.conj_prox(&vector::sub(u, &self.tilt), metric)?;
        Ok(vector::add(&inner, &self.tilt))
    }

    fn subgradient_nearest(&self, x: &[f64], target: &[f64]) -> Result<Vec<f64>, FuncError> {
        let s = self
            .base
            .subgradient_nearest(x, &vector::sub(target, &self.tilt))?;
        Ok(vector::add(&s, &self.tilt))
    }

    fn conj_subgradient_nearest(&self, w: &[f64], target: &[f64]) -> Result<Vec<f64>, FuncError> {
        self.base
            .conj_subgradient_nearest(&vector::sub(w, &self.tilt), target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> DiagonalScaling {
        DiagonalScaling::new(v.to_vec()).unwrap()
    }

    /// Brute-force 2-d prox on a grid.
    fn grid_prox_2d(f: &dyn ConvexFunction, u: [f64; 2], d: [f64; 2], half: f64, step: f64) -> [f64; 2] {
        let n = (2.0 * half / step) as i64;
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..=n {
            for j in 0..=n {
                let x = [u[0] - half + i as f64 * step, u[1] - half + j as f64 * step];
                let v = f.value(&x)
                    + 0.5 * (d[0] * (x[0] - u[0]).powi(2) + d[1] * (x[1] - u[1]).powi(2));
                if v < best.0 {
                    best = (v, x);
                }
            }
        }
        best.1
    }

    fn assert_prox_matches_grid(f: &dyn ConvexFunction, u: [f64; 2], d: [f64; 2]) {
        let x = f.prox(&u, &diag(&d)).unwrap();
        let g = grid_prox_2d(f, u, d, 4.0, 2e-3);
        assert!(
            (x[0] - g[0]).abs() <= 2e-3 && (x[1] - g[1]).abs() <= 2e-3,
            "{f:?}: {x:?} vs {g:?}"
        );
    }

    #[test]
    fn zero_function_prox_is_identity() {
        let z = ZeroFn::new(3);
        let u = [1.0, -2.0, 0.5];
        assert_eq!(z.prox(&u, &DiagonalScaling::identity(3)).unwrap(), u.to_vec());
    }

    #[test]
    fn proxes_match_grid_oracles() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1]);
        let fs: Vec<Box<dyn ConvexFunction>> = vec![
            Box::new(L1Norm::new(2, 0.8)),
            Box::new(ElasticL1::new(2, 0.6, 1.5)),
            Box::new(SquaredError::new(vec![0.4, -1.0])),
            Box::new(LeastSquares::new(m.clone(), vec![1.0, -0.5, 0.3]).unwrap()),
            Box::new(DenseQuadratic::new(m.tr_mul(&m), vec![0.2, -0.4], 1.0).unwrap()),
            Box::new(L1Ball::new(2, 0.9)),
            Box::new(Tilted::new(Arc::new(L1Norm::new(2, 0.5)), vec![0.3, -0.7], 2.0)),
        ];
        for f in &fs {
            assert_prox_matches_grid(f.as_ref(), [1.3, -0.6], [1.0, 1.0]);
            assert_prox_matches_grid(f.as_ref(), [-0.4, 2.1], [2.0, 0.5]);
        }
        // group prox needs a block-constant metric
        let g = GroupL1::new(1.0, BlockStructure::from_sizes(&[2]));
        assert!(g.prox(&[1.0, 1.0], &diag(&[1.0, 2.0])).is_err());
        assert_prox_matches_grid(&g, [2.0, 1.0], [1.5, 1.5]);
    }

    #[test]
    fn conj_prox_matches_moreau_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fs: Vec<Box<dyn ConvexFunction>> = vec![
            Box::new(L1Norm::new(4, 0.8)),
            Box::new(GroupL1::new(1.1, BlockStructure::from_sizes(&[2, 2]))),
            Box::new(Tilted::new(Arc::new(L1Norm::new(4, 0.5)), vec![0.3, -0.7, 0.0, 1.0], 2.0)),
            Box::new(SquaredError::new(vec![0.4, -1.0, 0.0, 2.0])),
        ];
        for f in &fs {
            for _ in 0..5 {
                let u: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
                let s = rng.random_range(0.2..3.0);
                let metric = DiagonalScaling::uniform(4, s).unwrap();
                let a = f.conj_prox(&u, &metric).unwrap();
                let b = crate::funcs::moreau_conj_prox(&u, &metric, f.as_ref()).unwrap();
                assert!(vector::max_abs_diff(&a, &b) <= 1e-12, "{f:?}");
            }
        }
    }

    #[test]
    fn tilted_l1_conj_prox_stays_in_box() {
        let c = vec![2.0, 0.0, -1.0];
        let f = Tilted::new(Arc::new(L1Norm::new(3, 1.0)), c.clone(), 0.0);
        let w = f.conj_prox(&[10.0, -10.0, 0.0], &diag(&[1.0, 2.0, 3.0])).unwrap();
        for (wi, ci) in w.iter().zip(&c) {
            assert!(*wi >= ci - 1.0 && *wi <= ci + 1.0);
        }
    }

    #[test]
    fn least_squares_both_solver_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let wide = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        let b = vec![0.3, -1.0, 2.0];
        let ls = LeastSquares::new(wide.clone(), b.clone()).unwrap();
        let d: Vec<f64> = (0..6).map(|_| rng.random_range(0.5..2.0)).collect();
        let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = ls.prox(&u, &diag(&d)).unwrap();
        let mut m = wide.tr_mul(&wide);
        for i in 0..6 {
            m[(i, i)] += d[i];
        }
        let rhs: Vec<f64> = (0..6)
            .map(|i| d[i] * u[i] + wide.tr_mul(&DVector::from_column_slice(&b))[i])
            .collect();
        let oracle = m.try_inverse().unwrap() * DVector::from_column_slice(&rhs);
        let oracle: Vec<f64> = oracle.iter().copied().collect();
        assert!(vector::max_abs_diff(&x, &oracle) <= 1e-10);
        // the cached factor is reused for the same metric
        assert_eq!(x, ls.prox(&u, &diag(&d)).unwrap());

        let tall = wide.transpose();
        let ls2 = LeastSquares::new(tall.clone(), vec![1.0; 6]).unwrap();
        let x2 = ls2.prox(&[0.5, -0.5, 1.0], &diag(&[1.0, 2.0, 0.5])).unwrap();
        let mut m2 = tall.tr_mul(&tall);
        for (i, di) in [1.0, 2.0, 0.5].iter().enumerate() {
            m2[(i, i)] += di;
        }
        let r2 = DVector::from_column_slice(&[0.5, -1.0, 0.5])
            + tall.tr_mul(&DVector::from_column_slice(&[1.0; 6]));
        let o2 = m2.try_inverse().unwrap() * r2;
        assert!(vector::max_abs_diff(&x2, o2.as_slice()) <= 1e-10);
    }

    #[test]
    fn smooth_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let fs: Vec<Box<dyn SmoothFunction>> = vec![
            Box::new(LeastSquares::new(a.clone(), vec![1.0, 0.0, -1.0, 0.5]).unwrap()),
            Box::new(DenseQuadratic::new(a.tr_mul(&a), vec![0.1, 0.2, 0.3], 0.0).unwrap()),
            Box::new(SquaredError::new(vec![1.0, 2.0, 3.0])),
        ];
        for f in &fs {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let fd = crate::funcs::smooth::finite_difference_gradient(|v| f.value(v), &x, 1e-6);
            let g = f.gradient(&x);
            let rel = vector::norm2(&vector::sub(&fd, &g)) / vector::norm2(&g).max(1e-12);
            assert!(rel <= 1e-5);
        }
    }

    #[test]
    fn l1_ball_domain() {
        let b = L1Ball::new(2, 1.0);
        assert_eq!(b.value(&[0.5, 0.5]), 0.0);
        assert_eq!(b.value(&[1.0, 0.5]), f64::INFINITY);
    }

    #[test]
    fn subgradient_selectors() {
        let l1 = L1Norm::new(3, 2.0);
        let s = l1.subgradient_nearest(&[1.0, 0.0, 0.0], &[0.0, 5.0, -0.5]).unwrap();
        assert_eq!(s, vec![2.0, 2.0, -0.5]);
        let c = l1.conj_subgradient_nearest(&[2.0, -2.0, 0.3], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(c, vec![1.0, 0.0, 0.0]);
        assert!(l1.conj_subgradient_nearest(&[2.5, 0.0, 0.0], &[0.0; 3]).is_err());

        let g = GroupL1::new(5.0, BlockStructure::from_sizes(&[2]));
        let c = g.conj_subgradient_nearest(&[3.0, 4.0], &[3.0, 4.0]).unwrap();
        assert!(vector::max_abs_diff(&c, &[3.0, 4.0]) < 1e-12);
        let c = g.conj_subgradient_nearest(&[3.0, 4.0], &[-3.0, -4.0]).unwrap();
        assert_eq!(c, vec![0.0, 0.0]);
    }
}
