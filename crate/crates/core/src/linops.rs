//! Linear operators, diagonal scalings and block structures.
//!
//! Difference operators are applied matrix-free. Two-dimensional grids use
//! column-major vectorization: pixel `(i, j)` of a `d1 x d2` grid lives at
//! index `i + j * d1`.

use std::io::BufRead;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::vector;

#[derive(Debug, Error)]
pub enum LinopError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("degenerate operator: row {0} has no nonzero entry")]
    ZeroRow(usize),
    #[error("degenerate operator: column {0} has no nonzero entry")]
    ZeroColumn(usize),
    #[error("diagonal scaling entry {index} is not strictly positive ({value})")]
    NonPositiveScaling { index: usize, value: f64 },
    #[error("csv parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A positive diagonal matrix, stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalScaling {
    entries: Vec<f64>,
}

impl DiagonalScaling {
    pub fn new(entries: Vec<f64>) -> Result<Self, LinopError> {
        if let Some((index, &value)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(LinopError::NonPositiveScaling { index, value });
        }
        Ok(Self { entries })
    }

    /// `value * I_n`.
    pub fn uniform(n: usize, value: f64) -> Result<Self, LinopError> {
        Self::new(vec![value; n])
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn inverse(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|d| 1.0 / d).collect(),
        }
    }

    pub fn sqrt(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|d| d.sqrt()).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, LinopError> {
        Self::new(self.entries.iter().map(|d| d * factor).collect())
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.entries.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Entrywise product `D x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.entries.len());
        self.entries.iter().zip(x).map(|(d, v)| d * v).collect()
    }

    /// Entrywise quotient `D^{-1} x`.
    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.entries.len());
        self.entries.iter().zip(x).map(|(d, v)| v / d).collect()
    }

    /// `x^T D x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.entries.iter().zip(x).map(|(d, v)| d * v * v).sum()
    }
}

/// Contiguous index ranges partitioning `0..m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    ranges: Vec<Range<usize>>,
    total: usize,
}

impl BlockStructure {
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut start = 0;
        let ranges = sizes
            .iter()
            .map(|&s| {
                let r = start..start + s;
                start += s;
                r
            })
            .collect();
        Self {
            ranges,
            total: start,
        }
    }

    /// One block per index.
    pub fn singletons(m: usize) -> Self {
        Self::from_sizes(&vec![1; m])
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn num_blocks(&self) -> usize {
        self.ranges.len()
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }
}

/// Rows given as `(column, value)` lists. Only built programmatically.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self, LinopError> {
        for (i, row) in rows.iter().enumerate() {
            if let Some(&(c, _)) = row.iter().find(|(c, _)| *c >= cols) {
                return Err(LinopError::InvalidDimension(format!(
                    "row {i} references column {c} but operator has {cols} columns"
                )));
            }
        }
        Ok(Self { cols, rows })
    }
}

/// The linear map `K` of the composite objective.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearOperator {
    Dense(DMatrix<f64>),
    /// `(p-1) x p` first differences, `(Kx)_i = x_i - x_{i+1}`.
    Diff1d { len: usize },
    /// Horizontal then vertical first differences on a `d1 x d2` grid.
    Diff2d { d1: usize, d2: usize },
    Sparse(SparseRows),
    Stack {
        parts: Vec<LinearOperator>,
        rows: usize,
        cols: usize,
    },
    Zero { rows: usize, cols: usize },
    Identity(usize),
}

impl LinearOperator {
    pub fn rows(&self) -> usize {
        match self {
            Self::Dense(a) => a.nrows(),
            Self::Diff1d { len } => len - 1,
            Self::Diff2d { d1, d2 } => d1 * (d2 - 1) + d2 * (d1 - 1),
            Self::Sparse(s) => s.rows.len(),
            Self::Stack { rows, .. } => *rows,
            Self::Zero { rows, .. } => *rows,
            Self::Identity(n) => *n,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Dense(a) => a.ncols(),
            Self::Diff1d { len } => *len,
            Self::Diff2d { d1, d2 } => d1 * d2,
            Self::Sparse(s) => s.cols,
            Self::Stack { cols, .. } => *cols,
            Self::Zero { cols, .. } => *cols,
            Self::Identity(n) => *n,
        }
    }

    /// `K x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.apply_into(x, &mut out);
        out
    }

    /// `K^T w`.
    pub fn adjoint(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        self.adjoint_into(w, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols(), "apply: input length mismatch");
        assert_eq!(out.len(), self.rows(), "apply: output length mismatch");
        match self {
            Self::Dense(a) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = a.row(i).iter().zip(x).map(|(aij, xj)| aij * xj).sum();
                }
            }
            Self::Diff1d { len } => {
                for i in 0..len - 1 {
                    out[i] = x[i] - x[i + 1];
                }
            }
            Self::Diff2d { d1, d2 } => {
                let (d1, d2) = (*d1, *d2);
                let horiz = d1 * (d2 - 1);
                for j in 0..d2 - 1 {
                    for i in 0..d1 {
                        out[i + j * d1] = x[i + j * d1] - x[i + (j + 1) * d1];
                    }
                }
                for j in 0..d2 {
                    for i in 0..d1 - 1 {
                        out[horiz + i + j * (d1 - 1)] = x[i + j * d1] - x[i + 1 + j * d1];
                    }
                }
            }
            Self::Sparse(s) => {
                for (o, row) in out.iter_mut().zip(&s.rows) {
                    *o = row.iter().map(|&(c, v)| v * x[c]).sum();
                }
            }
            Self::Stack { parts, .. } => {
                let mut start = 0;
                for p in parts {
                    let r = p.rows();
                    p.apply_into(x, &mut out[start..start + r]);
                    start += r;
                }
            }
            Self::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            Self::Identity(_) => out.copy_from_slice(x),
        }
    }

    pub fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        assert_eq!(w.len(), self.rows(), "adjoint: input length mismatch");
        assert_eq!(out.len(), self.cols(), "adjoint: output length mismatch");
        match self {
            Self::Dense(a) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (i, wi) in w.iter().enumerate() {
                    for (o, aij) in out.iter_mut().zip(a.row(i).iter()) {
                        *o += aij * wi;
                    }
                }
            }
            Self::Diff1d { len } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for i in 0..len - 1 {
                    out[i] += w[i];
                    out[i + 1] -= w[i];
                }
            }
            Self::Diff2d { d1, d2 } => {
                let (d1, d2) = (*d1, *d2);
                let horiz = d1 * (d2 - 1);
                out.iter_mut().for_each(|o| *o = 0.0);
                for j in 0..d2 - 1 {
                    for i in 0..d1 {
                        let r = w[i + j * d1];
                        out[i + j * d1] += r;
                        out[i + (j + 1) * d1] -= r;
                    }
                }
                for j in 0..d2 {
                    for i in 0..d1 - 1 {
                        let r = w[horiz + i + j * (d1 - 1)];
                        out[i + j * d1] += r;
                        out[i + 1 + j * d1] -= r;
                    }
                }
            }
            Self::Sparse(s) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (wi, row) in w.iter().zip(&s.rows) {
                    for &(c, v) in row {
                        out[c] += v * wi;
                    }
                }
            }
            Self::Stack { parts, .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut buf = vec![0.0; out.len()];
                let mut start = 0;
                for p in parts {
                    let r = p.rows();
                    p.adjoint_into(&w[start..start + r], &mut buf);
                    vector::axpy(1.0, &buf, out);
                    start += r;
                }
            }
            Self::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            Self::Identity(_) => out.copy_from_slice(w),
        }
    }

    /// `sum_j |K_ij|` for each row.
    pub fn row_abs_sums(&self) -> Vec<f64> {
        match self {
            Self::Dense(a) => (0..a.nrows())
                .map(|i| a.row(i).iter().map(|v| v.abs()).sum())
                .collect(),
            Self::Diff1d { .. } | Self::Diff2d { .. } => vec![2.0; self.rows()],
            Self::Sparse(s) => s
                .rows
                .iter()
                .map(|r| r.iter().map(|(_, v)| v.abs()).sum())
                .collect(),
            Self::Stack { parts, .. } => parts.iter().flat_map(|p| p.row_abs_sums()).collect(),
            Self::Zero { rows, .. } => vec![0.0; *rows],
            Self::Identity(n) => vec![1.0; *n],
        }
    }

    /// `sum_i |K_ij|` for each column.
    pub fn col_abs_sums(&self) -> Vec<f64> {
        match self {
            Self::Dense(a) => (0..a.ncols())
                .map(|j| a.column(j).iter().map(|v| v.abs()).sum())
                .collect(),
            Self::Diff1d { len } => {
                let mut s = vec![2.0; *len];
                s[0] = 1.0;
                s[len - 1] = 1.0;
                s
            }
            Self::Diff2d { d1, d2 } => {
                let (d1, d2) = (*d1, *d2);
                let mut s = vec![0.0; d1 * d2];
                for j in 0..d2 {
                    for i in 0..d1 {
                        let horiz = usize::from(j > 0) + usize::from(j + 1 < d2);
                        let vert = usize::from(i > 0) + usize::from(i + 1 < d1);
                        s[i + j * d1] = (horiz + vert) as f64;
                    }
                }
                s
            }
            Self::Sparse(sp) => {
                let mut s = vec![0.0; sp.cols];
                for row in &sp.rows {
                    for &(c, v) in row {
                        s[c] += v.abs();
                    }
                }
                s
            }
            Self::Stack { parts, cols, .. } => {
                let mut s = vec![0.0; *cols];
                for p in parts {
                    vector::axpy(1.0, &p.col_abs_sums(), &mut s);
                }
                s
            }
            Self::Zero { cols, .. } => vec![0.0; *cols],
            Self::Identity(n) => vec![1.0; *n],
        }
    }

    /// Materializes the operator column by column.
    pub fn to_dense(&self) -> DMatrix<f64> {
        if let Self::Dense(a) = self {
            return a.clone();
        }
        let (m, d) = (self.rows(), self.cols());
        let mut out = DMatrix::zeros(m, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; m];
        for j in 0..d {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            out.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        out
    }

    /// Reads a dense matrix from CSV: one operator row per line, plain
    /// comma-separated decimals. Blank lines are skipped.
    pub fn from_csv_reader<R: BufRead>(reader: R) -> Result<Self, LinopError> {
        let rows = read_csv_rows(reader)?;
        let ncols = rows.first().map_or(0, |r| r.len());
        let nrows = rows.len();
        if nrows == 0 || ncols == 0 {
            return Err(LinopError::InvalidDimension("empty matrix".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Self::Dense(DMatrix::from_row_slice(nrows, ncols, &data)))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, LinopError> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(f))
    }
}

/// Parses comma-separated rows of floats, requiring equal row lengths.
pub fn read_csv_rows<R: BufRead>(reader: R) -> Result<Vec<Vec<f64>>, LinopError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| LinopError::Parse {
                    line: idx + 1,
                    msg: format!("{tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(LinopError::Parse {
                    line: idx + 1,
                    msg: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn make_diff_1d(p: usize) -> Result<LinearOperator, LinopError> {
    if p < 2 {
        return Err(LinopError::InvalidDimension(format!(
            "1d difference operator needs p >= 2, got {p}"
        )));
    }
    Ok(LinearOperator::Diff1d { len: p })
}

pub fn make_diff_2d(d1: usize, d2: usize) -> Result<LinearOperator, LinopError> {
    if d1 < 2 || d2 < 2 {
        return Err(LinopError::InvalidDimension(format!(
            "2d difference operator needs d1, d2 >= 2, got {d1}x{d2}"
        )));
    }
    Ok(LinearOperator::Diff2d { d1, d2 })
}

/// Vertically stacks operators sharing a column count, recording each
/// part's row range.
pub fn stack_operators(
    ops: Vec<LinearOperator>,
) -> Result<(LinearOperator, BlockStructure), LinopError> {
    let Some(first) = ops.first() else {
        return Err(LinopError::InvalidDimension("cannot stack zero operators".into()));
    };
    let cols = first.cols();
    if let Some((i, op)) = ops.iter().enumerate().find(|(_, op)| op.cols() != cols) {
        return Err(LinopError::InvalidDimension(format!(
            "operator {i} has {} columns, expected {cols}",
            op.cols()
        )));
    }
    let sizes: Vec<usize> = ops.iter().map(|o| o.rows()).collect();
    let blocks = BlockStructure::from_sizes(&sizes);
    if ops.len() == 1 {
        return Ok((ops.into_iter().next().unwrap(), blocks));
    }
    let rows = blocks.total_len();
    Ok((LinearOperator::Stack { parts: ops, rows, cols }, blocks))
}

/// Per-pixel gradient operators for isotropic TV on a `d1 x d2` grid.
///
/// Pixel `(i, j)` contributes the rows `x_{i,j} - x_{i,j+1}` and
/// `x_{i,j} - x_{i+1,j}` where those neighbours exist, so the bottom-right
/// pixel owns an empty block.
pub fn isotropic_tv_parts(d1: usize, d2: usize) -> Result<Vec<LinearOperator>, LinopError> {
    if d1 < 2 || d2 < 2 {
        return Err(LinopError::InvalidDimension(format!(
            "isotropic TV needs d1, d2 >= 2, got {d1}x{d2}"
        )));
    }
    let d = d1 * d2;
    let mut parts = Vec::with_capacity(d);
    for j in 0..d2 {
        for i in 0..d1 {
            let here = i + j * d1;
            let mut rows = Vec::new();
            if j + 1 < d2 {
                rows.push(vec![(here, 1.0), (i + (j + 1) * d1, -1.0)]);
            }
            if i + 1 < d1 {
                rows.push(vec![(here, 1.0), (here + 1, -1.0)]);
            }
            parts.push(LinearOperator::Sparse(SparseRows::new(d, rows)?));
        }
    }
    Ok(parts)
}

/// Diagonal preconditioners from absolute row and column sums:
/// `Sigma_ii = lambda / sum_j |K_ij|`, `T_jj = lambda^{-1} / sum_i |K_ij|`.
pub fn make_preconditioners(
    k: &LinearOperator,
    lambda: f64,
) -> Result<(DiagonalScaling, DiagonalScaling), LinopError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LinopError::NonPositiveScaling {
            index: 0,
            value: lambda,
        });
    }
    let rows = k.row_abs_sums();
    if let Some(i) = rows.iter().position(|&s| s == 0.0) {
        return Err(LinopError::ZeroRow(i));
    }
    let cols = k.col_abs_sums();
    if let Some(j) = cols.iter().position(|&s| s == 0.0) {
        return Err(LinopError::ZeroColumn(j));
    }
    let sigma = DiagonalScaling::new(rows.iter().map(|s| lambda / s).collect())?;
    let tau = DiagonalScaling::new(cols.iter().map(|s| 1.0 / (lambda * s)).collect())?;
    Ok((sigma, tau))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub const POWER_MAX_ITERS: usize = 1000;
pub const POWER_TOL: f64 = 1e-10;

/// Deterministic, non-constant start vector. A constant vector lies in the
/// null space of every difference operator.
fn power_start(d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|j| 1.0 + 0.5 * ((j + 1) as f64).sin()).collect();
    let n = vector::norm2(&v);
    vector::scale(&v, 1.0 / n)
}

/// Power-iteration estimate of the largest singular value of
/// `Sigma^{1/2} K T^{1/2}`.
pub fn op_norm_estimate(
    sigma: &DiagonalScaling,
    k: &LinearOperator,
    tau: &DiagonalScaling,
    iters: usize,
    tol: f64,
) -> NormEstimate {
    assert_eq!(sigma.len(), k.rows());
    assert_eq!(tau.len(), k.cols());
    let tau_half = tau.sqrt();
    let d = k.cols();
    if d == 0 || k.rows() == 0 {
        return NormEstimate {
            value: 0.0,
            converged: true,
            iterations: 0,
        };
    }
    let mut v = power_start(d);
    let mut prev = f64::NAN;
    for it in 1..=iters {
        let kv = k.apply(&tau_half.apply(&v));
        let y = tau_half.apply(&k.adjoint(&sigma.apply(&kv)));
        let rayleigh = vector::dot(&v, &y);
        let ny = vector::norm2(&y);
        if ny == 0.0 {
            return NormEstimate {
                value: 0.0,
                converged: true,
                iterations: it,
            };
        }
        let converged = (rayleigh - prev).abs() <= tol * rayleigh.abs();
        prev = rayleigh;
        v = vector::scale(&y, 1.0 / ny);
        if converged {
            return NormEstimate {
                value: rayleigh.max(0.0).sqrt(),
                converged: true,
                iterations: it,
            };
        }
    }
    NormEstimate {
        value: prev.max(0.0).sqrt(),
        converged: false,
        iterations: iters,
    }
}

/// Largest singular value of `K` itself.
pub fn operator_norm(k: &LinearOperator) -> NormEstimate {
    op_norm_estimate(
        &DiagonalScaling::identity(k.rows()),
        k,
        &DiagonalScaling::identity(k.cols()),
        POWER_MAX_ITERS,
        POWER_TOL,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn adjoint_rel_err(k: &LinearOperator, seed: u64) -> f64 {
        let x = rand_vec(k.cols(), seed);
        let w = rand_vec(k.rows(), seed + 1);
        let lhs = vector::dot(&k.apply(&x), &w);
        let rhs = vector::dot(&x, &k.adjoint(&w));
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
    }

    fn all_kinds() -> Vec<LinearOperator> {
        let dense = LinearOperator::Dense(DMatrix::from_row_slice(
            3,
            4,
            &[1.0, -2.0, 0.5, 0.0, 3.0, 0.0, -1.0, 2.0, 0.0, 1.5, 1.0, -0.25],
        ));
        let (stack, _) = stack_operators(vec![
            make_diff_1d(4).unwrap(),
            dense.clone(),
            LinearOperator::Identity(4),
        ])
        .unwrap();
        let (iso, _) = stack_operators(isotropic_tv_parts(3, 4).unwrap()).unwrap();
        vec![
            dense,
            make_diff_1d(7).unwrap(),
            make_diff_2d(5, 3).unwrap(),
            stack,
            iso,
            LinearOperator::Identity(6),
        ]
    }

    #[test]
    fn adjoint_identity_every_kind() {
        for (n, k) in all_kinds().iter().enumerate() {
            for seed in 0..5 {
                let err = adjoint_rel_err(k, 10 * n as u64 + seed);
                assert!(err <= 1e-12, "kind {n}: relative adjoint error {err}");
            }
        }
    }

    #[test]
    fn zero_operator_adjoint() {
        let k = LinearOperator::Zero { rows: 3, cols: 2 };
        assert_eq!(k.apply(&[1.0, 2.0]), vec![0.0; 3]);
        assert_eq!(k.adjoint(&[1.0, 2.0, 3.0]), vec![0.0; 2]);
    }

    #[test]
    fn diff_1d_examples() {
        let k = make_diff_1d(3).unwrap();
        assert_eq!(k.apply(&[2.5, 2.5, 2.5]), vec![0.0, 0.0]);
        assert_eq!(k.apply(&[1.0, 2.0, 4.0]), vec![-1.0, -2.0]);
        let k2 = make_diff_1d(2).unwrap();
        assert_eq!(k2.adjoint(&[1.0]), vec![1.0, -1.0]);
        assert!(matches!(make_diff_1d(1), Err(LinopError::InvalidDimension(_))));
    }

    #[test]
    fn diff_2d_shapes() {
        let k = make_diff_2d(25, 25).unwrap();
        assert_eq!((k.rows(), k.cols()), (1200, 625));
        assert_eq!(make_diff_2d(2, 2).unwrap().rows(), 4);
        assert_eq!(k.apply(&vec![3.0; 625]), vec![0.0; 1200]);
        assert!(make_diff_2d(1, 5).is_err());
        assert!(make_diff_2d(5, 1).is_err());
    }

    #[test]
    fn diff_2d_rows_have_one_plus_one_minus() {
        for &(d1, d2) in &[(2, 2), (3, 5), (6, 4)] {
            let dense = make_diff_2d(d1, d2).unwrap().to_dense();
            assert_eq!(dense.nrows(), d1 * (d2 - 1) + d2 * (d1 - 1));
            for i in 0..dense.nrows() {
                let row: Vec<f64> = dense.row(i).iter().cloned().filter(|v| *v != 0.0).collect();
                assert_eq!(row.len(), 2);
                assert!(row.contains(&1.0) && row.contains(&-1.0));
            }
        }
    }

    #[test]
    fn abs_sums_match_dense() {
        for k in all_kinds() {
            let dense = k.to_dense();
            let dk = LinearOperator::Dense(dense);
            assert_eq!(k.row_abs_sums(), dk.row_abs_sums());
            let a = k.col_abs_sums();
            let b = dk.col_abs_sums();
            assert!(vector::max_abs_diff(&a, &b) < 1e-15);
        }
    }

    #[test]
    fn preconditioner_examples() {
        let (s, t) = make_preconditioners(&make_diff_1d(3).unwrap(), 1.0).unwrap();
        assert_eq!(s.entries(), &[0.5, 0.5]);
        assert_eq!(t.entries(), &[1.0, 0.5, 1.0]);

        let (s, t) = make_preconditioners(&LinearOperator::Identity(2), 1.0).unwrap();
        assert_eq!(s, DiagonalScaling::identity(2));
        assert_eq!(t, DiagonalScaling::identity(2));

        let k = make_diff_2d(4, 3).unwrap();
        let (s1, t1) = make_preconditioners(&k, 1.5).unwrap();
        let (s2, t2) = make_preconditioners(&k, 3.0).unwrap();
        for (a, b) in s1.entries().iter().zip(s2.entries()) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
        for (a, b) in t1.entries().iter().zip(t2.entries()) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn preconditioner_degenerate() {
        let k = LinearOperator::Dense(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(make_preconditioners(&k, 1.0), Err(LinopError::ZeroRow(1))));
        let k = LinearOperator::Dense(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]));
        assert!(matches!(make_preconditioners(&k, 1.0), Err(LinopError::ZeroColumn(1))));
    }

    #[test]
    fn norm_estimate_bounded_by_one_with_preconditioners() {
        for k in all_kinds() {
            for &lambda in &[0.1, 1.0, 7.0] {
                let (s, t) = make_preconditioners(&k, lambda).unwrap();
                let est = op_norm_estimate(&s, &k, &t, POWER_MAX_ITERS, POWER_TOL);
                assert!(est.value <= 1.0 + 1e-8, "norm {}", est.value);
            }
        }
        let (s, t) = make_preconditioners(&make_diff_1d(3).unwrap(), 1.0).unwrap();
        let est = op_norm_estimate(&s, &make_diff_1d(3).unwrap(), &t, 1000, 1e-10);
        assert!(est.value <= 1.0 + 1e-8);
    }

    #[test]
    fn norm_estimate_zero_operator() {
        let k = LinearOperator::Zero { rows: 3, cols: 4 };
        let est = op_norm_estimate(
            &DiagonalScaling::identity(3),
            &k,
            &DiagonalScaling::identity(4),
            100,
            1e-10,
        );
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn norm_estimate_matches_dense_svd() {
        let a = DMatrix::from_fn(7, 5, |i, j| ((i * 5 + j) as f64 * 0.37).sin());
        let k = LinearOperator::Dense(a.clone());
        let s = DiagonalScaling::new((0..7).map(|i| 0.5 + i as f64 * 0.1).collect()).unwrap();
        let t = DiagonalScaling::new((0..5).map(|j| 0.3 + j as f64 * 0.2).collect()).unwrap();
        let scaled = DMatrix::from_fn(7, 5, |i, j| {
            s.entries()[i].sqrt() * a[(i, j)] * t.entries()[j].sqrt()
        });
        let oracle = scaled.singular_values().max();
        let est = op_norm_estimate(&s, &k, &t, 1000, 1e-14);
        assert!((est.value - oracle).abs() <= 1e-8, "{} vs {oracle}", est.value);
    }

    #[test]
    fn stack_examples() {
        let (k, b) = stack_operators(vec![make_diff_1d(3).unwrap()]).unwrap();
        assert_eq!(k, make_diff_1d(3).unwrap());
        assert_eq!(b.num_blocks(), 1);

        let (k, b) =
            stack_operators(vec![make_diff_1d(3).unwrap(), make_diff_1d(3).unwrap()]).unwrap();
        assert_eq!((k.rows(), k.cols()), (4, 3));
        assert_eq!(b.ranges(), &[0..2, 2..4]);

        let (_, b) = stack_operators(isotropic_tv_parts(2, 2).unwrap()).unwrap();
        assert_eq!(b.num_blocks(), 4);
        assert!(b.sizes().iter().all(|&s| s <= 2));
        assert_eq!(b.total_len(), 4);

        assert!(stack_operators(vec![make_diff_1d(3).unwrap(), make_diff_1d(4).unwrap()]).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let text = "1, -2.5,0\n\n3,4,5e-1\n";
        let k = LinearOperator::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!((k.rows(), k.cols()), (2, 3));
        assert_eq!(k.apply(&[1.0, 1.0, 1.0]), vec![-1.5, 7.5]);
        assert!(LinearOperator::from_csv_reader("1,2\n3\n".as_bytes()).is_err());
        assert!(LinearOperator::from_csv_reader("1,x\n".as_bytes()).is_err());
    }
}
