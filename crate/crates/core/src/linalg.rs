//! Sparse storage, assembly scatter and the linear solvers used by every step.
//!
//! Matrices are assembled from triplets and finalized into compressed sparse
//! row storage. Direct solves go through faer's sparse Cholesky (symmetric
//! inputs) or sparse LU; a restarted GMRES with Jacobi preconditioning is
//! available for larger systems.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: matrix is {rows}x{cols}, right-hand side has length {rhs}")]
    DimensionMismatch { rows: usize, cols: usize, rhs: usize },
    #[error("singular matrix: {detail}")]
    Singular { pivot: Option<usize>, detail: String },
    #[error("solve produced non-finite values")]
    NonFinite,
    #[error("relative residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("GMRES did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Accumulates `(row, col, value)` contributions; duplicates are summed on `build`.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(capacity),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Finalizes into CSR. The sort is stable, so duplicate contributions are
    /// summed in insertion order and the result is deterministic.
    pub fn build(self) -> SparseMatrix {
        // bucket by row (keeps insertion order), then sort each row by column
        let mut start = vec![0usize; self.nrows + 1];
        for &(r, _, _) in &self.entries {
            start[r + 1] += 1;
        }
        for i in 0..self.nrows {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut bucketed = vec![(0usize, 0.0f64); self.entries.len()];
        for &(r, c, v) in &self.entries {
            bucketed[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        for r in 0..self.nrows {
            let row = &mut bucketed[start[r]..start[r + 1]];
            row.sort_by_key(|e| e.0);
            let mut last = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn identity(n: usize) -> Self {
        let mut b = TripletBuilder::with_capacity(n, n, n);
        for i in 0..n {
            b.push(i, i, 1.0);
        }
        b.build().with_symmetry(true)
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense input");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    /// Marks the matrix as symmetric so solves take the Cholesky path first.
    pub fn with_symmetry(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    pub fn is_marked_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored entries of one row as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Iterates all stored entries as `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.entries() {
            out[i][j] += v;
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.entries() {
            b.push(j, i, v);
        }
        b.build().with_symmetry(self.symmetric)
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `Σ coeff_k · A_k` over matrices of identical shape.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> SparseMatrix {
        let (nrows, ncols) = terms
            .first()
            .map(|(_, m)| (m.nrows, m.ncols))
            .expect("linear_combination needs at least one term");
        let capacity = terms.iter().map(|(_, m)| m.nnz()).sum();
        let mut b = TripletBuilder::with_capacity(nrows, ncols, capacity);
        for (alpha, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols), "shape mismatch");
            for (i, j, v) in m.entries() {
                b.push(i, j, alpha * v);
            }
        }
        let symmetric = terms.iter().all(|(_, m)| m.symmetric);
        b.build().with_symmetry(symmetric)
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        (0..self.nrows)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entry of `|A - B|`, taken over the union of both patterns.
    pub fn max_abs_difference(&self, other: &SparseMatrix) -> f64 {
        SparseMatrix::linear_combination(&[(1.0, self), (-1.0, other)]).max_abs()
    }

    /// `max |A + Aᵀ|`; zero for an exactly skew-symmetric matrix.
    pub fn skew_defect(&self) -> f64 {
        let t = self.transpose();
        SparseMatrix::linear_combination(&[(1.0, self), (1.0, &t)]).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, SolverError> {
        let triplets: Vec<Triplet<usize, usize, f64>> = self
            .entries()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets).map_err(|e| {
            SolverError::Singular {
                pivot: None,
                detail: format!("could not build factorization input: {e:?}"),
            }
        })
    }

    fn empty_row_or_col(&self) -> Option<String> {
        let mut col_seen = vec![false; self.ncols];
        for i in 0..self.nrows {
            let mut any = false;
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    any = true;
                    col_seen[j] = true;
                }
            }
            if !any {
                return Some(format!("row {i} has no nonzero entries"));
            }
        }
        col_seen
            .iter()
            .position(|seen| !seen)
            .map(|j| format!("column {j} has no nonzero entries"))
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let bn = norm2(b);
    let rel = if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) };
    (r, rel)
}

enum Factor {
    Llt(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

/// A reusable factorization. Immutable after construction; `solve` takes `&self`.
pub struct Factorization {
    factor: Factor,
    n: usize,
}

impl Factorization {
    /// Cholesky for matrices marked symmetric (falling back to LU when the
    /// matrix turns out indefinite), LU otherwise.
    pub fn new(a: &SparseMatrix) -> Result<Self, SolverError> {
        if a.nrows != a.ncols {
            return Err(SolverError::DimensionMismatch {
                rows: a.nrows,
                cols: a.ncols,
                rhs: a.nrows,
            });
        }
        if let Some(detail) = a.empty_row_or_col() {
            return Err(SolverError::Singular {
                pivot: None,
                detail,
            });
        }
        if !a.is_finite() {
            return Err(SolverError::NonFinite);
        }
        faer::set_global_parallelism(faer::Par::Seq);
        let mat = a.to_faer()?;
        if a.symmetric {
            if let Ok(llt) = mat.sp_cholesky(Side::Lower) {
                return Ok(Self {
                    factor: Factor::Llt(llt),
                    n: a.nrows,
                });
            }
        }
        match mat.sp_lu() {
            Ok(lu) => Ok(Self {
                factor: Factor::Lu(lu),
                n: a.nrows,
            }),
            Err(faer::sparse::linalg::LuError::SymbolicSingular { index }) => {
                Err(SolverError::Singular {
                    pivot: Some(index),
                    detail: format!("no admissible pivot at elimination step {index}"),
                })
            }
            Err(e) => Err(SolverError::Singular {
                pivot: None,
                detail: format!("{e:?}"),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = match &self.factor {
            Factor::Llt(f) => f.solve(&rhs),
            Factor::Lu(f) => f.solve(&rhs),
        };
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Solve with up to three rounds of iterative refinement against `a`,
    /// enforcing `‖Ax − b‖ ≤ tol·‖b‖`.
    pub fn solve_checked(
        &self,
        a: &SparseMatrix,
        b: &[f64],
        tol: f64,
    ) -> Result<Vec<f64>, SolverError> {
        if b.len() != self.n {
            return Err(SolverError::DimensionMismatch {
                rows: a.nrows,
                cols: a.ncols,
                rhs: b.len(),
            });
        }
        let mut x = self.solve(b);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolverError::NonFinite);
        }
        let (mut r, mut rel) = relative_residual(a, &x, b);
        for _ in 0..3 {
            if rel <= tol {
                break;
            }
            let dx = self.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
            (r, rel) = relative_residual(a, &x, b);
        }
        if !rel.is_finite() || !x.iter().all(|v| v.is_finite()) {
            return Err(SolverError::NonFinite);
        }
        if rel > tol {
            return Err(SolverError::ResidualTooLarge {
                residual: rel,
                tolerance: tol,
            });
        }
        Ok(x)
    }
}

/// Direct solve of `A x = b` with the residual contract `‖Ax − b‖ ≤ tol·‖b‖`.
pub fn factor_solve(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>, SolverError> {
    if b.len() != a.nrows || a.nrows != a.ncols {
        return Err(SolverError::DimensionMismatch {
            rows: a.nrows,
            cols: a.ncols,
            rhs: b.len(),
        });
    }
    if b.iter().all(|&v| v == 0.0) {
        // still reject singular operators
        Factorization::new(a)?;
        return Ok(vec![0.0; b.len()]);
    }
    Factorization::new(a)?.solve_checked(a, b, tol)
}

/// Which solver a step uses.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum SolverKind {
    #[default]
    Direct,
    Gmres { restart: usize, max_iterations: usize },
}


#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::Direct,
            tolerance: 1e-12,
        }
    }
}

pub fn solve(a: &SparseMatrix, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>, SolverError> {
    match opts.kind {
        SolverKind::Direct => factor_solve(a, b, opts.tolerance),
        SolverKind::Gmres {
            restart,
            max_iterations,
        } => gmres(a, b, opts.tolerance, restart, max_iterations),
    }
}

/// Restarted GMRES with right Jacobi preconditioning.
///
/// Zero diagonal entries (the pressure block of a saddle-point system) are
/// preconditioned by 1.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iterations: usize,
) -> Result<Vec<f64>, SolverError> {
    let n = a.nrows;
    if b.len() != n || a.ncols != n {
        return Err(SolverError::DimensionMismatch {
            rows: a.nrows,
            cols: a.ncols,
            rhs: b.len(),
        });
    }
    let restart = restart.max(1);
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > f64::MIN_POSITIVE { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta / bnorm <= tol {
            return Ok(x);
        }
        if iterations >= max_iterations {
            return Err(SolverError::NotConverged {
                iterations,
                residual: beta / bnorm,
            });
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut k = 0;
        while k < restart && iterations < max_iterations {
            let z: Vec<f64> = basis[k].iter().zip(&inv_diag).map(|(v, d)| v * d).collect();
            let mut w = a.mul_vec(&z);
            let mut h = vec![0.0; k + 2];
            for (i, vi) in basis.iter().enumerate() {
                h[i] = dot(&w, vi);
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= h[i] * vj);
            }
            h[k + 1] = norm2(&w);
            for i in 0..k {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let denom = (h[k] * h[k] + h[k + 1] * h[k + 1]).sqrt();
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (h[k] / denom, h[k + 1] / denom)
            };
            let hk1 = h[k + 1];
            h[k] = c * h[k] + s * hk1;
            h[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[k]);
            g[k] *= c;
            if hk1 > 0.0 {
                basis.push(w.iter().map(|v| v / hk1).collect());
            }
            hess.push(h);
            k += 1;
            iterations += 1;
            if g[k].abs() / bnorm <= tol || hk1 == 0.0 {
                break;
            }
        }
        // back substitution on the k×k upper-triangular system
        let mut yk = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hess[j][i] * yk[j];
            }
            yk[i] = s / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in yk.iter().enumerate() {
            update.iter_mut().zip(&basis[j]).for_each(|(u, v)| *u += yj * v);
        }
        x.iter_mut()
            .zip(update.iter().zip(&inv_diag))
            .for_each(|(xi, (u, d))| *xi += u * d);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolverError::NonFinite);
        }
    }
}
