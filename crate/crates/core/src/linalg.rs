//! Compressed-row sparse matrices and the symmetric / bordered solvers built
//! on them.
//!
//! The iterative path is Jacobi-preconditioned conjugate gradients. The
//! direct path goes through sparse Cholesky and LU factorizations from
//! `faer`, always run sequentially so results are reproducible.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use crate::error::{Error, Result};

/// Sparse matrix in compressed-row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays. Column indices must be sorted
    /// and unique within each row.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 || col_idx.len() != values.len() || row_ptr[nrows] != values.len() {
            return Err(Error::invalid("inconsistent CSR array lengths"));
        }
        for r in 0..nrows {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.last().is_some_and(|&c| c >= ncols) {
                return Err(Error::invalid(format!("row {r} has unsorted or out-of-range columns")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        if sorted.iter().any(|&(r, c, _)| r >= nrows || c >= ncols) {
            return Err(Error::invalid("triplet index out of range"));
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::from_csr(nrows, ncols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Same sparsity pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// Entry `(r, c)`, zero if not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Position of `(r, c)` in the value array.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].binary_search(&c).ok().map(|k| range.start + k)
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.with_values(self.values.iter().map(|v| alpha * v).collect())
    }

    /// `alpha * self + beta * other` for matrices sharing one pattern.
    pub fn combine(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Result<Self> {
        if self.row_ptr != other.row_ptr || self.col_idx != other.col_idx {
            return Err(Error::invalid("matrices do not share a sparsity pattern"));
        }
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        ))
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip).expect("transpose of a valid matrix")
    }

    /// Row-major dense copy, for oracles and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Principal submatrix with row and column `skip` removed.
    fn without_index(&self, skip: usize) -> Self {
        let shift = |c: usize| if c > skip { c - 1 } else { c };
        let mut row_ptr = Vec::with_capacity(self.nrows);
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        for r in (0..self.nrows).filter(|&r| r != skip) {
            for (c, v) in self.row(r).filter(|&(c, _)| c != skip) {
                col_idx.push(shift(c));
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows - 1,
            ncols: self.ncols - 1,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// View of `self^T` in faer's compressed-column layout (no copy).
    fn transposed_view(&self) -> SparseColMatRef<'_, usize, f64> {
        let sym = SymbolicSparseColMatRef::new_checked(self.ncols, self.nrows, &self.row_ptr, None, &self.col_idx);
        SparseColMatRef::new(sym, &self.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    IterativeCg,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    /// `None` means ten times the number of unknowns.
    pub max_iterations: Option<usize>,
    pub method: SolveMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-10,
            abs_tolerance: 1e-14,
            max_iterations: None,
            method: SolveMethod::IterativeCg,
        }
    }
}

/// Problems up to this many unknowns default to the direct path.
pub const DIRECT_SOLVE_LIMIT: usize = 20_000;

impl SolveOptions {
    pub fn direct() -> Self {
        Self {
            method: SolveMethod::Direct,
            ..Self::default()
        }
    }

    /// Direct below [`DIRECT_SOLVE_LIMIT`] unknowns, CG above.
    pub fn auto(unknowns: usize) -> Self {
        if unknowns < DIRECT_SOLVE_LIMIT {
            Self::direct()
        } else {
            Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.abs_tolerance > 0.0) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        Ok(())
    }

    fn target(&self, rhs_norm: f64) -> f64 {
        self.abs_tolerance.max(self.rel_tolerance * rhs_norm)
    }
}

/// Jacobi-preconditioned CG on `A x = b` starting from zero. `A` may be
/// singular as long as `b` lies in its range.
fn pcg(a: &SparseMatrix, b: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    let n = b.len();
    let target = opts.target(norm2(b));
    let max_it = opts.max_iterations.unwrap_or(10 * n.max(1));
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut rnorm = norm2(&r);
    if rnorm <= target {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_it {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::solver("CG breakdown: matrix is not positive definite on the search space", rnorm));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm2(&r);
        if rnorm <= target {
            // confirm with the true residual
            let true_r = norm2(&sub(b, &a.mul_vec(&x)));
            if true_r <= target {
                return Ok(x);
            }
            rnorm = true_r;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::solver(format!("CG did not converge in {max_it} iterations"), rnorm))
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn cholesky(a: &SparseMatrix) -> Result<Llt<usize, f64>> {
    let view = a.transposed_view();
    let symbolic = SymbolicLlt::try_new(view.symbolic(), Side::Lower)
        .map_err(|e| Error::solver(format!("symbolic Cholesky failed: {e:?}"), f64::NAN))?;
    Llt::try_new_with_symbolic(symbolic, view, Side::Lower)
        .map_err(|e| Error::solver(format!("Cholesky factorization failed: {e:?}"), f64::NAN))
}

fn solve_with<S: Solve<f64>>(f: &S, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    let n = x.len();
    f.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
    x
}

/// Reusable solver for one symmetric positive definite matrix.
pub struct SpdSolver {
    matrix: SparseMatrix,
    opts: SolveOptions,
    factor: Option<Llt<usize, f64>>,
}

impl SpdSolver {
    pub fn new(matrix: SparseMatrix, opts: SolveOptions) -> Result<Self> {
        opts.validate()?;
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::invalid("SPD solve needs a square matrix"));
        }
        let factor = match opts.method {
            SolveMethod::Direct => Some(cholesky(&matrix)?),
            SolveMethod::IterativeCg => None,
        };
        Ok(Self { matrix, opts, factor })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.matrix.nrows() {
            return Err(Error::invalid("right-hand side length mismatch"));
        }
        match &self.factor {
            Some(f) => {
                let x = solve_with(f, b);
                check_finite(&x)?;
                Ok(x)
            }
            None => pcg(&self.matrix, b, &self.opts),
        }
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::solver("factorization produced non-finite values", f64::NAN))
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    SpdSolver::new(a.clone(), *opts)?.solve(b)
}

/// Reusable solver for the bordered system
/// `A x + lambda c = b`, `c^T x = 0`, with `A` symmetric positive
/// semidefinite and kernel spanned by the constant vector.
pub struct ConstrainedSolver {
    matrix: SparseMatrix,
    c: Vec<f64>,
    c_sum: f64,
    opts: SolveOptions,
    /// Cholesky factor of `A` with the first row and column removed.
    factor: Option<Llt<usize, f64>>,
}

impl ConstrainedSolver {
    pub fn new(matrix: SparseMatrix, c: Vec<f64>, opts: SolveOptions) -> Result<Self> {
        opts.validate()?;
        let n = matrix.nrows();
        if matrix.ncols() != n || c.len() != n || n == 0 {
            return Err(Error::invalid("bordered system dimensions do not match"));
        }
        let c_sum: f64 = c.iter().sum();
        if c_sum.abs() <= f64::EPSILON * norm2(&c) || !c_sum.is_finite() {
            return Err(Error::solver("bordered system is singular: constraint annihilates constants", 0.0));
        }
        let factor = match opts.method {
            SolveMethod::Direct if n > 1 => Some(cholesky(&matrix.without_index(0)).map_err(|e| match e {
                Error::Solver { message, residual } => Error::solver(
                    format!("bordered system is singular ({message})"),
                    residual,
                ),
                other => other,
            })?),
            _ => None,
        };
        Ok(Self {
            matrix,
            c,
            c_sum,
            opts,
            factor,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Returns `(x, lambda)`.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.c.len();
        if b.len() != n {
            return Err(Error::invalid("right-hand side length mismatch"));
        }
        // testing with the constant vector fixes the multiplier
        let lambda = b.iter().sum::<f64>() / self.c_sum;
        let rhs: Vec<f64> = b.iter().zip(&self.c).map(|(b, c)| b - lambda * c).collect();
        let mut x = if n == 1 {
            vec![0.0]
        } else if let Some(f) = &self.factor {
            let mut x = Vec::with_capacity(n);
            x.push(0.0);
            x.extend(solve_with(f, &rhs[1..]));
            check_finite(&x)?;
            x
        } else {
            pcg(&self.matrix, &rhs, &self.opts)?
        };
        let shift = dot(&self.c, &x) / self.c_sum;
        x.iter_mut().for_each(|v| *v -= shift);
        Ok((x, lambda))
    }
}

/// Solves the bordered system `A x + lambda c = b`, `c^T x = 0`.
pub fn solve_constrained(a: &SparseMatrix, c: &[f64], b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, f64)> {
    ConstrainedSolver::new(a.clone(), c.to_vec(), *opts)?.solve(b)
}

/// Sparse LU for general square systems that keeps the symbolic analysis
/// across refactorizations of matrices with one fixed pattern.
#[derive(Default)]
pub struct SparseLu {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
    numeric: Option<Lu<usize, f64>>,
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factor(&mut self, a: &SparseMatrix) -> Result<()> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("LU needs a square matrix"));
        }
        // faer is column-major: factor A^T and solve transposed systems
        let view = a.transposed_view();
        let reuse = matches!(&self.symbolic, Some((rp, ci, _)) if *rp == a.row_ptr && *ci == a.col_idx);
        if !reuse {
            let sym = SymbolicLu::try_new(view.symbolic())
                .map_err(|e| Error::solver(format!("symbolic LU failed: {e:?}"), f64::NAN))?;
            self.symbolic = Some((a.row_ptr.clone(), a.col_idx.clone(), sym));
        }
        let sym = self.symbolic.as_ref().unwrap().2.clone();
        let lu = Lu::try_new_with_symbolic(sym, view)
            .map_err(|e| Error::solver(format!("LU factorization failed: {e:?}"), f64::NAN))?;
        self.numeric = Some(lu);
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let lu = self
            .numeric
            .as_ref()
            .ok_or_else(|| Error::invalid("LU solve before factorization"))?;
        let mut x = b.to_vec();
        let n = x.len();
        lu.solve_transpose_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        check_finite(&x)?;
        Ok(x)
    }
}

/// Direct solver for `[[A, b], [dᵀ, 0]] [x; λ] = [f; g]` with sparse `A` and
/// dense `b`, `d`.
///
/// A dense border row destroys the fill-reducing ordering of a sparse LU, so
/// only `A' = A + σ e_p e_pᵀ` is factored (the shift removes a possible
/// one-dimensional kernel of `A`) and the border and the shift are
/// accounted for through a 2×2 capacitance system.
#[derive(Default)]
pub struct BorderedLu {
    lu: SparseLu,
    pin: usize,
    sigma: f64,
    d: Vec<f64>,
    /// `A'^{-1} e_p` and `A'^{-1} b`.
    z_pin: Vec<f64>,
    z_border: Vec<f64>,
    capacitance: [[f64; 2]; 2],
}

impl BorderedLu {
    pub fn new() -> Self {
        Self::default()
    }

    /// `pin` must be a stored diagonal entry of `a`.
    pub fn factor(&mut self, a: &SparseMatrix, b: &[f64], d: &[f64], pin: usize) -> Result<()> {
        let n = a.nrows();
        if b.len() != n || d.len() != n || pin >= n {
            return Err(Error::invalid("border vectors or pin index do not match the matrix"));
        }
        let slot = a
            .slot(pin, pin)
            .ok_or_else(|| Error::invalid("pinned diagonal entry is not in the sparsity pattern"))?;
        let sigma = a.row(pin).map(|(_, v)| v.abs()).fold(0.0, f64::max).max(1e-300);
        let mut shifted = a.clone();
        shifted.values_mut()[slot] += sigma;
        self.lu.factor(&shifted)?;
        let mut e = vec![0.0; n];
        e[pin] = 1.0;
        self.z_pin = self.lu.solve(&e)?;
        self.z_border = self.lu.solve(b)?;
        self.capacitance = [
            [1.0 / sigma - self.z_pin[pin], -self.z_border[pin]],
            [-dot(d, &self.z_pin), -dot(d, &self.z_border)],
        ];
        let [[a11, a12], [a21, a22]] = self.capacitance;
        let det = a11 * a22 - a12 * a21;
        let scale = (a11.abs() + a12.abs()) * (a21.abs() + a22.abs());
        if !(det.abs() > 1e-14 * scale) {
            return Err(Error::solver("bordered system is singular", det));
        }
        self.pin = pin;
        self.sigma = sigma;
        self.d = d.to_vec();
        Ok(())
    }

    pub fn solve(&self, f: &[f64], g: f64) -> Result<(Vec<f64>, f64)> {
        if f.len() != self.d.len() {
            return Err(Error::invalid("right-hand side does not match the factored system"));
        }
        let zf = self.lu.solve(f)?;
        let r1 = -zf[self.pin];
        let r2 = g - dot(&self.d, &zf);
        let [[a11, a12], [a21, a22]] = self.capacitance;
        let det = a11 * a22 - a12 * a21;
        let y = (r1 * a22 - a12 * r2) / det;
        let lambda = (a11 * r2 - a21 * r1) / det;
        let x: Vec<f64> = (0..zf.len())
            .map(|i| zf[i] - self.z_pin[i] * y - self.z_border[i] * lambda)
            .collect();
        check_finite(&x)?;
        Ok((x, lambda))
    }
}
