//! Preconditioned conjugate gradient for the SPD systems of the decision
//! layer, plus a dense Cholesky fallback for small ill-conditioned cases.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::sparse::SparseMatrix;
use crate::{Error, Result};

/// The operator `shift·I + scale·S` applied implicitly.
///
/// Covers both `(I + λ L_uu)` and the harmonic system `L_uu (+ εI)` without
/// materializing a new matrix.
#[derive(Clone, Copy)]
pub struct ShiftedSparse<'a> {
    pub matrix: &'a SparseMatrix,
    pub scale: f64,
    pub shift: f64,
}

impl ShiftedSparse<'_> {
    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.matrix.mul_vec_into(x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.scale * *o + self.shift * xi;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix
            .diagonal()
            .into_iter()
            .map(|d| self.shift + self.scale * d)
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = self.matrix.to_dense() * self.scale;
        for i in 0..self.n() {
            d[(i, i)] += self.shift;
        }
        d
    }
}

/// Outcome of a converged CG solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` by Jacobi-preconditioned conjugate gradient.
///
/// Convergence is declared when `||b − A x|| ≤ tol · ||b||`; a zero right-hand
/// side returns the zero vector immediately. Iterations are capped at
/// `max_iter`; hitting the cap returns [`Error::CgStalled`].
pub fn cg_solve(op: ShiftedSparse<'_>, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgReport)> {
    let n = op.n();
    debug_assert_eq!(b.len(), n);

    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    let inv_diag: Vec<f64> = op
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem("operator is not positive definite on CG subspace"));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm(&r) / b_norm;
        if res <= tol {
            return Ok((
                x,
                CgReport {
                    iterations: it,
                    relative_residual: res,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Err(Error::CgStalled {
        residual: norm(&r) / b_norm,
        iterations: max_iter,
    })
}

/// Column-by-column CG solve of `A X = B`.
///
/// Columns are independent recurrences solved in index order, so the result
/// does not depend on any parallel execution of the caller.
pub fn cg_solve_columns(
    op: ShiftedSparse<'_>,
    rhs: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    if rhs.nrows() != op.n() {
        return Err(Error::DimMismatch {
            context: "cg right-hand side",
            expected: op.n(),
            found: rhs.nrows(),
        });
    }
    let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    for c in 0..rhs.ncols() {
        let b: Vec<f64> = rhs.column(c).iter().cloned().collect();
        let (x, _) = cg_solve(op, &b, tol, max_iter)?;
        out.column_mut(c).copy_from_slice(&x);
    }
    Ok(out)
}

/// Dense Cholesky solve of `A X = B`, used as the fallback for small systems
/// when CG stalls.
pub fn cholesky_solve_columns(op: ShiftedSparse<'_>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dense = op.to_dense();
    let chol = dense
        .cholesky()
        .ok_or(Error::SingularSystem("dense Cholesky factorization failed"))?;
    Ok(chol.solve(rhs))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}
