//! Trace maximization over matrices with orthonormal columns, and
//! orthonormal-complement construction.
//!
//! The central fact: for `P` of shape m×n (m ≥ n), the feasible maximizer of
//! `Tr(Q^T P)` over `Q^T Q = I` is `Q = B C^T` from the singular value
//! decomposition `P = B Ψ C^T`, and the maximum equals the nuclear norm
//! `Σ_i ψ_ii`. Rank-deficient `P` leaves trailing singular directions
//! ambiguous; any SVD-returned basis is a valid maximizer.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::Rng;

use crate::{Error, Result};

/// One-sided Jacobi singular value decomposition `P = U Σ V^T`.
///
/// `U` is m×n with orthonormal columns, `Σ` the singular values in
/// descending order, `V` n×n orthogonal. Hestenes rotations give every
/// column pair high relative accuracy, which the trace-maximization
/// contract (nuclear norm within 1e-9) needs; general-purpose bidiagonal
/// solvers can mispair singular vectors by ~√ε on rank-deficient inputs.
/// Zero singular values get orthonormal filler columns in `U`.
pub fn jacobi_svd(p: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (m, n) = p.shape();
    if n == 0 || m < n {
        return Err(Error::DimMismatch {
            context: "jacobi svd needs m >= n >= 1",
            expected: n,
            found: m,
        });
    }
    let mut a = p.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = 1e-15;
    let max_sweeps = 64;

    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut max_off = 0.0f64;
        for i in 0..n - 1 {
            for j in (i + 1)..n {
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut ab = 0.0;
                for k in 0..m {
                    let x = a[(k, i)];
                    let y = a[(k, j)];
                    aa += x * x;
                    bb += y * y;
                    ab += x * y;
                }
                if aa == 0.0 || bb == 0.0 {
                    continue;
                }
                let rel = libm::fabs(ab) / libm::sqrt(aa * bb);
                if rel > max_off {
                    max_off = rel;
                }
                if rel <= tol {
                    continue;
                }
                let zeta = (bb - aa) / (2.0 * ab);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + libm::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + libm::sqrt(1.0 + zeta * zeta))
                };
                let cs = 1.0 / libm::sqrt(1.0 + t * t);
                let sn = cs * t;
                for k in 0..m {
                    let x = a[(k, i)];
                    let y = a[(k, j)];
                    a[(k, i)] = cs * x - sn * y;
                    a[(k, j)] = sn * x + cs * y;
                }
                for k in 0..n {
                    let x = v[(k, i)];
                    let y = v[(k, j)];
                    v[(k, i)] = cs * x - sn * y;
                    v[(k, j)] = sn * x + cs * y;
                }
            }
        }
        if max_off <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SingularSystem("jacobi svd did not converge"));
    }

    // Column norms are the singular values; sort descending.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|i| a.column(i).norm()).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).expect("finite norms"));

    let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut v_sorted = DMatrix::<f64>::zeros(n, n);
    // At convergence every column pair is orthogonal relative to its norms,
    // so any non-zero column normalizes to a valid singular vector; only
    // exactly-zero columns need filler.
    let mut rank = 0;
    for (slot, &src) in order.iter().enumerate() {
        v_sorted.column_mut(slot).copy_from(&v.column(src));
        if norms[src] > 0.0 {
            let scaled = a.column(src) / norms[src];
            u.column_mut(slot).copy_from(&scaled);
            rank = slot + 1;
        }
    }
    if rank < n {
        // Null directions: complete U's basis; the choice is arbitrary and
        // does not affect Σ or the product U Σ V^T.
        let lead = u.view((0, 0), (m, rank)).clone_owned();
        let fill = orthonormal_complement(&lead)?;
        u.view_mut((0, rank), (m, n - rank))
            .copy_from(&fill.view((0, 0), (m, n - rank)));
    }
    Ok((u, sigma, v_sorted))
}

/// Sum of singular values, computed by the high-accuracy Jacobi SVD.
pub fn nuclear_norm(p: &DMatrix<f64>) -> Result<f64> {
    let transposed;
    let p = if p.nrows() >= p.ncols() {
        p
    } else {
        transposed = p.transpose();
        &transposed
    };
    let (_, sigma, _) = jacobi_svd(p)?;
    Ok(sigma.iter().sum())
}

/// Solves `max Tr(Q^T P)` subject to `Q^T Q = I`: `Q = B C^T` from the
/// singular value decomposition of `P`.
///
/// The achieved maximum is the nuclear norm of `P`. Rank-deficient inputs leave
/// the trailing singular subspace ambiguous; the returned maximizer uses an
/// arbitrary orthonormal completion, which changes nothing about the trace.
pub fn trace_max_orthogonal(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = p.shape();
    if n == 0 {
        return Err(Error::DegenerateShape("trace maximization needs at least one column"));
    }
    if m < n {
        return Err(Error::DimMismatch {
            context: "trace maximization needs m >= n",
            expected: n,
            found: m,
        });
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trace maximization input"));
    }
    let (b, _, c) = jacobi_svd(p)?;
    Ok(b * c.transpose())
}

/// Orthonormal basis of the orthogonal complement of `u`'s column space.
///
/// `u` must have orthonormal columns; the result has `d − c` orthonormal
/// columns, each orthogonal to every column of `u`. A square `u` legally
/// yields an empty (d×0) complement.
pub fn orthonormal_complement(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, c) = u.shape();
    if c > d {
        return Err(Error::DimMismatch {
            context: "complement needs d >= c",
            expected: d,
            found: c,
        });
    }
    let gram_err = (u.transpose() * u - DMatrix::<f64>::identity(c, c)).abs().max();
    if c > 0 && gram_err > 1e-6 {
        return Err(Error::DegenerateShape("input columns are not orthonormal"));
    }
    if c == d {
        return Ok(DMatrix::zeros(d, 0));
    }

    // Complete the basis by twice-reorthogonalized Gram-Schmidt over the
    // standard basis vectors.
    let mut basis = DMatrix::<f64>::zeros(d, d);
    basis.view_mut((0, 0), (d, c)).copy_from(u);
    let mut count = c;
    for k in 0..d {
        if count == d {
            break;
        }
        let mut v = DMatrix::<f64>::zeros(d, 1);
        v[(k, 0)] = 1.0;
        for _ in 0..2 {
            let proj = basis.view((0, 0), (d, count)).transpose() * &v;
            v -= basis.view((0, 0), (d, count)) * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.view_mut((0, count), (d, 1)).copy_from(&(v / norm));
            count += 1;
        }
    }
    if count < d {
        return Err(Error::SingularSystem("failed to complete orthonormal basis"));
    }
    Ok(basis.view((0, c), (d, d - c)).clone_owned())
}

/// Random d×c matrix with orthonormal columns: QR of a standard Gaussian.
pub fn random_orthonormal<R: Rng + ?Sized>(d: usize, c: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if c > d {
        return Err(Error::DimMismatch {
            context: "orthonormal init needs d >= c",
            expected: d,
            found: c,
        });
    }
    let g = DMatrix::from_fn(d, c, |_, _| standard_normal(rng));
    Ok(g.qr().q())
}

/// Box-Muller standard normal draw.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 > 0.0 {
            let u2: f64 = rng.random();
            return libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2);
        }
    }
}
