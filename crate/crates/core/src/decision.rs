//! Closed-form decision layer: alternating orthonormal-projection updates
//! with Laplacian-regularized soft-label solves.
//!
//! The layer classifies an embedding `H` (n×d, labeled-first row order) by
//! minimizing
//!
//! ```text
//! || H U − [Y_l; Y_u] ||_F²  +  λ · Tr(Y^T L Y),      U^T U = I
//! ```
//!
//! where the trace term equals half the pairwise smoothness penalty
//! `Σ a_ij ||y_i − y_j||²`. Both block updates have closed forms:
//!
//! - `U` comes from an SVD trace maximization after augmenting the target
//!   with the orthogonal complement (`R = [Y, H V]`, `P = H^T R`, `S` the
//!   polar factor of `P`, `U = S[:, :c]`),
//! - `Y_u` solves the SPD system `(I + λ L_uu) Y_u = H_u U − λ L_ul Y_l`.
//!
//! Each update can only lower the objective, so the alternation produces a
//! non-increasing objective sequence.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::Rng;

use crate::graph::{quadratic_form, LaplacianBlocks};
use crate::solver::{cg_solve_columns, cholesky_solve_columns, ShiftedSparse};
use crate::sparse::SparseMatrix;
use crate::stiefel::{orthonormal_complement, random_orthonormal, trace_max_orthogonal};
use crate::{Error, Result};

/// Largest unlabeled-block size for which a dense Cholesky fallback is
/// attempted when CG stalls.
const DENSE_FALLBACK_LIMIT: usize = 2000;

/// Diagonal regularization added to `L_uu` when the harmonic system stalls
/// (disconnected unlabeled components make it singular).
const HARMONIC_REGULARIZATION: f64 = 1e-8;

/// Orthonormal projector `u` (d×c) together with a basis `v` of its
/// orthogonal complement (d×(d−c)).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionState {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl ProjectionState {
    /// Random initial state: `u` is the QR factor of a standard Gaussian
    /// matrix, `v` an orthonormal basis of its null space.
    pub fn init<R: Rng + ?Sized>(d: usize, c: usize, rng: &mut R) -> Result<Self> {
        let u = random_orthonormal(d, c, rng)?;
        let v = orthonormal_complement(&u)?;
        Ok(Self { u, v })
    }

    /// Maximum deviation from `U^T U = I`, `V^T V = I`, `U^T V = 0`.
    pub fn orthogonality_error(&self) -> f64 {
        let c = self.u.ncols();
        let k = self.v.ncols();
        let mut err = (self.u.transpose() * &self.u - DMatrix::<f64>::identity(c, c))
            .abs()
            .max();
        if k > 0 {
            err = err.max(
                (self.v.transpose() * &self.v - DMatrix::<f64>::identity(k, k))
                    .abs()
                    .max(),
            );
            err = err.max((self.u.transpose() * &self.v).abs().max());
        }
        err
    }
}

/// Labeled one-hot block and unlabeled soft block, in labeled-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelState {
    pub y_l: DMatrix<f64>,
    pub y_u: DMatrix<f64>,
}

impl LabelState {
    /// Stacks `[Y_l; Y_u]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (l, c) = self.y_l.shape();
        let u = self.y_u.nrows();
        let mut y = DMatrix::zeros(l + u, c);
        y.view_mut((0, 0), (l, c)).copy_from(&self.y_l);
        y.view_mut((l, 0), (u, c)).copy_from(&self.y_u);
        y
    }
}

/// Result of the alternating solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSolution {
    pub projection: ProjectionState,
    pub labels: LabelState,
    pub objective: f64,
    pub inner_iterations: usize,
    pub converged: bool,
}

/// Options for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Smoothness weight λ (multiplies the trace form).
    pub lambda: f64,
    /// Relative objective-change threshold for inner convergence.
    pub tol: f64,
    /// Maximum inner alternations.
    pub max_iter: usize,
    /// Initialize `Y_u` with random simplex rows instead of uniform 1/c rows.
    pub random_label_init: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tol: 1e-4,
            max_iter: 30,
            random_label_init: false,
        }
    }
}

/// One-hot encodes class indices.
pub fn one_hot(classes: &[usize], c: usize) -> Result<DMatrix<f64>> {
    let mut y = DMatrix::zeros(classes.len(), c);
    for (i, &k) in classes.iter().enumerate() {
        if k >= c {
            return Err(Error::NodeOutOfRange { index: k, n: c });
        }
        y[(i, k)] = 1.0;
    }
    Ok(y)
}

/// Uniform soft-label block: every row is `1/c`, so rows sum to one.
pub fn uniform_labels(u: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_element(u, c, 1.0 / c as f64)
}

/// Random soft-label block with rows on the simplex (normalized uniforms).
pub fn random_simplex_labels<R: Rng + ?Sized>(u: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(u, c);
    for i in 0..u {
        let mut sum = 0.0;
        for j in 0..c {
            let v: f64 = rng.random();
            y[(i, j)] = v;
            sum += v;
        }
        if sum == 0.0 {
            y.row_mut(i).fill(1.0 / c as f64);
        } else {
            for j in 0..c {
                y[(i, j)] /= sum;
            }
        }
    }
    y
}

/// Closed-form projection update.
///
/// Builds the balanced target `R = [Y, H V]`, forms `P = H^T R` and takes the
/// polar factor `S`; the new projector is the first `c` columns of `S`, the
/// new complement the trailing ones. The update never increases
/// `||H U − Y||_F²` relative to the `U` whose complement produced `V`.
pub fn update_projection(
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<ProjectionState> {
    let (n, d) = h.shape();
    let c = y.ncols();
    if y.nrows() != n {
        return Err(Error::DimMismatch {
            context: "projection target rows",
            expected: n,
            found: y.nrows(),
        });
    }
    if v.nrows() != d || v.ncols() != d - c.min(d) {
        return Err(Error::DimMismatch {
            context: "complement shape",
            expected: d - c.min(d),
            found: v.ncols(),
        });
    }
    if c > d {
        return Err(Error::DimMismatch {
            context: "projection needs d >= c",
            expected: c,
            found: d,
        });
    }

    let mut r = DMatrix::zeros(n, d);
    r.view_mut((0, 0), (n, c)).copy_from(y);
    if d > c {
        r.view_mut((0, c), (n, d - c)).copy_from(&(h * v));
    }
    let p = h.transpose() * r;
    let s = trace_max_orthogonal(&p)?;
    let u = s.view((0, 0), (d, c)).clone_owned();
    let v_next = s.view((0, c), (d, d - c)).clone_owned();
    Ok(ProjectionState { u, v: v_next })
}

/// Closed-form soft-label update: solves `(I + λ L_uu) Y_u = H_u U − λ L_ul Y_l`.
///
/// Each class column is an independent SPD system solved by preconditioned
/// CG to relative residual 1e-8 (cap `10·u` iterations), with a dense
/// Cholesky fallback for blocks up to 2000 nodes.
pub fn update_soft_labels(
    h_u: &DMatrix<f64>,
    u_proj: &DMatrix<f64>,
    blocks: &LaplacianBlocks,
    y_l: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if lambda < 0.0 {
        return Err(Error::DegenerateShape("lambda must be non-negative"));
    }
    if h_u.nrows() != blocks.u {
        return Err(Error::DimMismatch {
            context: "unlabeled embedding rows",
            expected: blocks.u,
            found: h_u.nrows(),
        });
    }
    if y_l.nrows() != blocks.l {
        return Err(Error::DimMismatch {
            context: "labeled rows",
            expected: blocks.l,
            found: y_l.nrows(),
        });
    }
    if h_u.ncols() != u_proj.nrows() {
        return Err(Error::DimMismatch {
            context: "projector rows",
            expected: h_u.ncols(),
            found: u_proj.nrows(),
        });
    }

    let mut rhs = h_u * u_proj;
    if lambda > 0.0 {
        rhs -= blocks.l_ul.mul_dense(y_l)? * lambda;
    }
    let op = ShiftedSparse {
        matrix: &blocks.l_uu,
        scale: lambda,
        shift: 1.0,
    };
    solve_spd(op, &rhs, blocks.u)
}

fn solve_spd(op: ShiftedSparse<'_>, rhs: &DMatrix<f64>, u: usize) -> Result<DMatrix<f64>> {
    match cg_solve_columns(op, rhs, 1e-8, (10 * u).max(8)) {
        Ok(x) => Ok(x),
        Err(Error::CgStalled { .. }) if u <= DENSE_FALLBACK_LIMIT => cholesky_solve_columns(op, rhs),
        Err(e) => Err(e),
    }
}

/// Joint objective `||H U − Y||_F² + λ Tr(Y^T L Y)`.
///
/// `lap` is the full Laplacian in the same (labeled-first) row order as `h`.
pub fn objective(
    h: &DMatrix<f64>,
    u_proj: &DMatrix<f64>,
    labels: &LabelState,
    lap: &SparseMatrix,
    lambda: f64,
) -> Result<f64> {
    let y = labels.stacked();
    if y.nrows() != h.nrows() {
        return Err(Error::DimMismatch {
            context: "objective rows",
            expected: h.nrows(),
            found: y.nrows(),
        });
    }
    let residual = h * u_proj - &y;
    let fit = residual.norm_squared();
    let smooth = if lambda > 0.0 {
        lambda * quadratic_form(lap, &y)?
    } else {
        0.0
    };
    Ok(fit + smooth)
}

/// Gradient of the Frobenius fit term with respect to the embedding:
/// `∇_H ||H U − Y||_F² = 2 (H U − Y) U^T`.
///
/// The smoothness term does not depend on `H`, so it contributes nothing.
pub fn embedding_gradient(
    h: &DMatrix<f64>,
    u_proj: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> DMatrix<f64> {
    (h * u_proj - y) * 2.0 * u_proj.transpose()
}

/// Alternates the two closed-form updates until the relative objective change
/// drops below `tol` or `max_iter` alternations have run.
///
/// `h` must be in labeled-first row order consistent with `blocks.perm`;
/// `lap` is the full Laplacian in that same order. `init` warm-starts from a
/// previous solution; otherwise the projector is drawn from `rng` and `Y_u`
/// starts uniform (or random simplex rows, per options).
pub fn solve<R: Rng + ?Sized>(
    h: &DMatrix<f64>,
    y_l: &DMatrix<f64>,
    blocks: &LaplacianBlocks,
    lap: &SparseMatrix,
    opts: SolveOptions,
    init: Option<(ProjectionState, DMatrix<f64>)>,
    rng: &mut R,
) -> Result<DecisionSolution> {
    let (n, d) = h.shape();
    let c = y_l.ncols();
    if n != blocks.l + blocks.u {
        return Err(Error::DimMismatch {
            context: "embedding rows",
            expected: blocks.l + blocks.u,
            found: n,
        });
    }

    let (mut projection, y_u0) = match init {
        Some((p, y_u)) => (p, y_u),
        None => {
            let p = ProjectionState::init(d, c, rng)?;
            let y_u = if opts.random_label_init {
                random_simplex_labels(blocks.u, c, rng)
            } else {
                uniform_labels(blocks.u, c)
            };
            (p, y_u)
        }
    };
    let mut labels = LabelState {
        y_l: y_l.clone_owned(),
        y_u: y_u0,
    };

    let mut prev = objective(h, &projection.u, &labels, lap, opts.lambda)?;
    let h_u = h.view((blocks.l, 0), (blocks.u, d)).clone_owned();

    let mut iterations = 0;
    let mut converged = false;
    let mut current = prev;
    while iterations < opts.max_iter {
        projection = update_projection(h, &labels.stacked(), &projection.v)?;
        labels.y_u = update_soft_labels(&h_u, &projection.u, blocks, y_l, opts.lambda)?;
        current = objective(h, &projection.u, &labels, lap, opts.lambda)?;
        iterations += 1;
        if (prev - current).abs() / prev.abs().max(1.0) < opts.tol {
            converged = true;
            break;
        }
        prev = current;
    }

    if !current.is_finite() {
        return Err(Error::NonFinite("decision objective"));
    }
    Ok(DecisionSolution {
        projection,
        labels,
        objective: current,
        inner_iterations: iterations,
        converged,
    })
}

/// Harmonic label propagation: solves `L_uu Y_u = −L_ul Y_l`, the minimizer
/// of `Tr(Y^T L Y)` with the labeled rows clamped.
///
/// When the unpreconditioned system stalls (an unlabeled component with no
/// labeled neighbor makes `L_uu` singular), a `1e-8·I` shift is added and the
/// solve retried; failure after regularization is reported as singular.
pub fn harmonic_propagation(blocks: &LaplacianBlocks, y_l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if y_l.nrows() != blocks.l {
        return Err(Error::DimMismatch {
            context: "labeled rows",
            expected: blocks.l,
            found: y_l.nrows(),
        });
    }
    let rhs = -blocks.l_ul.mul_dense(y_l)?;
    let base = ShiftedSparse {
        matrix: &blocks.l_uu,
        scale: 1.0,
        shift: 0.0,
    };
    match solve_spd(base, &rhs, blocks.u) {
        Ok(x) => Ok(x),
        Err(Error::CgStalled { .. }) | Err(Error::SingularSystem(_)) => {
            let shifted = ShiftedSparse {
                matrix: &blocks.l_uu,
                scale: 1.0,
                shift: HARMONIC_REGULARIZATION,
            };
            solve_spd(shifted, &rhs, blocks.u).map_err(|e| match e {
                Error::CgStalled { .. } => Error::SingularSystem("harmonic system singular after regularization"),
                other => other,
            })
        }
        Err(e) => Err(e),
    }
}

/// Row-argmax prediction; ties break to the lowest class index.
pub fn argmax_rows(scores: &DMatrix<f64>) -> Vec<usize> {
    (0..scores.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_v = scores[(i, 0)];
            for j in 1..scores.ncols() {
                if scores[(i, j)] > best_v {
                    best_v = scores[(i, j)];
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{partition_laplacian, permuted, Graph};
    use alloc::vec;
    use crate::stiefel::standard_normal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
        let mut edges = std::vec::Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j, None));
                }
            }
        }
        Graph::from_edges(n, edges).unwrap()
    }

    struct Instance {
        h: DMatrix<f64>,
        y_l: DMatrix<f64>,
        blocks: LaplacianBlocks,
        lap_p: SparseMatrix,
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize, c: usize, l: usize) -> Instance {
        let g = random_graph(rng, n, 0.25);
        let labeled: std::vec::Vec<usize> = (0..l).collect();
        let blocks = partition_laplacian(&g.laplacian(), &labeled).unwrap();
        let lap_p = permuted(&g.laplacian(), &blocks.perm).unwrap();
        let h = DMatrix::from_fn(n, d, |_, _| standard_normal(rng));
        let classes: std::vec::Vec<usize> = (0..l).map(|i| i % c).collect();
        let y_l = one_hot(&classes, c).unwrap();
        Instance { h, y_l, blocks, lap_p }
    }

    #[test]
    fn soft_labels_with_zero_lambda_copy_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instance(&mut rng, 12, 5, 3, 4);
        let u_proj = random_orthonormal(5, 3, &mut rng).unwrap();
        let h_u = inst.h.view((4, 0), (8, 5)).clone_owned();
        let y_u = update_soft_labels(&h_u, &u_proj, &inst.blocks, &inst.y_l, 0.0).unwrap();
        assert_eq!(y_u, &h_u * &u_proj);
    }

    #[test]
    fn soft_labels_on_edgeless_graph_copy_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Graph::from_edges(6, []).unwrap();
        let blocks = partition_laplacian(&g.laplacian(), &[0, 1]).unwrap();
        let y_l = one_hot(&[0, 1], 2).unwrap();
        let h_u = DMatrix::from_fn(4, 3, |_, _| standard_normal(&mut rng));
        let u_proj = random_orthonormal(3, 2, &mut rng).unwrap();
        let y_u = update_soft_labels(&h_u, &u_proj, &blocks, &y_l, 3.0).unwrap();
        assert!((&y_u - &h_u * &u_proj).abs().max() <= 1e-12);
    }

    #[test]
    fn soft_labels_match_dense_solve_on_path() {
        // Path 0-1-2, labeled {0}, H_u U = 0, lambda = 1.
        let g = Graph::from_edges(3, [(0, 1, None), (1, 2, None)]).unwrap();
        let blocks = partition_laplacian(&g.laplacian(), &[0]).unwrap();
        let y_l = one_hot(&[0], 2).unwrap();
        let h_u = DMatrix::zeros(2, 4);
        let u_proj = random_orthonormal(4, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let y_u = update_soft_labels(&h_u, &u_proj, &blocks, &y_l, 1.0).unwrap();

        let dense = blocks.l_uu.to_dense() + DMatrix::<f64>::identity(2, 2);
        let rhs = -blocks.l_ul.to_dense() * &y_l;
        let expected = dense.lu().solve(&rhs).unwrap();
        assert!((y_u - expected).abs().max() <= 1e-10);
    }

    #[test]
    fn soft_labels_satisfy_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.random_range(8..30);
            let l = rng.random_range(2..n / 2);
            let inst = random_instance(&mut rng, n, 6, 3, l);
            let lambda = rng.random_range(0.0..4.0);
            let u_proj = random_orthonormal(6, 3, &mut rng).unwrap();
            let h_u = inst.h.view((l, 0), (n - l, 6)).clone_owned();
            let y_u = update_soft_labels(&h_u, &u_proj, &inst.blocks, &inst.y_l, lambda).unwrap();

            let lhs = (inst.blocks.l_uu.to_dense() * lambda + DMatrix::<f64>::identity(n - l, n - l)) * &y_u;
            let rhs = &h_u * &u_proj - inst.blocks.l_ul.to_dense() * &inst.y_l * lambda;
            let rel = (lhs - &rhs).norm() / rhs.norm().max(1e-30);
            assert!(rel <= 1e-7, "normal equation residual {rel}");
        }
    }

    #[test]
    fn projection_recovers_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_orthonormal(20, 6, &mut rng).unwrap();
        let u_true = DMatrix::<f64>::identity(6, 3);
        let y = &h * &u_true;
        let v = orthonormal_complement(&u_true).unwrap();
        let state = update_projection(&h, &y, &v).unwrap();
        assert!((&state.u - &u_true).abs().max() <= 1e-8);
        assert!(state.orthogonality_error() <= 1e-8);
    }

    #[test]
    fn projection_square_case_solves_procrustes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = DMatrix::from_fn(10, 4, |_, _| standard_normal(&mut rng));
        let y = DMatrix::from_fn(10, 4, |_, _| standard_normal(&mut rng));
        let v = DMatrix::<f64>::zeros(4, 0);
        let state = update_projection(&h, &y, &v).unwrap();
        // Optimal Procrustes trace equals the nuclear norm of H^T Y.
        let p = h.transpose() * &y;
        let nuclear: f64 = p.clone().svd(false, false).singular_values.iter().sum();
        let achieved = (state.u.transpose() * &p).trace();
        assert!((achieved - nuclear).abs() <= 1e-9);
        assert_eq!(state.v.ncols(), 0);
    }

    #[test]
    fn projection_update_never_increases_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let h = DMatrix::from_fn(20, 6, |_, _| standard_normal(&mut rng));
            let y = DMatrix::from_fn(20, 3, |_, _| standard_normal(&mut rng));
            let state0 = ProjectionState::init(6, 3, &mut rng).unwrap();
            let before = (&h * &state0.u - &y).norm_squared();
            let state1 = update_projection(&h, &y, &state0.v).unwrap();
            let after = (&h * &state1.u - &y).norm_squared();
            assert!(after <= before + 1e-9, "fit rose from {before} to {after}");
            assert!(state1.orthogonality_error() <= 1e-8);
        }
    }

    #[test]
    fn objective_zero_at_perfect_constant_fit() {
        // One-hot labels equal for every node and H U = Y exactly.
        let g = Graph::from_edges(4, [(0, 1, None), (2, 3, None)]).unwrap();
        let blocks = partition_laplacian(&g.laplacian(), &[0]).unwrap();
        let lap_p = permuted(&g.laplacian(), &blocks.perm).unwrap();
        let y_l = one_hot(&[0], 2).unwrap();
        let y_u = one_hot(&[0, 0, 0], 2).unwrap();
        let labels = LabelState { y_l, y_u };
        let y = labels.stacked();
        let u_proj = DMatrix::<f64>::identity(2, 2);
        let obj = objective(&y, &u_proj, &labels, &lap_p, 2.5).unwrap();
        assert!(obj.abs() <= 1e-12);
    }

    #[test]
    fn objective_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = rng.random_range(6..25);
            let inst = random_instance(&mut rng, n, 5, 3, 3);
            let lambda = rng.random_range(0.0..3.0);
            let u_proj = random_orthonormal(5, 3, &mut rng).unwrap();
            let y_u = DMatrix::from_fn(n - 3, 3, |_, _| standard_normal(&mut rng));
            let labels = LabelState { y_l: inst.y_l.clone(), y_u };
            let obj = objective(&inst.h, &u_proj, &labels, &inst.lap_p, lambda).unwrap();

            let y = labels.stacked();
            let fit = (&inst.h * &u_proj - &y).norm_squared();
            let a = inst.lap_p.to_dense(); // Laplacian of the permuted graph
            // Rebuild adjacency from Laplacian off-diagonals.
            let mut pairwise = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j && a[(i, j)] != 0.0 {
                        let d = y.row(i) - y.row(j);
                        pairwise += -a[(i, j)] * d.norm_squared();
                    }
                }
            }
            let expected = fit + lambda * pairwise / 2.0;
            assert!(
                (obj - expected).abs() / expected.abs().max(1.0) <= 1e-9,
                "objective {obj} vs pairwise oracle {expected}"
            );
        }
    }

    #[test]
    fn gradient_zero_at_fit_and_identity_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u_proj = random_orthonormal(4, 2, &mut rng).unwrap();
        let h = DMatrix::from_fn(7, 4, |_, _| standard_normal(&mut rng));
        let y = &h * &u_proj;
        assert!(embedding_gradient(&h, &u_proj, &y).abs().max() <= 1e-12);

        let eye = DMatrix::<f64>::identity(3, 3);
        let h2 = DMatrix::from_fn(5, 3, |_, _| standard_normal(&mut rng));
        let y2 = DMatrix::from_fn(5, 3, |_, _| standard_normal(&mut rng));
        let g = embedding_gradient(&h2, &eye, &y2);
        assert!((g - (&h2 - &y2) * 2.0).abs().max() <= 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let inst = random_instance(&mut rng, 10, 4, 2, 3);
        let u_proj = random_orthonormal(4, 2, &mut rng).unwrap();
        let y_u = DMatrix::from_fn(7, 2, |_, _| standard_normal(&mut rng));
        let labels = LabelState { y_l: inst.y_l.clone(), y_u };
        let lambda = 1.3;

        let grad = embedding_gradient(&inst.h, &u_proj, &labels.stacked());
        let eps = 1e-5;
        let mut h = inst.h.clone();
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                let orig = h[(i, j)];
                h[(i, j)] = orig + eps;
                let plus = objective(&h, &u_proj, &labels, &inst.lap_p, lambda).unwrap();
                h[(i, j)] = orig - eps;
                let minus = objective(&h, &u_proj, &labels, &inst.lap_p, lambda).unwrap();
                h[(i, j)] = orig;
                let fd = (plus - minus) / (2.0 * eps);
                let denom = fd.abs().max(grad[(i, j)].abs()).max(1e-6);
                assert!(
                    (fd - grad[(i, j)]).abs() / denom <= 1e-6,
                    "fd {fd} vs analytic {}",
                    grad[(i, j)]
                );
            }
        }
    }

    #[test]
    fn solve_runs_exactly_one_iteration_with_huge_tol() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inst = random_instance(&mut rng, 15, 5, 3, 4);
        let opts = SolveOptions { tol: 1.0, ..SolveOptions::default() };
        let sol = solve(&inst.h, &inst.y_l, &inst.blocks, &inst.lap_p, opts, None, &mut rng).unwrap();
        assert_eq!(sol.inner_iterations, 1);
        assert!(sol.converged);
    }

    #[test]
    fn solve_square_zero_lambda_converges_fast() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let inst = random_instance(&mut rng, 12, 3, 3, 4);
        let opts = SolveOptions { lambda: 0.0, max_iter: 500, ..SolveOptions::default() };
        let sol = solve(&inst.h, &inst.y_l, &inst.blocks, &inst.lap_p, opts, None, &mut rng).unwrap();
        assert!(sol.converged);

        // With d = c the alternation degenerates to Procrustes-plus-copy;
        // iterate that reference scheme to a tight fixed point.
        let h_u = inst.h.view((4, 0), (8, 3)).clone_owned();
        let mut labels = LabelState { y_l: inst.y_l.clone(), y_u: uniform_labels(8, 3) };
        let mut u_ref = DMatrix::<f64>::identity(3, 3);
        for _ in 0..2000 {
            u_ref = trace_max_orthogonal(&(inst.h.transpose() * labels.stacked())).unwrap();
            labels.y_u = &h_u * &u_ref;
        }
        let ref_obj = objective(&inst.h, &u_ref, &labels, &inst.lap_p, 0.0).unwrap();
        assert!((sol.objective - ref_obj).abs() / ref_obj.max(1.0) <= 1e-3,
            "solve objective {} vs reference fixed point {ref_obj}", sol.objective);

        // Warm-started at the fixed point the solve confirms it immediately.
        let warm = solve(
            &inst.h,
            &inst.y_l,
            &inst.blocks,
            &inst.lap_p,
            SolveOptions { lambda: 0.0, ..SolveOptions::default() },
            Some((ProjectionState { u: u_ref.clone(), v: DMatrix::zeros(3, 0) }, labels.y_u.clone())),
            &mut rng,
        )
        .unwrap();
        assert!(warm.inner_iterations <= 2, "took {}", warm.inner_iterations);
        assert!(warm.converged);
    }

    #[test]
    fn solve_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inst = random_instance(&mut rng, 30, 6, 3, 8);
        let opts = SolveOptions { lambda: 0.8, tol: 1e-10, max_iter: 60, ..SolveOptions::default() };
        let sol = solve(&inst.h, &inst.y_l, &inst.blocks, &inst.lap_p, opts, None, &mut rng).unwrap();
        for _ in 0..500 {
            let u_rand = random_orthonormal(6, 3, &mut rng).unwrap();
            let y_rand = DMatrix::from_fn(22, 3, |_, _| standard_normal(&mut rng));
            let labels = LabelState { y_l: inst.y_l.clone(), y_u: y_rand };
            let obj = objective(&inst.h, &u_rand, &labels, &inst.lap_p, 0.8).unwrap();
            assert!(sol.objective <= obj + 1e-9);
        }
    }

    #[test]
    fn solve_objective_sequence_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..25 {
            let n = rng.random_range(8..30);
            let l = rng.random_range(2..n / 2);
            let inst = random_instance(&mut rng, n, 6, 3, l);
            let lambda = rng.random_range(0.0..2.0);

            // Replay the alternation manually to observe every step.
            let mut proj = ProjectionState::init(6, 3, &mut rng).unwrap();
            let mut labels = LabelState {
                y_l: inst.y_l.clone(),
                y_u: uniform_labels(n - l, 3),
            };
            let h_u = inst.h.view((l, 0), (n - l, 6)).clone_owned();
            let mut prev = objective(&inst.h, &proj.u, &labels, &inst.lap_p, lambda).unwrap();
            for _ in 0..12 {
                proj = update_projection(&inst.h, &labels.stacked(), &proj.v).unwrap();
                labels.y_u = update_soft_labels(&h_u, &proj.u, &inst.blocks, &inst.y_l, lambda).unwrap();
                let cur = objective(&inst.h, &proj.u, &labels, &inst.lap_p, lambda).unwrap();
                assert!(cur <= prev + 1e-7, "objective rose from {prev} to {cur}");
                prev = cur;
            }
        }
    }

    #[test]
    fn scaling_embedding_preserves_argmax_at_zero_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let inst = random_instance(&mut rng, 14, 5, 3, 4);
        let u_proj = random_orthonormal(5, 3, &mut rng).unwrap();
        let h_u = inst.h.view((4, 0), (10, 5)).clone_owned();
        let y1 = update_soft_labels(&h_u, &u_proj, &inst.blocks, &inst.y_l, 0.0).unwrap();
        let y2 = update_soft_labels(&(&h_u * 3.7), &u_proj, &inst.blocks, &inst.y_l, 0.0).unwrap();
        assert_eq!(argmax_rows(&y1), argmax_rows(&y2));
    }

    #[test]
    fn harmonic_single_seed_diffuses_its_class() {
        let g = Graph::from_edges(3, [(0, 1, None), (1, 2, None)]).unwrap();
        let blocks = partition_laplacian(&g.laplacian(), &[0]).unwrap();
        let y_l = one_hot(&[0], 2).unwrap();
        let y_u = harmonic_propagation(&blocks, &y_l).unwrap();
        assert!((&y_u - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])).abs().max() <= 1e-8);
        assert_eq!(argmax_rows(&y_u), vec![0, 0]);
    }

    #[test]
    fn harmonic_midpoint_between_two_classes_is_tied() {
        let g = Graph::from_edges(3, [(0, 1, None), (1, 2, None)]).unwrap();
        let blocks = partition_laplacian(&g.laplacian(), &[0, 2]).unwrap();
        let y_l = one_hot(&[0, 1], 2).unwrap();
        let y_u = harmonic_propagation(&blocks, &y_l).unwrap();
        assert!((y_u[(0, 0)] - 0.5).abs() <= 1e-10);
        assert!((y_u[(0, 1)] - 0.5).abs() <= 1e-10);
    }

    #[test]
    fn harmonic_respects_maximum_principle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..15 {
            let n = rng.random_range(6..30);
            // A ring keeps every unlabeled node connected to labels.
            let mut edges: std::vec::Vec<(usize, usize, Option<f64>)> =
                (0..n).map(|i| (i, (i + 1) % n, None)).collect();
            for _ in 0..n / 2 {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a != b {
                    edges.push((a, b, None));
                }
            }
            let g = Graph::from_edges(n, edges).unwrap();
            let l = rng.random_range(1..n / 2);
            let labeled: std::vec::Vec<usize> = (0..l).collect();
            let blocks = partition_laplacian(&g.laplacian(), &labeled).unwrap();
            let classes: std::vec::Vec<usize> = (0..l).map(|i| i % 3).collect();
            let y_l = one_hot(&classes, 3).unwrap();
            let y_u = harmonic_propagation(&blocks, &y_l).unwrap();

            let dense = blocks.l_uu.to_dense();
            let rhs = -blocks.l_ul.to_dense() * &y_l;
            let expected = dense.lu().solve(&rhs).unwrap();
            assert!((&y_u - expected).abs().max() <= 1e-7);
            for v in y_u.iter() {
                assert!(*v >= -1e-8 && *v <= 1.0 + 1e-8);
            }
            for i in 0..y_u.nrows() {
                assert!((y_u.row(i).sum() - 1.0).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn harmonic_regularizes_disconnected_unlabeled_component() {
        // Node 3 is isolated: L_uu singular without regularization.
        let g = Graph::from_edges(4, [(0, 1, None), (1, 2, None)]).unwrap();
        let blocks = partition_laplacian(&g.laplacian(), &[0]).unwrap();
        let y_l = one_hot(&[0], 2).unwrap();
        let y_u = harmonic_propagation(&blocks, &y_l).unwrap();
        assert!(y_u.iter().all(|v| v.is_finite()));
    }
}
