//! Undirected weighted graphs, the normalized convolution kernel, and the
//! combinatorial Laplacian with its labeled-first block partition.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::sparse::SparseMatrix;
use crate::{Error, Result};

/// Undirected graph held as a symmetric adjacency matrix with zero diagonal
/// and non-negative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    adjacency: SparseMatrix,
}

impl Graph {
    /// Builds a graph from an edge list.
    ///
    /// Edges are stored in both directions; self-edges are dropped; an edge
    /// without a weight gets weight 1. When the same node pair appears more
    /// than once (in either direction) the maximum weight wins — citation
    /// files occasionally list both directions of the same link.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, Option<f64>)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (src, dst, weight) in edges {
            for &index in [src, dst].iter() {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if src == dst {
                continue;
            }
            let w = weight.unwrap_or(1.0);
            if !w.is_finite() {
                return Err(Error::NonFinite("edge weight"));
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight(w));
            }
            if w == 0.0 {
                continue;
            }
            let key = (src.min(dst), src.max(dst));
            let entry = merged.entry(key).or_insert(w);
            if w > *entry {
                *entry = w;
            }
        }
        let triplets = merged
            .iter()
            .flat_map(|(&(a, b), &w)| [(a, b, w), (b, a, w)]);
        let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;
        Ok(Self { n, adjacency })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    /// Number of stored undirected edges.
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n];
        for (r, _, v) in self.adjacency.iter() {
            deg[r] += v;
        }
        deg
    }

    /// Symmetric normalized kernel with self-loops,
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` where `D̃ = diag((A + I) 1)`.
    ///
    /// Self-loops keep every `D̃_ii` positive, so isolated nodes are legal
    /// and get a diagonal entry of 1.
    pub fn normalized_kernel(&self) -> SparseMatrix {
        let mut deg_tilde = self.degrees();
        for d in deg_tilde.iter_mut() {
            *d += 1.0;
        }
        let inv_sqrt: Vec<f64> = deg_tilde.iter().map(|&d| 1.0 / libm::sqrt(d)).collect();
        let triplets = self
            .adjacency
            .iter()
            .map(|(r, c, v)| (r, c, v * inv_sqrt[r] * inv_sqrt[c]))
            .chain((0..self.n).map(|i| (i, i, inv_sqrt[i] * inv_sqrt[i])));
        SparseMatrix::from_triplets(self.n, self.n, triplets).expect("valid adjacency produces a valid kernel")
    }

    /// Combinatorial Laplacian `L = D − A` with `D = diag(A 1)`.
    ///
    /// Rows sum to zero; isolated nodes produce an all-zero row.
    pub fn laplacian(&self) -> SparseMatrix {
        let deg = self.degrees();
        let triplets = self
            .adjacency
            .iter()
            .map(|(r, c, v)| (r, c, -v))
            .chain((0..self.n).filter(|&i| deg[i] != 0.0).map(|i| (i, i, deg[i])));
        SparseMatrix::from_triplets(self.n, self.n, triplets).expect("valid adjacency produces a valid laplacian")
    }
}

/// Parses the canonical edge-list text format: one `src<TAB>dst[<TAB>weight]`
/// edge per line, 0-based indices, `#` starts a comment, blank lines ignored.
/// Whitespace-separated fields are accepted as well as tabs.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize, Option<f64>)>> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parse_index = |field: Option<&str>, what: &str| -> Result<usize> {
            field
                .ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    message: format!("missing {what}"),
                })?
                .parse::<usize>()
                .map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: format!("bad {what}: {e}"),
                })
        };
        let src = parse_index(fields.next(), "source index")?;
        let dst = parse_index(fields.next(), "destination index")?;
        let weight = match fields.next() {
            Some(w) => Some(w.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno + 1,
                message: format!("bad weight: {e}"),
            })?),
            None => None,
        };
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: "too many fields".to_string(),
            });
        }
        edges.push((src, dst, weight));
    }
    Ok(edges)
}

/// Labeled-first block partition of a Laplacian.
///
/// `perm` maps an original node index to its labeled-first position: labeled
/// nodes occupy positions `0..l` (in ascending original order), unlabeled
/// nodes `l..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianBlocks {
    pub l: usize,
    pub u: usize,
    pub l_uu: SparseMatrix,
    pub l_ul: SparseMatrix,
    pub perm: Vec<usize>,
}

impl LaplacianBlocks {
    /// Inverse of `perm`: labeled-first position back to original index.
    pub fn inverse_perm(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (orig, &new) in self.perm.iter().enumerate() {
            inv[new] = orig;
        }
        inv
    }
}

/// Splits `L` into its unlabeled-unlabeled and unlabeled-labeled blocks under
/// the labeled-first permutation.
///
/// `labeled` may be unsorted; duplicates are rejected via the strict-subset
/// check. Fails when the labeled set is empty (no supervision) or covers all
/// nodes (nothing to predict).
pub fn partition_laplacian(lap: &SparseMatrix, labeled: &[usize]) -> Result<LaplacianBlocks> {
    let n = lap.n_rows();
    if lap.n_cols() != n {
        return Err(Error::DimMismatch {
            context: "laplacian must be square",
            expected: n,
            found: lap.n_cols(),
        });
    }
    let mut sorted = labeled.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != labeled.len() {
        return Err(Error::BadLabeledSet);
    }
    let l = sorted.len();
    if l == 0 || l >= n {
        return Err(Error::BadLabeledSet);
    }
    if *sorted.last().expect("non-empty") >= n {
        return Err(Error::NodeOutOfRange {
            index: *sorted.last().expect("non-empty"),
            n,
        });
    }
    let u = n - l;

    let mut perm = vec![usize::MAX; n];
    for (pos, &node) in sorted.iter().enumerate() {
        perm[node] = pos;
    }
    let mut next = l;
    for (node, slot) in perm.iter_mut().enumerate() {
        if *slot == usize::MAX {
            *slot = next;
            next += 1;
            let _ = node;
        }
    }

    let mut uu = Vec::new();
    let mut ul = Vec::new();
    for (r, c, v) in lap.iter() {
        let (pr, pc) = (perm[r], perm[c]);
        if pr >= l {
            if pc >= l {
                uu.push((pr - l, pc - l, v));
            } else {
                ul.push((pr - l, pc, v));
            }
        }
    }
    let l_uu = SparseMatrix::from_triplets(u, u, uu)?;
    let l_ul = SparseMatrix::from_triplets(u, l, ul)?;

    // Gershgorin check: every row bound of L_uu must be non-negative, which
    // holds for any principal submatrix of a Laplacian.
    for r in 0..u {
        let (cols, vals) = l_uu.row(r);
        let mut diag = 0.0;
        let mut off = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c == r {
                diag = v;
            } else {
                off += libm::fabs(v);
            }
        }
        if diag - off < -1e-9 {
            return Err(Error::SingularSystem("L_uu is not diagonally dominant"));
        }
    }

    Ok(LaplacianBlocks { l, u, l_uu, l_ul, perm })
}

/// Applies a node permutation to a square sparse matrix:
/// `out[perm[i], perm[j]] = m[i, j]`.
pub fn permuted(m: &SparseMatrix, perm: &[usize]) -> Result<SparseMatrix> {
    if m.n_rows() != perm.len() || m.n_cols() != perm.len() {
        return Err(Error::DimMismatch {
            context: "permutation length",
            expected: m.n_rows(),
            found: perm.len(),
        });
    }
    SparseMatrix::from_triplets(m.n_rows(), m.n_cols(), m.iter().map(|(r, c, v)| (perm[r], perm[c], v)))
}

/// Trace quadratic form `Tr(Y^T L Y)`.
///
/// For a Laplacian this equals half the pairwise sum
/// `Σ_{ij} a_ij ||y_i − y_j||²`.
pub fn quadratic_form(lap: &SparseMatrix, y: &DMatrix<f64>) -> Result<f64> {
    if lap.n_cols() != y.nrows() {
        return Err(Error::DimMismatch {
            context: "quadratic form",
            expected: lap.n_cols(),
            found: y.nrows(),
        });
    }
    let ly = lap.mul_dense(y)?;
    let mut acc = 0.0;
    for (a, b) in y.iter().zip(ly.iter()) {
        acc += a * b;
    }
    Ok(acc)
}
