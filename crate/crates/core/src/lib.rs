//! Core numerics for semi-supervised node classification on graphs.
//!
//! The crate provides the pieces of a graph-convolutional classifier whose
//! decision layer is solved in closed form instead of by gradient descent:
//!
//! - [`sparse`]: a CSR matrix type with the sparse-dense products the
//!   forward/backward passes need,
//! - [`graph`]: undirected weighted graphs, the self-loop normalized
//!   convolution kernel, the combinatorial Laplacian and its labeled-first
//!   block partition,
//! - [`solver`]: a Jacobi-preconditioned conjugate gradient for the SPD
//!   systems the label updates produce,
//! - [`stiefel`]: trace maximization over matrices with orthonormal columns
//!   and orthonormal-complement construction,
//! - [`decision`]: the alternating closed-form decision layer (orthonormal
//!   projection update + Laplacian-regularized soft-label solve),
//! - [`net`]: a minimal graph convolutional network with exact manual
//!   backpropagation and Adam.
//!
//! The crate is `no_std` (with `alloc`); file formats, training loops and
//! the CLI live in the companion `manigraph` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod decision;
mod error;
pub mod graph;
pub mod net;
pub mod solver;
pub mod sparse;
pub mod stiefel;

pub use error::Error;

/// Convenience alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;

// Re-exported so downstream crates use the same matrix types.
pub use nalgebra;
