use alloc::string::String;
use thiserror::Error;

/// Errors shared by the numeric modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("edge weight must be non-negative, got {0}")]
    NegativeWeight(f64),

    #[error("invalid CSR structure: {0}")]
    InvalidCsr(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("labeled set must be a non-empty strict subset of the nodes")]
    BadLabeledSet,

    #[error("degenerate shape: {0}")]
    DegenerateShape(&'static str),

    #[error("conjugate gradient stalled: relative residual {residual:e} after {iterations} iterations")]
    CgStalled { residual: f64, iterations: usize },

    #[error("singular system: {0}")]
    SingularSystem(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}
