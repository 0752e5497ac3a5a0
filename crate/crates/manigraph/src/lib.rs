//! Dataset ingestion, training loop, artifact export and checkpoints for the
//! `manigraph-core` classifier.
//!
//! The crate owns everything that touches the filesystem or the clock:
//!
//! - [`dataset`]: citation-network text parsers, feature normalization and
//!   split construction,
//! - [`bundle`]: the canonical checksummed on-disk dataset bundle,
//! - [`trainer`]: the outer training loop (forward / periodic closed-form
//!   decision refresh / backprop), evaluation, repeated-seed statistics,
//!   ablations and artifact export,
//! - [`checkpoint`]: bit-exact model serialization,
//! - [`presets`]: shipped per-dataset configurations and sweep grids,
//! - [`synth`]: seeded synthetic benchmark graphs for tests and scaling
//!   measurements.

pub mod bundle;
pub mod checkpoint;
pub mod dataset;
mod error;
pub mod presets;
pub mod synth;
pub mod trainer;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
