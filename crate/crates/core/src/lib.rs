//! Finite-volume laboratory for interacting Anderson models on `Z^{nd}`.
//!
//! Everything here is desk-scale and exactly reproducible: lattice geometry
//! is integer arithmetic on a doubled grid, disorder fields are pure
//! functions of a seed, and every ensemble experiment folds its trials in
//! index order so artifacts are byte-identical regardless of parallelism.

pub mod error;
pub mod estimates;
pub mod geometry;
pub mod harness;
pub mod localization;
pub mod model;
pub mod msa;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod transport;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
