//! Sparse-array design and direction-finding toolkit.
//!
//! The pipeline: simulate array snapshots, rank candidate subarrays by
//! their Cramer-Rao bounds, collapse the candidates to the few classes
//! that are ever optimal, train a small convolutional classifier on
//! covariance features (with layer-freezing transfer across
//! geometries), generate 2-D sparse candidates by simulated annealing,
//! and evaluate selected arrays with MUSIC in a cognitive scan loop.
//!
//! Numerical code is generic over the scalar type ([`Scalar`]); the
//! aliases below fix the defaults used by the CLI pipeline (f64 for
//! bounds and estimation, f32 for network training and dataset files).

pub mod bounds;
mod codec;
pub mod dataset;
pub mod doa;
pub mod error;
pub mod geometry;
pub mod learner;
pub mod linalg;
pub mod plot;
pub mod rng;
pub mod runner;
pub mod sa2d;
pub mod scalar;
pub mod selection;
pub mod simulation;

pub use error::{Error, ErrorCategory, Result};
pub use scalar::Scalar;

/// Default pipeline scalar for geometry, bounds and estimation.
pub type Real = f64;
/// Complex number over the default scalar.
pub type C64 = num_complex::Complex<f64>;
/// Complex number over any scalar.
pub type Cx<T> = num_complex::Complex<T>;

pub type Geometry = geometry::ArrayGeometry<Real>;
pub type Dir = geometry::Direction<Real>;
