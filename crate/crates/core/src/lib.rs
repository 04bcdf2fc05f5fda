//! Fine-grained representation structure under coarse supervision.
//!
//! Synthesizes Gaussian mixtures with coarse and fine labels, trains one-hidden-layer
//! networks by full-batch gradient descent, and measures what the hidden layer keeps:
//! within-class variability collapse (NC1), simplex-ETF alignment of class means (NC2),
//! the class-distance matrix and the mean squared distance ratio (MSDR). The
//! cluster-and-linear-probe procedure recovers sub-class labels from representations
//! trained only on super-class labels.

pub mod clp;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod reduce;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Matrix, RngStream};
