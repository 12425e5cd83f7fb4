//! Finite-dimensional BV quantization of massless free fermions: equivariant
//! index, heat-kernel regularized BV Laplacian, renormalization-group flow,
//! the one-loop anomaly and its homotopy-transfer description.

pub mod bv;
pub mod ce;
pub mod corpus;
pub mod error;
pub mod functional;
pub mod graded;
pub mod hpl;
pub mod linalg;
pub mod models;
pub mod par;
pub mod report;
pub mod scalar;
pub mod spectral;
pub mod suites;

pub use error::{LabError, Result};
