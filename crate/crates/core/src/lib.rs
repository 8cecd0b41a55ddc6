//! Spectral and scattering analysis of the Schrödinger operator with a
//! δ-interaction of strength `alpha` supported on a closed space curve.
//!
//! The boundary operator `B_lambda` is discretized by a Nyström scheme on an
//! equispaced arc-length grid: the log-singular part is taken from the
//! exactly diagonalizable circle of equal length, and only bounded kernels
//! are quadrated. Bound states follow from the Birman–Schwinger principle:
//! `lambda < 0` is an eigenvalue iff `alpha` is an eigenvalue of `B_lambda`.

pub mod assembly;
pub mod cli;
pub mod curve;
pub mod error;
pub mod io;
pub mod kernels;
pub mod probe;
pub mod quadrature;
pub mod scattering;
pub mod spectral;

pub use error::{Error, Result};
