//! Non-intrusive reduced-order modeling of parameterized 2-D time-domain
//! Maxwell scattering.
//!
//! The offline chain runs a nodal discontinuous Galerkin solver over a
//! parameter sweep, compresses the snapshots with a two-step POD, shrinks
//! the POD coefficients further with a convolutional autoencoder and fits
//! cubic-spline models of the resulting codes over time and parameters. The
//! online stage evaluates the splines, decodes and lifts back to full
//! fields without touching the solver.

pub mod cae;
pub mod csi;
pub mod dgtd;
pub mod error;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod pipeline;
pub mod pod;
pub mod snapshot;

pub use error::{Error, Result};
