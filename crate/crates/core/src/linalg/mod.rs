//! Dense real matrix kernels: storage, symmetric eigensolver, QR, thin SVD
//! and the POD basis construction built on them.

mod eig;
mod lu;
mod matrix;
mod pod_basis;
mod qr;
mod svd;

pub use eig::eig_sym;
pub use lu::{invert, Lu};
pub use matrix::{axpy, dot, fix_sign, norm2, Matrix};
pub use pod_basis::{pod_basis, pod_modes, PodModes};
pub use qr::{householder_qr, orthonormalize_columns};
pub use svd::{numerical_rank, projection_error_sq, svd_thin, SvdResult, RANK_TOL};
