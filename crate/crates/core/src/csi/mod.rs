//! Cubic-spline interpolation of reduced codes over time and parameters.

mod modes;
mod spline;
mod tensor;

pub use modes::{
    build_reduced_matrices, decompose_modes, truncation_rank, CodePrediction, ModeModel, ModeSet, ReducedMatrixSet,
    CSI_SECTION,
};
pub use spline::{eval_spline, fit_curve, fit_spline_1d, Curve, Spline1D, SplineSystem};
pub use tensor::{fit_tensor_product, CardinalBasis, TensorGrid, TensorInterpolant};
