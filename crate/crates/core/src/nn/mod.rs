//! Reverse-mode kernels for small convolutional networks: convolution and
//! its adjoint, dense layers, ELU, Adam and Xavier initialization.

mod adam;
mod compiled;
mod conv;
mod init;
mod layers;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use compiled::CompiledNetwork;
pub use conv::{conv2d, conv2d_transpose, conv2d_transpose_to, ConvSpec};
pub use init::{fans, initialize, xavier_bound, xavier_fill, xavier_init};
pub use layers::{dense, elu, elu_derivative, mse_loss, Dense, Layer, Network};
pub use tensor::Tensor4;
