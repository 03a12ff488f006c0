//! Convolutional autoencoder over POD coefficients: data preparation,
//! training and the encode/decode maps.

mod arch;
mod dataset;
mod model;

pub use arch::{Architecture, ConvStage, DeconvStage};
pub use dataset::{coords_to_tensor, prepare_dataset, split_components, CaeDataset, Normalization};
pub use model::{linear_autoencoder_loss, train, CaeModel, EpochLog, TrainConfig, TrainingLog, CAE_SECTION};
