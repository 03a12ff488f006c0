use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor4;
use crate::pod::{exact_sqrt, IntrinsicCoordinates};

/// Global min-max affine map onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("no values to normalize".into()));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return Err(Error::DegenerateNormalization(min));
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, y: f64) -> f64 {
        self.min + y * (self.max - self.min)
    }

    pub fn apply_all(&self, xs: &mut [f64]) {
        xs.iter_mut().for_each(|x| *x = self.apply(*x));
    }

    pub fn invert_all(&self, ys: &mut [f64]) {
        ys.iter_mut().for_each(|y| *y = self.invert(*y));
    }
}

/// Stacks coefficient columns into `(count, components, side, side)`, each
/// column of `C_c` reshaped row by row.
pub fn coords_to_tensor(coords: &IntrinsicCoordinates, columns: &[usize]) -> Result<Tensor4> {
    let d = coords.coords.len();
    let nb = coords.coords.first().map_or(0, |m| m.rows());
    let side = exact_sqrt(nb).ok_or_else(|| Error::invalid(format!("basis size {nb} is not a perfect square")))?;
    let mut data = Vec::with_capacity(columns.len() * d * nb);
    for &j in columns {
        for m in &coords.coords {
            if j >= m.cols() {
                return Err(Error::invalid(format!("column {j} out of range")));
            }
            data.extend_from_slice(m.col(j));
        }
    }
    Tensor4::from_vec([columns.len(), d, side, side], data)
}

/// Splits a flat `(components, side, side)` item back into per-component
/// coefficient vectors.
pub fn split_components(item: &[f64], components: usize) -> Vec<Vec<f64>> {
    let n = item.len() / components.max(1);
    item.chunks(n.max(1)).map(<[f64]>::to_vec).collect()
}

/// Normalized, shuffled and split coefficient tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeDataset {
    pub train: Tensor4,
    pub val: Tensor4,
    pub train_columns: Vec<usize>,
    pub val_columns: Vec<usize>,
    pub norm: Normalization,
    pub seed: u64,
}

impl CaeDataset {
    pub fn side(&self) -> usize {
        self.train.height()
    }

    pub fn channels(&self) -> usize {
        self.train.channels()
    }
}

/// Shuffles columns with `seed`, keeps the first `⌊λ N_s⌋` for training and
/// scales both splits with the training min and max.
pub fn prepare_dataset(coords: &IntrinsicCoordinates, lambda: f64, seed: u64) -> Result<CaeDataset> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid(format!("training fraction {lambda} must lie in (0, 1)")));
    }
    let n_s = coords.coords.first().map_or(0, |m| m.cols());
    let mut order: Vec<usize> = (0..n_s).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (lambda * n_s as f64).floor() as usize;
    if n_train == 0 || n_train == n_s {
        return Err(Error::InsufficientData(format!(
            "{n_s} samples cannot be split with fraction {lambda}"
        )));
    }
    let (train_columns, val_columns) = (order[..n_train].to_vec(), order[n_train..].to_vec());
    let mut train = coords_to_tensor(coords, &train_columns)?;
    let mut val = coords_to_tensor(coords, &val_columns)?;
    let norm = Normalization::fit(train.data())?;
    norm.apply_all(train.data_mut());
    norm.apply_all(val.data_mut());
    Ok(CaeDataset {
        train,
        val,
        train_columns,
        val_columns,
        norm,
        seed,
    })
}
