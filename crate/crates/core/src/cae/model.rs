use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::dataset::{split_components, CaeDataset, Normalization};
use crate::error::{Error, Result};
use crate::io::{csv_float, write_atomic, ByteReader, ByteWriter};
use crate::linalg::{svd_thin, Matrix};
use crate::nn::{mse_loss, AdamState, Network, Tensor4};

pub const CAE_SECTION: &[u8; 8] = b"ROMCAE01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            decay: 0.05,
            batch_size: 50,
            max_epochs: 5000,
            patience: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate / (1.0 + self.decay * epoch as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_time: f64,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,learning_rate\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch,
                csv_float(e.train_loss),
                csv_float(e.val_loss),
                csv_float(e.learning_rate)
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Trained encoder and decoder with the normalization of their training data.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub side: usize,
    pub channels: usize,
    pub code: usize,
    pub norm: Normalization,
    pub encoder: Network,
    pub decoder: Network,
}

fn gather(t: &Tensor4, rows: &[usize]) -> Tensor4 {
    let [_, c, h, w] = t.dims();
    let mut data = Vec::with_capacity(rows.len() * t.item_len());
    for &r in rows {
        data.extend_from_slice(t.item(r));
    }
    Tensor4::from_vec([rows.len(), c, h, w], data).expect("consistent dims")
}

fn reconstruction_loss(enc: &Network, dec: &Network, data: &Tensor4) -> Result<f64> {
    let out = dec.infer(&enc.infer(data)?)?;
    Ok(mse_loss(&out, data)?.0)
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::TrainingDiverged { message, .. } => Error::TrainingDiverged { epoch, message },
        other => other,
    }
}

/// Minibatch Adam on the reconstruction loss with per-epoch learning-rate
/// decay and early stopping. Returns the weights of the best validation
/// epoch.
pub fn train(dataset: &CaeDataset, arch: &Architecture, cfg: &TrainConfig) -> Result<(CaeModel, TrainingLog)> {
    let n_train = dataset.train.batch();
    if n_train == 0 || dataset.val.batch() == 0 {
        return Err(Error::InsufficientData("empty training or validation split".into()));
    }
    if cfg.batch_size == 0 || cfg.batch_size > n_train {
        return Err(Error::invalid(format!(
            "batch size {} must lie in 1..={n_train}",
            cfg.batch_size
        )));
    }
    if arch.side != dataset.side() || arch.channels != dataset.channels() {
        return Err(Error::invalid(format!(
            "architecture expects {}x{}x{}, data is {}x{}x{}",
            arch.channels,
            arch.side,
            arch.side,
            dataset.channels(),
            dataset.side(),
            dataset.side()
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut enc, mut dec) = arch.build(&mut rng)?;
    let sizes = |n: &Network| n.params().iter().map(|p| p.len()).collect::<Vec<_>>();
    let mut adam_enc = AdamState::new(&sizes(&enc));
    let mut adam_dec = AdamState::new(&sizes(&dec));

    let mut best = (enc.clone(), dec.clone());
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..n_train).collect();

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = gather(&dataset.train, chunk);
            enc.zero_grad();
            dec.zero_grad();
            let out = dec.forward(&enc.forward(&x)?)?;
            let (loss, g) = mse_loss(&out, &x)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    message: format!("training loss {loss}"),
                });
            }
            let g_code = dec.backward(&g)?;
            enc.backward(&g_code)?;
            adam_dec.update(&mut dec.params_mut(), lr).map_err(|e| diverged(epoch, e))?;
            adam_enc.update(&mut enc.params_mut(), lr).map_err(|e| diverged(epoch, e))?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / n_train as f64;
        let val_loss = reconstruction_loss(&enc, &dec, &dataset.val)?;
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                message: format!("validation loss {val_loss}"),
            });
        }
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = (enc.clone(), dec.clone());
        } else if epoch - best_epoch >= cfg.patience {
            log::info!("early stop at epoch {epoch}, best {best_epoch}");
            break;
        }
        if epoch % 500 == 0 {
            log::debug!("epoch {epoch}: train {train_loss:.3e} val {val_loss:.3e}");
        }
    }
    let (mut encoder, mut decoder) = best;
    encoder.zero_grad();
    decoder.zero_grad();
    for p in encoder.params_mut().into_iter().chain(decoder.params_mut()) {
        p.grad = None;
    }
    let model = CaeModel {
        side: arch.side,
        channels: arch.channels,
        code: arch.code,
        norm: dataset.norm,
        encoder,
        decoder,
    };
    let log = TrainingLog {
        epochs,
        best_epoch,
        best_val_loss: best_val,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((model, log))
}

/// Reconstruction loss of the best rank-`n` linear map through the
/// uncentered POD of the items.
pub fn linear_autoencoder_loss(data: &Tensor4, n: usize) -> Result<f64> {
    let m = Matrix::from_col_major(data.item_len(), data.batch(), data.data().to_vec())?;
    let svd = svd_thin(&m)?;
    let tail: f64 = svd.singular_values.iter().skip(n).map(|s| s * s).sum();
    Ok(tail / data.batch() as f64)
}

impl CaeModel {
    fn item_dims(&self, count: usize) -> [usize; 4] {
        [count, self.channels, self.side, self.side]
    }

    /// Codes of normalized items, `(count, n, 1, 1)`.
    pub fn encode(&self, x: &Tensor4) -> Result<Tensor4> {
        if x.dims()[1..] != self.item_dims(1)[1..] {
            return Err(Error::invalid(format!(
                "encoder expects items {:?}, got {:?}",
                &self.item_dims(1)[1..],
                &x.dims()[1..]
            )));
        }
        self.encoder.infer(x)
    }

    /// Code of one snapshot's raw coefficients, one vector per component.
    pub fn encode_coefficients(&self, alpha: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut data: Vec<f64> = alpha.concat();
        self.norm.apply_all(&mut data);
        let x = Tensor4::from_vec(self.item_dims(1), data)?;
        Ok(self.encode(&x)?.into_vec())
    }

    /// Normalized decoder output for one code.
    pub fn decode_normalized(&self, code: &[f64]) -> Result<Tensor4> {
        if code.len() != self.code {
            return Err(Error::invalid(format!(
                "code has {} entries, decoder expects {}",
                code.len(),
                self.code
            )));
        }
        let x = Tensor4::from_vec([1, self.code, 1, 1], code.to_vec())?;
        self.decoder.infer(&x)
    }

    /// De-normalized coefficients, one vector per component.
    pub fn decode(&self, code: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut out = self.decode_normalized(code)?.into_vec();
        self.norm.invert_all(&mut out);
        Ok(split_components(&out, self.channels))
    }

    /// Mean squared reconstruction error over normalized items.
    pub fn reconstruction_loss(&self, data: &Tensor4) -> Result<f64> {
        reconstruction_loss(&self.encoder, &self.decoder, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.len_u32(self.side)
            .len_u32(self.channels)
            .len_u32(self.code)
            .f64(self.norm.min)
            .f64(self.norm.max);
        self.encoder.write(&mut w);
        self.decoder.write(&mut w);
        w.finish()
    }

    pub fn from_reader(r: &mut ByteReader<'_>) -> Result<Self> {
        let at = r.offset();
        let side = r.len_u32()?;
        let channels = r.len_u32()?;
        let code = r.len_u32()?;
        let norm = Normalization {
            min: r.f64()?,
            max: r.f64()?,
        };
        let encoder = Network::read(r)?;
        let decoder = Network::read(r)?;
        let model = Self {
            side,
            channels,
            code,
            norm,
            encoder,
            decoder,
        };
        let corrupt = |m: String| Error::Format { offset: at, message: m };
        let enc_out = model.encoder.output_dims(model.item_dims(1)).map_err(|e| corrupt(e.to_string()))?;
        let dec_out = model
            .decoder
            .output_dims([1, code, 1, 1])
            .map_err(|e| corrupt(e.to_string()))?;
        if enc_out != [1, code, 1, 1] || dec_out != model.item_dims(1) {
            return Err(corrupt("autoencoder dimension chain is inconsistent".into()));
        }
        if !(norm.max > norm.min) {
            return Err(corrupt("normalization range is empty".into()));
        }
        Ok(model)
    }
}
