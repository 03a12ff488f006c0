//! Online evaluation. Everything here consumes a [`RomModel`] only.

use std::path::Path;

use crate::cae::{CaeModel, CAE_SECTION};
use crate::csi::{ModeModel, CSI_SECTION};
use crate::error::{Error, Result};
use crate::io::Container;
use crate::nn::CompiledNetwork;
use crate::pod::{PodBasis, POD_SECTION};

pub const BASELINE_SECTION: &[u8; 8] = b"BASECSI1";
pub const PROVENANCE_SECTION: &[u8; 8] = b"PROVNNCE";

/// Reduced fields at one `(t, μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    pub ez: Vec<f64>,
    pub extrapolated: bool,
}

impl Fields {
    pub fn components(&self) -> [&[f64]; 3] {
        [&self.hx, &self.hy, &self.ez]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomModel {
    pub pod: PodBasis,
    pub cae: CaeModel,
    pub csi: ModeModel,
    /// Mode model fitted directly on the POD coefficients.
    pub baseline: ModeModel,
    /// Hash of the experiment configuration that produced the model.
    pub config_hash: [u8; 32],
    decoder: CompiledNetwork,
}

fn corrupt(msg: String) -> Error {
    Error::CorruptModel(msg)
}

impl RomModel {
    pub fn new(pod: PodBasis, cae: CaeModel, csi: ModeModel, baseline: ModeModel, config_hash: [u8; 32]) -> Result<Self> {
        let decoder = CompiledNetwork::new(&cae.decoder, [cae.code, 1, 1]).map_err(|e| corrupt(e.to_string()))?;
        let model = Self {
            pod,
            cae,
            csi,
            baseline,
            config_hash,
            decoder,
        };
        model.check()?;
        Ok(model)
    }

    /// Checks the chain `n → 𝒩·d → N_h·d` and that both mode models share
    /// their sampling grids.
    pub fn check(&self) -> Result<()> {
        let d = self.pod.num_components();
        if self.cae.channels != d || self.cae.side * self.cae.side != self.pod.n_basis {
            return Err(corrupt(format!(
                "decoder produces {}x{}x{}, POD basis has {d} components of size {}",
                self.cae.channels, self.cae.side, self.cae.side, self.pod.n_basis
            )));
        }
        if self.decoder.output_shape() != [d, self.cae.side, self.cae.side] {
            return Err(corrupt(format!(
                "decoder output {:?} does not match the POD coefficients",
                self.decoder.output_shape()
            )));
        }
        if self.csi.code_len() != self.cae.code {
            return Err(corrupt(format!(
                "CSI predicts {} code entries, decoder takes {}",
                self.csi.code_len(),
                self.cae.code
            )));
        }
        if self.baseline.code_len() != d * self.pod.n_basis {
            return Err(corrupt(format!(
                "baseline predicts {} coefficients, POD needs {}",
                self.baseline.code_len(),
                d * self.pod.n_basis
            )));
        }
        if self.baseline.times() != self.csi.times() || self.baseline.axes() != self.csi.axes() {
            return Err(corrupt("baseline and CSI grids differ".into()));
        }
        Ok(())
    }

    /// De-normalized POD coefficients for one code, one vector per component.
    pub fn decode(&self, code: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut out = self.decoder.infer(code)?;
        self.cae.norm.invert_all(&mut out);
        Ok(out.chunks(self.pod.n_basis).map(<[f64]>::to_vec).collect())
    }

    pub fn n_h(&self) -> usize {
        self.pod.n_h()
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push(POD_SECTION, self.pod.to_bytes());
        c.push(CAE_SECTION, self.cae.to_bytes());
        c.push(CSI_SECTION, self.csi.to_bytes());
        c.push(BASELINE_SECTION, self.baseline.to_bytes());
        c.push(PROVENANCE_SECTION, self.config_hash.to_vec());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let mut r = c.section(POD_SECTION)?;
        let pod = PodBasis::from_reader(&mut r)?;
        r.expect_end()?;
        let mut r = c.section(CAE_SECTION)?;
        let cae = CaeModel::from_reader(&mut r)?;
        r.expect_end()?;
        let mut r = c.section(CSI_SECTION)?;
        let csi = ModeModel::from_reader(&mut r)?;
        r.expect_end()?;
        let mut r = c.section(BASELINE_SECTION)?;
        let baseline = ModeModel::from_reader(&mut r)?;
        r.expect_end()?;
        let hash = c.get(PROVENANCE_SECTION).unwrap_or_default();
        let config_hash = hash
            .try_into()
            .map_err(|_| corrupt(format!("provenance has {} bytes", hash.len())))?;
        Self::new(pod, cae, csi, baseline, config_hash)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

fn expand(model: &RomModel, alpha: &[Vec<f64>], extrapolated: bool) -> Result<Fields> {
    if alpha.len() != 3 {
        return Err(corrupt(format!("{} field components, expected 3", alpha.len())));
    }
    let mut f = (0..3).map(|c| model.pod.reconstruct(c, &alpha[c]));
    Ok(Fields {
        hx: f.next().expect("3 components")?,
        hy: f.next().expect("3 components")?,
        ez: f.next().expect("3 components")?,
        extrapolated,
    })
}

/// CAE-CSI prediction: interpolated code, decoded and de-normalized
/// coefficients, then `V_c α̂_c` per component.
pub fn online(model: &RomModel, t: f64, mu: &[f64]) -> Result<Fields> {
    let pred = model.csi.eval_code(t, mu)?;
    let alpha = model.decode(&pred.code)?;
    expand(model, &alpha, pred.extrapolated)
}

/// Baseline prediction with the coefficients interpolated directly.
pub fn online_pod_csi(model: &RomModel, t: f64, mu: &[f64]) -> Result<Fields> {
    let pred = model.baseline.eval_code(t, mu)?;
    let alpha: Vec<Vec<f64>> = pred.code.chunks(model.pod.n_basis).map(<[f64]>::to_vec).collect();
    expand(model, &alpha, pred.extrapolated)
}
