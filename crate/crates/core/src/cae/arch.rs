use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{initialize, ConvSpec, Dense, Layer, Network, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvStage {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvStage {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Spatial side produced by the stage.
    pub output: usize,
}

/// Layer plan of the autoencoder: strided convolutions and three dense
/// layers down to the code, three dense layers and transposed convolutions
/// back up. ELU follows every layer except the decoder's last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub side: usize,
    pub channels: usize,
    pub code: usize,
    pub dense_width: usize,
    pub encoder: Vec<ConvStage>,
    pub decoder: Vec<DeconvStage>,
}

impl Architecture {
    /// The 14 x 14 x 3 network with 5 x 5 kernels.
    pub fn paper(code: usize) -> Self {
        let c = |channels, stride, padding| ConvStage {
            channels,
            kernel: 5,
            stride,
            padding,
        };
        let d = |channels, stride, padding, output| DeconvStage {
            channels,
            kernel: 5,
            stride,
            padding,
            output,
        };
        Self {
            side: 14,
            channels: 3,
            code,
            dense_width: 256,
            encoder: vec![c(8, 1, 2), c(16, 2, 3), c(32, 2, 2), c(64, 2, 2)],
            decoder: vec![d(64, 1, 1, 4), d(32, 1, 0, 8), d(16, 3, 6, 14), d(3, 1, 2, 14)],
        }
    }

    /// Same layer kinds and counts with 3 x 3 kernels, strides 1, 2, 2, 1
    /// and the given encoder widths; the decoder mirrors them.
    pub fn desk(side: usize, channels: usize, code: usize, widths: [usize; 4], dense_width: usize) -> Self {
        let strides = [1, 2, 2, 1];
        let encoder = widths
            .iter()
            .zip(strides)
            .map(|(&w, s)| ConvStage {
                channels: w,
                kernel: 3,
                stride: s,
                padding: 1,
            })
            .collect();
        let h1 = side;
        let h2 = side.div_ceil(2);
        let h3 = h2.div_ceil(2);
        let d = |channels, stride, output| DeconvStage {
            channels,
            kernel: 3,
            stride,
            padding: 1,
            output,
        };
        let decoder = vec![
            d(widths[3], 1, h3),
            d(widths[2], 2, h2),
            d(widths[1], 2, h1),
            d(channels, 1, h1),
        ];
        Self {
            side,
            channels,
            code,
            dense_width,
            encoder,
            decoder,
        }
    }

    /// Spatial side and channels after the encoder convolutions.
    pub fn bottleneck(&self) -> Result<(usize, usize)> {
        let mut h = self.side;
        let mut c = self.channels;
        for st in &self.encoder {
            let spec = ConvSpec::conv(Tensor4::zeros([st.channels, c, st.kernel, st.kernel]), st.stride, st.padding)?;
            h = spec.conv_output_hw(h, h)?.0;
            c = st.channels;
        }
        Ok((h, c))
    }

    pub fn build_encoder(&self) -> Result<Network> {
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::invalid("architecture needs encoder and decoder stages"));
        }
        let mut layers = Vec::new();
        let mut c = self.channels;
        for st in &self.encoder {
            let k = Tensor4::zeros([st.channels, c, st.kernel, st.kernel]);
            layers.push(Layer::Conv(ConvSpec::conv(k, st.stride, st.padding)?));
            layers.push(Layer::Elu);
            c = st.channels;
        }
        let (h, c) = self.bottleneck()?;
        let flat = c * h * h;
        for (i, o) in [(flat, self.dense_width), (self.dense_width, self.dense_width), (self.dense_width, self.code)] {
            layers.push(Layer::Dense(Dense::zeros(i, o)));
            layers.push(Layer::Elu);
        }
        let net = Network::new(layers);
        net.output_dims([1, self.channels, self.side, self.side])?;
        Ok(net)
    }

    pub fn build_decoder(&self) -> Result<Network> {
        let (h, c0) = self.bottleneck()?;
        let flat = c0 * h * h;
        let mut layers = Vec::new();
        for (i, o) in [(self.code, self.dense_width), (self.dense_width, self.dense_width), (self.dense_width, flat)] {
            layers.push(Layer::Dense(Dense::zeros(i, o)));
            layers.push(Layer::Elu);
        }
        layers.push(Layer::Reshape([c0, h, h]));
        let mut c = c0;
        for (idx, st) in self.decoder.iter().enumerate() {
            let k = Tensor4::zeros([c, st.channels, st.kernel, st.kernel]);
            let spec = ConvSpec::conv_transpose(k, st.stride, st.padding, Some((st.output, st.output)))?;
            layers.push(Layer::Conv(spec));
            if idx + 1 < self.decoder.len() {
                layers.push(Layer::Elu);
            }
            c = st.channels;
        }
        let net = Network::new(layers);
        let out = net.output_dims([1, self.code, 1, 1])?;
        if out != [1, self.channels, self.side, self.side] {
            return Err(Error::invalid(format!(
                "decoder produces {:?}, expected {:?}",
                &out[1..],
                [self.channels, self.side, self.side]
            )));
        }
        Ok(net)
    }

    /// Encoder and decoder with Xavier weights drawn from one stream.
    pub fn build(&self, rng: &mut ChaCha8Rng) -> Result<(Network, Network)> {
        let mut enc = self.build_encoder()?;
        let mut dec = self.build_decoder()?;
        initialize(&mut enc, rng);
        initialize(&mut dec, rng);
        Ok((enc, dec))
    }
}
