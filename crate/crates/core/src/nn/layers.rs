use super::conv::{self, ConvSpec};
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};

pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_derivative(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// `W x + b` with `W` row-major, `b.len()` rows by `x.len()` columns.
pub fn dense(x: &[f64], w: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if w.len() != b.len() * x.len() {
        return Err(Error::invalid(format!(
            "dense shape mismatch: {} weights for {} outputs and {} inputs",
            w.len(),
            b.len(),
            x.len()
        )));
    }
    Ok(b
        .iter()
        .enumerate()
        .map(|(i, bi)| bi + w[i * x.len()..(i + 1) * x.len()].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect())
}

/// Fully-connected layer over the flattened item.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(1, 1, out, in)`.
    pub weight: Tensor4,
    /// `(1, 1, 1, out)`.
    pub bias: Tensor4,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor4::zeros([1, 1, outputs, inputs]),
            bias: Tensor4::zeros([1, 1, 1, outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.width()
    }

    pub fn outputs(&self) -> usize {
        self.weight.height()
    }

    fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        if x.item_len() != self.inputs() {
            return Err(Error::invalid(format!(
                "dense layer expects {} inputs, item has {}",
                self.inputs(),
                x.item_len()
            )));
        }
        let mut out = Vec::with_capacity(x.batch() * self.outputs());
        for b in 0..x.batch() {
            out.extend(dense(x.item(b), self.weight.data(), self.bias.data())?);
        }
        Tensor4::from_vec([x.batch(), self.outputs(), 1, 1], out)
    }

    fn backward(&mut self, x: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
        let (ni, no) = (self.inputs(), self.outputs());
        let mut gx = vec![0.0; x.len()];
        {
            let gw = self.weight.grad_mut();
            for b in 0..x.batch() {
                let xb = x.item(b);
                let gb = grad_out.item(b);
                for (i, &g) in gb.iter().enumerate() {
                    let row = &mut gw[i * ni..(i + 1) * ni];
                    row.iter_mut().zip(xb).for_each(|(w, v)| *w += g * v);
                }
            }
        }
        {
            let gbias = self.bias.grad_mut();
            for b in 0..x.batch() {
                gbias.iter_mut().zip(grad_out.item(b)).for_each(|(a, g)| *a += g);
            }
        }
        let w = self.weight.data();
        for b in 0..x.batch() {
            let gb = grad_out.item(b);
            let out = &mut gx[b * ni..(b + 1) * ni];
            for (i, &g) in gb.iter().enumerate().take(no) {
                out.iter_mut().zip(&w[i * ni..(i + 1) * ni]).for_each(|(o, wv)| *o += g * wv);
            }
        }
        Tensor4::from_vec(x.dims(), gx).expect("same shape as input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvSpec),
    Dense(Dense),
    Elu,
    /// Reinterprets each item as `(channels, height, width)`.
    Reshape([usize; 3]),
}

impl Layer {
    fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        match self {
            Layer::Conv(spec) => conv::apply(spec, x),
            Layer::Dense(d) => d.forward(x),
            Layer::Elu => {
                let data = x.data().iter().map(|&v| elu(v)).collect();
                Tensor4::from_vec(x.dims(), data)
            }
            Layer::Reshape([c, h, w]) => x.clone().reshaped([x.batch(), *c, *h, *w]),
        }
    }

    fn backward(&mut self, x: &Tensor4, grad_out: &Tensor4) -> Result<Tensor4> {
        Ok(match self {
            Layer::Conv(spec) => conv::backward(spec, x, grad_out),
            Layer::Dense(d) => d.backward(x, grad_out),
            Layer::Elu => {
                let data = x
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&v, &g)| g * elu_derivative(v))
                    .collect();
                Tensor4::from_vec(x.dims(), data)?
            }
            Layer::Reshape(_) => grad_out.clone().reshaped(x.dims())?,
        })
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor4> {
        match self {
            Layer::Conv(spec) => vec![&mut spec.kernel, &mut spec.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    fn params(&self) -> Vec<&Tensor4> {
        match self {
            Layer::Conv(spec) => vec![&spec.kernel, &spec.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }
}

const KIND_CONV: u32 = 0;
const KIND_CONV_T: u32 = 1;
const KIND_DENSE: u32 = 2;
const KIND_ELU: u32 = 3;
const KIND_RESHAPE: u32 = 4;

/// A sequential stack of layers with a recorded forward pass for backprop.
#[derive(Debug, Clone, Default)]
pub struct Network {
    layers: Vec<Layer>,
    tape: Option<Vec<Tensor4>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers, tape: None }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Forward pass without recording.
    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        let mut cur = x.clone();
        cur.grad = None;
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Forward pass that records layer inputs for [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let mut tape = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        cur.grad = None;
        for layer in &self.layers {
            let next = layer.forward(&cur)?;
            tape.push(cur);
            cur = next;
        }
        self.tape = Some(tape);
        Ok(cur)
    }

    /// Accumulates parameter gradients of `⟨grad_out, output⟩` and returns
    /// the gradient with respect to the recorded input. Consumes the tape.
    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let tape = self.tape.take().ok_or(Error::NoForwardPass)?;
        let mut g = grad_out.clone();
        for (layer, x) in self.layers.iter_mut().zip(&tape).rev() {
            g = layer.backward(x, &g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor4> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Tensor4> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Output dims for an input of `dims`, checked layer by layer.
    pub fn output_dims(&self, dims: [usize; 4]) -> Result<[usize; 4]> {
        let mut d = dims;
        for layer in &self.layers {
            d = match layer {
                Layer::Conv(spec) => {
                    if d[1] != spec.in_channels() {
                        return Err(Error::invalid(format!(
                            "channel mismatch: layer expects {}, input has {}",
                            spec.in_channels(),
                            d[1]
                        )));
                    }
                    let (h, w) = spec.output_hw(d[2], d[3])?;
                    [d[0], spec.out_channels(), h, w]
                }
                Layer::Dense(dl) => {
                    if d[1] * d[2] * d[3] != dl.inputs() {
                        return Err(Error::invalid("dense input size mismatch"));
                    }
                    [d[0], dl.outputs(), 1, 1]
                }
                Layer::Elu => d,
                Layer::Reshape([c, h, w]) => {
                    if c * h * w != d[1] * d[2] * d[3] {
                        return Err(Error::invalid("reshape size mismatch"));
                    }
                    [d[0], *c, *h, *w]
                }
            };
        }
        Ok(d)
    }

    pub fn write(&self, w: &mut ByteWriter) {
        w.len_u32(self.layers.len());
        for layer in &self.layers {
            match layer {
                Layer::Conv(spec) => {
                    let kind = if spec.transposed { KIND_CONV_T } else { KIND_CONV };
                    let (oh, ow) = spec.output_size.unwrap_or((0, 0));
                    let k = spec.kernel.dims();
                    let dims = [k[0], k[1], k[2], k[3], spec.stride, spec.padding, oh, ow];
                    w.u32(kind).len_u32(dims.len());
                    dims.iter().for_each(|&d| {
                        w.len_u32(d);
                    });
                    w.f64s(spec.kernel.data()).f64s(spec.bias.data());
                }
                Layer::Dense(d) => {
                    w.u32(KIND_DENSE).len_u32(2).len_u32(d.outputs()).len_u32(d.inputs());
                    w.f64s(d.weight.data()).f64s(d.bias.data());
                }
                Layer::Elu => {
                    w.u32(KIND_ELU).len_u32(0);
                }
                Layer::Reshape(s) => {
                    w.u32(KIND_RESHAPE).len_u32(3);
                    s.iter().for_each(|&d| {
                        w.len_u32(d);
                    });
                }
            }
        }
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let count = r.len_u32()?;
        let mut layers = Vec::with_capacity(count.min(256));
        for _ in 0..count {
            let at = r.offset();
            let kind = r.u32()?;
            let ndims = r.len_u32()?;
            if ndims > 16 {
                return Err(r.error(format!("layer with {ndims} dims")));
            }
            let dims = (0..ndims).map(|_| r.len_u32()).collect::<Result<Vec<_>>>()?;
            let bad = |msg: String| Error::Format { offset: at, message: msg };
            let layer = match (kind, dims.as_slice()) {
                (KIND_CONV | KIND_CONV_T, &[co, ci, kh, kw, s, p, oh, ow]) => {
                    let kdims = [co, ci, kh, kw];
                    let kernel = Tensor4::from_vec(kdims, r.f64s(kdims.iter().product())?)?;
                    let transposed = kind == KIND_CONV_T;
                    let bias_len = if transposed { ci } else { co };
                    let bias = Tensor4::from_vec([1, bias_len, 1, 1], r.f64s(bias_len)?)?;
                    let mut spec = if transposed {
                        let out = (oh > 0).then_some((oh, ow));
                        ConvSpec::conv_transpose(kernel, s, p, out)
                    } else {
                        ConvSpec::conv(kernel, s, p)
                    }
                    .map_err(|e| bad(e.to_string()))?;
                    spec.bias = bias;
                    Layer::Conv(spec)
                }
                (KIND_DENSE, &[no, ni]) => {
                    let n = no.checked_mul(ni).ok_or_else(|| bad("dense size overflows".into()))?;
                    Layer::Dense(Dense {
                        weight: Tensor4::from_vec([1, 1, no, ni], r.f64s(n)?)?,
                        bias: Tensor4::from_vec([1, 1, 1, no], r.f64s(no)?)?,
                    })
                }
                (KIND_ELU, &[]) => Layer::Elu,
                (KIND_RESHAPE, &[c, h, w]) => Layer::Reshape([c, h, w]),
                _ => return Err(bad(format!("unknown layer kind {kind} with dims {dims:?}"))),
            };
            layers.push(layer);
        }
        Ok(Self::new(layers))
    }
}

/// Batch mean of per-item squared error norms, and its gradient.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    if pred.dims() != target.dims() {
        return Err(Error::invalid(format!(
            "loss shape mismatch {:?} vs {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let scale = 1.0 / pred.batch().max(1) as f64;
    let diff: Vec<f64> = pred.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() * scale;
    let grad = diff.iter().map(|d| 2.0 * d * scale).collect();
    Ok((loss, Tensor4::from_vec(pred.dims(), grad)?))
}
