use super::conv::{self, ConvSpec};
use super::layers::{elu, Layer, Network};
use super::tensor::Tensor4;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Step {
    /// `y = b + Σ_j x_j w_j`, column `w_j` stored from its first to its
    /// last nonzero row.
    Affine { b: Vec<f64>, cols: Vec<(usize, Vec<f64>)> },
    Elu,
}

/// A network frozen for single-item inference at a fixed input shape, with
/// every linear layer lowered to a dense matrix. Intermediate activations are
/// kept pixel-major so convolution columns have short nonzero spans.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledNetwork {
    input: [usize; 3],
    output: [usize; 3],
    steps: Vec<Step>,
    /// Channel-major output entry `k` is `y[gather[k]]`.
    gather: Vec<usize>,
}

/// Pixel-major position of each channel-major entry.
fn pixel_major([c, h, w]: [usize; 3]) -> Vec<usize> {
    (0..c * h * w).map(|k| (k % (h * w)) * c + k / (h * w)).collect()
}

/// Affine step from a column-major channel-major `out × in` matrix.
fn affine(w: &[f64], b: &[f64], from: [usize; 3], to: [usize; 3]) -> Step {
    let (inputs, outputs) = (from.iter().product::<usize>(), to.iter().product::<usize>());
    let (pin, pout) = (pixel_major(from), pixel_major(to));
    let mut dense = vec![0.0; outputs * inputs];
    for j in 0..inputs {
        for i in 0..outputs {
            dense[pin[j] * outputs + pout[i]] = w[j * outputs + i];
        }
    }
    let mut bias = vec![0.0; outputs];
    for i in 0..outputs {
        bias[pout[i]] = b[i];
    }
    let cols = dense
        .chunks_exact(outputs.max(1))
        .map(|col| match col.iter().position(|v| *v != 0.0) {
            Some(lo) => {
                let hi = col.iter().rposition(|v| *v != 0.0).expect("has a nonzero") + 1;
                (lo, col[lo..hi].to_vec())
            }
            None => (0, Vec::new()),
        })
        .collect();
    Step::Affine { b: bias, cols }
}

/// Relayout between two shapes of the same channel-major data.
fn permutation(from: [usize; 3], to: [usize; 3]) -> Step {
    let n: usize = from.iter().product();
    let (pin, pout) = (pixel_major(from), pixel_major(to));
    let mut cols = vec![(0, Vec::new()); n];
    for k in 0..n {
        cols[pin[k]] = (pout[k], vec![1.0]);
    }
    Step::Affine { b: vec![0.0; n], cols }
}

fn lower_conv(spec: &ConvSpec, dims: [usize; 4]) -> Result<(Step, [usize; 4])> {
    let out_dims = Network::new(vec![Layer::Conv(spec.clone())]).output_dims(dims)?;
    let inputs = dims[1] * dims[2] * dims[3];
    let outputs = out_dims[1] * out_dims[2] * out_dims[3];
    let mut linear = spec.clone();
    linear.bias = Tensor4::zeros(spec.bias.dims());
    let b = conv::apply(spec, &Tensor4::zeros(dims))?.into_vec();
    let mut w = vec![0.0; outputs * inputs];
    let mut unit = Tensor4::zeros(dims);
    for j in 0..inputs {
        unit.data_mut()[j] = 1.0;
        let col = conv::apply(&linear, &unit)?;
        w[j * outputs..(j + 1) * outputs].copy_from_slice(col.data());
        unit.data_mut()[j] = 0.0;
    }
    let shape = |d: [usize; 4]| [d[1], d[2], d[3]];
    Ok((affine(&w, &b, shape(dims), shape(out_dims)), out_dims))
}

impl CompiledNetwork {
    pub fn new(net: &Network, input: [usize; 3]) -> Result<Self> {
        let mut dims = [1, input[0], input[1], input[2]];
        let mut steps = Vec::with_capacity(net.layers().len() + 1);
        let n: usize = input.iter().product();
        if pixel_major(input) != pixel_major([n, 1, 1]) {
            steps.push(permutation([n, 1, 1], input));
        }
        for layer in net.layers() {
            match layer {
                Layer::Conv(spec) => {
                    let (step, next) = lower_conv(spec, dims)?;
                    steps.push(step);
                    dims = next;
                }
                Layer::Dense(d) => {
                    if d.inputs() != dims[1] * dims[2] * dims[3] {
                        return Err(Error::invalid("dense layer does not match its input"));
                    }
                    let (rows, cols) = (d.outputs(), d.inputs());
                    let src = d.weight.data();
                    let w: Vec<f64> = (0..rows * cols).map(|k| src[(k % rows) * cols + k / rows]).collect();
                    steps.push(affine(&w, d.bias.data(), [dims[1], dims[2], dims[3]], [rows, 1, 1]));
                    dims = [1, rows, 1, 1];
                }
                Layer::Elu => steps.push(Step::Elu),
                Layer::Reshape([c, h, w]) => {
                    if c * h * w != dims[1] * dims[2] * dims[3] {
                        return Err(Error::invalid("reshape changes the item size"));
                    }
                    let (from, to) = ([dims[1], dims[2], dims[3]], [*c, *h, *w]);
                    if pixel_major(from) != pixel_major(to) {
                        steps.push(permutation(from, to));
                    }
                    dims = [1, *c, *h, *w];
                }
            }
        }
        let output = [dims[1], dims[2], dims[3]];
        Ok(Self {
            input,
            output,
            steps,
            gather: pixel_major(output),
        })
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.output
    }

    /// Output of one flattened channel-major item, channel-major.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n: usize = self.input.iter().product();
        if x.len() != n {
            return Err(Error::invalid(format!("input has {} entries, expected {n}", x.len())));
        }
        let mut cur = x.to_vec();
        for step in &self.steps {
            match step {
                Step::Affine { b, cols } => {
                    let mut y = b.clone();
                    for (xv, (lo, col)) in cur.iter().zip(cols) {
                        for (yi, wi) in y[*lo..*lo + col.len()].iter_mut().zip(col) {
                            *yi += xv * wi;
                        }
                    }
                    cur = y;
                }
                Step::Elu => cur.iter_mut().for_each(|v| *v = elu(*v)),
            }
        }
        Ok(self.gather.iter().map(|&k| cur[k]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{initialize, Dense};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_layered_inference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = |co, ci| Tensor4::zeros([co, ci, 3, 3]);
        let mut net = Network::new(vec![
            Layer::Dense(Dense::zeros(3, 12)),
            Layer::Elu,
            Layer::Reshape([3, 2, 2]),
            Layer::Conv(ConvSpec::conv_transpose(k(3, 5), 2, 1, Some((4, 4))).unwrap()),
            Layer::Elu,
            Layer::Conv(ConvSpec::conv(k(2, 5), 1, 1).unwrap()),
        ]);
        initialize(&mut net, &mut rng);
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
        let c = CompiledNetwork::new(&net, [3, 1, 1]).unwrap();
        assert_eq!(c.output_shape(), [2, 4, 4]);
        for _ in 0..5 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let want = net.infer(&Tensor4::from_vec([1, 3, 1, 1], x.clone()).unwrap()).unwrap();
            let got = c.infer(&x).unwrap();
            for (a, b) in got.iter().zip(want.data()) {
                assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()), "{a} {b}");
            }
        }
        assert!(c.infer(&[0.0; 2]).is_err());
    }

    #[test]
    fn image_input_and_flattening() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut net = Network::new(vec![
            Layer::Conv(ConvSpec::conv(Tensor4::zeros([4, 2, 3, 3]), 2, 1).unwrap()),
            Layer::Elu,
            Layer::Reshape([16, 1, 1]),
            Layer::Dense(Dense::zeros(16, 5)),
        ]);
        initialize(&mut net, &mut rng);
        let c = CompiledNetwork::new(&net, [2, 4, 4]).unwrap();
        assert_eq!(c.output_shape(), [5, 1, 1]);
        let x: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let want = net.infer(&Tensor4::from_vec([1, 2, 4, 4], x.clone()).unwrap()).unwrap();
        for (a, b) in c.infer(&x).unwrap().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()), "{a} {b}");
        }
    }
}
