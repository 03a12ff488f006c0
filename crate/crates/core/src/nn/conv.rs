use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// One convolution or transposed-convolution layer.
///
/// `kernel` always has dims `(c_out, c_in, k_h, k_w)` of the forward
/// correlation. A transposed layer applies the adjoint of that correlation,
/// so it consumes `c_out` channels and produces `c_in`. The bias belongs to
/// whichever direction `transposed` selects.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub kernel: Tensor4,
    pub bias: Tensor4,
    pub stride: usize,
    pub padding: usize,
    pub transposed: bool,
    /// Spatial output of a transposed layer; `None` means
    /// `(H - 1) s - 2p + k`.
    pub output_size: Option<(usize, usize)>,
}

impl ConvSpec {
    pub fn conv(kernel: Tensor4, stride: usize, padding: usize) -> Result<Self> {
        let bias = Tensor4::zeros([1, kernel.batch(), 1, 1]);
        Self::checked(kernel, bias, stride, padding, false, None)
    }

    pub fn conv_transpose(
        kernel: Tensor4,
        stride: usize,
        padding: usize,
        output_size: Option<(usize, usize)>,
    ) -> Result<Self> {
        let bias = Tensor4::zeros([1, kernel.channels(), 1, 1]);
        Self::checked(kernel, bias, stride, padding, true, output_size)
    }

    fn checked(
        kernel: Tensor4,
        bias: Tensor4,
        stride: usize,
        padding: usize,
        transposed: bool,
        output_size: Option<(usize, usize)>,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if kernel.dims().contains(&0) {
            return Err(Error::invalid(format!("kernel dims {:?} must be positive", kernel.dims())));
        }
        Ok(Self {
            kernel,
            bias,
            stride,
            padding,
            transposed,
            output_size,
        })
    }

    pub fn kernel_hw(&self) -> (usize, usize) {
        (self.kernel.height(), self.kernel.width())
    }

    /// Channels consumed by this layer.
    pub fn in_channels(&self) -> usize {
        if self.transposed {
            self.kernel.batch()
        } else {
            self.kernel.channels()
        }
    }

    /// Channels produced by this layer.
    pub fn out_channels(&self) -> usize {
        if self.transposed {
            self.kernel.channels()
        } else {
            self.kernel.batch()
        }
    }

    /// Spatial size of the forward correlation applied to `(h, w)`.
    pub fn conv_output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel_hw();
        let (s, p) = (self.stride, self.padding);
        if h + 2 * p < kh || w + 2 * p < kw {
            return Err(Error::invalid(format!(
                "input {h}x{w} with padding {p} is smaller than the {kh}x{kw} kernel"
            )));
        }
        Ok(((h + 2 * p - kh) / s + 1, (w + 2 * p - kw) / s + 1))
    }

    /// Spatial output of this layer for input `(h, w)`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if !self.transposed {
            return self.conv_output_hw(h, w);
        }
        let target = match self.output_size {
            Some(hw) => hw,
            None => {
                let (kh, kw) = self.kernel_hw();
                let (s, p) = (self.stride, self.padding);
                let oh = ((h - 1) * s + kh).checked_sub(2 * p);
                let ow = ((w - 1) * s + kw).checked_sub(2 * p);
                match (oh, ow) {
                    (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
                    _ => return Err(Error::invalid("transposed output size is not positive")),
                }
            }
        };
        if self.conv_output_hw(target.0, target.1)? != (h, w) {
            return Err(Error::invalid(format!(
                "transposed output {target:?} does not map back to input {h}x{w}"
            )));
        }
        Ok(target)
    }
}

fn check_channels(input: &Tensor4, expected: usize) -> Result<()> {
    if input.channels() != expected {
        return Err(Error::invalid(format!(
            "channel mismatch: layer expects {expected}, input has {}",
            input.channels()
        )));
    }
    Ok(())
}

fn add_bias(out: &mut Tensor4, bias: &Tensor4) {
    let [b, c, h, w] = out.dims();
    let plane = h * w;
    let data = out.data_mut();
    for bi in 0..b {
        for ci in 0..c {
            let off = (bi * c + ci) * plane;
            let v = bias.data()[ci];
            data[off..off + plane].iter_mut().for_each(|x| *x += v);
        }
    }
}

/// Kernel taps `[lo, hi)` for which `start + tap - p` lands inside `[0, n)`.
fn tap_range(start: usize, p: usize, k: usize, n: usize) -> (usize, usize) {
    let lo = p.saturating_sub(start).min(k);
    let hi = (n + p).saturating_sub(start).min(k);
    (lo, hi.max(lo))
}

/// Forward correlation: `big (B, c_in, H, W)` to `small (B, c_out, Ho, Wo)`.
fn correlate(big: &Tensor4, kernel: &Tensor4, s: usize, p: usize, out_hw: (usize, usize)) -> Tensor4 {
    let [nb, ci, h, w] = big.dims();
    let [co, _, kh, kw] = kernel.dims();
    let (oh, ow) = out_hw;
    let mut out = Tensor4::zeros([nb, co, oh, ow]);
    let kd = kernel.data();
    let bd = big.data();
    let od = out.data_mut();
    let mut idx = 0;
    for b in 0..nb {
        for o in 0..co {
            for oy in 0..oh {
                let (m0, m1) = tap_range(oy * s, p, kh, h);
                for ox in 0..ow {
                    let (n0, n1) = tap_range(ox * s, p, kw, w);
                    let mut acc = 0.0;
                    if n0 < n1 {
                        for r in 0..ci {
                            let kbase = (o * ci + r) * kh * kw;
                            let ibase = (b * ci + r) * h * w;
                            for m in m0..m1 {
                                let row = ibase + (oy * s + m - p) * w + ox * s + n0 - p;
                                let krow = kbase + m * kw + n0;
                                for (x, k) in bd[row..row + n1 - n0].iter().zip(&kd[krow..krow + n1 - n0]) {
                                    acc += x * k;
                                }
                            }
                        }
                    }
                    od[idx] = acc;
                    idx += 1;
                }
            }
        }
    }
    out
}

fn scatter(small: &Tensor4, kernel: &Tensor4, s: usize, p: usize, big_hw: (usize, usize)) -> Tensor4 {
    let [nb, co, oh, ow] = small.dims();
    let [_, ci, kh, kw] = kernel.dims();
    let (h, w) = big_hw;
    let mut out = Tensor4::zeros([nb, ci, h, w]);
    let kd = kernel.data();
    let sd = small.data();
    let od = out.data_mut();
    for b in 0..nb {
        for o in 0..co {
            for oy in 0..oh {
                let (m0, m1) = tap_range(oy * s, p, kh, h);
                for ox in 0..ow {
                    let g = sd[((b * co + o) * oh + oy) * ow + ox];
                    let (n0, n1) = tap_range(ox * s, p, kw, w);
                    if g == 0.0 || n0 == n1 {
                        continue;
                    }
                    for r in 0..ci {
                        let kbase = (o * ci + r) * kh * kw;
                        let ibase = (b * ci + r) * h * w;
                        for m in m0..m1 {
                            let row = ibase + (oy * s + m - p) * w + ox * s + n0 - p;
                            let krow = kbase + m * kw + n0;
                            for (d, k) in od[row..row + n1 - n0].iter_mut().zip(&kd[krow..krow + n1 - n0]) {
                                *d += g * k;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn accumulate_kernel_grad(big: &Tensor4, small: &Tensor4, s: usize, p: usize, grad: &mut [f64], kdims: [usize; 4]) {
    let [nb, ci, h, w] = big.dims();
    let [_, co, oh, ow] = small.dims();
    let [_, _, kh, kw] = kdims;
    let bd = big.data();
    let sd = small.data();
    for o in 0..co {
        for r in 0..ci {
            for m in 0..kh {
                for n in 0..kw {
                    let mut acc = 0.0;
                    for b in 0..nb {
                        let ibase = (b * ci + r) * h * w;
                        let sbase = (b * co + o) * oh * ow;
                        for oy in 0..oh {
                            let y = (oy * s + m) as isize - p as isize;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            for ox in 0..ow {
                                let x = (ox * s + n) as isize - p as isize;
                                if x < 0 || x >= w as isize {
                                    continue;
                                }
                                acc += sd[sbase + oy * ow + ox] * bd[ibase + y as usize * w + x as usize];
                            }
                        }
                    }
                    grad[((o * ci + r) * kh + m) * kw + n] += acc;
                }
            }
        }
    }
}

fn accumulate_bias_grad(grad_out: &Tensor4, grad: &mut [f64]) {
    let [b, c, h, w] = grad_out.dims();
    let plane = h * w;
    for bi in 0..b {
        for (ci, g) in grad.iter_mut().enumerate().take(c) {
            let off = (bi * c + ci) * plane;
            *g += grad_out.data()[off..off + plane].iter().sum::<f64>();
        }
    }
}

/// Strided, zero-padded correlation with the spec's kernel. The bias is
/// added unless the spec is a transposed layer.
pub fn conv2d(input: &Tensor4, spec: &ConvSpec) -> Result<Tensor4> {
    check_channels(input, spec.kernel.channels())?;
    let hw = spec.conv_output_hw(input.height(), input.width())?;
    let mut out = correlate(input, &spec.kernel, spec.stride, spec.padding, hw);
    if !spec.transposed {
        add_bias(&mut out, &spec.bias);
    }
    Ok(out)
}

/// Adjoint of [`conv2d`] with the spec's output size. The bias is added
/// only for transposed specs.
pub fn conv2d_transpose(input: &Tensor4, spec: &ConvSpec) -> Result<Tensor4> {
    let target = if spec.transposed {
        spec.output_hw(input.height(), input.width())?
    } else {
        let probe = ConvSpec {
            transposed: true,
            ..spec.clone()
        };
        probe.output_hw(input.height(), input.width())?
    };
    conv2d_transpose_to(input, spec, target)
}

/// Adjoint of [`conv2d`] onto an explicit spatial size, which must map back
/// to the input's size under the forward correlation.
pub fn conv2d_transpose_to(input: &Tensor4, spec: &ConvSpec, hw: (usize, usize)) -> Result<Tensor4> {
    check_channels(input, spec.kernel.batch())?;
    if spec.conv_output_hw(hw.0, hw.1)? != (input.height(), input.width()) {
        return Err(Error::invalid(format!(
            "transposed output {hw:?} does not map back to input {}x{}",
            input.height(),
            input.width()
        )));
    }
    let mut out = scatter(input, &spec.kernel, spec.stride, spec.padding, hw);
    if spec.transposed {
        add_bias(&mut out, &spec.bias);
    }
    Ok(out)
}

/// Applies the layer in its own direction.
pub(crate) fn apply(spec: &ConvSpec, input: &Tensor4) -> Result<Tensor4> {
    if spec.transposed {
        conv2d_transpose(input, spec)
    } else {
        conv2d(input, spec)
    }
}

/// Accumulates kernel and bias gradients into the spec and returns the
/// gradient with respect to `input`.
pub(crate) fn backward(spec: &mut ConvSpec, input: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    let (s, p) = (spec.stride, spec.padding);
    let kdims = spec.kernel.dims();
    accumulate_bias_grad(grad_out, spec.bias.grad_mut());
    if spec.transposed {
        let hw = (input.height(), input.width());
        accumulate_kernel_grad(grad_out, input, s, p, spec.kernel.grad_mut(), kdims);
        correlate(grad_out, &spec.kernel, s, p, hw)
    } else {
        accumulate_kernel_grad(input, grad_out, s, p, spec.kernel.grad_mut(), kdims);
        scatter(grad_out, &spec.kernel, s, p, (input.height(), input.width()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
        let n = dims.iter().product();
        Tensor4::from_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random([2, 1, 5, 4], &mut rng);
        let k = Tensor4::from_vec([1, 1, 1, 1], vec![1.0]).unwrap();
        let spec = ConvSpec::conv(k.clone(), 1, 0).unwrap();
        assert_eq!(conv2d(&x, &spec).unwrap(), x);
        let t = ConvSpec::conv_transpose(k, 1, 0, None).unwrap();
        assert_eq!(conv2d_transpose(&x, &t).unwrap(), x);
    }

    #[test]
    fn window_sums() {
        let x = Tensor4::from_vec([1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let spec = ConvSpec::conv(Tensor4::from_vec([1, 1, 2, 2], vec![1.0; 4]).unwrap(), 1, 0).unwrap();
        let y = conv2d(&x, &spec).unwrap();
        assert_eq!(y.dims(), [1, 1, 2, 2]);
        for i in 0..2 {
            for j in 0..2 {
                let mut sum = 0.0;
                for m in 0..2 {
                    for n in 0..2 {
                        sum += x.get(0, 0, i + m, j + n);
                    }
                }
                assert_eq!(y.get(0, 0, i, j), sum);
            }
        }
    }

    #[test]
    fn first_encoder_layer_shape() {
        let x = Tensor4::zeros([1, 3, 14, 14]);
        let spec = ConvSpec::conv(Tensor4::zeros([8, 3, 5, 5]), 1, 2).unwrap();
        assert_eq!(conv2d(&x, &spec).unwrap().dims(), [1, 8, 14, 14]);
    }

    #[test]
    fn strided_decoder_layer_shape() {
        let x = Tensor4::zeros([1, 32, 8, 8]);
        let spec = ConvSpec::conv_transpose(Tensor4::zeros([32, 16, 5, 5]), 3, 6, None).unwrap();
        assert_eq!(conv2d_transpose(&x, &spec).unwrap().dims(), [1, 16, 14, 14]);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor4::zeros([1, 2, 4, 4]);
        let spec = ConvSpec::conv(Tensor4::zeros([1, 3, 3, 3]), 1, 1).unwrap();
        assert!(matches!(conv2d(&x, &spec), Err(Error::InvalidArgument(_))));
        assert!(ConvSpec::conv(Tensor4::zeros([1, 3, 3, 3]), 0, 1).is_err());
    }

    #[test]
    fn transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(ci, co, h, k, s, p) in &[(2, 3, 7, 3, 2, 1), (1, 2, 6, 4, 3, 2), (3, 1, 5, 5, 1, 2)] {
            let spec = ConvSpec::conv(random([co, ci, k, k], &mut rng), s, p).unwrap();
            let x = random([2, ci, h, h], &mut rng);
            let (oh, ow) = spec.conv_output_hw(h, h).unwrap();
            let y = random([2, co, oh, ow], &mut rng);
            let lhs = conv2d(&x, &spec).unwrap().dot(&y);
            let rhs = x.dot(&conv2d_transpose_to(&y, &spec, (h, h)).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn padding_wider_than_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spec = ConvSpec::conv(random([2, 2, 3, 3], &mut rng), 3, 4).unwrap();
        let x = random([1, 2, 5, 5], &mut rng);
        let (oh, ow) = spec.conv_output_hw(5, 5).unwrap();
        let y = conv2d(&x, &spec).unwrap();
        for o in 0..2 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut want = 0.0;
                    for r in 0..2 {
                        for m in 0..3 {
                            for n in 0..3 {
                                let (iy, ix) = ((oy * 3 + m) as isize - 4, (ox * 3 + n) as isize - 4);
                                if (0..5).contains(&iy) && (0..5).contains(&ix) {
                                    want += x.get(0, r, iy as usize, ix as usize) * spec.kernel.get(o, r, m, n);
                                }
                            }
                        }
                    }
                    assert!((y.get(0, o, oy, ox) - want).abs() < 1e-14);
                }
            }
        }
        let back = conv2d_transpose_to(&y, &spec, (5, 5)).unwrap();
        assert!((conv2d(&x, &spec).unwrap().dot(&y) - x.dot(&back)).abs() < 1e-12 * y.dot(&y));
    }

    #[test]
    fn bad_transposed_size_rejected() {
        let spec = ConvSpec::conv_transpose(Tensor4::zeros([2, 2, 3, 3]), 2, 1, Some((9, 9))).unwrap();
        assert!(conv2d_transpose(&Tensor4::zeros([1, 2, 3, 3]), &spec).is_err());
    }
}
