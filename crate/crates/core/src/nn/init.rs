use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::Network;
use super::tensor::Tensor4;

/// Fan-in and fan-out of a weight tensor. Dense weights are `(1, 1, out,
/// in)`; kernels are `(a, b, k_h, k_w)` with fans `b k_h k_w` and `a k_h k_w`.
pub fn fans(dims: [usize; 4]) -> (usize, usize) {
    if dims[0] == 1 && dims[1] == 1 {
        (dims[3], dims[2])
    } else {
        let field = dims[2] * dims[3];
        (dims[1] * field, dims[0] * field)
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fills `t` with uniform draws on the Xavier interval, in storage order.
pub fn xavier_fill(t: &mut Tensor4, rng: &mut ChaCha8Rng) {
    let (fi, fo) = fans(t.dims());
    let b = xavier_bound(fi, fo);
    t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-b..b));
}

pub fn xavier_init(dims: [usize; 4], seed: u64) -> Tensor4 {
    let mut t = Tensor4::zeros(dims);
    xavier_fill(&mut t, &mut ChaCha8Rng::seed_from_u64(seed));
    t
}

/// Xavier weights in layer order from one stream; biases zero.
pub fn initialize(net: &mut Network, rng: &mut ChaCha8Rng) {
    // Every parametrized layer exposes (weight, bias).
    for (i, p) in net.params_mut().into_iter().enumerate() {
        if i % 2 == 1 {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        } else {
            xavier_fill(p, rng);
        }
    }
}
