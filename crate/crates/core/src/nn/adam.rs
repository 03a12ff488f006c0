use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// Moment buffers and step counter of the Adam optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates tensors in place from their gradient buffers.
    pub fn update(&mut self, params: &mut [&mut Tensor4], lr: f64) -> Result<()> {
        let mut values = Vec::with_capacity(params.len());
        let mut grads = Vec::with_capacity(params.len());
        for p in params.iter_mut() {
            let (v, g) = p.split_grad();
            values.push(v);
            grads.push(g);
        }
        adam_step(&mut values, &grads, self, lr)
    }
}

/// One bias-corrected Adam update. Nothing is modified when any gradient
/// is non-finite.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::invalid(format!(
            "adam: {} parameter groups, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::invalid(format!("adam: group {i} shape mismatch")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged {
                epoch: state.t as usize,
                message: format!("non-finite gradient in parameter group {i}"),
            });
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            p[k] -= lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(&[2]);
        adam_step(&mut [&mut p], &[&[0.0, 0.0]], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        let g = [0.3, -4.0, 1e-9];
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(&[3]);
        adam_step(&mut [&mut p], &[&g], &mut s, 1e-3).unwrap();
        for k in 0..3 {
            // m̂ = g and v̂ = g² after one step.
            let expect = -1e-3 * g[k] / (g[k].abs() + 1e-8);
            assert!((p[k] - expect).abs() < 1e-18, "{} {}", p[k], expect);
        }
    }

    #[test]
    fn quadratic_bowl_descends() {
        let center = [1.5, -0.5];
        let loss = |p: &[f64]| (p[0] - center[0]).powi(2) + 3.0 * (p[1] - center[1]).powi(2);
        let mut p = vec![-1.0, 2.0];
        let mut s = AdamState::new(&[2]);
        let mut prev = loss(&p);
        for _ in 0..10 {
            let g = [2.0 * (p[0] - center[0]), 6.0 * (p[1] - center[1])];
            adam_step(&mut [&mut p], &[&g], &mut s, 0.1).unwrap();
            let l = loss(&p);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(&[1]);
        let r = adam_step(&mut [&mut p], &[&[f64::NAN]], &mut s, 0.1);
        assert!(matches!(r, Err(Error::TrainingDiverged { .. })));
        assert_eq!(p, vec![1.0]);
    }
}
