use super::spline::{fit_curve, Curve, SplineSystem};
use crate::error::{Error, Result};

/// Cardinal interpolants `ℓ_k` on a knot set, so any interpolant through
/// values `y` evaluates as `Σ_k ℓ_k(x) y_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CardinalBasis {
    knots: Vec<f64>,
    curves: Vec<Curve>,
}

impl CardinalBasis {
    pub fn new(knots: &[f64]) -> Result<Self> {
        let n = knots.len();
        let mut unit = vec![0.0; n];
        let curves = if n >= 4 {
            let system = SplineSystem::new(knots)?;
            (0..n)
                .map(|k| {
                    unit.iter_mut().enumerate().for_each(|(i, u)| *u = f64::from(u8::from(i == k)));
                    system.fit(&unit).map(Curve::Spline)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            (0..n)
                .map(|k| {
                    unit.iter_mut().enumerate().for_each(|(i, u)| *u = f64::from(u8::from(i == k)));
                    fit_curve(knots, &unit)
                })
                .collect::<Result<Vec<_>>>()?
        };
        if curves.is_empty() {
            return Err(Error::invalid("empty knot set"));
        }
        Ok(Self {
            knots: knots.to_vec(),
            curves,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.knots[0] && x <= self.knots[self.knots.len() - 1]
    }

    pub fn weights(&self, x: f64) -> Vec<f64> {
        self.curves.iter().map(|c| c.eval(x)).collect()
    }
}

/// Tensor grid of per-dimension knots; flat index has the last dimension
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    axes: Vec<CardinalBasis>,
}

impl TensorGrid {
    pub fn new(axes: &[Vec<f64>]) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("tensor grid needs at least one dimension"));
        }
        Ok(Self {
            axes: axes.iter().map(|a| CardinalBasis::new(a)).collect::<Result<_>>()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> Vec<Vec<f64>> {
        self.axes.iter().map(|a| a.knots().to_vec()).collect()
    }

    pub fn num_points(&self) -> usize {
        self.axes.iter().map(CardinalBasis::len).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(a, &v)| a.contains(v))
    }

    /// Kronecker product of the per-dimension cardinal weights at `x`.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, grid has {} dimensions",
                x.len(),
                self.dim()
            )));
        }
        let mut w = vec![1.0];
        for (axis, &v) in self.axes.iter().zip(x) {
            let a = axis.weights(v);
            let mut next = Vec::with_capacity(w.len() * a.len());
            for &p in &w {
                next.extend(a.iter().map(|q| p * q));
            }
            w = next;
        }
        Ok(w)
    }
}

/// Values on a full tensor grid, interpolated dimension by dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorInterpolant {
    pub grid: TensorGrid,
    pub values: Vec<f64>,
}

impl TensorInterpolant {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let w = self.grid.weights(x)?;
        Ok(w.iter().zip(&self.values).map(|(a, b)| a * b).sum())
    }
}

pub fn fit_tensor_product(axes: &[Vec<f64>], values: &[f64]) -> Result<TensorInterpolant> {
    let grid = TensorGrid::new(axes)?;
    if values.len() != grid.num_points() {
        return Err(Error::invalid(format!(
            "{} values for a grid of {} points",
            values.len(),
            grid.num_points()
        )));
    }
    Ok(TensorInterpolant {
        grid,
        values: values.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64).collect()
    }

    fn grid_values(axes: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut idx = vec![0; axes.len()];
        loop {
            let p: Vec<f64> = idx.iter().zip(axes).map(|(&i, a)| a[i]).collect();
            out.push(f(&p));
            let mut d = axes.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    #[test]
    fn separable_cubic_is_exact() {
        let axes = vec![axis(5, -1.0, 2.0), axis(6, 0.0, 1.0)];
        let g = |x: f64| 1.0 - x + 0.5 * x * x * x;
        let h = |y: f64| 2.0 + y * y - y * y * y;
        let f = |p: &[f64]| g(p[0]) * h(p[1]);
        let it = fit_tensor_product(&axes, &grid_values(&axes, f)).unwrap();
        for &(x, y) in &[(0.3, 0.7), (-0.9, 0.05), (1.99, 0.5)] {
            assert!((it.eval(&[x, y]).unwrap() - f(&[x, y])).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_and_degraded_axes() {
        let axes = vec![axis(3, 0.0, 1.0), axis(2, 0.0, 1.0), axis(1, 0.5, 0.5)];
        let it = fit_tensor_product(&axes, &[4.25; 6]).unwrap();
        assert!((it.eval(&[0.3, 0.9, 0.1]).unwrap() - 4.25).abs() < 1e-14);
        let q = |p: &[f64]| p[0] * p[0] + 3.0 * p[1];
        let it = fit_tensor_product(&axes, &grid_values(&axes, q)).unwrap();
        assert!((it.eval(&[0.4, 0.2, 0.5]).unwrap() - q(&[0.4, 0.2])).abs() < 1e-13);
    }

    #[test]
    fn runge_type_4d() {
        let axes: Vec<Vec<f64>> = (0..4).map(|_| axis(5, -1.0, 1.0)).collect();
        let f = |p: &[f64]| 1.0 / (1.0 + p.iter().map(|v| v * v).sum::<f64>());
        let it = fit_tensor_product(&axes, &grid_values(&axes, f)).unwrap();
        let dense = axis(9, -1.0, 1.0);
        let mut worst: f64 = 0.0;
        for &a in &dense {
            for &b in &dense {
                for &c in &dense {
                    for &d in &dense {
                        let p = [a, b, c, d];
                        worst = worst.max((it.eval(&p).unwrap() - f(&p)).abs() / f(&p));
                    }
                }
            }
        }
        assert!(worst <= 5e-2, "{worst}");
    }

    #[test]
    fn dimension_order_invariance() {
        let axes = vec![axis(4, 0.0, 1.0), axis(5, -1.0, 1.0), axis(3, 2.0, 3.0)];
        let f = |p: &[f64]| (p[0] * 3.0).sin() + p[1] * p[2] + (p[2] - p[0]).exp();
        let it = fit_tensor_product(&axes, &grid_values(&axes, f)).unwrap();
        let perm = [2, 0, 1];
        let paxes: Vec<Vec<f64>> = perm.iter().map(|&d| axes[d].clone()).collect();
        let pf = |q: &[f64]| {
            let mut p = [0.0; 3];
            for (k, &d) in perm.iter().enumerate() {
                p[d] = q[k];
            }
            f(&p)
        };
        let pit = fit_tensor_product(&paxes, &grid_values(&paxes, pf)).unwrap();
        let x = [0.37, 0.21, 2.4];
        let px: Vec<f64> = perm.iter().map(|&d| x[d]).collect();
        assert!((it.eval(&x).unwrap() - pit.eval(&px).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(fit_tensor_product(&[axis(4, 0.0, 1.0)], &[0.0; 3]).is_err());
        let it = fit_tensor_product(&[axis(4, 0.0, 1.0)], &[0.0; 4]).unwrap();
        assert!(it.eval(&[0.1, 0.2]).is_err());
    }
}
