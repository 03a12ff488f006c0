use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};

fn check_knots(knots: &[f64]) -> Result<()> {
    if knots.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("knots must be finite"));
    }
    if let Some(w) = knots.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "knots must be strictly increasing, found {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Index of the interval holding `x`, clamped to the end pieces.
fn interval(knots: &[f64], x: f64) -> usize {
    let n = knots.len() - 1;
    knots.partition_point(|&k| k <= x).saturating_sub(1).min(n - 1)
}

/// Factored not-a-knot system for a fixed set of knots, reusable across
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct SplineSystem {
    knots: Vec<f64>,
    lu: Lu,
}

impl SplineSystem {
    pub fn new(knots: &[f64]) -> Result<Self> {
        check_knots(knots)?;
        if knots.len() < 4 {
            return Err(Error::InsufficientData(format!(
                "not-a-knot spline needs at least 4 knots, got {}",
                knots.len()
            )));
        }
        let n = knots.len() - 1;
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        // unknowns are the second derivatives M_0..M_n
        let mut a = Matrix::zeros(n + 1, n + 1);
        a[(0, 0)] = h[1];
        a[(0, 1)] = -(h[0] + h[1]);
        a[(0, 2)] = h[0];
        for i in 1..n {
            a[(i, i - 1)] = h[i - 1];
            a[(i, i)] = 2.0 * (h[i - 1] + h[i]);
            a[(i, i + 1)] = h[i];
        }
        a[(n, n - 2)] = h[n - 1];
        a[(n, n - 1)] = -(h[n - 2] + h[n - 1]);
        a[(n, n)] = h[n - 2];
        Ok(Self {
            knots: knots.to_vec(),
            lu: Lu::new(&a)?,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn fit(&self, values: &[f64]) -> Result<Spline1D> {
        let x = &self.knots;
        if values.len() != x.len() {
            return Err(Error::invalid(format!(
                "{} values for {} knots",
                values.len(),
                x.len()
            )));
        }
        let n = x.len() - 1;
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut rhs = vec![0.0; n + 1];
        for i in 1..n {
            rhs[i] = 6.0 * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
        }
        let m = self.lu.solve(&rhs);
        let coeffs = (0..n)
            .map(|i| {
                let slope = (values[i + 1] - values[i]) / h[i];
                [
                    values[i],
                    slope - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0,
                    m[i] / 2.0,
                    (m[i + 1] - m[i]) / (6.0 * h[i]),
                ]
            })
            .collect();
        Ok(Spline1D {
            knots: x.clone(),
            values: values.to_vec(),
            coeffs,
        })
    }
}

/// Piecewise cubic with `S_i(x) = a + b (x - x_i) + c (x - x_i)² + d (x - x_i)³`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline1D {
    knots: Vec<f64>,
    values: Vec<f64>,
    coeffs: Vec<[f64; 4]>,
}

impl Spline1D {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coeffs
    }

    /// Value outside the knot span comes from the boundary cubic.
    pub fn eval(&self, x: f64) -> f64 {
        let i = interval(&self.knots, x);
        if x == self.knots[i] {
            return self.values[i];
        }
        if x == self.knots[i + 1] {
            return self.values[i + 1];
        }
        let [a, b, c, d] = self.coeffs[i];
        let t = x - self.knots[i];
        a + t * (b + t * (c + t * d))
    }

    /// Derivative of order 0 to 3 of the piece owning `x`; `piece` overrides
    /// the owner, which matters exactly at knots.
    pub fn derivative(&self, x: f64, order: usize, piece: Option<usize>) -> f64 {
        let i = piece.unwrap_or_else(|| interval(&self.knots, x));
        let [a, b, c, d] = self.coeffs[i];
        let t = x - self.knots[i];
        match order {
            0 => a + t * (b + t * (c + t * d)),
            1 => b + t * (2.0 * c + 3.0 * t * d),
            2 => 2.0 * c + 6.0 * t * d,
            3 => 6.0 * d,
            _ => 0.0,
        }
    }
}

pub fn fit_spline_1d(knots: &[f64], values: &[f64]) -> Result<Spline1D> {
    SplineSystem::new(knots)?.fit(values)
}

pub fn eval_spline(spline: &Spline1D, x: f64) -> f64 {
    spline.eval(x)
}

/// Interpolant of the highest order the knot count supports: not-a-knot
/// cubic from 4 knots, otherwise the polynomial through all knots.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    Spline(Spline1D),
    Polynomial { knots: Vec<f64>, values: Vec<f64> },
}

impl Curve {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Curve::Spline(s) => s.eval(x),
            Curve::Polynomial { knots, values } => lagrange(knots, values, x),
        }
    }

    pub fn span(&self) -> (f64, f64) {
        let k = match self {
            Curve::Spline(s) => s.knots(),
            Curve::Polynomial { knots, .. } => knots,
        };
        (k[0], k[k.len() - 1])
    }
}

fn lagrange(knots: &[f64], values: &[f64], x: f64) -> f64 {
    let mut sum = 0.0;
    for (i, (&xi, &yi)) in knots.iter().zip(values).enumerate() {
        if x == xi {
            return yi;
        }
        let mut l = 1.0;
        for (j, &xj) in knots.iter().enumerate() {
            if i != j {
                l *= (x - xj) / (xi - xj);
            }
        }
        sum += l * yi;
    }
    sum
}

pub fn fit_curve(knots: &[f64], values: &[f64]) -> Result<Curve> {
    check_knots(knots)?;
    if knots.is_empty() || values.len() != knots.len() {
        return Err(Error::invalid(format!(
            "{} values for {} knots",
            values.len(),
            knots.len()
        )));
    }
    if knots.len() >= 4 {
        Ok(Curve::Spline(fit_spline_1d(knots, values)?))
    } else {
        Ok(Curve::Polynomial {
            knots: knots.to_vec(),
            values: values.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cubic(c: [f64; 4], x: f64) -> f64 {
        c[0] + x * (c[1] + x * (c[2] + x * c[3]))
    }

    #[test]
    fn sine_on_nine_knots_matches_reference() {
        let knots: Vec<f64> = (0..9).map(|i| i as f64 * std::f64::consts::TAU / 8.0).collect();
        let s = fit_spline_1d(&knots, &knots.iter().map(|x| x.sin()).collect::<Vec<_>>()).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=2000 {
            let x = i as f64 * std::f64::consts::TAU / 2000.0;
            worst = worst.max((s.eval(x) - x.sin()).abs());
        }
        // scipy.interpolate.CubicSpline on the same knots and probe grid
        assert!((worst - 7.748_695_447_939_38e-3).abs() < 1e-10, "{worst}");
    }

    #[test]
    fn linear_midpoints() {
        let knots = [0.0, 1.0, 2.5, 3.0, 4.0];
        let s = fit_spline_1d(&knots, &knots.map(|x| 2.0 * x - 1.0)).unwrap();
        assert!((s.eval(1.75) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn bad_knots() {
        assert!(matches!(fit_spline_1d(&[0.0, 1.0, 1.0, 2.0], &[0.0; 4]), Err(Error::InvalidArgument(_))));
        assert!(matches!(fit_spline_1d(&[0.0, 2.0, 1.0, 3.0], &[0.0; 4]), Err(Error::InvalidArgument(_))));
        assert!(matches!(fit_spline_1d(&[0.0, 1.0, 2.0], &[0.0; 3]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn degraded_curves() {
        let c = fit_curve(&[0.0, 1.0, 3.0], &[1.0, 0.0, 4.0]).unwrap();
        // the quadratic through the points is x² - 2x + 1
        assert!((c.eval(2.0) - 1.0).abs() < 1e-14);
        assert_eq!(fit_curve(&[2.0], &[5.0]).unwrap().eval(-7.0), 5.0);
        assert!(matches!(fit_curve(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]).unwrap(), Curve::Spline(_)));
    }

    proptest! {
        #[test]
        fn reproduces_cubics(c in prop::array::uniform4(-3.0f64..3.0), gaps in prop::collection::vec(0.1f64..1.0, 3..12)) {
            let mut knots = vec![-1.0];
            for g in &gaps {
                knots.push(knots.last().unwrap() + g);
            }
            let values: Vec<f64> = knots.iter().map(|&x| cubic(c, x)).collect();
            let s = fit_spline_1d(&knots, &values).unwrap();
            for (x, y) in knots.iter().zip(&values) {
                prop_assert_eq!(s.eval(*x), *y);
            }
            let (lo, hi) = (knots[0], *knots.last().unwrap());
            for i in 0..=100 {
                let x = lo + (hi - lo) * i as f64 / 100.0;
                prop_assert!((s.eval(x) - cubic(c, x)).abs() <= 1e-10);
            }
        }

        #[test]
        fn smoothness_at_knots(vals in prop::collection::vec(-5.0f64..5.0, 5..10)) {
            let knots: Vec<f64> = (0..vals.len()).map(|i| (i as f64).powf(1.3)).collect();
            let s = fit_spline_1d(&knots, &vals).unwrap();
            let n = knots.len() - 1;
            for i in 1..n {
                for order in 0..3 {
                    let left = s.derivative(knots[i], order, Some(i - 1));
                    let right = s.derivative(knots[i], order, Some(i));
                    prop_assert!((left - right).abs() <= 1e-9 * (1.0 + left.abs()));
                }
            }
            for i in [1, n - 1] {
                let left = s.derivative(knots[i], 3, Some(i - 1));
                let right = s.derivative(knots[i], 3, Some(i));
                prop_assert!((left - right).abs() <= 1e-9 * (1.0 + left.abs()));
            }
        }
    }
}
