use super::matrix::Matrix;
use crate::error::{Error, Result};

/// LU factorization with partial pivoting of a small dense square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    factors: Matrix,
    pivots: Vec<usize>,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid("lu: matrix must be square"));
        }
        let n = a.rows();
        let mut f = a.clone();
        let mut pivots = (0..n).collect::<Vec<_>>();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, f[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= 1e-14 * scale {
                return Err(Error::invalid(format!("lu: matrix is singular at column {k}")));
            }
            if p != k {
                pivots.swap(p, k);
                for j in 0..n {
                    let tmp = f[(p, j)];
                    f[(p, j)] = f[(k, j)];
                    f[(k, j)] = tmp;
                }
            }
            let d = f[(k, k)];
            for i in k + 1..n {
                let l = f[(i, k)] / d;
                f[(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        let u = f[(k, j)];
                        f[(i, j)] -= l * u;
                    }
                }
            }
        }
        Ok(Self { factors: f, pivots })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.factors.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.pivots.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.factors[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.factors[(i, j)] * x[j];
            }
            x[i] = s / self.factors[(i, i)];
        }
        x
    }
}

pub fn invert(a: &Matrix) -> Result<Matrix> {
    let lu = Lu::new(a)?;
    let n = a.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        inv.col_mut(j).copy_from_slice(&lu.solve(&e));
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_small_matrix() {
        let a = Matrix::from_rows(&[&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], &[3.0, 0.0, 1.0]]);
        let inv = invert(&a).unwrap();
        let id = a.matmul(&inv).unwrap();
        assert!(id.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn singular_is_rejected() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(invert(&a).is_err());
    }
}
