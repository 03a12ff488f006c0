use super::matrix::{fix_sign, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order; eigenvector `i` is column `i`
/// of the returned matrix, sign-fixed so its largest-magnitude entry is
/// positive.
pub fn eig_sym(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "eig_sym needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.all_finite() {
        return Err(Error::invalid("eig_sym: non-finite entry"));
    }
    let n = a.rows();
    let scale = a.max_abs();
    for j in 0..n {
        for i in 0..j {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::invalid(format!(
                    "eig_sym: matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut w = a.clone();
    // symmetrize exactly so rotations act on a truly symmetric array
    for j in 0..n {
        for i in 0..j {
            let m = 0.5 * (w[(i, j)] + w[(j, i)]);
            w[(i, j)] = m;
            w[(j, i)] = m;
        }
    }
    let mut v = Matrix::identity(n);
    let total = w.frobenius_norm();
    let target = f64::EPSILON * total;

    let mut converged = n <= 1 || total == 0.0;
    let mut off;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        off = off_diagonal_norm(&w);
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                // negligible against both diagonals: drop it
                let g = 100.0 * apq.abs();
                if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    w[(p, q)] = 0.0;
                    w[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_cols(&mut w, p, q, c, s);
                rotate_rows(&mut w, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
            }
        }
    }
    if !converged {
        off = off_diagonal_norm(&w);
        if off > target * 16.0 {
            return Err(Error::ConvergenceFailure {
                iterations: MAX_SWEEPS,
                residual: off,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.col_mut(dst).copy_from_slice(v.col(src));
        fix_sign(vectors.col_mut(dst));
    }
    Ok((values, vectors))
}

fn off_diagonal_norm(w: &Matrix) -> f64 {
    let n = w.rows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += w[(i, j)] * w[(i, j)];
            }
        }
    }
    s.sqrt()
}

#[inline]
fn rotate_cols(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.rows() {
        let mp = m[(k, p)];
        let mq = m[(k, q)];
        m[(k, p)] = c * mp - s * mq;
        m[(k, q)] = s * mp + c * mq;
    }
}

#[inline]
fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.cols() {
        let mp = m[(p, k)];
        let mq = m[(q, k)];
        m[(p, k)] = c * mp - s * mq;
        m[(q, k)] = s * mp + c * mq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut a = b.clone();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = b[(i, j)] + b[(j, i)];
            }
        }
        a
    }

    #[test]
    fn diagonal_matrix() {
        let (vals, vecs) = eig_sym(&Matrix::from_diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert_eq!(vecs, Matrix::identity(3));
    }

    #[test]
    fn two_by_two_swap() {
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let (vals, vecs) = eig_sym(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-15 && (vals[1] + 1.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[(0, 0)] - h).abs() < 1e-15 && (vecs[(1, 0)] - h).abs() < 1e-15);
        // (1,-1)/sqrt2 sign-fixed: tie on magnitude, first entry wins
        assert!((vecs[(0, 1)] - h).abs() < 1e-15 && (vecs[(1, 1)] + h).abs() < 1e-15);
    }

    #[test]
    fn random_residuals_and_orthogonality() {
        for seed in 0..5 {
            let a = random_symmetric(8, seed);
            let (vals, vecs) = eig_sym(&a).unwrap();
            let norm = a.frobenius_norm();
            for k in 0..8 {
                let av = a.matvec(vecs.col(k)).unwrap();
                let r: f64 = av
                    .iter()
                    .zip(vecs.col(k))
                    .map(|(x, v)| (x - vals[k] * v).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(r <= 1e-9 * norm, "residual {r}");
            }
            assert!(vals.windows(2).all(|w| w[0] >= w[1]));
            // trace and Frobenius invariants are independent of the rotation path
            let trace: f64 = (0..8).map(|i| a[(i, i)]).sum();
            assert!((vals.iter().sum::<f64>() - trace).abs() < 1e-12 * norm);
            let sq: f64 = vals.iter().map(|l| l * l).sum();
            assert!((sq - norm * norm).abs() < 1e-12 * norm * norm);
            let vtv = vecs.t_matmul(&vecs).unwrap();
            let id = Matrix::identity(8);
            assert!(vtv.sub(&id).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            eig_sym(&Matrix::zeros(2, 3)),
            Err(Error::InvalidArgument(_))
        ));
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(eig_sym(&a), Err(Error::InvalidArgument(_))));
    }
}
