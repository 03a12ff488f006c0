use super::matrix::{axpy, dot, fix_sign, norm2, Matrix};
use super::qr::{householder_qr, orthonormalize_columns};
use crate::error::{Error, Result};

/// Relative cutoff `σ_i > RANK_TOL · σ_1` that defines numerical rank.
pub const RANK_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U Σ Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `rows × min(rows, cols)`, orthonormal columns.
    pub left_vectors: Matrix,
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    /// `cols × min(rows, cols)`, orthonormal columns.
    pub right_vectors: Matrix,
}

impl SvdResult {
    /// Number of singular values above `RANK_TOL · σ₁`.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values)
    }

    /// `U Σ Vᵀ`, optionally truncated to the leading `k` triplets.
    pub fn reconstruct(&self, k: Option<usize>) -> Matrix {
        let k = k.unwrap_or(self.singular_values.len());
        let mut us = self.left_vectors.leading_cols(k);
        for j in 0..k {
            let s = self.singular_values[j];
            us.col_mut(j).iter_mut().for_each(|v| *v *= s);
        }
        us.matmul(&self.right_vectors.leading_cols(k).transpose())
            .expect("consistent factor shapes")
    }
}

pub fn numerical_rank(singular_values: &[f64]) -> usize {
    match singular_values.first() {
        Some(&s1) if s1 > 0.0 => singular_values
            .iter()
            .take_while(|&&s| s > RANK_TOL * s1)
            .count(),
        _ => 0,
    }
}

/// Thin SVD by Householder QR followed by one-sided (Hestenes) Jacobi on the
/// triangular factor. Left vectors are sign-fixed so that their
/// largest-magnitude entry is positive; right vectors follow.
pub fn svd_thin(a: &Matrix) -> Result<SvdResult> {
    if a.is_empty() {
        return Err(Error::invalid("svd_thin: empty matrix"));
    }
    if !a.all_finite() {
        return Err(Error::invalid("svd_thin: non-finite entry"));
    }
    if a.rows() < a.cols() {
        let t = svd_thin(&a.transpose())?;
        let mut out = SvdResult {
            left_vectors: t.right_vectors,
            singular_values: t.singular_values,
            right_vectors: t.left_vectors,
        };
        for j in 0..out.singular_values.len() {
            if fix_sign(out.left_vectors.col_mut(j)) {
                out.right_vectors.col_mut(j).iter_mut().for_each(|v| *v = -*v);
            }
        }
        return Ok(out);
    }

    let n = a.cols();
    let (q, r) = if a.rows() > n {
        let (q, r) = householder_qr(a);
        (Some(q), r)
    } else {
        (None, a.clone())
    };

    let (mut w, mut v) = one_sided_jacobi(r)?;

    // singular values are the column norms after orthogonalization
    let mut sigma: Vec<f64> = (0..n).map(|j| norm2(w.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    sigma = order.iter().map(|&i| sigma[i]).collect();
    let w_sorted = Matrix::from_fn(n, n, |i, j| w[(i, order[j])]);
    let v_sorted = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    w = w_sorted;
    v = v_sorted;

    let rank = numerical_rank(&sigma);
    for j in 0..n {
        let s = sigma[j];
        let col = w.col_mut(j);
        if j < rank {
            col.iter_mut().for_each(|e| *e /= s);
        } else {
            col.iter_mut().for_each(|e| *e = 0.0);
        }
    }
    // tidy orthogonality of weakly determined columns and complete the null part
    let u_small = orthonormalize_columns(&w);
    let mut u = match q {
        Some(q) => q.matmul(&u_small)?,
        None => u_small,
    };

    for j in 0..n {
        if fix_sign(u.col_mut(j)) {
            v.col_mut(j).iter_mut().for_each(|e| *e = -*e);
        }
    }
    Ok(SvdResult {
        left_vectors: u,
        singular_values: sigma,
        right_vectors: v,
    })
}

/// Orthogonalizes the columns of `w` in place by plane rotations, returning
/// `(W·J, J)` where `J` accumulates the rotations.
fn one_sided_jacobi(mut w: Matrix) -> Result<(Matrix, Matrix)> {
    let n = w.cols();
    let mut v = Matrix::identity(n);
    let tol = 1e-15;
    for sweep in 0..MAX_SWEEPS {
        let mut max_coupling: f64 = 0.0;
        // squared column norms, refreshed once per sweep and updated per rotation
        let mut norms: Vec<f64> = (0..n).map(|j| dot(w.col(j), w.col(j))).collect();
        // columns below roundoff of the largest one carry no information
        let floor = norms.iter().copied().fold(0.0, f64::max) * 1e-32;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                let gamma = dot(w.col(p), w.col(q));
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let coupling = gamma.abs() / alpha.sqrt() / beta.sqrt();
                max_coupling = max_coupling.max(coupling);
                if coupling <= tol {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        if max_coupling <= tol {
            return Ok((w, v));
        }
        if sweep + 1 == MAX_SWEEPS && max_coupling > 1e-12 {
            return Err(Error::ConvergenceFailure {
                iterations: MAX_SWEEPS,
                residual: max_coupling,
            });
        }
    }
    Ok((w, v))
}

#[inline]
fn rotate_pair(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    let data = m.as_mut_slice();
    let (left, right) = data.split_at_mut(q * rows);
    let cp = &mut left[p * rows..(p + 1) * rows];
    let cq = &mut right[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Sum of squared residual norms `Σ_i ‖A(:,i) − V Vᵀ A(:,i)‖²` for a basis
/// `V` with orthonormal columns.
pub fn projection_error_sq(a: &Matrix, v: &Matrix) -> Result<f64> {
    if a.rows() != v.rows() {
        return Err(Error::invalid("projection_error_sq: row mismatch"));
    }
    let mut total = 0.0;
    let mut r = vec![0.0; a.rows()];
    for j in 0..a.cols() {
        r.copy_from_slice(a.col(j));
        for _pass in 0..2 {
            for i in 0..v.cols() {
                let c = dot(v.col(i), &r);
                axpy(-c, v.col(i), &mut r);
            }
        }
        total += dot(&r, &r);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eig::eig_sym;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn assert_orthonormal(m: &Matrix, tol: f64) {
        let g = m.t_matmul(m).unwrap();
        let err = g.sub(&Matrix::identity(m.cols())).unwrap().max_abs();
        assert!(err < tol, "orthonormality error {err}");
    }

    #[test]
    fn rank_one_has_one_singular_value() {
        let u = [1.0, 2.0, -1.0, 0.5];
        let v = [3.0, -1.0, 2.0];
        let a = Matrix::from_fn(4, 3, |i, j| u[i] * v[j]);
        let svd = svd_thin(&a).unwrap();
        let s1 = svd.singular_values[0];
        let above = svd.singular_values.iter().filter(|&&s| s > 1e-12 * s1).count();
        assert_eq!(above, 1);
        assert_eq!(svd.rank(), 1);
        assert_orthonormal(&svd.left_vectors, 1e-10);
        assert_orthonormal(&svd.right_vectors, 1e-10);
        assert!(svd.reconstruct(None).sub(&a).unwrap().frobenius_norm() <= 1e-9 * a.frobenius_norm());
    }

    #[test]
    fn orthogonal_matrix_has_unit_singular_values() {
        let (q, _) = householder_qr(&random(6, 6, 11));
        let svd = svd_thin(&q).unwrap();
        for s in &svd.singular_values {
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn random_tall_matches_gram_oracle() {
        let a = random(12, 7, 5);
        let svd = svd_thin(&a).unwrap();
        let recon = svd.reconstruct(None);
        assert!(recon.sub(&a).unwrap().frobenius_norm() <= 1e-9 * a.frobenius_norm());
        // independent route: eigenvalues of AᵀA are σ²
        let (lam, _) = eig_sym(&a.t_matmul(&a).unwrap()).unwrap();
        for (s, l) in svd.singular_values.iter().zip(&lam) {
            assert!((s * s - l).abs() <= 1e-12 * lam[0], "{s} vs sqrt({l})");
        }
        assert_orthonormal(&svd.left_vectors, 1e-10);
        assert_orthonormal(&svd.right_vectors, 1e-10);
    }

    #[test]
    fn transpose_has_same_spectrum() {
        let a = random(9, 5, 8);
        let s1 = svd_thin(&a).unwrap();
        let s2 = svd_thin(&a.transpose()).unwrap();
        for (x, y) in s1.singular_values.iter().zip(&s2.singular_values) {
            assert!((x - y).abs() <= 1e-12 * s1.singular_values[0]);
        }
        let wide = svd_thin(&a.transpose()).unwrap();
        assert_eq!(wide.left_vectors.shape(), (5, 5));
        assert_eq!(wide.right_vectors.shape(), (9, 5));
    }

    #[test]
    fn rank_deficient_left_vectors_are_completed() {
        let b = random(10, 2, 2);
        let c = random(2, 6, 3);
        let a = b.matmul(&c).unwrap();
        let svd = svd_thin(&a).unwrap();
        assert_eq!(svd.rank(), 2);
        assert_orthonormal(&svd.left_vectors, 1e-10);
        assert!(svd.reconstruct(None).sub(&a).unwrap().frobenius_norm() <= 1e-9 * a.frobenius_norm());
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(svd_thin(&Matrix::zeros(0, 3)), Err(Error::InvalidArgument(_))));
    }
}
