use super::matrix::{axpy, dot, norm2, Matrix};

/// Thin Householder QR of a tall matrix (`rows >= cols`): returns `(Q, R)`
/// with `Q` rows×cols orthonormal and `R` cols×cols upper triangular.
pub fn householder_qr(a: &Matrix) -> (Matrix, Matrix) {
    let (m, n) = a.shape();
    assert!(m >= n, "householder_qr expects a tall matrix");
    let mut work = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for j in 0..n {
        let x = &work.col(j)[j..];
        let xnorm = norm2(x);
        let mut v = x.to_vec();
        if xnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -xnorm } else { xnorm };
        v[0] -= alpha;
        let vnorm = norm2(&v);
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        v.iter_mut().for_each(|e| *e /= vnorm);
        for k in j..n {
            let col = &mut work.col_mut(k)[j..];
            let f = 2.0 * dot(&v, col);
            axpy(-f, &v, col);
        }
        reflectors.push(v);
    }

    let r = Matrix::from_fn(n, n, |i, k| if i <= k { work[(i, k)] } else { 0.0 });
    let mut q = Matrix::from_fn(m, n, |i, k| if i == k { 1.0 } else { 0.0 });
    for j in (0..n).rev() {
        let v = &reflectors[j];
        if v.is_empty() {
            continue;
        }
        for k in 0..n {
            let col = &mut q.col_mut(k)[j..];
            let f = 2.0 * dot(v, col);
            axpy(-f, v, col);
        }
    }
    (q, r)
}

/// Orthonormalizes the columns of `m` in order with two passes of modified
/// Gram-Schmidt. Columns that collapse numerically are replaced by unit
/// vectors orthogonal to everything before them, so the result is always a
/// full orthonormal set (requires `rows >= cols`).
pub fn orthonormalize_columns(m: &Matrix) -> Matrix {
    let (rows, cols) = m.shape();
    assert!(rows >= cols, "cannot orthonormalize more columns than rows");
    let mut q = Matrix::zeros(rows, cols);
    let mut next_canonical = 0;
    for j in 0..cols {
        let mut v = m.col(j).to_vec();
        let original = norm2(&v);
        project_out(&q, j, &mut v);
        let mut n = norm2(&v);
        if n <= 1e-13 * original.max(f64::MIN_POSITIVE) || n == 0.0 {
            // complete with a canonical direction instead
            loop {
                assert!(next_canonical < rows, "ran out of completion directions");
                v = vec![0.0; rows];
                v[next_canonical] = 1.0;
                next_canonical += 1;
                project_out(&q, j, &mut v);
                n = norm2(&v);
                if n > 1e-8 {
                    break;
                }
            }
        }
        v.iter_mut().for_each(|e| *e /= n);
        q.col_mut(j).copy_from_slice(&v);
    }
    q
}

fn project_out(q: &Matrix, upto: usize, v: &mut [f64]) {
    for _pass in 0..2 {
        for i in 0..upto {
            let c = dot(q.col(i), v);
            axpy(-c, q.col(i), v);
        }
    }
}
