use super::matrix::{axpy, Matrix};
use super::qr::orthonormalize_columns;
use super::svd::{numerical_rank, svd_thin};
use crate::error::{Error, Result};

/// Leading `k` POD modes of `a` together with the full singular-value ledger.
#[derive(Debug, Clone)]
pub struct PodModes {
    /// `rows × k`, orthonormal.
    pub basis: Matrix,
    /// All singular values of `a`, descending.
    pub singular_values: Vec<f64>,
}

/// POD basis of size `k`: with `(λ_i, u_i)` the eigenpairs of `AᵀA`, the
/// modes are `v_i = A u_i / √λ_i`.
pub fn pod_basis(a: &Matrix, k: usize) -> Result<Matrix> {
    pod_modes(a, k).map(|m| m.basis)
}

pub fn pod_modes(a: &Matrix, k: usize) -> Result<PodModes> {
    if k == 0 {
        return Err(Error::invalid("pod_basis: k must be at least 1"));
    }
    // The eigenpairs of AᵀA are the right singular pairs of A; the SVD gets
    // them without squaring the condition number.
    let svd = svd_thin(a)?;
    let rank = numerical_rank(&svd.singular_values);
    if k > rank {
        return Err(Error::RankDeficient {
            stage: None,
            requested: k,
            attainable: rank,
        });
    }
    let mut basis = Matrix::zeros(a.rows(), k);
    for i in 0..k {
        let inv_sqrt_lambda = 1.0 / svd.singular_values[i];
        let ui = svd.right_vectors.col(i);
        let vi = basis.col_mut(i);
        for (j, &uij) in ui.iter().enumerate() {
            axpy(uij * inv_sqrt_lambda, a.col(j), vi);
        }
    }
    let mut basis = orthonormalize_columns(&basis);
    for i in 0..k {
        // keep the SVD's sign convention
        let dot_u: f64 = basis
            .col(i)
            .iter()
            .zip(svd.left_vectors.col(i))
            .map(|(x, y)| x * y)
            .sum();
        if dot_u < 0.0 {
            basis.col_mut(i).iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(PodModes {
        basis,
        singular_values: svd.singular_values,
    })
}
