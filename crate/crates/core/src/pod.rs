//! Two-step POD over per-component trajectory matrices.

use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::linalg::{dot, norm2, pod_modes, svd_thin, Matrix};
use crate::snapshot::SnapshotSet;

pub const POD_SECTION: &[u8; 8] = b"PODBASIS";

/// Per-component POD bases with the singular values of both steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub k: usize,
    pub n_basis: usize,
    /// `V_c`, N_h × 𝒩, one per component.
    pub bases: Vec<Matrix>,
    /// `[c][j]`: all singular values of `S_c^j`.
    pub step1_singular_values: Vec<Vec<Vec<f64>>>,
    /// `[c]`: all singular values of `T_c = [T_c^1 | … | T_c^{N_p}]`.
    pub step2_singular_values: Vec<Vec<f64>>,
    /// `[c]`: `max_{i,j} ‖T_c^j(:, i)‖`.
    pub max_t_column_norm: Vec<f64>,
}

/// Integer square root of `n` when `n` is a perfect square.
pub fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

pub fn two_step_pod(set: &SnapshotSet, k: usize, n_basis: usize) -> Result<PodBasis> {
    if k == 0 || n_basis == 0 {
        return Err(Error::invalid("k and the basis size must be positive"));
    }
    if exact_sqrt(n_basis).is_none() {
        return Err(Error::invalid(format!("basis size {n_basis} is not a perfect square")));
    }
    let n_p = set.plan().n_p();
    let mut bases = Vec::new();
    let mut step1 = Vec::new();
    let mut step2 = Vec::new();
    let mut max_norms = Vec::new();
    for c in 0..set.num_components() {
        let mut blocks = Vec::with_capacity(n_p);
        let mut sig1 = Vec::with_capacity(n_p);
        for (j, s) in set.trajectories(c).iter().enumerate() {
            let modes = pod_modes(s, k).map_err(|e| match e {
                Error::RankDeficient { requested, attainable, .. } => {
                    log::error!("component {c}, parameter {j}: trajectory rank {attainable} < k = {requested}");
                    Error::RankDeficient {
                        stage: Some("two-step POD step 1"),
                        requested,
                        attainable,
                    }
                }
                other => other,
            })?;
            blocks.push(modes.basis);
            sig1.push(modes.singular_values);
        }
        let refs: Vec<&Matrix> = blocks.iter().collect();
        let t = Matrix::hcat(&refs)?;
        let max_norm = (0..t.cols()).map(|i| norm2(t.col(i))).fold(0.0, f64::max);
        let modes = pod_modes(&t, n_basis).map_err(|e| match e {
            Error::RankDeficient { requested, attainable, .. } => Error::RankDeficient {
                stage: Some("two-step POD step 2"),
                requested,
                attainable,
            },
            other => other,
        })?;
        bases.push(modes.basis);
        step1.push(sig1);
        step2.push(modes.singular_values);
        max_norms.push(max_norm);
    }
    Ok(PodBasis {
        k,
        n_basis,
        bases,
        step1_singular_values: step1,
        step2_singular_values: step2,
        max_t_column_norm: max_norms,
    })
}

impl PodBasis {
    pub fn num_components(&self) -> usize {
        self.bases.len()
    }

    pub fn n_h(&self) -> usize {
        self.bases[0].rows()
    }

    /// Side of the square coefficient image, `√𝒩`.
    pub fn side(&self) -> usize {
        exact_sqrt(self.n_basis).expect("basis size is a perfect square")
    }

    /// `α = V_cᵀ u`.
    pub fn project(&self, component: usize, u: &[f64]) -> Result<Vec<f64>> {
        let v = self.basis(component)?;
        if u.len() != v.rows() {
            return Err(Error::invalid(format!(
                "vector of length {} does not match N_h = {}",
                u.len(),
                v.rows()
            )));
        }
        Ok((0..v.cols()).map(|i| dot(v.col(i), u)).collect())
    }

    /// `u = V_c α`.
    pub fn reconstruct(&self, component: usize, alpha: &[f64]) -> Result<Vec<f64>> {
        let v = self.basis(component)?;
        if alpha.len() != v.cols() {
            return Err(Error::invalid(format!(
                "coefficient vector of length {} does not match 𝒩 = {}",
                alpha.len(),
                v.cols()
            )));
        }
        let mut out = vec![0.0; v.rows()];
        for (i, &a) in alpha.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(v.col(i)) {
                *o += a * x;
            }
        }
        Ok(out)
    }

    fn basis(&self, component: usize) -> Result<&Matrix> {
        self.bases
            .get(component)
            .ok_or_else(|| Error::invalid(format!("no component {component}")))
    }

    fn check_set(&self, set: &SnapshotSet) -> Result<()> {
        if set.n_h() != self.n_h() || set.num_components() != self.num_components() {
            return Err(Error::invalid("snapshot set does not match the POD basis"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.len_u32(self.k)
            .len_u32(self.n_basis)
            .len_u32(self.num_components())
            .len_u32(self.step1_singular_values[0].len());
        for c in 0..self.num_components() {
            w.matrix(&self.bases[c]);
            w.len_u32(self.step2_singular_values[c].len()).f64s(&self.step2_singular_values[c]);
            for s in &self.step1_singular_values[c] {
                w.len_u32(s.len()).f64s(s);
            }
            w.f64(self.max_t_column_norm[c]);
        }
        w.finish()
    }

    pub fn from_reader(r: &mut ByteReader<'_>) -> Result<Self> {
        let k = r.len_u32()?;
        let n_basis = r.len_u32()?;
        let n_c = r.len_u32()?;
        let n_p = r.len_u32()?;
        if exact_sqrt(n_basis).is_none() || k == 0 || n_c == 0 {
            return Err(r.error("invalid POD header"));
        }
        let mut out = PodBasis {
            k,
            n_basis,
            bases: Vec::new(),
            step1_singular_values: Vec::new(),
            step2_singular_values: Vec::new(),
            max_t_column_norm: Vec::new(),
        };
        for _ in 0..n_c {
            let at = r.offset();
            let v = r.matrix()?;
            if v.cols() != n_basis || out.bases.first().is_some_and(|b| b.rows() != v.rows()) {
                return Err(Error::Format {
                    offset: at,
                    message: "POD basis has inconsistent shape".into(),
                });
            }
            out.bases.push(v);
            let n = r.len_u32()?;
            out.step2_singular_values.push(r.f64s(n)?);
            let mut s1 = Vec::with_capacity(n_p);
            for _ in 0..n_p {
                let n = r.len_u32()?;
                s1.push(r.f64s(n)?);
            }
            out.step1_singular_values.push(s1);
            out.max_t_column_norm.push(r.f64()?);
        }
        Ok(out)
    }
}

/// Projection coefficients `C_c` (𝒩 × N_s); column `j·N_t + i` belongs to
/// `(t_i, μ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicCoordinates {
    pub coords: Vec<Matrix>,
    pub n_t: usize,
    pub n_p: usize,
}

impl IntrinsicCoordinates {
    pub fn column_index(&self, time: usize, param: usize) -> usize {
        param * self.n_t + time
    }
}

pub fn intrinsic_coordinates(basis: &PodBasis, set: &SnapshotSet) -> Result<IntrinsicCoordinates> {
    basis.check_set(set)?;
    let coords = (0..basis.num_components())
        .map(|c| basis.bases[c].t_matmul(&set.assembled(c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntrinsicCoordinates {
        coords,
        n_t: set.plan().n_t(),
        n_p: set.plan().n_p(),
    })
}

/// Mean relative projection error per component.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorIndicator {
    pub per_component: Vec<f64>,
    /// Zero-norm snapshot columns left out of the means.
    pub excluded: usize,
}

pub fn pod_error_indicator(basis: &PodBasis, set: &SnapshotSet) -> Result<ErrorIndicator> {
    basis.check_set(set)?;
    let mut excluded = 0;
    let mut per_component = Vec::with_capacity(basis.num_components());
    for c in 0..basis.num_components() {
        let mut total = 0.0;
        let mut count = 0usize;
        for s in set.trajectories(c) {
            for i in 0..s.cols() {
                let u = s.col(i);
                let nu = norm2(u);
                if nu == 0.0 {
                    excluded += 1;
                    continue;
                }
                total += residual_norm(&basis.bases[c], u) / nu;
                count += 1;
            }
        }
        per_component.push(if count == 0 { 0.0 } else { total / count as f64 });
    }
    if excluded > 0 {
        log::warn!("POD error indicator skipped {excluded} zero-norm snapshot columns");
    }
    Ok(ErrorIndicator {
        per_component,
        excluded,
    })
}

/// `‖u − VVᵀu‖` with the residual re-orthogonalized once.
pub fn residual_norm(v: &Matrix, u: &[f64]) -> f64 {
    let mut r = u.to_vec();
    for _ in 0..2 {
        for i in 0..v.cols() {
            let c = dot(v.col(i), &r);
            for (x, y) in r.iter_mut().zip(v.col(i)) {
                *x -= c * y;
            }
        }
    }
    norm2(&r)
}

/// Measured two-step projection error `Σ_j Σ_i ‖S(:,i) − VVᵀS(:,i)‖` and the
/// two terms of its a-priori bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStepBound {
    pub measured: f64,
    pub l1: f64,
    pub l2: f64,
}

pub fn two_step_bound(basis: &PodBasis, set: &SnapshotSet) -> Result<Vec<TwoStepBound>> {
    basis.check_set(set)?;
    let k = basis.k;
    let n_t = set.plan().n_t() as f64;
    let n_p = set.plan().n_p();
    let mut out = Vec::new();
    for c in 0..basis.num_components() {
        let v = &basis.bases[c];
        let mut measured = 0.0;
        let mut max_col_sum: f64 = 0.0;
        for s in set.trajectories(c) {
            let mut col_sum = 0.0;
            for i in 0..s.cols() {
                measured += residual_norm(v, s.col(i));
                col_sum += norm2(s.col(i));
            }
            max_col_sum = max_col_sum.max(col_sum);
        }
        // ‖VVᵀ‖_F = √𝒩 for orthonormal V
        let vvt_f = (basis.n_basis as f64).sqrt();
        let l1 = (1.0 + vvt_f)
            * basis.step1_singular_values[c]
                .iter()
                .map(|sig| (n_t * sig.iter().skip(k).map(|s| s * s).sum::<f64>()).sqrt())
                .sum::<f64>();
        let tail2: f64 = basis.step2_singular_values[c]
            .iter()
            .skip(basis.n_basis)
            .map(|s| s * s)
            .sum();
        let l2 = max_col_sum * basis.max_t_column_norm[c] * ((k * n_p) as f64 * tail2).sqrt();
        out.push(TwoStepBound { measured, l1, l2 });
    }
    Ok(out)
}

/// Principal angles (radians, ascending) between the column spaces of two
/// matrices with orthonormal columns.
pub fn principal_angles(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    let m = a.t_matmul(b)?;
    let svd = svd_thin(&m)?;
    Ok(svd
        .singular_values
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos())
        .collect())
}
