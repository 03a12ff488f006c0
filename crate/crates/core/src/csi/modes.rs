use super::tensor::{CardinalBasis, TensorGrid};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::linalg::{svd_thin, Matrix};

pub const CSI_SECTION: &[u8; 8] = b"ROMCSI01";

/// `P_l(i, j) = ω_l(t_i, μ_j)` for every code component `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMatrixSet {
    pub times: Vec<f64>,
    /// Per-dimension parameter knots; parameter `j` is lexicographic with
    /// the last dimension fastest.
    pub axes: Vec<Vec<f64>>,
    pub matrices: Vec<Matrix>,
}

/// Arranges codes, indexed `param · N_t + time`, into one `N_t × N_p`
/// matrix per code component.
pub fn build_reduced_matrices(
    times: &[f64],
    axes: &[Vec<f64>],
    codes: &[Option<Vec<f64>>],
    n: usize,
) -> Result<ReducedMatrixSet> {
    let n_t = times.len();
    let n_p: usize = axes.iter().map(Vec::len).product();
    if axes.is_empty() || codes.len() != n_t * n_p {
        return Err(Error::invalid(format!(
            "{} codes for {n_t} times and {n_p} parameters",
            codes.len()
        )));
    }
    let mut matrices = vec![Matrix::zeros(n_t, n_p); n];
    for j in 0..n_p {
        for i in 0..n_t {
            let code = codes[j * n_t + i].as_ref().ok_or(Error::IncompleteData {
                time_index: i,
                param_index: j,
            })?;
            if code.len() != n {
                return Err(Error::invalid(format!(
                    "code at (time {i}, parameter {j}) has length {}, expected {n}",
                    code.len()
                )));
            }
            for (l, &v) in code.iter().enumerate() {
                matrices[l][(i, j)] = v;
            }
        }
    }
    Ok(ReducedMatrixSet {
        times: times.to_vec(),
        axes: axes.to_vec(),
        matrices,
    })
}

/// Truncated SVD `P_l ≈ Σ_k σ_k ψ_k φ_kᵀ` of one reduced matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub sigma: Vec<f64>,
    /// `N_t × q`, time modes at the training times.
    pub psi: Matrix,
    /// `N_p × q`, parameter modes at the training parameters.
    pub phi: Matrix,
}

impl ModeSet {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

/// Interpolated time and parameter modes of every code component.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeModel {
    pub delta: f64,
    pub modes: Vec<ModeSet>,
    time_basis: CardinalBasis,
    param_grid: TensorGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodePrediction {
    pub code: Vec<f64>,
    /// The query lies outside the training time span or parameter box.
    pub extrapolated: bool,
}

/// Smallest `q` whose leading energy fraction reaches `1 - δ`.
pub fn truncation_rank(sigma: &[f64], delta: f64) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (q, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc >= (1.0 - delta) * total {
            return q + 1;
        }
    }
    sigma.len()
}

pub fn decompose_modes(set: &ReducedMatrixSet, delta: f64) -> Result<ModeModel> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("truncation tolerance {delta} must lie in (0, 1)")));
    }
    let time_basis = CardinalBasis::new(&set.times)?;
    let param_grid = TensorGrid::new(&set.axes)?;
    let mut modes = Vec::with_capacity(set.matrices.len());
    for p in &set.matrices {
        if p.rows() != set.times.len() || p.cols() != param_grid.num_points() {
            return Err(Error::invalid("reduced matrix shape does not match the grids"));
        }
        let (sigma, psi, phi) = if p.max_abs() == 0.0 {
            (Vec::new(), Matrix::zeros(p.rows(), 0), Matrix::zeros(p.cols(), 0))
        } else {
            let svd = svd_thin(p)?;
            let q = truncation_rank(&svd.singular_values, delta);
            (
                svd.singular_values[..q].to_vec(),
                svd.left_vectors.leading_cols(q),
                svd.right_vectors.leading_cols(q),
            )
        };
        modes.push(ModeSet { sigma, psi, phi });
    }
    Ok(ModeModel {
        delta,
        modes,
        time_basis,
        param_grid,
    })
}

impl ModeModel {
    pub fn code_len(&self) -> usize {
        self.modes.len()
    }

    pub fn times(&self) -> &[f64] {
        self.time_basis.knots()
    }

    pub fn axes(&self) -> Vec<Vec<f64>> {
        self.param_grid.axes()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.modes.iter().map(ModeSet::rank).collect()
    }

    /// `ω_l = Σ_k σ_k ψ̂_k(t) φ̂_k(μ)`.
    pub fn eval_code(&self, t: f64, mu: &[f64]) -> Result<CodePrediction> {
        let wt = self.time_basis.weights(t);
        let wp = self.param_grid.weights(mu)?;
        let extrapolated = !(self.time_basis.contains(t) && self.param_grid.contains(mu));
        if extrapolated {
            log::warn!("code query (t = {t}, mu = {mu:?}) extrapolates beyond the training grid");
        }
        let code = self
            .modes
            .iter()
            .map(|m| {
                (0..m.rank())
                    .map(|k| {
                        let psi: f64 = m.psi.col(k).iter().zip(&wt).map(|(a, b)| a * b).sum();
                        let phi: f64 = m.phi.col(k).iter().zip(&wp).map(|(a, b)| a * b).sum();
                        m.sigma[k] * psi * phi
                    })
                    .sum()
            })
            .collect();
        Ok(CodePrediction { code, extrapolated })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.f64(self.delta);
        w.len_u32(self.times().len()).f64s(self.times());
        let axes = self.axes();
        w.len_u32(axes.len());
        for a in &axes {
            w.len_u32(a.len()).f64s(a);
        }
        w.len_u32(self.modes.len());
        for m in &self.modes {
            w.len_u32(m.rank()).f64s(&m.sigma).matrix(&m.psi).matrix(&m.phi);
        }
        w.finish()
    }

    pub fn from_reader(r: &mut ByteReader<'_>) -> Result<Self> {
        let at = r.offset();
        let corrupt = |m: String| Error::Format { offset: at, message: m };
        let delta = r.f64()?;
        let n_t = r.len_u32()?;
        let times = r.f64s(n_t)?;
        let dims = r.len_u32()?;
        if dims > 64 {
            return Err(r.error(format!("{dims} parameter dimensions")));
        }
        let mut axes = Vec::with_capacity(dims);
        for _ in 0..dims {
            let len = r.len_u32()?;
            axes.push(r.f64s(len)?);
        }
        let time_basis = CardinalBasis::new(&times).map_err(|e| corrupt(e.to_string()))?;
        let param_grid = TensorGrid::new(&axes).map_err(|e| corrupt(e.to_string()))?;
        let n = r.len_u32()?;
        let mut modes = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let q = r.len_u32()?;
            let sigma = r.f64s(q)?;
            let psi = r.matrix()?;
            let phi = r.matrix()?;
            if psi.shape() != (n_t, q) || phi.shape() != (param_grid.num_points(), q) {
                return Err(corrupt("mode matrices do not match the grids".into()));
            }
            modes.push(ModeSet { sigma, psi, phi });
        }
        Ok(Self {
            delta,
            modes,
            time_basis,
            param_grid,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_set(n: usize, mut f: impl FnMut(usize, f64, f64) -> f64) -> ReducedMatrixSet {
        let times: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        let mus: Vec<f64> = (0..7).map(|j| 1.0 + 0.5 * j as f64).collect();
        let mut codes = Vec::new();
        for &mu in &mus {
            for &t in &times {
                codes.push(Some((0..n).map(|l| f(l, t, mu)).collect()));
            }
        }
        build_reduced_matrices(&times, &[mus], &codes, n).unwrap()
    }

    #[test]
    fn constant_codes() {
        let set = grid_set(1, |_, _, _| 2.5);
        assert!(set.matrices[0].as_slice().iter().all(|&v| v == 2.5));
        let m = decompose_modes(&set, 1e-4).unwrap();
        assert_eq!(m.ranks(), vec![1]);
        let a = m.eval_code(0.33, &[2.2]).unwrap();
        let b = m.eval_code(0.71, &[2.2]).unwrap();
        assert!((a.code[0] - b.code[0]).abs() < 1e-8);
        assert!((a.code[0] - 2.5).abs() < 1e-10);
        assert!(!a.extrapolated);
        assert!(m.eval_code(5.0, &[2.2]).unwrap().extrapolated);
    }

    #[test]
    fn missing_entry_named() {
        let times = [0.0, 1.0];
        let axes = vec![vec![0.0, 1.0, 2.0]];
        let mut codes = vec![Some(vec![1.0]); 6];
        codes[3] = None;
        match build_reduced_matrices(&times, &axes, &codes, 1) {
            Err(Error::IncompleteData { time_index, param_index }) => assert_eq!((time_index, param_index), (1, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_and_reconstruction() {
        let set = grid_set(3, |l, t, mu| match l {
            0 => (t * mu).sin() + 0.3 * (2.0 * t).cos() / mu,
            1 => t * mu,
            _ => 0.0,
        });
        for delta in [1e-2, 1e-4, 1e-8] {
            let m = decompose_modes(&set, delta).unwrap();
            assert_eq!(m.ranks()[1], 1);
            assert_eq!(m.ranks()[2], 0);
            for (p, modes) in set.matrices.iter().zip(&m.modes) {
                let norm = p.frobenius_norm().powi(2);
                if norm == 0.0 {
                    continue;
                }
                let mut err = 0.0;
                for i in 0..p.rows() {
                    for j in 0..p.cols() {
                        let approx: f64 = (0..modes.rank())
                            .map(|k| modes.sigma[k] * modes.psi[(i, k)] * modes.phi[(j, k)])
                            .sum();
                        err += (p[(i, j)] - approx).powi(2);
                    }
                }
                assert!(err / norm <= delta * (1.0 + 1e-6));
            }
            // on-grid predictions carry only the truncation error
            let mut total = 0.0;
            let mut budget = 0.0;
            for (j, &mu) in set.axes[0].iter().enumerate() {
                for (i, &t) in set.times.iter().enumerate() {
                    let c = m.eval_code(t, &[mu]).unwrap().code;
                    for l in 0..3 {
                        total += (c[l] - set.matrices[l][(i, j)]).powi(2);
                    }
                }
            }
            for p in &set.matrices {
                budget += p.frobenius_norm().powi(2);
            }
            assert!(total <= delta * budget + 1e-9);
        }
    }

    #[test]
    fn zero_model_predicts_zero() {
        let set = grid_set(2, |_, _, _| 0.0);
        let m = decompose_modes(&set, 1e-4).unwrap();
        assert_eq!(m.ranks(), vec![0, 0]);
        assert_eq!(m.eval_code(0.4, &[2.0]).unwrap().code, vec![0.0, 0.0]);
    }

    #[test]
    fn rank_one_matrix() {
        let set = grid_set(1, |_, t, mu| (1.0 + t) * mu.sqrt());
        assert_eq!(decompose_modes(&set, 1e-4).unwrap().ranks(), vec![1]);
        assert!(decompose_modes(&set, 0.0).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let set = grid_set(2, |_, _, _| rng.gen_range(-1.0..1.0));
        let m = decompose_modes(&set, 1e-3).unwrap();
        let bytes = m.to_bytes();
        let back = ModeModel::from_reader(&mut ByteReader::new(&bytes)).unwrap();
        assert_eq!(back, m);
        assert!(ModeModel::from_reader(&mut ByteReader::new(&bytes[..bytes.len() - 8])).is_err());
    }
}
