//! Sampling plans, snapshot trajectory matrices and their binary file format.

use std::path::Path;

use crate::dgtd::Trajectory;
use crate::error::{Error, Result};
use crate::io::{write_atomic, ByteReader, ByteWriter};
use crate::linalg::Matrix;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"ROMSNAP1";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Field components stored per snapshot, in file order.
pub const COMPONENT_NAMES: [&str; 3] = ["Hx", "Hy", "Ez"];

/// Per-dimension sampling `(lo, hi, count)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equidistant points of one axis.
pub fn axis_points(spec: &AxisSpec) -> Result<Vec<f64>> {
    if spec.count == 0 {
        return Err(Error::invalid("axis sampling count must be at least 1"));
    }
    if !(spec.lo <= spec.hi) || !spec.lo.is_finite() || !spec.hi.is_finite() {
        return Err(Error::invalid(format!(
            "axis bounds [{}, {}] are not ordered",
            spec.lo, spec.hi
        )));
    }
    if spec.count == 1 {
        return Ok(vec![spec.lo]);
    }
    let n = spec.count - 1;
    Ok((0..=n)
        .map(|i| {
            if i == n {
                spec.hi
            } else {
                spec.lo + (spec.hi - spec.lo) * i as f64 / n as f64
            }
        })
        .collect())
}

/// Full tensor-product grid in lexicographic order (last dimension fastest).
pub fn sample_parameters(spec: &[AxisSpec]) -> Result<Vec<Vec<f64>>> {
    if spec.is_empty() {
        return Err(Error::invalid("parameter space has no dimensions"));
    }
    let axes = spec.iter().map(axis_points).collect::<Result<Vec<_>>>()?;
    let total: usize = axes.iter().map(Vec::len).product();
    let mut grid = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        grid.push(idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect());
        for d in (0..axes.len()).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    /// `μ_j`, each of length `dim`.
    pub params: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

impl SamplingPlan {
    pub fn new(params: Vec<Vec<f64>>, times: Vec<f64>) -> Result<Self> {
        if params.is_empty() || times.is_empty() {
            return Err(Error::invalid("sampling plan needs at least one time and one parameter"));
        }
        let dim = params[0].len();
        if dim == 0 || params.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("parameter vectors must share a positive dimension"));
        }
        if params.iter().flatten().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite sampling value"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time points must be strictly increasing"));
        }
        Ok(Self { params, times })
    }

    pub fn n_t(&self) -> usize {
        self.times.len()
    }

    pub fn n_p(&self) -> usize {
        self.params.len()
    }

    pub fn n_s(&self) -> usize {
        self.n_t() * self.n_p()
    }

    pub fn dim(&self) -> usize {
        self.params[0].len()
    }
}

/// Step indices (counted from the trajectory start) of `n_t` samples spread
/// uniformly over the steps whose time lies in `(from, to]`.
pub fn window_steps(dt: f64, t0: f64, from: f64, to: f64, n_t: usize) -> Result<Vec<usize>> {
    if n_t == 0 {
        return Err(Error::invalid("N_t must be at least 1"));
    }
    if !(from < to) || from < t0 {
        return Err(Error::Range { from, to, end: f64::NAN });
    }
    let tol = 1e-9;
    let first = ((from - t0) / dt + tol).floor() as usize + 1;
    let last = ((to - t0) / dt + tol).floor() as usize;
    if last < first {
        return Err(Error::invalid("sampling window contains no time step"));
    }
    let w = last - first + 1;
    if n_t > w {
        return Err(Error::invalid(format!(
            "N_t = {n_t} exceeds the {w} steps in the window"
        )));
    }
    Ok((0..n_t).map(|i| first - 1 + (i + 1) * w / n_t).collect())
}

/// Trajectory matrices `S_c^j` (N_h × N_t) per component `c` and parameter `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    plan: SamplingPlan,
    n_h: usize,
    /// `[component][parameter]`.
    data: Vec<Vec<Matrix>>,
}

impl SnapshotSet {
    pub fn new(plan: SamplingPlan, data: Vec<Vec<Matrix>>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("snapshot set needs at least one component"));
        }
        let n_h = data[0].first().map_or(0, Matrix::rows);
        if n_h == 0 {
            return Err(Error::invalid("snapshot vectors are empty"));
        }
        for comp in &data {
            if comp.len() != plan.n_p() {
                return Err(Error::invalid("one trajectory matrix per parameter is required"));
            }
            for m in comp {
                if m.shape() != (n_h, plan.n_t()) {
                    return Err(Error::invalid(format!(
                        "trajectory matrix is {}x{}, expected {}x{}",
                        m.rows(),
                        m.cols(),
                        n_h,
                        plan.n_t()
                    )));
                }
            }
        }
        Ok(Self { plan, n_h, data })
    }

    pub fn plan(&self) -> &SamplingPlan {
        &self.plan
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn num_components(&self) -> usize {
        self.data.len()
    }

    pub fn trajectory(&self, component: usize, param: usize) -> &Matrix {
        &self.data[component][param]
    }

    pub fn trajectories(&self, component: usize) -> &[Matrix] {
        &self.data[component]
    }

    /// Snapshot of `component` at `(t_i, μ_j)`.
    pub fn column(&self, component: usize, time: usize, param: usize) -> &[f64] {
        self.data[component][param].col(time)
    }

    /// `[S_c^1 | … | S_c^{N_p}]`, N_h × N_s with parameter-major columns.
    pub fn assembled(&self, component: usize) -> Matrix {
        let blocks: Vec<&Matrix> = self.data[component].iter().collect();
        Matrix::hcat(&blocks).expect("trajectories share N_h")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(SNAPSHOT_MAGIC)
            .u32(SNAPSHOT_VERSION)
            .len_u32(self.num_components())
            .len_u32(self.n_h)
            .len_u32(self.plan.n_t())
            .len_u32(self.plan.n_p())
            .len_u32(self.plan.dim())
            .f64s(&self.plan.times);
        for p in &self.plan.params {
            w.f64s(p);
        }
        for comp in &self.data {
            for m in comp {
                w.f64s(m.as_slice());
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8)? != SNAPSHOT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected ROMSNAP1".into(),
            });
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format {
                offset: 8,
                message: format!("unsupported version {version}"),
            });
        }
        let header_at = r.offset();
        let n_c = r.len_u32()?;
        let n_h = r.len_u32()?;
        let n_t = r.len_u32()?;
        let n_p = r.len_u32()?;
        let dim = r.len_u32()?;
        if n_c == 0 || n_h == 0 || n_t == 0 || n_p == 0 || dim == 0 {
            return Err(Error::Format {
                offset: header_at,
                message: "zero dimension in header".into(),
            });
        }
        let expected = (n_t as u128 + (dim * n_p) as u128 + (n_c * n_p) as u128 * (n_h * n_t) as u128) * 8;
        if (r.remaining() as u128) != expected {
            return Err(Error::Format {
                offset: r.offset(),
                message: format!(
                    "payload is {} bytes but the header implies {expected}",
                    r.remaining()
                ),
            });
        }
        let times_at = r.offset();
        let times = r.f64s(n_t)?;
        let params = (0..n_p).map(|_| r.f64s(dim)).collect::<Result<Vec<_>>>()?;
        let plan = SamplingPlan::new(params, times).map_err(|e| Error::Format {
            offset: times_at,
            message: e.to_string(),
        })?;
        let mut data = Vec::with_capacity(n_c);
        for _ in 0..n_c {
            let mut comp = Vec::with_capacity(n_p);
            for _ in 0..n_p {
                let at = r.offset();
                let block = r.f64s(n_h * n_t)?;
                comp.push(Matrix::from_col_major(n_h, n_t, block).map_err(|e| Error::Format {
                    offset: at,
                    message: e.to_string(),
                })?);
            }
            data.push(comp);
        }
        r.expect_end()?;
        Self::new(plan, data)
    }
}

pub fn write_snapshots(set: &SnapshotSet, path: &Path) -> Result<()> {
    write_atomic(path, &set.encode())
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    SnapshotSet::decode(&bytes)
}

/// Builds the snapshot set from one trajectory per parameter, taking `n_t`
/// uniformly spaced recorded states from the window `(from, to]`.
pub fn collect_snapshots(
    trajectories: &[Trajectory],
    params: Vec<Vec<f64>>,
    window: (f64, f64),
    n_t: usize,
) -> Result<SnapshotSet> {
    if trajectories.len() != params.len() || trajectories.is_empty() {
        return Err(Error::invalid("one trajectory per parameter is required"));
    }
    let (from, to) = window;
    let first = &trajectories[0];
    let t0 = first.initial.t;
    let end = t0 + first.num_steps as f64 * first.dt;
    if from < t0 || to > end + 1e-9 * first.dt.abs().max(end.abs()) || !(from < to) {
        return Err(Error::Range { from, to, end });
    }
    let steps = window_steps(first.dt, t0, from, to, n_t)?;
    let times: Vec<f64> = steps.iter().map(|&s| t0 + s as f64 * first.dt).collect();
    let n_h = first.initial.num_dofs();
    let mut data: Vec<Vec<_>> = (0..3).map(|_| Vec::with_capacity(params.len())).collect();
    for traj in trajectories {
        if traj.dt != first.dt || traj.initial.t != t0 || traj.initial.num_dofs() != n_h {
            return Err(Error::invalid("trajectories use different time grids or meshes"));
        }
        let mut mats = [
            Matrix::zeros(n_h, n_t),
            Matrix::zeros(n_h, n_t),
            Matrix::zeros(n_h, n_t),
        ];
        for (i, &s) in steps.iter().enumerate() {
            let state = traj.state_at_step(s).ok_or(Error::Range {
                from: t0 + s as f64 * traj.dt,
                to: t0 + s as f64 * traj.dt,
                end,
            })?;
            mats[0].col_mut(i).copy_from_slice(&state.hx);
            mats[1].col_mut(i).copy_from_slice(&state.hy);
            mats[2].col_mut(i).copy_from_slice(&state.ez);
        }
        for (c, m) in mats.into_iter().enumerate() {
            data[c].push(m);
        }
    }
    SnapshotSet::new(SamplingPlan::new(params, times)?, data)
}
