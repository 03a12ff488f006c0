use std::time::{Duration, Instant};

use super::incident::IncidentWave;
use super::operators::{add_mat_vec, mat_vec, DgOperators};
use crate::error::{Error, Result};
use crate::linalg::{invert, Matrix};

/// Leapfrog state: `ez` lives at time `t`, `hx`/`hy` at `t + Δt/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    pub ez: Vec<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn zeros(num_dofs: usize) -> Self {
        Self {
            hx: vec![0.0; num_dofs],
            hy: vec![0.0; num_dofs],
            ez: vec![0.0; num_dofs],
            t: 0.0,
        }
    }

    /// Nodal interpolant of the incident wave, with the staggered H taken at
    /// `t + dt/2`.
    pub fn incident(ops: &DgOperators, source: &IncidentWave, t: f64, dt: f64) -> Self {
        let mut s = Self::zeros(ops.num_dofs());
        s.t = t;
        for (i, p) in ops.dof_points().iter().enumerate() {
            s.ez[i] = source.fields(p[0], p[1], t).2;
            let (hx, hy, _) = source.fields(p[0], p[1], t + 0.5 * dt);
            s.hx[i] = hx;
            s.hy[i] = hy;
        }
        s
    }

    pub fn num_dofs(&self) -> usize {
        self.ez.len()
    }

    pub fn is_finite(&self) -> bool {
        self.hx.iter().chain(&self.hy).chain(&self.ez).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.hx
            .iter()
            .chain(&self.hy)
            .chain(&self.ez)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Crank-Nicolson factors for the damped boundary elements at a fixed `Δt`:
/// `q ← B q + Δt·A r`.
#[derive(Debug, Clone)]
struct DampedBlock {
    element: usize,
    a_e: Matrix,
    b_e: Matrix,
    a_h: Matrix,
    b_h: Matrix,
}

/// Leapfrog integrator bound to a time step. The dissipative boundary terms
/// are integrated with Crank-Nicolson, so a step with `−Δt` exactly undoes a
/// step with `Δt`.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    ops: &'a DgOperators,
    source: IncidentWave,
    dt: f64,
    blocks: Vec<DampedBlock>,
    g: Vec<f64>,
    rate_x: Vec<f64>,
    rate_y: Vec<f64>,
    rate_e: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(ops: &'a DgOperators, source: IncidentWave, dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::invalid(format!("time step {dt} must be finite and nonzero")));
        }
        if dt.abs() > ops.dt_max() * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "time step {} exceeds the stability bound {}",
                dt.abs(),
                ops.dt_max()
            )));
        }
        let half = 0.5 * dt;
        let cn = |d: &Matrix| -> Result<(Matrix, Matrix)> {
            let n = d.rows();
            let id = Matrix::identity(n);
            let plus = Matrix::from_fn(n, n, |i, j| id[(i, j)] + half * d[(i, j)]);
            let minus = Matrix::from_fn(n, n, |i, j| id[(i, j)] - half * d[(i, j)]);
            let a = invert(&plus)?;
            let b = a.matmul(&minus)?;
            Ok((a, b))
        };
        let mut blocks = Vec::with_capacity(ops.damping.len());
        for d in &ops.damping {
            let (a_e, b_e) = cn(&d.d_e)?;
            let (a_h, b_h) = cn(&d.d_h)?;
            blocks.push(DampedBlock {
                element: d.element,
                a_e,
                b_e,
                a_h,
                b_h,
            });
        }
        let n = ops.num_dofs();
        Ok(Self {
            ops,
            source,
            dt,
            blocks,
            g: Vec::new(),
            rate_x: vec![0.0; n],
            rate_y: vec![0.0; n],
            rate_e: vec![0.0; n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances (or, for negative `Δt`, rewinds) the state by one step.
    pub fn step(&mut self, state: &mut FieldState) -> Result<()> {
        if state.num_dofs() != self.ops.num_dofs() {
            return Err(Error::invalid("field state does not match the operators"));
        }
        if self.dt > 0.0 {
            self.update_e(state, state.t + 0.5 * self.dt);
            state.t += self.dt;
            self.update_h(state, state.t);
        } else {
            self.update_h(state, state.t);
            self.update_e(state, state.t + 0.5 * self.dt);
            state.t += self.dt;
        }
        if !state.is_finite() {
            return Err(Error::BlowUp { t: state.t });
        }
        Ok(())
    }

    fn update_e(&mut self, state: &mut FieldState, tau: f64) {
        self.ops.boundary_data(&self.source, tau, &mut self.g);
        self.ops.rate_e(&state.hx, &state.hy, &self.g, &mut self.rate_e);
        let np = self.ops.nodes_per_element();
        let dt = self.dt;
        let mut damped = vec![false; self.ops.num_elements()];
        let mut tmp = vec![0.0; np];
        for blk in &self.blocks {
            damped[blk.element] = true;
            let r = blk.element * np..(blk.element + 1) * np;
            let ez = &mut state.ez[r.clone()];
            mat_vec(&blk.b_e, ez, &mut tmp);
            self.rate_e[r.clone()].iter_mut().for_each(|v| *v *= dt);
            add_mat_vec(&blk.a_e, &self.rate_e[r], &mut tmp);
            ez.copy_from_slice(&tmp);
        }
        for (k, &is_damped) in damped.iter().enumerate() {
            if !is_damped {
                for i in k * np..(k + 1) * np {
                    state.ez[i] += dt * self.rate_e[i];
                }
            }
        }
    }

    fn update_h(&mut self, state: &mut FieldState, tau: f64) {
        self.ops.boundary_data(&self.source, tau, &mut self.g);
        self.ops.rate_h(&state.ez, &self.g, &mut self.rate_x, &mut self.rate_y);
        let np = self.ops.nodes_per_element();
        let dt = self.dt;
        let mut damped = vec![false; self.ops.num_elements()];
        let mut q = vec![0.0; 2 * np];
        let mut r = vec![0.0; 2 * np];
        let mut out = vec![0.0; 2 * np];
        for blk in &self.blocks {
            damped[blk.element] = true;
            let range = blk.element * np..(blk.element + 1) * np;
            q[..np].copy_from_slice(&state.hx[range.clone()]);
            q[np..].copy_from_slice(&state.hy[range.clone()]);
            for i in 0..np {
                r[i] = dt * self.rate_x[range.start + i];
                r[np + i] = dt * self.rate_y[range.start + i];
            }
            mat_vec(&blk.b_h, &q, &mut out);
            add_mat_vec(&blk.a_h, &r, &mut out);
            state.hx[range.clone()].copy_from_slice(&out[..np]);
            state.hy[range].copy_from_slice(&out[np..]);
        }
        for (k, &is_damped) in damped.iter().enumerate() {
            if !is_damped {
                for i in k * np..(k + 1) * np {
                    state.hx[i] += dt * self.rate_x[i];
                    state.hy[i] += dt * self.rate_y[i];
                }
            }
        }
    }
}

/// One leapfrog step. Builds a [`Stepper`] per call; loops should hold a
/// stepper instead.
pub fn leapfrog_step(
    state: &FieldState,
    ops: &DgOperators,
    source: &IncidentWave,
    dt: f64,
) -> Result<FieldState> {
    let mut stepper = Stepper::new(ops, *source, dt)?;
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

/// Which steps [`run_fom`] keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordPolicy {
    /// Every step.
    All,
    /// Only these step indices (1-based step counts; 0 is the initial state).
    Steps(Vec<usize>),
    None,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub initial: FieldState,
    /// `(step index, state after that many steps)`, increasing.
    pub states: Vec<(usize, FieldState)>,
    pub final_state: FieldState,
    pub num_steps: usize,
    pub wall_time: Duration,
}

impl Trajectory {
    pub fn state_at_step(&self, step: usize) -> Option<&FieldState> {
        if step == 0 {
            return Some(&self.initial);
        }
        self.states
            .binary_search_by_key(&step, |(s, _)| *s)
            .ok()
            .map(|i| &self.states[i].1)
    }
}

/// Number of steps of size `dt` needed to reach `t_final`.
pub fn step_count(dt: f64, t_final: f64) -> usize {
    let ratio = t_final / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Integrates from `initial` to `t_final` with a zero or given initial state.
pub fn run_fom(
    ops: &DgOperators,
    source: &IncidentWave,
    initial: FieldState,
    dt: f64,
    t_final: f64,
    record: &RecordPolicy,
) -> Result<Trajectory> {
    if !(t_final >= initial.t) || !t_final.is_finite() {
        return Err(Error::invalid(format!("final time {t_final} precedes the start")));
    }
    let start = Instant::now();
    let num_steps = step_count(dt, t_final - initial.t);
    let mut stepper = Stepper::new(ops, *source, dt)?;
    let mut state = initial.clone();
    let mut states = Vec::new();
    let mut wanted = match record {
        RecordPolicy::Steps(s) => {
            let mut s: Vec<usize> = s.iter().copied().filter(|&i| i > 0).collect();
            s.sort_unstable();
            s.dedup();
            s
        }
        _ => Vec::new(),
    }
    .into_iter()
    .peekable();
    let t0 = initial.t;
    for n in 1..=num_steps {
        stepper.step(&mut state)?;
        // keep time exact on the grid instead of accumulating round-off
        state.t = t0 + n as f64 * dt;
        match record {
            RecordPolicy::All => states.push((n, state.clone())),
            RecordPolicy::Steps(_) => {
                if wanted.peek() == Some(&n) {
                    wanted.next();
                    states.push((n, state.clone()));
                }
            }
            RecordPolicy::None => {}
        }
    }
    if let Some(&missing) = wanted.peek() {
        return Err(Error::Range {
            from: t0 + missing as f64 * dt,
            to: t0 + missing as f64 * dt,
            end: t_final,
        });
    }
    Ok(Trajectory {
        dt,
        initial,
        states,
        final_state: state,
        num_steps,
        wall_time: start.elapsed(),
    })
}
