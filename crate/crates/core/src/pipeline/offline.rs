use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{hex, ExperimentConfig, StageKind};
use super::online::RomModel;
use crate::cae::{self, coords_to_tensor, prepare_dataset, CaeModel, TrainingLog, CAE_SECTION};
use crate::csi::{build_reduced_matrices, decompose_modes, ModeModel, CSI_SECTION};
use crate::dgtd::{assemble_operators, generate_mesh, run_fom, FieldState, IncidentWave, Mesh, RecordPolicy};
use crate::error::{Error, Result};
use crate::io::{csv_float, write_atomic, ByteReader, ByteWriter, Container};
use crate::pod::{intrinsic_coordinates, two_step_pod, IntrinsicCoordinates, PodBasis, POD_SECTION};
use crate::snapshot::{collect_snapshots, SnapshotSet};

use super::online::BASELINE_SECTION;

const KEY_SECTION: &[u8; 8] = b"STAGEKEY";
const ELAPSED_SECTION: &[u8; 8] = b"ELAPSED_";
const SNAPSHOT_SECTION: &[u8; 8] = b"SNAPSHOT";
const FOM_TIMES_SECTION: &[u8; 8] = b"FOMTIMES";

pub const MODEL_FILE: &str = "model.rom";

/// Time grid shared by every FOM run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub total_steps: usize,
    pub t_final: f64,
    pub window: (f64, f64),
    pub steps_per_sample: usize,
}

pub fn time_grid(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<TimeGrid> {
    let source = IncidentWave::new(cfg.source.omega);
    let period = source.period();
    let t_final = cfg.source.periods as f64 * period;
    let window_len = cfg.sampling.window_periods as f64 * period;
    let n_t = cfg.sampling.n_t;
    let m = match cfg.source.steps_per_sample {
        Some(m) => m,
        None => {
            // the lowest material values give the smallest admissible step
            let ops = assemble_operators(mesh, &cfg.materials_at(&cfg.lower_corner())?, cfg.mesh.order)?;
            (window_len / (n_t as f64 * ops.dt_max())).ceil() as usize
        }
    };
    let dt = window_len / (n_t * m) as f64;
    let total = (t_final / dt).round() as usize;
    let first = total - n_t * m;
    Ok(TimeGrid {
        dt,
        total_steps: total,
        t_final: total as f64 * dt,
        window: (first as f64 * dt, total as f64 * dt),
        steps_per_sample: m,
    })
}

pub fn build_mesh(cfg: &ExperimentConfig) -> Result<Mesh> {
    generate_mesh(cfg.mesh.half_width, cfg.mesh.resolution, &cfg.mesh.inclusions)
}

/// Snapshots of one FOM run per parameter plus each run's wall time.
#[derive(Debug, Clone)]
pub struct FomSweep {
    pub set: SnapshotSet,
    pub wall_times: Vec<f64>,
}

/// Runs the solver at every parameter and samples the final window.
pub fn run_sweep(cfg: &ExperimentConfig, params: &[Vec<f64>]) -> Result<FomSweep> {
    let mesh = build_mesh(cfg)?;
    let grid = time_grid(cfg, &mesh)?;
    let source = IncidentWave::new(cfg.source.omega);
    let m = grid.steps_per_sample;
    let first = grid.total_steps - cfg.sampling.n_t * m;
    let steps: Vec<usize> = (1..=cfg.sampling.n_t).map(|i| first + i * m).collect();
    log::info!(
        "FOM sweep: {} runs, dt = {:.4e}, {} steps each",
        params.len(),
        grid.dt,
        grid.total_steps
    );
    let mut trajectories = Vec::with_capacity(params.len());
    let mut wall_times = Vec::with_capacity(params.len());
    for mu in params {
        let ops = assemble_operators(&mesh, &cfg.materials_at(mu)?, cfg.mesh.order)?;
        let start = Instant::now();
        let traj = run_fom(
            &ops,
            &source,
            FieldState::zeros(ops.num_dofs()),
            grid.dt,
            grid.t_final,
            &RecordPolicy::Steps(steps.clone()),
        )?;
        wall_times.push(start.elapsed().as_secs_f64());
        log::debug!("mu = {mu:?}: {:.2} s", wall_times.last().unwrap());
        trajectories.push(traj);
    }
    let set = collect_snapshots(&trajectories, params.to_vec(), grid.window, cfg.sampling.n_t)?;
    Ok(FomSweep { set, wall_times })
}

/// Wall-clock seconds of one offline stage; `cached` when it was loaded
/// from a previous run.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
    pub cached: bool,
}

/// Results of every offline stage.
#[derive(Debug, Clone)]
pub struct OfflineRun {
    pub model: RomModel,
    pub training: FomSweep,
    pub test: FomSweep,
    pub coords: IntrinsicCoordinates,
    pub timings: Vec<StageTiming>,
    pub training_log: Option<TrainingLog>,
}

impl OfflineRun {
    pub fn seconds(&self, stage: &str) -> f64 {
        self.timings.iter().filter(|t| t.stage == stage).map(|t| t.seconds).sum()
    }
}

/// Stage artifacts under one output directory, each tagged with the key of
/// the configuration it was built from.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub cfg: ExperimentConfig,
    pub dir: PathBuf,
}

struct Artifact {
    container: Container,
    seconds: f64,
}

impl Workspace {
    pub fn new(cfg: ExperimentConfig) -> Self {
        let dir = cfg.output_dir();
        Self { cfg, dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn model_path(&self) -> PathBuf {
        self.path(MODEL_FILE)
    }

    fn stage_path(&self, stage: StageKind) -> PathBuf {
        self.path(&format!("{}.stage", stage.name()))
    }

    fn load(&self, stage: StageKind) -> Option<Artifact> {
        let path = self.stage_path(stage);
        let container = Container::read(&path).ok()?;
        if container.get(KEY_SECTION)? != self.cfg.stage_key(stage) {
            log::info!("{} is stale, rebuilding", path.display());
            return None;
        }
        let seconds = ByteReader::new(container.get(ELAPSED_SECTION)?).f64().ok()?;
        Some(Artifact { container, seconds })
    }

    fn store(&self, stage: StageKind, seconds: f64, sections: Vec<(&[u8; 8], Vec<u8>)>) -> Result<()> {
        let mut c = Container::new();
        c.push(KEY_SECTION, self.cfg.stage_key(stage).to_vec());
        let mut w = ByteWriter::new();
        w.f64(seconds);
        c.push(ELAPSED_SECTION, w.finish());
        for (tag, payload) in sections {
            c.push(tag, payload);
        }
        c.write(&self.stage_path(stage))
    }

    fn sweep(&self, stage: StageKind, timings: &mut Vec<StageTiming>) -> Result<FomSweep> {
        let name = stage.name();
        if let Some(a) = self.load(stage) {
            let set = SnapshotSet::decode(a.container.get(SNAPSHOT_SECTION).unwrap_or_default());
            let times = a.container.section(FOM_TIMES_SECTION).and_then(|mut r| {
                let n = r.len_u32()?;
                r.f64s(n)
            });
            if let (Ok(set), Ok(wall_times)) = (set, times) {
                timings.push(StageTiming {
                    stage: name,
                    seconds: a.seconds,
                    cached: true,
                });
                return Ok(FomSweep { set, wall_times });
            }
        }
        let params = match stage {
            StageKind::TestSnapshots => self.cfg.test.params.clone(),
            _ => self.cfg.training_params()?,
        };
        let start = Instant::now();
        let sweep = run_sweep(&self.cfg, &params).map_err(|e| e.in_stage(name))?;
        let seconds = start.elapsed().as_secs_f64();
        let mut w = ByteWriter::new();
        w.len_u32(sweep.wall_times.len()).f64s(&sweep.wall_times);
        self.store(
            stage,
            seconds,
            vec![(SNAPSHOT_SECTION, sweep.set.encode()), (FOM_TIMES_SECTION, w.finish())],
        )
        .map_err(|e| e.in_stage(name))?;
        timings.push(StageTiming {
            stage: name,
            seconds,
            cached: false,
        });
        Ok(sweep)
    }

    /// FOM sweep over the training parameters.
    pub fn snapshots(&self, timings: &mut Vec<StageTiming>) -> Result<FomSweep> {
        self.sweep(StageKind::Snapshots, timings)
    }

    /// FOM runs at the test parameters, used as references and for the
    /// DGTD timing.
    pub fn test_snapshots(&self, timings: &mut Vec<StageTiming>) -> Result<FomSweep> {
        self.sweep(StageKind::TestSnapshots, timings)
    }

    pub fn pod(&self, set: &SnapshotSet, timings: &mut Vec<StageTiming>) -> Result<PodBasis> {
        let stage = StageKind::Pod;
        if let Some(a) = self.load(stage) {
            let basis = a.container.section(POD_SECTION).and_then(|mut r| PodBasis::from_reader(&mut r));
            if let Ok(basis) = basis {
                timings.push(StageTiming {
                    stage: stage.name(),
                    seconds: a.seconds,
                    cached: true,
                });
                return Ok(basis);
            }
        }
        let start = Instant::now();
        let basis = two_step_pod(set, self.cfg.pod.k, self.cfg.pod.n_basis).map_err(|e| e.in_stage("pod"))?;
        let seconds = start.elapsed().as_secs_f64();
        self.store(stage, seconds, vec![(POD_SECTION, basis.to_bytes())])
            .map_err(|e| e.in_stage("pod"))?;
        timings.push(StageTiming {
            stage: stage.name(),
            seconds,
            cached: false,
        });
        Ok(basis)
    }

    pub fn cae(
        &self,
        coords: &IntrinsicCoordinates,
        timings: &mut Vec<StageTiming>,
    ) -> Result<(CaeModel, Option<TrainingLog>)> {
        let stage = StageKind::Cae;
        if let Some(a) = self.load(stage) {
            if let Ok(model) = a.container.section(CAE_SECTION).and_then(|mut r| CaeModel::from_reader(&mut r)) {
                timings.push(StageTiming {
                    stage: stage.name(),
                    seconds: a.seconds,
                    cached: true,
                });
                return Ok((model, None));
            }
        }
        let start = Instant::now();
        let c = &self.cfg.cae;
        let run = || -> Result<(CaeModel, TrainingLog)> {
            let dataset = prepare_dataset(coords, c.train_fraction, c.train.seed)?;
            cae::train(&dataset, &self.cfg.architecture(), &c.train)
        };
        let (model, log) = run().map_err(|e| e.in_stage("cae"))?;
        let seconds = start.elapsed().as_secs_f64();
        log.write_csv(&self.path("training_log.csv")).map_err(|e| e.in_stage("cae"))?;
        self.store(stage, seconds, vec![(CAE_SECTION, model.to_bytes())])
            .map_err(|e| e.in_stage("cae"))?;
        timings.push(StageTiming {
            stage: stage.name(),
            seconds,
            cached: false,
        });
        Ok((model, Some(log)))
    }

    /// Mode models for the CAE codes and, as the baseline, for the raw
    /// POD coefficients.
    pub fn csi(
        &self,
        coords: &IntrinsicCoordinates,
        times: &[f64],
        cae: &CaeModel,
        timings: &mut Vec<StageTiming>,
    ) -> Result<(ModeModel, ModeModel)> {
        let stage = StageKind::Csi;
        if let Some(a) = self.load(stage) {
            let read = |tag| a.container.section(tag).and_then(|mut r| ModeModel::from_reader(&mut r));
            if let (Ok(csi), Ok(base)) = (read(CSI_SECTION), read(BASELINE_SECTION)) {
                timings.push(StageTiming {
                    stage: "csi",
                    seconds: a.seconds,
                    cached: true,
                });
                timings.push(StageTiming {
                    stage: "baseline-csi",
                    seconds: 0.0,
                    cached: true,
                });
                return Ok((csi, base));
            }
        }
        let axes = self.cfg.axes()?;
        let delta = self.cfg.csi.delta;
        let start = Instant::now();
        let csi = fit_code_modes(coords, times, &axes, cae, delta).map_err(|e| e.in_stage("csi"))?;
        let seconds = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let base = fit_baseline_modes(coords, times, &axes, delta).map_err(|e| e.in_stage("baseline-csi"))?;
        let base_seconds = start.elapsed().as_secs_f64();
        self.store(
            stage,
            seconds,
            vec![(CSI_SECTION, csi.to_bytes()), (BASELINE_SECTION, base.to_bytes())],
        )
        .map_err(|e| e.in_stage("csi"))?;
        timings.push(StageTiming {
            stage: "csi",
            seconds,
            cached: false,
        });
        timings.push(StageTiming {
            stage: "baseline-csi",
            seconds: base_seconds,
            cached: false,
        });
        Ok((csi, base))
    }

    /// Every stage in order, reusing valid artifacts, then the model file.
    pub fn run(&self) -> Result<OfflineRun> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut timings = Vec::new();
        let training = self.snapshots(&mut timings)?;
        let pod = self.pod(&training.set, &mut timings)?;
        let coords = intrinsic_coordinates(&pod, &training.set).map_err(|e| e.in_stage("pod"))?;
        let (cae, training_log) = self.cae(&coords, &mut timings)?;
        let (csi, baseline) = self.csi(&coords, &training.set.plan().times, &cae, &mut timings)?;
        let model = RomModel::new(pod, cae, csi, baseline, self.cfg.hash()).map_err(|e| e.in_stage("model"))?;
        model.write(&self.model_path()).map_err(|e| e.in_stage("model"))?;
        let test = self.test_snapshots(&mut timings)?;
        write_timings(&self.path("offline_timings.csv"), &timings)?;
        log::info!("model {} written, config {}", self.model_path().display(), &hex(&model.config_hash)[..12]);
        Ok(OfflineRun {
            model,
            training,
            test,
            coords,
            timings,
            training_log,
        })
    }
}

/// Encoder codes of every training snapshot, decomposed into modes.
pub fn fit_code_modes(
    coords: &IntrinsicCoordinates,
    times: &[f64],
    axes: &[Vec<f64>],
    cae: &CaeModel,
    delta: f64,
) -> Result<ModeModel> {
    let n_s = coords.n_t * coords.n_p;
    let mut x = coords_to_tensor(coords, &(0..n_s).collect::<Vec<_>>())?;
    cae.norm.apply_all(x.data_mut());
    let codes = cae.encode(&x)?;
    let codes: Vec<Option<Vec<f64>>> = (0..n_s).map(|j| Some(codes.item(j).to_vec())).collect();
    decompose_modes(&build_reduced_matrices(times, axes, &codes, cae.code)?, delta)
}

/// Mode model of the stacked raw POD coefficients of all components.
pub fn fit_baseline_modes(
    coords: &IntrinsicCoordinates,
    times: &[f64],
    axes: &[Vec<f64>],
    delta: f64,
) -> Result<ModeModel> {
    let n_s = coords.n_t * coords.n_p;
    let len: usize = coords.coords.iter().map(|m| m.rows()).sum();
    let codes: Vec<Option<Vec<f64>>> = (0..n_s)
        .map(|j| Some(coords.coords.iter().flat_map(|m| m.col(j).iter().copied()).collect()))
        .collect();
    decompose_modes(&build_reduced_matrices(times, axes, &codes, len)?, delta)
}

pub fn timings_csv(timings: &[StageTiming]) -> String {
    let mut s = String::from("stage,seconds,cached\n");
    for t in timings {
        s.push_str(&format!("{},{},{}\n", t.stage, csv_float(t.seconds), t.cached));
    }
    s
}

fn write_timings(path: &Path, timings: &[StageTiming]) -> Result<()> {
    write_atomic(path, timings_csv(timings).as_bytes())
}

/// Runs or resumes the full offline phase of `cfg`.
pub fn offline(cfg: &ExperimentConfig) -> Result<OfflineRun> {
    Workspace::new(cfg.clone()).run()
}
