//! Offline and online orchestration, error metrics and reporting.

mod config;
mod export;
mod metrics;
mod offline;
mod online;

pub use config::{
    hex, ArchitectureChoice, CaeConfig, CsiConfig, ExperimentConfig, MeshConfig, ParameterAxis, PodConfig, Property,
    SamplingConfig, SourceConfig, StageKind, TaggedMaterial, TestConfig,
};
pub use export::{comparison_csv, dft_coefficient, dft_csv};
pub use metrics::{
    evaluate_errors, relative_error, report, speedup, time_online, ErrorReport, Report, SampleError, Timings, GROUPS,
};
pub use offline::{
    build_mesh, fit_baseline_modes, fit_code_modes, offline, run_sweep, time_grid, timings_csv, FomSweep, OfflineRun,
    StageTiming, TimeGrid, Workspace, MODEL_FILE,
};
pub use online::{online, online_pod_csi, Fields, RomModel, BASELINE_SECTION, PROVENANCE_SECTION};

use crate::dgtd::{assemble_operators, FieldProbe};
use crate::error::Result;
use crate::io::write_atomic;

/// Test-set errors, CPU-time table and field exports of a finished offline
/// run, written next to the model.
pub fn write_report(ws: &Workspace, run: &OfflineRun, rounds: usize) -> Result<(Report, ErrorReport, Timings)> {
    let cfg = &ws.cfg;
    let errors = evaluate_errors(&run.model, &run.test.set, cfg.test.times.as_deref())?;
    let plan = run.test.set.plan();
    let times = cfg.test.times.clone().unwrap_or_else(|| plan.times.clone());
    let queries: Vec<(f64, Vec<f64>)> = plan
        .params
        .iter()
        .flat_map(|mu| times.iter().map(move |&t| (t, mu.clone())))
        .collect();
    let (online_cae, online_pod) = time_online(&run.model, &queries, rounds)?;
    let dgtd = run.test.wall_times.iter().sum::<f64>() / run.test.wall_times.len().max(1) as f64;
    let timings = Timings {
        snapshots: run.seconds("snapshots"),
        pod: run.seconds("pod"),
        cae_csi: run.seconds("cae") + run.seconds("csi"),
        online_cae_csi: online_cae,
        online_pod_csi: online_pod,
        dgtd,
    };
    let rep = report(&timings, &errors);
    write_atomic(&ws.path("summary.txt"), rep.summary.as_bytes())?;
    write_atomic(&ws.path("timings.csv"), rep.timings_csv.as_bytes())?;
    write_atomic(&ws.path("errors.csv"), rep.errors_csv.as_bytes())?;
    export_fields(ws, run)?;
    Ok((rep, errors, timings))
}

/// Field comparisons at the first test parameter: the last sampled time on
/// the `y = 0` line and on a grid, and the drive-frequency coefficients on
/// the line over the whole window.
pub fn export_fields(ws: &Workspace, run: &OfflineRun) -> Result<()> {
    let cfg = &ws.cfg;
    let plan = run.test.set.plan();
    let mu = &plan.params[0];
    let mesh = build_mesh(cfg)?;
    let ops = assemble_operators(&mesh, &cfg.materials_at(mu)?, cfg.mesh.order)?;
    let w = cfg.mesh.half_width;
    let line = FieldProbe::line(&ops, [-w, 0.0], [w, 0.0], 201)?;
    let grid = FieldProbe::grid(&ops, -w, w, 65)?;
    let fields_at = |i: usize| -> Result<([Vec<f64>; 3], [Vec<f64>; 3])> {
        let r = [0, 1, 2].map(|c| run.test.set.column(c, i, 0).to_vec());
        let f = online(&run.model, plan.times[i], mu)?;
        Ok((r, [f.hx, f.hy, f.ez]))
    };
    let last = plan.n_t() - 1;
    let (r, a) = fields_at(last)?;
    let refs = [&r[0][..], &r[1], &r[2]];
    let roms = [&a[0][..], &a[1], &a[2]];
    write_atomic(&ws.path("slice.csv"), comparison_csv(&line, refs, roms).as_bytes())?;
    write_atomic(&ws.path("grid.csv"), comparison_csv(&grid, refs, roms).as_bytes())?;
    let (rs, as_): (Vec<_>, Vec<_>) = (0..plan.n_t()).map(fields_at).collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let dft = dft_csv(&line, &plan.times, cfg.source.omega, &rs, &as_);
    write_atomic(&ws.path("slice_dft.csv"), dft.as_bytes())
}

#[cfg(test)]
mod tests {
    #[test]
    fn online_does_not_reach_offline_data() {
        let src = include_str!("online.rs");
        for banned in ["dgtd", "snapshot", "encode(", "encode_coefficients", "offline"] {
            let hits: Vec<&str> = src
                .lines()
                .filter(|l| !l.trim_start().starts_with("//"))
                .filter(|l| l.contains(banned))
                .collect();
            assert!(hits.is_empty(), "online path mentions {banned}: {hits:?}");
        }
    }
}
