use std::fmt::Write as _;
use std::time::Instant;

use super::online::{online, online_pod_csi, Fields, RomModel};
use crate::error::{Error, Result};
use crate::io::csv_float;
use crate::snapshot::SnapshotSet;

/// Error groups reported separately: `H = (Hx, Hy)` and `E = Ez`.
pub const GROUPS: [(&str, &[usize]); 2] = [("H", &[0, 1]), ("E", &[2])];

/// `‖u − ũ‖ / ‖u‖` over the stacked components, `None` for a zero
/// reference.
pub fn relative_error(reference: &[&[f64]], approx: &[&[f64]]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, a) in reference.iter().zip(approx) {
        for (x, y) in r.iter().zip(a.iter()) {
            num += (x - y) * (x - y);
            den += x * x;
        }
    }
    (den > 0.0).then(|| (num / den).sqrt())
}

fn group_errors(reference: [&[f64]; 3], approx: [&[f64]; 3]) -> [Option<f64>; 2] {
    GROUPS.map(|(_, idx)| {
        let r: Vec<&[f64]> = idx.iter().map(|&c| reference[c]).collect();
        let a: Vec<&[f64]> = idx.iter().map(|&c| approx[c]).collect();
        relative_error(&r, &a)
    })
}

/// Errors at one test `(t, μ)`, per group.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleError {
    pub t: f64,
    pub mu: Vec<f64>,
    pub projection: [Option<f64>; 2],
    pub cae_csi: [Option<f64>; 2],
    pub pod_csi: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub samples: Vec<SampleError>,
    pub mean_projection: [f64; 2],
    pub mean_cae_csi: [f64; 2],
    pub mean_pod_csi: [f64; 2],
    /// Samples left out of each group's averages for a zero reference.
    pub excluded: [usize; 2],
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl ErrorReport {
    pub fn from_samples(samples: Vec<SampleError>) -> Self {
        let avg = |f: fn(&SampleError) -> [Option<f64>; 2]| [0, 1].map(|g| mean(samples.iter().map(|s| f(s)[g])));
        let mean_projection = avg(|s| s.projection);
        let mean_cae_csi = avg(|s| s.cae_csi);
        let mean_pod_csi = avg(|s| s.pod_csi);
        let excluded = [0, 1].map(|g| samples.iter().filter(|s| s.projection[g].is_none()).count());
        Self {
            samples,
            mean_projection,
            mean_cae_csi,
            mean_pod_csi,
            excluded,
        }
    }

    pub fn to_csv(&self) -> String {
        let dim = self.samples.first().map_or(0, |s| s.mu.len());
        let mut s = String::from("t");
        for d in 0..dim {
            write!(s, ",mu{d}").unwrap();
        }
        for kind in ["pro", "cae_csi", "pod_csi"] {
            for (g, _) in GROUPS {
                write!(s, ",e_{g}_{kind}").unwrap();
            }
        }
        s.push('\n');
        let cell = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), csv_float);
        for e in &self.samples {
            s.push_str(&csv_float(e.t));
            for m in &e.mu {
                write!(s, ",{}", csv_float(*m)).unwrap();
            }
            for v in e.projection.iter().chain(&e.cae_csi).chain(&e.pod_csi) {
                write!(s, ",{}", cell(*v)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Projection, CAE-CSI and POD-CSI errors at every `(t, μ)` of the
/// reference set whose time is in `times` (all times when `None`).
pub fn evaluate_errors(model: &RomModel, reference: &SnapshotSet, times: Option<&[f64]>) -> Result<ErrorReport> {
    if reference.n_h() != model.n_h() || reference.num_components() != 3 {
        return Err(Error::invalid("reference snapshots do not match the model"));
    }
    let plan = reference.plan();
    let indices = select_times(&plan.times, times)?;
    let mut samples = Vec::with_capacity(indices.len() * plan.n_p());
    for (j, mu) in plan.params.iter().enumerate() {
        for &i in &indices {
            let t = plan.times[i];
            let refs = [0, 1, 2].map(|c| reference.column(c, i, j));
            let projected: Vec<Vec<f64>> = (0..3)
                .map(|c| {
                    let a = model.pod.project(c, refs[c])?;
                    model.pod.reconstruct(c, &a)
                })
                .collect::<Result<_>>()?;
            let proj = [0, 1, 2].map(|c| projected[c].as_slice());
            let rom = online(model, t, mu)?;
            let base = online_pod_csi(model, t, mu)?;
            samples.push(SampleError {
                t,
                mu: mu.clone(),
                projection: group_errors(refs, proj),
                cae_csi: group_errors(refs, rom.components()),
                pod_csi: group_errors(refs, base.components()),
            });
        }
    }
    let report = ErrorReport::from_samples(samples);
    for (g, (name, _)) in GROUPS.iter().enumerate() {
        if report.excluded[g] > 0 {
            log::warn!("{} samples with zero {name} reference excluded", report.excluded[g]);
        }
    }
    Ok(report)
}

fn select_times(stored: &[f64], wanted: Option<&[f64]>) -> Result<Vec<usize>> {
    let Some(wanted) = wanted else {
        return Ok((0..stored.len()).collect());
    };
    let scale = stored.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    wanted
        .iter()
        .map(|&t| {
            stored
                .iter()
                .position(|&s| (s - t).abs() <= 1e-9 * scale)
                .ok_or_else(|| Error::Config(format!("test time {t} is not a sampled time")))
        })
        .collect()
}

/// Mean seconds per query of both online paths over `rounds` passes through
/// `queries`, alternating the paths to share cache and clock conditions.
pub fn time_online(model: &RomModel, queries: &[(f64, Vec<f64>)], rounds: usize) -> Result<(f64, f64)> {
    let mut cae = 0.0;
    let mut pod = 0.0;
    let mut sink = 0.0;
    for _ in 0..rounds.max(1) {
        for (t, mu) in queries {
            let start = Instant::now();
            let f: Fields = online(model, *t, mu)?;
            cae += start.elapsed().as_secs_f64();
            sink += f.ez[0];
            let start = Instant::now();
            let f = online_pod_csi(model, *t, mu)?;
            pod += start.elapsed().as_secs_f64();
            sink += f.ez[0];
        }
    }
    std::hint::black_box(sink);
    let n = (rounds.max(1) * queries.len().max(1)) as f64;
    Ok((cae / n, pod / n))
}

/// `dgtd / online`, infinite when the online time is zero.
pub fn speedup(dgtd: f64, online: f64) -> f64 {
    if online > 0.0 {
        dgtd / online
    } else {
        f64::INFINITY
    }
}

fn format_ratio(r: f64) -> String {
    if r.is_finite() {
        format!("{:.0}", r.floor())
    } else {
        "inf".into()
    }
}

/// Seconds per column of the CPU time table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timings {
    pub snapshots: f64,
    pub pod: f64,
    pub cae_csi: f64,
    pub online_cae_csi: f64,
    pub online_pod_csi: f64,
    pub dgtd: f64,
}

impl Timings {
    pub fn speedup(&self) -> f64 {
        speedup(self.dgtd, self.online_cae_csi)
    }

    pub fn to_csv(&self) -> String {
        let v = [
            self.snapshots,
            self.pod,
            self.cae_csi,
            self.online_cae_csi,
            self.online_pod_csi,
            self.dgtd,
        ];
        let mut s =
            String::from("snapshots,two_step_pod,cae_csi_training,online_cae_csi,online_pod_csi,dgtd,speedup\n");
        for x in v {
            s.push_str(&csv_float(x));
            s.push(',');
        }
        s.push_str(&csv_float(self.speedup()));
        s.push('\n');
        s
    }
}

/// Plain text summary and the two CSV tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: String,
    pub timings_csv: String,
    pub errors_csv: String,
}

pub fn report(timings: &Timings, errors: &ErrorReport) -> Report {
    let pct = |v: f64| format!("{:.3}%", 100.0 * v);
    let mut s = String::new();
    writeln!(s, "Average relative error on the test set ({} samples)", errors.samples.len()).unwrap();
    writeln!(s, "  {:<4} {:>12} {:>12} {:>12}", "", "Pro", "CAE-CSI", "POD-CSI").unwrap();
    for (g, (name, _)) in GROUPS.iter().enumerate() {
        writeln!(
            s,
            "  {:<4} {:>12} {:>12} {:>12}",
            name,
            pct(errors.mean_projection[g]),
            pct(errors.mean_cae_csi[g]),
            pct(errors.mean_pod_csi[g])
        )
        .unwrap();
        if errors.excluded[g] > 0 {
            writeln!(s, "  ({} zero-norm references excluded)", errors.excluded[g]).unwrap();
        }
    }
    writeln!(s).unwrap();
    writeln!(s, "CPU time [s]").unwrap();
    writeln!(s, "  offline  snapshots        {:.4e}", timings.snapshots).unwrap();
    writeln!(s, "  offline  two-step POD     {:.4e}", timings.pod).unwrap();
    writeln!(s, "  offline  CAE-CSI          {:.4e}", timings.cae_csi).unwrap();
    writeln!(s, "  online   CAE-CSI          {:.4e}", timings.online_cae_csi).unwrap();
    writeln!(s, "  online   POD-CSI          {:.4e}", timings.online_pod_csi).unwrap();
    writeln!(s, "  online   DGTD             {:.4e}", timings.dgtd).unwrap();
    writeln!(s, "speed-up over DGTD: {}", format_ratio(timings.speedup())).unwrap();
    Report {
        summary: s,
        timings_csv: timings.to_csv(),
        errors_csv: errors.to_csv(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_zero_approximations() {
        let u = [1.0, -2.0, 0.5];
        let v = [0.0, 3.0, 4.0];
        assert_eq!(relative_error(&[&u, &v], &[&u, &v]), Some(0.0));
        let z = [0.0; 3];
        assert_eq!(relative_error(&[&u, &v], &[&z, &z]), Some(1.0));
        assert_eq!(relative_error(&[&z], &[&u]), None);
    }

    #[test]
    fn zero_references_are_excluded() {
        let s = |p, c| SampleError {
            t: 0.0,
            mu: vec![1.0],
            projection: p,
            cae_csi: c,
            pod_csi: c,
        };
        let r = ErrorReport::from_samples(vec![
            s([Some(0.1), Some(0.2)], [Some(0.3), Some(0.4)]),
            s([None, Some(0.4)], [None, Some(0.6)]),
        ]);
        assert_eq!(r.excluded, [1, 0]);
        assert!((r.mean_projection[0] - 0.1).abs() < 1e-15);
        assert!((r.mean_cae_csi[1] - 0.5).abs() < 1e-15);
        assert!(r.to_csv().lines().nth(2).unwrap().contains("nan"));
    }

    #[test]
    fn speedup_display_floors() {
        // disk: DGTD 257.78 s against 0.0761 s online
        assert_eq!(format_ratio(speedup(2.5778e2, 0.0761)), "3387");
        // multi-layer: 304.77 s against 0.2923 s
        assert_eq!(format_ratio(speedup(3.0477e2, 0.2923)), "1042");
        assert_eq!(speedup(1.0, 0.0), f64::INFINITY);
        assert_eq!(format_ratio(speedup(1.0, 0.0)), "inf");
    }

    #[test]
    fn report_layout() {
        let t = Timings {
            snapshots: 2.088e4,
            pod: 6.053,
            cae_csi: 1.9042e3,
            online_cae_csi: 0.0761,
            online_pod_csi: 0.2561,
            dgtd: 257.78,
        };
        let e = ErrorReport::from_samples(vec![]);
        let r = report(&t, &e);
        assert!(r.summary.contains("speed-up over DGTD: 3387"));
        let row: Vec<&str> = r.timings_csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 7);
        assert_eq!(row[0].parse::<f64>().unwrap(), 2.088e4);
        assert_eq!(row[0], "2.0880000000000000e4");
    }
}
