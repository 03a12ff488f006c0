use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use maxrom_core::io::{csv_float, write_atomic};
use maxrom_core::pipeline::{
    evaluate_errors, hex, online, online_pod_csi, time_grid, write_report, ExperimentConfig, RomModel, StageTiming,
    Workspace, GROUPS,
};
use maxrom_core::pod::{intrinsic_coordinates, two_step_bound};
use maxrom_core::snapshot::COMPONENT_NAMES;
use maxrom_core::{Error, Result};

#[derive(Parser)]
#[command(name = "maxrom", version, about = "POD / autoencoder / spline reduced-order models for 2-D Maxwell scattering")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `pod.k`.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Overrides `pod.n_basis`.
    #[arg(long, global = true)]
    nbasis: Option<usize>,
    /// Overrides `cae.code`.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Overrides `cae.train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `csi.delta`.
    #[arg(long, global = true)]
    delta: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the full-order model at every training and test parameter.
    FomRun,
    /// Summarize the training snapshot set.
    Snapshots,
    /// Two-step POD of the training snapshots.
    Pod,
    /// Train the convolutional autoencoder on the POD coefficients.
    TrainCae,
    /// Fit the spline mode models and write the reduced model.
    FitCsi,
    /// Every offline stage, resuming from valid artifacts.
    Offline,
    /// Evaluate the reduced model at one time and parameter.
    OnlineEval {
        #[arg(long)]
        t: f64,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        mu: Vec<f64>,
        /// Model file; defaults to the one in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also evaluate the POD-CSI baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Test-set errors of the POD-CSI baseline next to the projection error.
    BaselineEval,
    /// Errors, CPU-time table and field exports.
    Report {
        /// Timing passes over the test queries.
        #[arg(long, default_value_t = 20)]
        rounds: usize,
    },
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(k) = g.k {
        cfg.pod.k = k;
    }
    if let Some(n) = g.nbasis {
        cfg.pod.n_basis = n;
    }
    if let Some(n) = g.n {
        cfg.cae.code = n;
    }
    if let Some(s) = g.seed {
        cfg.cae.train.seed = s;
    }
    if let Some(d) = g.delta {
        cfg.csi.delta = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_timings(timings: &[StageTiming]) {
    for t in timings {
        let note = if t.cached { " (cached)" } else { "" };
        println!("{:<16} {:>12.4} s{note}", t.stage, t.seconds);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Command::OnlineEval { t, mu, model, baseline } = &cli.command {
        let path = match model {
            Some(p) => p.clone(),
            None => Workspace::new(load_config(&cli.global)?).model_path(),
        };
        return online_eval(path, *t, mu, *baseline);
    }
    let ws = Workspace::new(load_config(&cli.global)?);
    std::fs::create_dir_all(&ws.dir).map_err(|e| Error::Io {
        path: ws.dir.clone(),
        source: e,
    })?;
    let mut timings = Vec::new();
    match cli.command {
        Command::FomRun => {
            let grid = time_grid(&ws.cfg, &maxrom_core::pipeline::build_mesh(&ws.cfg)?)?;
            println!(
                "dt = {:.6e}, {} steps to T_f = {:.6}, sampling ({:.6}, {:.6}]",
                grid.dt, grid.total_steps, grid.t_final, grid.window.0, grid.window.1
            );
            let train = ws.snapshots(&mut timings)?;
            let test = ws.test_snapshots(&mut timings)?;
            println!("N_h = {}, {} training and {} test runs", train.set.n_h(), train.wall_times.len(), test.wall_times.len());
            print_timings(&timings);
        }
        Command::Snapshots => {
            let sweep = ws.snapshots(&mut timings)?;
            let set = &sweep.set;
            let plan = set.plan();
            println!("N_h = {}, N_t = {}, N_p = {}", set.n_h(), plan.n_t(), plan.n_p());
            for (c, name) in COMPONENT_NAMES.iter().enumerate() {
                let norm = set.assembled(c).frobenius_norm();
                println!("{name:<3} ‖S‖_F = {norm:.6e}");
            }
            let mut csv = String::from("param_index,mu,fom_seconds\n");
            for (j, mu) in plan.params.iter().enumerate() {
                let mu: Vec<String> = mu.iter().map(|v| csv_float(*v)).collect();
                csv.push_str(&format!("{j},{},{}\n", mu.join(";"), csv_float(sweep.wall_times[j])));
            }
            write_atomic(&ws.path("snapshot_params.csv"), csv.as_bytes())?;
            let times: String = plan.times.iter().map(|t| csv_float(*t) + "\n").collect();
            write_atomic(&ws.path("snapshot_times.csv"), format!("t\n{times}").as_bytes())?;
        }
        Command::Pod => {
            let sweep = ws.snapshots(&mut timings)?;
            let pod = ws.pod(&sweep.set, &mut timings)?;
            for (c, name) in COMPONENT_NAMES.iter().enumerate() {
                let s = &pod.step2_singular_values[c];
                let shown: Vec<String> = s.iter().take(pod.n_basis).map(|v| format!("{v:.3e}")).collect();
                println!("{name:<3} σ: {}", shown.join(" "));
            }
            for (c, b) in two_step_bound(&pod, &sweep.set)?.iter().enumerate() {
                println!(
                    "{:<3} projection error {:.4e} <= L1 {:.4e} + L2 {:.4e}",
                    COMPONENT_NAMES[c], b.measured, b.l1, b.l2
                );
            }
            print_timings(&timings);
        }
        Command::TrainCae => {
            let sweep = ws.snapshots(&mut timings)?;
            let pod = ws.pod(&sweep.set, &mut timings)?;
            let coords = intrinsic_coordinates(&pod, &sweep.set)?;
            let (model, log) = ws.cae(&coords, &mut timings)?;
            match log {
                Some(log) => println!(
                    "{} epochs, best validation loss {:.4e} at epoch {}",
                    log.epochs.len(),
                    log.best_val_loss,
                    log.best_epoch
                ),
                None => println!("code length {}, loaded from cache", model.code),
            }
            print_timings(&timings);
        }
        Command::FitCsi | Command::Offline => {
            let run = ws.run()?;
            println!("CAE-CSI ranks per code: {:?}", run.model.csi.ranks());
            let ranks = run.model.baseline.ranks();
            println!(
                "POD-CSI ranks: max {} over {} coefficients",
                ranks.iter().max().unwrap_or(&0),
                ranks.len()
            );
            println!("model: {} (config {})", ws.model_path().display(), &hex(&run.model.config_hash)[..16]);
            print_timings(&run.timings);
        }
        Command::BaselineEval => {
            let model = RomModel::read(&ws.model_path())?;
            let test = ws.test_snapshots(&mut timings)?;
            let errors = evaluate_errors(&model, &test.set, ws.cfg.test.times.as_deref())?;
            for (g, (name, _)) in GROUPS.iter().enumerate() {
                println!(
                    "{name}: projection {:.4}%, POD-CSI {:.4}%",
                    100.0 * errors.mean_projection[g],
                    100.0 * errors.mean_pod_csi[g]
                );
            }
            write_atomic(&ws.path("errors.csv"), errors.to_csv().as_bytes())?;
        }
        Command::Report { rounds } => {
            let run = ws.run()?;
            let (rep, _, _) = write_report(&ws, &run, rounds)?;
            print!("{}", rep.summary);
            println!("outputs in {}", ws.dir.display());
        }
        Command::OnlineEval { .. } => unreachable!(),
    }
    Ok(())
}

fn online_eval(path: PathBuf, t: f64, mu: &[f64], baseline: bool) -> Result<()> {
    let model = RomModel::read(&path)?;
    let start = Instant::now();
    let f = online(&model, t, mu)?;
    let elapsed = start.elapsed().as_secs_f64();
    println!("CAE-CSI: {:.3e} s{}", elapsed, if f.extrapolated { " (extrapolated)" } else { "" });
    let mut csv = String::from("dof,hx,hy,ez");
    let base = if baseline {
        let start = Instant::now();
        let b = online_pod_csi(&model, t, mu)?;
        println!("POD-CSI: {:.3e} s", start.elapsed().as_secs_f64());
        csv.push_str(",hx_pod_csi,hy_pod_csi,ez_pod_csi");
        Some(b)
    } else {
        None
    };
    csv.push('\n');
    for i in 0..f.ez.len() {
        csv.push_str(&format!("{i},{},{},{}", csv_float(f.hx[i]), csv_float(f.hy[i]), csv_float(f.ez[i])));
        if let Some(b) = &base {
            csv.push_str(&format!(",{},{},{}", csv_float(b.hx[i]), csv_float(b.hy[i]), csv_float(b.ez[i])));
        }
        csv.push('\n');
    }
    let tag: Vec<String> = mu.iter().map(|v| format!("{v}")).collect();
    let out = path
        .parent()
        .unwrap_or(std::path::Path::new("."))
        .join(format!("online_t{t}_mu{}.csv", tag.join("_")));
    write_atomic(&out, csv.as_bytes())?;
    println!("fields written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
