//! Acceptance suite. Prints one PASS/FAIL line per criterion, then fails if
//! any criterion failed.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use maxrom_core::cae::{linear_autoencoder_loss, prepare_dataset, Architecture};
use maxrom_core::csi::{fit_spline_1d, fit_tensor_product};
use maxrom_core::dgtd::{
    assemble_operators, generate_mesh, run_fom, FieldState, IncidentWave, MaterialMap, RecordPolicy,
};
use maxrom_core::linalg::{eig_sym, pod_basis, projection_error_sq, Matrix};
use maxrom_core::nn::{conv2d, conv2d_transpose_to, mse_loss, Layer, Network, Tensor4};
use maxrom_core::pipeline::{offline, run_sweep, write_report, ExperimentConfig, Workspace, MODEL_FILE};
use maxrom_core::pod::{residual_norm, two_step_bound, two_step_pod};
use maxrom_core::snapshot::{SamplingPlan, SnapshotSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn desk_config(dir: &Path) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/disk_desk.toml");
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.output_dir = Some(dir.to_path_buf());
    cfg
}

fn pod_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..20 {
        let (m, n) = (rng.gen_range(2..=60), rng.gen_range(1..=40));
        let a = Matrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let (mut lam, _) = eig_sym(&a.t_matmul(&a).unwrap()).unwrap();
        lam.sort_by(|x, y| y.total_cmp(x));
        let norm_sq = a.frobenius_norm().powi(2);
        for k in 1..=m.min(n) {
            let v = pod_basis(&a, k).unwrap();
            let err = projection_error_sq(&a, &v).unwrap();
            let tail: f64 = lam[k..].iter().map(|l| l.max(0.0)).sum();
            // relative to the discarded energy, with a round-off floor once nothing is discarded
            worst = worst.max((err - tail).abs() / (tail + 1e-6 * norm_sq));
            cases += 1;
        }
    }
    outcome(worst <= 1e-8, format!("{cases} (matrix, k) cases, worst relative gap {worst:.2e}"))
}

fn two_step() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_config(dir.path());
    cfg.mesh.resolution = 13;
    cfg.parameters[0].count = 9;
    let sweep = run_sweep(&cfg, &cfg.training_params().unwrap()).unwrap();
    let set = &sweep.set;
    let basis = two_step_pod(set, cfg.pod.k, cfg.pod.n_basis).unwrap();
    let bounds = two_step_bound(&basis, set).unwrap();
    let bound_ok = bounds.iter().all(|b| b.measured <= b.l1 + b.l2);
    let ratio = bounds.iter().map(|b| b.measured / (b.l1 + b.l2)).fold(0.0, f64::max);

    // lossless limit on a full-rank set of the same shape
    let (n_h, n_t, n_p) = (set.n_h(), set.plan().n_t(), set.plan().n_p());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data = (0..3)
        .map(|_| (0..n_p).map(|_| Matrix::from_fn(n_h, n_t, |_, _| rng.gen_range(-1.0..1.0))).collect())
        .collect();
    let full = SnapshotSet::new(SamplingPlan::new(set.plan().params.clone(), set.plan().times.clone()).unwrap(), data)
        .unwrap();
    let lossless = two_step_pod(&full, n_t, n_t * n_p).unwrap();
    let mut worst: f64 = 0.0;
    for c in 0..3 {
        let s = full.assembled(c);
        let err: f64 = (0..s.cols())
            .map(|i| residual_norm(&lossless.bases[c], s.col(i)).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err / s.frobenius_norm());
    }
    outcome(
        bound_ok && worst <= 1e-8 && (1900..=2100).contains(&n_h),
        format!("N_h = {n_h}, N_t = {n_t}, N_p = {n_p}; max measured/bound {ratio:.3}; lossless relative error {worst:.2e}"),
    )
}

fn cubic(c: &[f64; 4], x: f64) -> f64 {
    c[0] + x * (c[1] + x * (c[2] + x * c[3]))
}

fn splines() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut fit_err, mut jump): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let n = rng.gen_range(4..15);
        let mut knots = vec![rng.gen_range(-2.0..0.0)];
        for _ in 1..n {
            let last = *knots.last().unwrap();
            knots.push(last + rng.gen_range(0.05..1.0));
        }
        let vals: Vec<f64> = knots.iter().map(|&x| cubic(&c, x)).collect();
        let s = fit_spline_1d(&knots, &vals).unwrap();
        let (a, b) = (knots[0], knots[n - 1]);
        for i in 0..=200 {
            let x = a + (b - a) * i as f64 / 200.0;
            fit_err = fit_err.max((s.eval(x) - cubic(&c, x)).abs());
        }
        for i in 1..n - 1 {
            let orders: &[usize] = if i == 1 || i == n - 2 { &[0, 1, 2, 3] } else { &[0, 1, 2] };
            for &o in orders {
                let (l, r) = (s.derivative(knots[i], o, Some(i - 1)), s.derivative(knots[i], o, Some(i)));
                jump = jump.max((l - r).abs() / (1.0 + l.abs()));
            }
        }
    }
    let axes: Vec<Vec<f64>> = (0..4)
        .map(|d| (0..5 + d).map(|i| -1.0 + i as f64 * 0.4 + 0.05 * (i * i) as f64).collect())
        .collect();
    let factors: Vec<[f64; 4]> = (0..4).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
    let f = |p: &[f64]| p.iter().zip(&factors).map(|(x, c)| cubic(c, *x)).product::<f64>();
    let mut values = Vec::new();
    let mut idx = [0usize; 4];
    loop {
        let p: Vec<f64> = (0..4).map(|d| axes[d][idx[d]]).collect();
        values.push(f(&p));
        let mut d = 3;
        loop {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            if d == 0 {
                break;
            }
            d -= 1;
        }
        if idx == [0; 4] {
            break;
        }
    }
    let it = fit_tensor_product(&axes, &values).unwrap();
    let mut tensor_err: f64 = 0.0;
    for _ in 0..200 {
        let p: Vec<f64> = axes.iter().map(|a| rng.gen_range(a[0]..*a.last().unwrap())).collect();
        tensor_err = tensor_err.max((it.eval(&p).unwrap() - f(&p)).abs());
    }
    outcome(
        fit_err <= 1e-10 && jump <= 1e-9 && tensor_err <= 1e-9,
        format!("cubic error {fit_err:.2e}, knot jumps {jump:.2e}, 4-D separable error {tensor_err:.2e}"),
    )
}

fn loss(enc: &Network, dec: &Network, x: &Tensor4) -> f64 {
    let out = dec.infer(&enc.infer(x).unwrap()).unwrap();
    mse_loss(&out, x).unwrap().0
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let arch = Architecture::desk(4, 3, 4, [4, 8, 16, 16], 32);
    let (mut enc, mut dec) = arch.build(&mut rng).unwrap();
    for p in enc.params_mut().into_iter().chain(dec.params_mut()) {
        p.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.05..0.05));
    }
    let x = Tensor4::from_vec([3, 3, 4, 4], (0..144).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    enc.zero_grad();
    dec.zero_grad();
    let out = dec.forward(&enc.forward(&x).unwrap()).unwrap();
    let (_, g) = mse_loss(&out, &x).unwrap();
    enc.backward(&dec.backward(&g).unwrap()).unwrap();
    let grads: Vec<Vec<f64>> = enc
        .params_mut()
        .into_iter()
        .chain(dec.params_mut())
        .map(|p| p.grad_mut().clone())
        .collect();
    let n_enc = enc.params().len();
    let h = 1e-4;
    let (mut worst, mut count): (f64, usize) = (0.0, 0);
    for (pi, grad) in grads.iter().enumerate() {
        let mut fd = vec![0.0; grad.len()];
        for (j, fj) in fd.iter_mut().enumerate() {
            let probe = |delta: f64| {
                let (mut e, mut d) = (enc.clone(), dec.clone());
                if pi < n_enc {
                    e.params_mut()[pi].data_mut()[j] += delta;
                } else {
                    d.params_mut()[pi - n_enc].data_mut()[j] += delta;
                }
                loss(&e, &d, &x)
            };
            // fourth-order central stencil
            *fj = (8.0 * (probe(h) - probe(-h)) - (probe(2.0 * h) - probe(-2.0 * h))) / (12.0 * h);
        }
        let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
        count += 1;
    }
    outcome(worst <= 1e-5, format!("{count} parameter tensors, worst relative gap {worst:.2e}"))
}

fn random_tensor(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    let n = dims.iter().product();
    Tensor4::from_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn adjointness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let arch = Architecture::paper(4);
    let mut worst: f64 = 0.0;
    let mut layers = 0;
    for (net, mut dims) in [
        (arch.build_encoder().unwrap(), [2, 3, 14, 14]),
        (arch.build_decoder().unwrap(), [2, 4, 1, 1]),
    ] {
        for layer in net.layers() {
            let next = Network::new(vec![layer.clone()]).output_dims(dims).unwrap();
            if let Layer::Conv(spec) = layer {
                let mut spec = spec.clone();
                spec.kernel = random_tensor(spec.kernel.dims(), &mut rng);
                spec.bias = Tensor4::zeros(spec.bias.dims());
                // forward correlation runs from the larger grid to the smaller
                let (big, small) = if spec.transposed { (next, dims) } else { (dims, next) };
                let x = random_tensor(big, &mut rng);
                let y = random_tensor(small, &mut rng);
                let lhs = conv2d(&x, &spec).unwrap().dot(&y);
                let rhs = x.dot(&conv2d_transpose_to(&y, &spec, (big[2], big[3])).unwrap());
                worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
                layers += 1;
            }
            dims = next;
        }
    }
    outcome(layers == 8 && worst <= 1e-10, format!("{layers} layers, worst relative gap {worst:.2e}"))
}

fn plane_wave_error(resolution: usize) -> f64 {
    let mesh = generate_mesh(1.0, resolution, &[]).unwrap();
    let ops = assemble_operators(&mesh, &MaterialMap::vacuum(), 2).unwrap();
    let src = IncidentWave::new(2.0 * std::f64::consts::PI);
    let t_final = 1.0;
    let dt = t_final / (t_final / (0.5 * ops.dt_max())).ceil();
    let init = FieldState::incident(&ops, &src, 0.0, dt);
    let s = run_fom(&ops, &src, init, dt, t_final, &RecordPolicy::None).unwrap().final_state;
    let exact = FieldState::incident(&ops, &src, t_final, dt);
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let err = ops.l2_norm_sq(&diff(&s.ez, &exact.ez))
        + ops.l2_norm_sq(&diff(&s.hx, &exact.hx))
        + ops.l2_norm_sq(&diff(&s.hy, &exact.hy));
    (err / (ops.l2_norm_sq(&exact.ez) + ops.l2_norm_sq(&exact.hy))).sqrt()
}

fn fom_sanity() -> Outcome {
    let errs: Vec<f64> = [4, 8, 16].into_iter().map(plane_wave_error).collect();
    let rates: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let mesh = generate_mesh(2.6, 8, &maxrom_core::dgtd::concentric_disks(&[0.5])).unwrap();
    let mats = MaterialMap::vacuum()
        .with(1, maxrom_core::dgtd::Material { eps: 5.0, nu: 1.0 })
        .unwrap();
    let ops = assemble_operators(&mesh, &mats, 2).unwrap();
    let silent = IncidentWave::silent(1.6);
    let z = run_fom(&ops, &silent, FieldState::zeros(ops.num_dofs()), 0.9 * ops.dt_max(), 5.0, &RecordPolicy::None)
        .unwrap();
    let zero = z.final_state.max_abs() == 0.0 && z.num_steps > 0;
    let errs: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
    outcome(
        rates.iter().all(|&r| r >= 1.5) && zero,
        format!("L2 errors {errs:?}, observed orders {rates:.2?}; zero source stays zero: {zero}"),
    )
}

struct DeskRun {
    line7: Outcome,
    line8: Outcome,
    baseline: Outcome,
    model: Vec<u8>,
}

fn desk(dir: &Path) -> DeskRun {
    let cfg = desk_config(dir);
    let start = Instant::now();
    let run = offline(&cfg).unwrap();
    let offline_s = start.elapsed().as_secs_f64();
    let ws = Workspace::new(cfg.clone());
    let (_, errors, timings) = write_report(&ws, &run, 200).unwrap();
    let model = std::fs::read(dir.join(MODEL_FILE)).unwrap();

    let axis = &cfg.parameters[0];
    let setup_ok = run.model.n_h() == 3072
        && run.training.set.plan().n_p() == 11
        && run.training.set.plan().n_t() == 64
        && (cfg.pod.k, cfg.pod.n_basis, cfg.cae.code) == (4, 16, 4)
        && cfg.csi.delta == 1e-4
        && cfg.test.params.len() == 3
        && cfg.test.params.iter().all(|p| p[0] > axis.lo && p[0] < axis.hi);
    let (pro, cae, pod) = (errors.mean_projection, errors.mean_cae_csi, errors.mean_pod_csi);
    let accuracy = (0..2).all(|g| pro[g] <= 0.05 && cae[g] <= 2.5 * pro[g] + 0.01 && cae[g] >= pro[g] - 1e-12);
    let line7 = outcome(
        setup_ok && accuracy && offline_s < 1800.0 && timings.online_cae_csi < 0.01,
        format!(
            "Pro H {:.3}% E {:.3}%, CAE-CSI H {:.3}% E {:.3}%, POD-CSI H {:.3}% E {:.3}%; offline {offline_s:.0} s, online {:.3e} s",
            100.0 * pro[0],
            100.0 * pro[1],
            100.0 * cae[0],
            100.0 * cae[1],
            100.0 * pod[0],
            100.0 * pod[1],
            timings.online_cae_csi
        ),
    );
    let speedup = timings.dgtd / timings.online_cae_csi;
    let line8 = outcome(
        speedup >= 100.0 && timings.online_cae_csi < timings.online_pod_csi,
        format!(
            "DGTD {:.3e} s, CAE-CSI {:.3e} s, POD-CSI {:.3e} s, speed-up {speedup:.0}",
            timings.dgtd, timings.online_cae_csi, timings.online_pod_csi
        ),
    );
    let data = prepare_dataset(&run.coords, cfg.cae.train_fraction, cfg.cae.train.seed).unwrap();
    let linear = linear_autoencoder_loss(&data.train, cfg.cae.code).unwrap();
    let trained = run.model.cae.reconstruction_loss(&data.train).unwrap();
    let baseline = outcome(
        trained < 1.5 * linear,
        format!("training loss {trained:.3e}, rank-{} linear autoencoder {linear:.3e}", cfg.cae.code),
    );
    DeskRun {
        line7,
        line8,
        baseline,
        model,
    }
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

#[test]
fn acceptance() {
    let mut results: Vec<(String, Outcome)> = Vec::new();
    // written straight to stderr so the lines survive output capture
    let mut report = |name: &str, limit: f64, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let mut o = guarded(f);
        let secs = start.elapsed().as_secs_f64();
        if secs >= limit {
            o.pass = false;
        }
        let limit = if limit.is_finite() { format!(", limit {limit:.0} s") } else { String::new() };
        let line = format!("[{}] {name}: {} ({secs:.1} s{limit})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        writeln!(std::io::stderr(), "{line}").unwrap();
        results.push((name.to_string(), o));
    };
    report("1 POD error identity", 5.0, &mut pod_identity);
    report("2 two-step POD bound", 60.0, &mut two_step);
    report("3 spline exactness", 10.0, &mut splines);
    report("4 encoder-decoder gradients", 120.0, &mut gradients);
    report("5 conv adjointness", 10.0, &mut adjointness);
    report("6 FOM sanity", 600.0, &mut fom_sanity);

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let (mut line8, mut baseline, mut model) = (None, None, None);
    // the offline limit is checked inside against the pipeline's own clock
    report("7 desk end-to-end", f64::INFINITY, &mut || {
        let r = desk(dirs[0].path());
        line8 = Some(r.line8);
        baseline = Some(r.baseline);
        model = Some(r.model);
        r.line7
    });
    let missing = || outcome(false, "desk pipeline did not finish".into());
    report("8 online speed-up", f64::INFINITY, &mut || line8.take().unwrap_or_else(missing));
    report("9 bitwise determinism", f64::INFINITY, &mut || {
        let Some(first) = model.take() else {
            return missing();
        };
        offline(&desk_config(dirs[1].path())).unwrap();
        let second = std::fs::read(dirs[1].path().join(MODEL_FILE)).unwrap();
        outcome(first == second, format!("{} bytes, identical: {}", first.len(), first == second))
    });
    report("CAE vs linear autoencoder", f64::INFINITY, &mut || baseline.take().unwrap_or_else(missing));

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| n.as_str()).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
