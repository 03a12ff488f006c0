//! Field comparisons on a line and a grid, and drive-frequency Fourier
//! coefficients over the sampled window, as CSV.

use std::fmt::Write as _;

use crate::dgtd::FieldProbe;
use crate::io::csv_float;

const NAMES: [&str; 3] = ["hx", "hy", "ez"];

/// `(2/N) Σ_i u(t_i) e^{-iω t_i}` as `(re, im)`; over one full period of
/// uniform samples its modulus is the amplitude at `ω`.
pub fn dft_coefficient(samples: &[f64], times: &[f64], omega: f64) -> (f64, f64) {
    let n = samples.len().max(1) as f64;
    let (re, im) = samples
        .iter()
        .zip(times)
        .fold((0.0, 0.0), |(re, im), (u, t)| {
            (re + u * (omega * t).cos(), im - u * (omega * t).sin())
        });
    (2.0 * re / n, 2.0 * im / n)
}

/// Reference and reduced fields sampled at the probe points:
/// `x, y, <c>_ref, <c>_rom, ...` for the three components.
pub fn comparison_csv(probe: &FieldProbe, reference: [&[f64]; 3], reduced: [&[f64]; 3]) -> String {
    let r: Vec<Vec<f64>> = reference.iter().map(|f| probe.sample(f)).collect();
    let a: Vec<Vec<f64>> = reduced.iter().map(|f| probe.sample(f)).collect();
    let mut s = String::from("x,y");
    for n in NAMES {
        write!(s, ",{n}_ref,{n}_rom").unwrap();
    }
    s.push('\n');
    for (p, pt) in probe.points().iter().enumerate() {
        write!(s, "{},{}", csv_float(pt[0]), csv_float(pt[1])).unwrap();
        for c in 0..3 {
            write!(s, ",{},{}", csv_float(r[c][p]), csv_float(a[c][p])).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Drive-frequency amplitude and phase at every probe point, from fields
/// at `times` (one entry per time, components `[hx, hy, ez]`).
pub fn dft_csv(
    probe: &FieldProbe,
    times: &[f64],
    omega: f64,
    reference: &[[Vec<f64>; 3]],
    reduced: &[[Vec<f64>; 3]],
) -> String {
    let sample = |fields: &[[Vec<f64>; 3]], c: usize| -> Vec<Vec<f64>> {
        fields.iter().map(|f| probe.sample(&f[c])).collect()
    };
    let mut s = String::from("x,y");
    for n in NAMES {
        write!(s, ",{n}_ref_abs,{n}_ref_arg,{n}_rom_abs,{n}_rom_arg").unwrap();
    }
    s.push('\n');
    let series: Vec<[Vec<Vec<f64>>; 2]> = (0..3).map(|c| [sample(reference, c), sample(reduced, c)]).collect();
    for (p, pt) in probe.points().iter().enumerate() {
        write!(s, "{},{}", csv_float(pt[0]), csv_float(pt[1])).unwrap();
        for pair in &series {
            for per_time in pair {
                let u: Vec<f64> = per_time.iter().map(|v| v[p]).collect();
                let (re, im) = dft_coefficient(&u, times, omega);
                write!(s, ",{},{}", csv_float(re.hypot(im)), csv_float(im.atan2(re))).unwrap();
            }
        }
        s.push('\n');
    }
    s
}
