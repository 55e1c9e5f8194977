//! Sweeps the exact risk oracle over a geometric grid of sample sizes and
//! fits log-log decay rates for three spectrum families. The fit uses the
//! largest half of the grid, where the decay is closest to its asymptote.
//!
//! Run with `cargo run --example rate_sweep`.

use avgsgd::{
    build_spectrum, exact_risk, rate_prediction, RateCase, RegressionModel, Result, SgdConfig,
    SpectrumFamily,
};

const NS: [usize; 5] = [512, 1024, 2048, 4096, 8192];

fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0.ln()).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, y) in points {
        let dx = x.ln() - mean_x;
        num += dx * (y.ln() - mean_y);
        den += dx * dx;
    }
    num / den
}

/// Exact risk of the full average at stepsize `1/(6 tr H)` for one model.
fn risk_at(
    family: &SpectrumFamily,
    w_star: fn(&[f64]) -> Vec<f64>,
    noise_std: f64,
    n: usize,
) -> Result<f64> {
    let spectrum = build_spectrum(family)?;
    let gamma = 1.0 / (6.0 * spectrum.trace());
    let d = spectrum.dim();
    let w = w_star(spectrum.values());
    let model = RegressionModel::new(spectrum, w, noise_std, true)?;
    let cfg = SgdConfig {
        gamma,
        n_samples: n,
        tail_start: 0,
        w0: vec![0.0; d],
        seed: 0,
    };
    let (total, _, _) = exact_risk(&model, &cfg)?;
    Ok(total)
}

fn first_coordinate(values: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; values.len()];
    w[0] = 1.0;
    w
}

fn ones(values: &[f64]) -> Vec<f64> {
    vec![1.0; values.len()]
}

fn report(name: &str, points: &[(f64, f64)], case: &RateCase) {
    for &(n, risk) in points {
        println!("{name:>12}  n = {n:>5}  risk = {risk:.6e}");
    }
    let cut = points.len() / 2;
    let fitted = log_log_slope(&points[cut..]);
    let predicted: Vec<(f64, f64)> = points[cut..]
        .iter()
        .map(|&(n, _)| (n, rate_prediction(case, n as usize)))
        .collect();
    let predicted = log_log_slope(&predicted);
    println!(
        "{name:>12}  fitted slope = {fitted:+.3}, predicted = {predicted:+.3}, \
         gap = {:+.3}\n",
        fitted - predicted
    );
}

fn main() -> Result<()> {
    let power_law = SpectrumFamily::PowerLaw { r: 1.0, d: 256 };
    let points: Vec<(f64, f64)> = NS
        .iter()
        .map(|&n| Ok((n as f64, risk_at(&power_law, ones, 1.0, n)?)))
        .collect::<Result<_>>()?;
    report("power_law", &points, &RateCase::PowerLaw { r: 1.0 });

    let exponential = SpectrumFamily::Exponential { d: 256 };
    let points: Vec<(f64, f64)> = NS
        .iter()
        .map(|&n| Ok((n as f64, risk_at(&exponential, ones, 1.0, n)?)))
        .collect::<Result<_>>()?;
    report("exponential", &points, &RateCase::Exponential);

    // The piecewise family tracks the sample size: the flat head holds
    // ceil(sqrt(n)) eigenvalues while the ambient dimension stays at 256.
    // At this dimension the tail contributes a slowly-varying variance
    // floor, so the noise level is kept small to expose the head's decay.
    let points: Vec<(f64, f64)> = NS
        .iter()
        .map(|&n| {
            let s = (n as f64).sqrt().ceil() as usize;
            let family = SpectrumFamily::Piecewise { s, d: 256 };
            Ok((n as f64, risk_at(&family, first_coordinate, 0.25, n)?))
        })
        .collect::<Result<_>>()?;
    report("piecewise", &points, &RateCase::Piecewise { r: 0.5, q: 2.0 });

    Ok(())
}
