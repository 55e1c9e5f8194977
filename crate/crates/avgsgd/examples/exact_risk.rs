//! Evaluates the exact expected excess risk of tail-averaged SGD through
//! the covariance recursions, and shows the bias/variance split plus its
//! closure identity (bias + variance = total).
//!
//! Run with `cargo run --example exact_risk`.

use avgsgd::{build_spectrum, exact_risk, RegressionModel, Result, SgdConfig, SpectrumFamily};

fn main() -> Result<()> {
    let spectrum = build_spectrum(&SpectrumFamily::PowerLaw { r: 1.0, d: 32 })?;
    let gamma = 1.0 / (6.0 * spectrum.trace());
    let model = RegressionModel::new(spectrum, vec![1.0; 32], 0.5, true)?;

    println!("power-law d = 32, sigma = 0.5, gamma = {gamma:.6}\n");
    println!("{:>6} {:>6} {:>12} {:>12} {:>12}", "n", "s", "bias", "variance", "total");
    for n in [100usize, 400, 1600, 6400] {
        for tail_start in [0, n / 2] {
            let cfg = SgdConfig {
                gamma,
                n_samples: n,
                tail_start,
                w0: vec![0.0; 32],
                seed: 0,
            };
            let (total, bias, variance) = exact_risk(&model, &cfg)?;
            let gap = (bias + variance - total).abs() / total;
            assert!(gap < 1e-10, "decomposition drifted: {gap:.3e}");
            println!(
                "{n:>6} {tail_start:>6} {bias:>12.6e} {variance:>12.6e} {total:>12.6e}"
            );
        }
    }

    // The two degenerate limits: no noise kills the variance part, and
    // starting at the optimum kills the bias part.
    let spectrum = build_spectrum(&SpectrumFamily::PowerLaw { r: 1.0, d: 32 })?;
    let noiseless = RegressionModel::new(spectrum, vec![1.0; 32], 0.0, true)?;
    let cfg = SgdConfig {
        gamma,
        n_samples: 1000,
        tail_start: 0,
        w0: vec![0.0; 32],
        seed: 0,
    };
    let (_, _, variance) = exact_risk(&noiseless, &cfg)?;
    println!("\nsigma = 0          -> variance = {variance:.3e}");

    let cfg_at_optimum = SgdConfig {
        w0: vec![1.0; 32],
        ..cfg
    };
    let (_, bias, _) = exact_risk(&model, &cfg_at_optimum)?;
    println!("w0 = w*            -> bias     = {bias:.3e}");
    Ok(())
}
