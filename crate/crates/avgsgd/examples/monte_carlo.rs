//! Monte Carlo estimation of the averaged-SGD excess risk, checked against
//! the exact oracle, plus the coupled-stream bias/variance decomposition.
//! Replicate r reseeds with seed + r, so the run is reproducible and
//! independent of thread count.
//!
//! Run with `cargo run --example monte_carlo`.

use avgsgd::{
    build_spectrum, exact_risk, monte_carlo_decomposition, monte_carlo_risk, RegressionModel,
    Result, SgdConfig, SpectrumFamily,
};

fn main() -> Result<()> {
    let spectrum = build_spectrum(&SpectrumFamily::PowerLaw { r: 1.0, d: 8 })?;
    let gamma = 1.0 / (6.0 * spectrum.trace());
    let model = RegressionModel::new(spectrum, vec![1.0; 8], 1.0, true)?;
    let cfg = SgdConfig {
        gamma,
        n_samples: 400,
        tail_start: 0,
        w0: vec![0.0; 8],
        seed: 7,
    };

    let (exact_total, exact_bias, exact_var) = exact_risk(&model, &cfg)?;
    let replicates = 5000;
    let estimate = monte_carlo_risk(&model, &cfg, replicates)?;
    let deviation = (estimate.mean - exact_total).abs() / estimate.std_err;
    println!("exact risk          {exact_total:.6e}");
    println!(
        "monte carlo ({replicates} reps) {:.6e} +/- {:.2e}  ({deviation:.2} SE from exact)",
        estimate.mean, estimate.std_err
    );

    let rerun = monte_carlo_risk(&model, &cfg, replicates)?;
    assert_eq!(estimate, rerun);
    println!("rerun with same seed reproduces the estimate bit for bit");

    let (bias, variance) = monte_carlo_decomposition(&model, &cfg, replicates)?;
    println!("\ncoupled decomposition:");
    println!(
        "  bias     {:.6e} +/- {:.2e}   (exact {exact_bias:.6e})",
        bias.mean, bias.std_err
    );
    println!(
        "  variance {:.6e} +/- {:.2e}   (exact {exact_var:.6e})",
        variance.mean, variance.std_err
    );
    Ok(())
}
