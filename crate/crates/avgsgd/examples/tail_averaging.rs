//! Tail averaging: risk of the average over iterates s..s+N-1, its bounds,
//! and the geometric burn-in of the bias head as s grows.
//!
//! Run with `cargo run --example tail_averaging`.

use avgsgd::{
    build_spectrum, exact_risk, tail_lower_bound, tail_upper_bound, RegressionModel, Result,
    SgdConfig, SpectrumFamily, GAUSSIAN_ALPHA, GAUSSIAN_BETA,
};

fn main() -> Result<()> {
    let d = 16;
    let spectrum = build_spectrum(&SpectrumFamily::PowerLaw { r: 1.0, d })?;
    let gamma = 1.0 / (6.0 * spectrum.trace());
    let model = RegressionModel::new(spectrum, vec![1.0; d], 1.0, true)?;
    let n = 1000;

    println!("{:>6} {:>12} {:>12} {:>12}", "s", "lower", "exact", "upper");
    for tail_start in [0, n / 4, n / 2, n] {
        let cfg = SgdConfig {
            gamma,
            n_samples: n,
            tail_start,
            w0: vec![0.0; d],
            seed: 0,
        };
        let lo = tail_lower_bound(&model, &cfg, GAUSSIAN_BETA)?;
        let up = tail_upper_bound(&model, &cfg, GAUSSIAN_ALPHA)?;
        let (exact, _, _) = exact_risk(&model, &cfg)?;
        assert!(lo.total <= exact && exact <= up.total);
        println!(
            "{tail_start:>6} {:>12.4e} {exact:>12.4e} {:>12.4e}",
            lo.total, up.total
        );
    }

    // With w0 - w* along the top eigendirection and no noise, the bias
    // head of the upper bound contracts by exactly (1 - gamma lambda_1)^2
    // per burn-in step.
    let spectrum = build_spectrum(&SpectrumFamily::PowerLaw { r: 1.0, d })?;
    let lambda_1 = spectrum.lambda_max();
    let noiseless = RegressionModel::new(spectrum, vec![0.0; d], 0.0, true)?;
    let mut w0 = vec![0.0; d];
    w0[0] = 1.0;
    let base = SgdConfig {
        gamma,
        n_samples: n,
        tail_start: 0,
        w0,
        seed: 0,
    };
    let at_zero = tail_upper_bound(&noiseless, &base, GAUSSIAN_ALPHA)?;
    println!("\nbias head burn-in along e_1 (no noise):");
    for s in [100usize, 500, 1000] {
        let cfg = SgdConfig {
            tail_start: s,
            ..base.clone()
        };
        let report = tail_upper_bound(&noiseless, &cfg, GAUSSIAN_ALPHA)?;
        let expected = (1.0 - gamma * lambda_1).powi(2 * s as i32);
        let measured = report.effective_bias / at_zero.effective_bias;
        println!(
            "  s = {s:>4}: bias shrank by {measured:.6e}, (1 - gamma lambda_1)^(2s) = {expected:.6e}"
        );
    }
    Ok(())
}
