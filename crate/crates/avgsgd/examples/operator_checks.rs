//! Drives the covariance recursions step by step and reports the ordering
//! margins: monotone growth of the variance chain, its crude and refined
//! upper bounds, the matching lower bound, and the partial-sum chain's
//! bounds. Margins are min-eigenvalues normalized by matrix scale, so
//! anything above -1e-10 counts as PSD.
//!
//! Run with `cargo run --example operator_checks`.

use avgsgd::{
    build_spectrum, check_partial_sum_order, check_variance_chain_order, evolve,
    CovarianceState, RegressionModel, Result, SgdConfig, SpectrumFamily,
};

fn main() -> Result<()> {
    let d = 8;
    let spectrum = build_spectrum(&SpectrumFamily::PowerLaw { r: 1.0, d })?;
    let gamma = 1.0 / (6.0 * spectrum.trace());
    let model = RegressionModel::new(spectrum, vec![1.0; d], 1.0, true)?;
    let cfg = SgdConfig {
        gamma,
        n_samples: 500,
        tail_start: 0,
        w0: vec![0.0; d],
        seed: 0,
    };

    let variance = check_variance_chain_order(&model, &cfg)?;
    println!("variance chain over {} steps (passed = {}):", cfg.n_samples, variance.passed);
    println!("  worst monotone margin {:+.3e}", variance.worst_monotone);
    println!("  worst crude margin    {:+.3e}", variance.worst_crude);
    println!("  worst refined margin  {:+.3e}", variance.worst_refined);
    println!("  worst lower margin    {:+.3e}", variance.worst_lower);

    let partial = check_partial_sum_order(&model, &cfg)?;
    println!("\npartial-sum chain (passed = {}):", partial.passed);
    println!("  worst monotone margin {:+.3e}", partial.worst_monotone);
    println!("  worst refined margin  {:+.3e}", partial.worst_refined);

    // The bias chain contracts toward zero; its trace is a clean summary.
    let mut state = CovarianceState::bias(&model, &cfg.w0)?;
    println!("\nbias-chain trace decay:");
    for _ in 0..5 {
        state = evolve(state, &model, &cfg, 100)?;
        println!("  step {:>4}: tr B_t = {:.6e}", state.step(), state.matrix().trace());
    }
    Ok(())
}
