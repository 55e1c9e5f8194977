//! Sandwiches the exact oracle risk between the closed-form lower and
//! upper bounds across spectrum families and sample sizes, and prints the
//! large-stepsize corollary bounds for comparison.
//!
//! Run with `cargo run --example bound_sandwich`.

use avgsgd::{
    build_spectrum, corollary_bounds, exact_risk, lower_bound, upper_bound, CorollaryKind,
    RegressionModel, Result, SgdConfig, SpectrumFamily, GAUSSIAN_ALPHA, GAUSSIAN_BETA,
};

fn main() -> Result<()> {
    let families = [
        ("piecewise", SpectrumFamily::Piecewise { s: 4, d: 16 }),
        ("power_law", SpectrumFamily::PowerLaw { r: 1.0, d: 16 }),
        ("log_poly", SpectrumFamily::LogPoly { beta: 2.0, d: 16 }),
        ("exponential", SpectrumFamily::Exponential { d: 16 }),
    ];

    println!(
        "{:>12} {:>6} {:>12} {:>12} {:>12} {:>9}",
        "family", "n", "lower", "exact", "upper", "ratio"
    );
    for (name, family) in &families {
        let spectrum = build_spectrum(family)?;
        let gamma = 1.0 / (6.0 * spectrum.trace());
        let d = spectrum.dim();
        let model = RegressionModel::new(spectrum, vec![1.0; d], 1.0, true)?;
        for n in [500usize, 1000, 2000] {
            let cfg = SgdConfig {
                gamma,
                n_samples: n,
                tail_start: 0,
                w0: vec![0.0; d],
                seed: 0,
            };
            let lo = lower_bound(&model, &cfg, GAUSSIAN_BETA)?;
            let up = upper_bound(&model, &cfg, GAUSSIAN_ALPHA)?;
            assert!(lo.admissible && up.admissible);
            let (exact, _, _) = exact_risk(&model, &cfg)?;
            assert!(
                lo.total <= exact && exact <= up.total,
                "sandwich violated: {} <= {} <= {}",
                lo.total,
                exact,
                up.total
            );
            println!(
                "{name:>12} {n:>6} {:>12.4e} {exact:>12.4e} {:>12.4e} {:>9.1}",
                lo.total,
                up.total,
                up.total / lo.total
            );
        }
    }

    // The corollaries pin their own stepsize 1/(6 tr H) internally; the
    // crude variant trades sharpness for a formula with no k* in it.
    let spectrum = build_spectrum(&SpectrumFamily::PowerLaw { r: 1.0, d: 16 })?;
    let model = RegressionModel::new(spectrum, vec![1.0; 16], 1.0, true)?;
    let template = SgdConfig {
        gamma: 1.0,
        n_samples: 1000,
        tail_start: 0,
        w0: vec![0.0; 16],
        seed: 0,
    };
    let sharp = corollary_bounds(&model, &template, CorollaryKind::LargeStep)?;
    let crude = corollary_bounds(&model, &template, CorollaryKind::Crude)?;
    println!(
        "\nlarge-step corollary at n = 1000: sharp {:.4e}, crude {:.4e}",
        sharp.total, crude.total
    );
    Ok(())
}
