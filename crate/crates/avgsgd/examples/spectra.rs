//! Builds each named spectrum family and prints the quantities the risk
//! bounds are made of: trace, top eigenvalue, effective dimensions, and
//! tail power sums.
//!
//! Run with `cargo run --example spectra`.

use avgsgd::{build_spectrum, Result, SpectrumFamily};

fn main() -> Result<()> {
    let families = [
        SpectrumFamily::Piecewise { s: 4, d: 16 },
        SpectrumFamily::PowerLaw { r: 1.0, d: 16 },
        SpectrumFamily::LogPoly { beta: 2.0, d: 16 },
        SpectrumFamily::Exponential { d: 16 },
        SpectrumFamily::Explicit {
            values: vec![0.5, 2.0, 1.0, 0.25],
        },
    ];

    for family in &families {
        let spec = build_spectrum(family)?;
        let gamma = 1.0 / (6.0 * spec.trace());
        println!("{family:?}");
        println!("  eigenvalues  {:?}", head(spec.values(), 6));
        println!(
            "  trace = {:.6}, lambda_1 = {:.6}, gamma = 1/(6 tr H) = {:.6}",
            spec.trace(),
            spec.lambda_max(),
            gamma
        );
        // k* counts the eigenvalues at least 1/(gamma N): the coordinates
        // SGD has effectively resolved after N averaged steps.
        for n in [100, 1000, 10000] {
            println!(
                "  n = {n:>6}: k* = {:>2}, tail sums past k*: T1 = {:.4e}, T2 = {:.4e}",
                spec.effective_dim(gamma, n),
                spec.tail_power_sum(spec.effective_dim(gamma, n), 1),
                spec.tail_power_sum(spec.effective_dim(gamma, n), 2),
            );
        }
        println!();
    }
    Ok(())
}

fn head(values: &[f64], k: usize) -> Vec<f64> {
    values.iter().take(k).copied().collect()
}
