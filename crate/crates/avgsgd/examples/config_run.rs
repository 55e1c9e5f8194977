//! Drives the experiment layer from an inline TOML config: resolves it,
//! evaluates the bound table, and runs the invariant suite — the same path
//! the `avgsgd` binary takes, minus the file I/O.
//!
//! Run with `cargo run --example config_run`.

use avgsgd::experiment::verify_exit_code;
use avgsgd::{cmd_bounds, cmd_verify, ExperimentConfig, Result};

const CONFIG: &str = r#"
[model]
noise_std = 1.0

[model.spectrum]
family = "exponential"
d = 8

[model.w_star]
pattern = "first_coordinate"

[sgd]
n = [500, 1000]

[sgd.gamma]
rule = "trace_ratio"
c = 6.0

[run]
verify_steps = 150
"#;

fn main() -> Result<()> {
    let exp = ExperimentConfig::from_toml_str(CONFIG)?.resolve()?;

    println!("bound table:");
    for row in cmd_bounds(&exp)? {
        println!(
            "  n = {:>4} {:<20} total = {:>11.4e}  exact = {}",
            row.n,
            row.kind.to_string(),
            row.total,
            row.exact_risk
                .map(|v| format!("{v:.4e}"))
                .unwrap_or_else(|| "-".into()),
        );
    }

    println!("\ninvariant suite:");
    let rows = cmd_verify(&exp)?;
    for row in &rows {
        println!("  {:<18} {:<5} {}", row.check, row.status, row.detail);
    }
    println!(
        "exit code would be {}",
        verify_exit_code(&rows, exp.config().run.strict_beta)
    );
    Ok(())
}
