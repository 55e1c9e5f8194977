//! A numerical laboratory for constant-stepsize SGD with tail averaging on
//! Gaussian linear regression.
//!
//! The crate has three layers:
//!
//! * **Simulation** — [`sgd`] runs the recursion
//!   `w_t = w_{t-1} + gamma (y_t - <w_{t-1}, x_t>) x_t` on samples from a
//!   [`distribution::RegressionModel`] and Monte Carlo estimates the excess
//!   risk of the tail-averaged iterate.
//! * **Exact calculus** — [`operator`] evolves the second-moment matrices of
//!   the bias and variance chains under the exact Gaussian fourth-moment
//!   operator, yielding a closed-form excess-risk oracle and executable
//!   semidefinite-order checks.
//! * **Bounds** — [`bounds`] evaluates the finite-sample upper and lower
//!   excess-risk bounds driven by the effective dimensions
//!   `k* = max{k : lambda_k >= 1/(gamma N)}`, and [`baselines`] fits
//!   minimum-norm interpolators and ridge regression for comparison.
//!
//! Everything works in the eigenbasis of the data covariance
//! `H = diag(lambda)`: features are sampled as `x_i = sqrt(lambda_i) z_i`,
//! so a [`spectrum::Spectrum`] fully specifies the feature geometry.
//!
//! The `avgsgd` binary (and [`experiment`]) drives config-file experiments:
//! `bounds`, `verify`, `sweep`, and `compare` subcommands writing CSV and
//! JSON artifacts.

pub mod baselines;
pub mod bounds;
pub mod distribution;
pub mod error;
pub mod experiment;
pub mod kahan;
mod linalg;
pub mod operator;
pub mod sgd;
pub mod spectrum;

pub use baselines::{
    estimator_risk_samples, fit_min_norm, fit_ridge, ols_lower_bound, ridge_bounds,
    sample_design, DesignSample, RidgeConstants,
};
pub use bounds::{
    corollary_bounds, lower_bound, rate_prediction, tail_lower_bound, tail_upper_bound,
    upper_bound, BoundKind, BoundReport, CorollaryKind, RateCase,
};
pub use distribution::{
    fourth_moment_apply, verify_moment_constants, MomentConstants, RegressionModel,
    GAUSSIAN_ALPHA, GAUSSIAN_BETA,
};
pub use error::{Error, Result};
pub use experiment::{
    cmd_bounds, cmd_compare, cmd_sweep, cmd_verify, execute, BoundsRow, CliInvocation, Command,
    CompareRow, ExperimentConfig, GammaRule, OracleMode, ResolvedExperiment, SweepRow, TailRule,
    VerifyRow, WeightPattern,
};
pub use operator::{
    apply_contraction, apply_deterministic_contraction, check_partial_sum_order,
    check_variance_chain_order, evolve, exact_risk, ChainKind, CovarianceState,
};
pub use sgd::{
    monte_carlo_decomposition, monte_carlo_risk, monte_carlo_risk_samples, run_bias_chain,
    run_sgd, run_variance_chain, RiskEstimate, SgdConfig,
};
pub use spectrum::{build_spectrum, Spectrum, SpectrumFamily};
