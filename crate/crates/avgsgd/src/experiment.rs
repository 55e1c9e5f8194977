//! Config-driven experiment runner behind the `avgsgd` binary.
//!
//! A single [`ExperimentConfig`] (TOML or JSON) describes the data model,
//! the SGD run grid, and run options; four commands consume it:
//!
//! * [`cmd_bounds`] — one row per `(N, bound kind)` with the closed-form
//!   bound terms and, when the exact oracle is enabled, the exact risk.
//! * [`cmd_verify`] — the invariant suite: PSD preservation of the
//!   second-moment chains, the semidefinite-order checks, the bias/variance
//!   decomposition identity, and the empirical fourth-moment constants.
//! * [`cmd_sweep`] — excess risk over the `N` grid with a log-log rate fit
//!   over the largest half of the grid.
//! * [`cmd_compare`] — Monte Carlo risk of averaged SGD next to batch
//!   min-norm and ridge fits, with their comparator bounds.
//!
//! Every command is deterministic given `(config, seed)`: reruns produce
//! byte-identical CSV and JSON artifacts. Exit codes: 0 success, 2 config
//! error, 3 invariant failure, 4 divergence.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    estimator_risk_samples, fit_min_norm, fit_ridge, ols_lower_bound, ridge_bounds,
    RidgeConstants,
};
use crate::bounds::{
    corollary_bounds, lower_bound, rate_prediction, tail_lower_bound, tail_upper_bound,
    upper_bound, BoundKind, CorollaryKind, RateCase,
};
use crate::distribution::{
    verify_moment_constants, RegressionModel, GAUSSIAN_ALPHA, GAUSSIAN_BETA,
};
use crate::error::{Error, Result};
use crate::operator::{
    check_partial_sum_order, check_variance_chain_order, evolve, exact_risk, CovarianceState,
    PSD_TOLERANCE,
};
use crate::sgd::{monte_carlo_risk, monte_carlo_risk_samples, RiskEstimate, SgdConfig};
use crate::spectrum::{build_spectrum, Spectrum, SpectrumFamily};

/// Scalar-operation budget for the automatic oracle rule: the exact oracle
/// is auto-selected when `d <= 256` and `(s + N) d^3` stays below this.
const ORACLE_OP_BUDGET: f64 = 1e11;
const ORACLE_MAX_DIM: usize = 256;

/// How the optimum `w*` (or any eigenbasis vector) is specified in a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightPattern {
    /// All coordinates 1.
    Ones,
    /// `e_1`: all signal on the top eigendirection.
    FirstCoordinate,
    /// `w_i = 1/sqrt(d lambda_i)`: every coordinate contributes `1/d` to
    /// the squared `H`-norm, placing uniform risk weight on the tail.
    UniformTail,
    /// Coordinates given explicitly in the eigenbasis.
    Explicit { values: Vec<f64> },
}

impl WeightPattern {
    /// Materializes the pattern against a spectrum.
    pub fn build(&self, spectrum: &Spectrum) -> Vec<f64> {
        let d = spectrum.dim();
        match self {
            WeightPattern::Ones => vec![1.0; d],
            WeightPattern::FirstCoordinate => {
                let mut v = vec![0.0; d];
                v[0] = 1.0;
                v
            }
            WeightPattern::UniformTail => spectrum
                .values()
                .iter()
                .map(|&l| 1.0 / (d as f64 * l).sqrt())
                .collect(),
            WeightPattern::Explicit { values } => values.clone(),
        }
    }
}

/// Data model section of a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub spectrum: SpectrumFamily,
    pub w_star: WeightPattern,
    pub noise_std: f64,
    #[serde(default = "default_true")]
    pub well_specified: bool,
}

fn default_true() -> bool {
    true
}

/// How the constant stepsize is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaRule {
    /// A literal stepsize.
    Explicit { gamma: f64 },
    /// `gamma = 1/(2 alpha tr H)` with the Gaussian `alpha = 3`: the
    /// largest stepsize the benign-overfitting corollaries admit.
    LargeStep,
    /// `gamma = 1/(c tr H)`.
    TraceRatio { c: f64 },
}

impl GammaRule {
    /// Resolves the rule against a spectrum.
    pub fn resolve(&self, spectrum: &Spectrum) -> Result<f64> {
        match *self {
            GammaRule::Explicit { gamma } => {
                if !gamma.is_finite() || gamma <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "explicit stepsize must be positive and finite, got {gamma}"
                    )));
                }
                Ok(gamma)
            }
            GammaRule::LargeStep => Ok(1.0 / (2.0 * GAUSSIAN_ALPHA * spectrum.trace())),
            GammaRule::TraceRatio { c } => {
                if !c.is_finite() || c <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "trace_ratio constant must be positive and finite, got {c}"
                    )));
                }
                Ok(1.0 / (c * spectrum.trace()))
            }
        }
    }
}

/// Where tail averaging starts, as a function of `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailRule {
    /// `s = 0`: average every iterate.
    Full,
    /// `s = round(of_n * N)`.
    Fraction { of_n: f64 },
}

impl Default for TailRule {
    fn default() -> Self {
        TailRule::Full
    }
}

impl TailRule {
    fn validate(&self) -> Result<()> {
        if let TailRule::Fraction { of_n } = *self {
            if !of_n.is_finite() || of_n < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "tail fraction must be non-negative and finite, got {of_n}"
                )));
            }
        }
        Ok(())
    }

    /// Tail-average start index for a run of `n` averaged iterates.
    pub fn start(&self, n: usize) -> usize {
        match *self {
            TailRule::Full => 0,
            TailRule::Fraction { of_n } => (of_n * n as f64).round() as usize,
        }
    }
}

/// SGD section of a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSpec {
    pub gamma: GammaRule,
    /// Sample counts to run, strictly increasing.
    pub n: Vec<usize>,
    #[serde(default)]
    pub tail: TailRule,
}

/// Oracle-vs-Monte-Carlo selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Exact oracle when `d <= 256` and `(s + N) d^3 <= 1e11`, else Monte
    /// Carlo.
    #[default]
    Auto,
    /// Always the exact oracle.
    Always,
    /// Always Monte Carlo.
    Never,
}

/// Run options shared by the commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    /// Monte Carlo replicates per estimate.
    pub replicates: usize,
    /// Base seed; replicate `r` uses `seed + r`.
    pub seed: u64,
    pub oracle: OracleMode,
    /// Bound kinds evaluated by `bounds`.
    pub bounds: Vec<BoundKind>,
    /// Rate-law prediction compared against the sweep fit.
    pub rate: Option<RateCase>,
    /// Ridge penalties evaluated by `compare`.
    pub ridge_lambdas: Vec<f64>,
    pub ridge_constants: RidgeConstants,
    /// Index-rule constant of the min-norm comparator bound.
    pub ols_b: f64,
    /// Prefactor of the min-norm comparator bound.
    pub ols_c: f64,
    /// Whether the (false for d >= 2) `beta = 2` Gaussian claim counts
    /// toward the verify exit status.
    pub strict_beta: bool,
    /// Random matrices scanned by the moment-constant verifier.
    pub moment_trials: usize,
    /// Steps evolved by the verify chains and order checks.
    pub verify_steps: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            replicates: 100,
            seed: 0,
            oracle: OracleMode::Auto,
            bounds: vec![
                BoundKind::Theorem21,
                BoundKind::Theorem22,
                BoundKind::CorollaryLargeStep,
                BoundKind::CorollaryCrude,
                BoundKind::Theorem51,
                BoundKind::Theorem52,
            ],
            rate: None,
            ridge_lambdas: Vec::new(),
            ridge_constants: RidgeConstants::default(),
            ols_b: 1.0,
            ols_c: 1.0,
            strict_beta: false,
            moment_trials: 100,
            verify_steps: 200,
        }
    }
}

/// Output section of a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory receiving `<command>.csv` and `<command>.json`.
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
        }
    }
}

/// A full experiment description, loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub sgd: SgdSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    /// Parses a TOML config; parse errors carry line/column context.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Parses a JSON config; parse errors carry line/column context.
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Loads a config file, dispatching on the `.json` extension (anything
    /// else is parsed as TOML).
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::InvalidConfig(msg) => {
                Error::InvalidConfig(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    /// Validates the config and builds the model and stepsize.
    pub fn resolve(self) -> Result<ResolvedExperiment> {
        let spectrum = build_spectrum(&self.model.spectrum)?;
        let w_star = self.model.w_star.build(&spectrum);
        let gamma = self.sgd.gamma.resolve(&spectrum)?;
        let model = RegressionModel::new(
            spectrum,
            w_star,
            self.model.noise_std,
            self.model.well_specified,
        )?;

        if self.sgd.n.is_empty() {
            return Err(Error::InvalidConfig(
                "sgd.n must list at least one sample count".to_string(),
            ));
        }
        if self.sgd.n[0] == 0 {
            return Err(Error::InvalidConfig(
                "sample counts must be at least 1".to_string(),
            ));
        }
        if self.sgd.n.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "sgd.n must be strictly increasing".to_string(),
            ));
        }
        self.sgd.tail.validate()?;

        let run = &self.run;
        if run.replicates == 0 {
            return Err(Error::InvalidConfig(
                "run.replicates must be at least 1".to_string(),
            ));
        }
        if run.bounds.is_empty() {
            return Err(Error::InvalidConfig(
                "run.bounds must list at least one bound kind".to_string(),
            ));
        }
        if run.moment_trials == 0 || run.verify_steps == 0 {
            return Err(Error::InvalidConfig(
                "run.moment_trials and run.verify_steps must be at least 1".to_string(),
            ));
        }
        if let Some(&bad) = run
            .ridge_lambdas
            .iter()
            .find(|l| !l.is_finite() || **l <= 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "ridge penalties must be positive and finite, got {bad}"
            )));
        }
        run.ridge_constants.validate()?;
        for (name, v) in [("run.ols_b", run.ols_b), ("run.ols_c", run.ols_c)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }

        Ok(ResolvedExperiment {
            model,
            gamma,
            config: self,
        })
    }
}

/// A validated config with its model and stepsize materialized.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    model: RegressionModel,
    gamma: f64,
    config: ExperimentConfig,
}

impl ResolvedExperiment {
    pub fn model(&self) -> &RegressionModel {
        &self.model
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// The SGD run description for one grid point: zero initialization,
    /// the resolved stepsize, and the configured tail rule.
    pub fn sgd_config(&self, n: usize) -> SgdConfig {
        SgdConfig {
            gamma: self.gamma,
            n_samples: n,
            tail_start: self.config.sgd.tail.start(n),
            w0: vec![0.0; self.model.dim()],
            seed: self.config.run.seed,
        }
    }
}

fn oracle_enabled(mode: OracleMode, dim: usize, total_steps: usize) -> bool {
    match mode {
        OracleMode::Always => true,
        OracleMode::Never => false,
        OracleMode::Auto => {
            dim <= ORACLE_MAX_DIM
                && (total_steps as f64) * (dim as f64).powi(3) <= ORACLE_OP_BUDGET
        }
    }
}

/// One `bounds` output row: a bound evaluation at one `(N, kind)` pair,
/// with the exact excess risk at the same `(gamma, N, s)` when the oracle
/// is enabled and the model is well-specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub n: usize,
    pub kind: BoundKind,
    pub gamma: f64,
    pub tail_start: usize,
    pub k_star: usize,
    pub k_dagger: Option<usize>,
    pub effective_bias: f64,
    pub effective_var: f64,
    pub total: f64,
    pub admissible: bool,
    pub reason: String,
    pub exact_risk: Option<f64>,
}

/// Evaluates every configured bound kind at every `N`.
pub fn cmd_bounds(exp: &ResolvedExperiment) -> Result<Vec<BoundsRow>> {
    let model = exp.model();
    let run = &exp.config().run;
    let d = model.dim();
    let mut rows = Vec::new();
    for &n in &exp.config().sgd.n {
        let cfg = exp.sgd_config(n);
        for &kind in &run.bounds {
            let report = match kind {
                BoundKind::Theorem21 => upper_bound(model, &cfg, GAUSSIAN_ALPHA)?,
                BoundKind::Theorem22 => lower_bound(model, &cfg, GAUSSIAN_BETA)?,
                BoundKind::CorollaryLargeStep => {
                    corollary_bounds(model, &cfg, CorollaryKind::LargeStep)?
                }
                BoundKind::CorollaryCrude => {
                    corollary_bounds(model, &cfg, CorollaryKind::Crude)?
                }
                BoundKind::Theorem51 => tail_upper_bound(model, &cfg, GAUSSIAN_ALPHA)?,
                BoundKind::Theorem52 => tail_lower_bound(model, &cfg, GAUSSIAN_BETA)?,
            };
            let exact = if d <= ORACLE_MAX_DIM
                && oracle_enabled(run.oracle, d, cfg.tail_start + n)
            {
                let mut oracle_cfg = cfg.clone();
                oracle_cfg.gamma = report.gamma;
                match exact_risk(model, &oracle_cfg) {
                    Ok((total, _, _)) => Some(total),
                    Err(Error::RequiresWellSpecified(_)) | Err(Error::Divergence { .. }) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            rows.push(BoundsRow {
                n,
                kind: report.kind,
                gamma: report.gamma,
                tail_start: cfg.tail_start,
                k_star: report.k_star,
                k_dagger: report.k_dagger,
                effective_bias: report.effective_bias,
                effective_var: report.effective_var,
                total: report.total,
                admissible: report.admissible,
                reason: report.reason,
                exact_risk: exact,
            });
        }
    }
    Ok(rows)
}

/// Status of one verify check.
pub const STATUS_PASS: &str = "pass";
pub const STATUS_FAIL: &str = "fail";
pub const STATUS_SKIP: &str = "skip";
pub const STATUS_DIVERGENT: &str = "divergent";

/// One `verify` output row. `margin` is a signed slack: non-negative means
/// the check passed with that much room against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub check: String,
    pub status: String,
    pub margin: Option<f64>,
    pub detail: String,
}

impl VerifyRow {
    fn new(check: &str, status: &str, margin: Option<f64>, detail: String) -> Self {
        Self {
            check: check.to_string(),
            status: status.to_string(),
            margin,
            detail,
        }
    }
}

fn psd_row(check: &str, state: Result<CovarianceState>, exp: &ResolvedExperiment) -> Result<VerifyRow> {
    let steps = exp.config().run.verify_steps;
    let cfg = {
        let mut c = exp.sgd_config(steps);
        c.n_samples = steps;
        c
    };
    let state = match state {
        Ok(s) => s,
        Err(Error::RequiresWellSpecified(_)) => {
            return Ok(VerifyRow::new(
                check,
                STATUS_SKIP,
                None,
                "requires well-specified noise".to_string(),
            ))
        }
        Err(e) => return Err(e),
    };
    match evolve(state, exp.model(), &cfg, steps) {
        Ok(_) => Ok(VerifyRow::new(
            check,
            STATUS_PASS,
            None,
            format!("PSD preserved over {steps} steps"),
        )),
        Err(Error::RequiresWellSpecified(_)) => Ok(VerifyRow::new(
            check,
            STATUS_SKIP,
            None,
            "requires well-specified noise".to_string(),
        )),
        Err(Error::PsdViolation {
            step,
            min_eigenvalue,
            scale,
        }) => Ok(VerifyRow::new(
            check,
            STATUS_FAIL,
            Some(min_eigenvalue / scale.max(f64::MIN_POSITIVE) + PSD_TOLERANCE),
            format!("PSD lost at step {step}"),
        )),
        Err(Error::Divergence { step }) => Ok(VerifyRow::new(
            check,
            STATUS_DIVERGENT,
            None,
            format!("non-finite entries at step {step}"),
        )),
        Err(e) => Err(e),
    }
}

/// Runs the invariant suite. Every row's `margin` is a signed slack
/// (negative = failed); the `beta_two_claim` row documents the known-false
/// `beta = 2` Gaussian claim and only affects the exit status when
/// `run.strict_beta` is set.
pub fn cmd_verify(exp: &ResolvedExperiment) -> Result<Vec<VerifyRow>> {
    let model = exp.model();
    let run = &exp.config().run;
    let steps = run.verify_steps;
    let cfg = {
        let mut c = exp.sgd_config(steps);
        c.n_samples = steps;
        c
    };
    let mut rows = Vec::new();

    rows.push(psd_row(
        "psd_bias_chain",
        CovarianceState::bias(model, &cfg.w0),
        exp,
    )?);
    rows.push(psd_row(
        "psd_variance_chain",
        Ok(CovarianceState::variance(model.dim())),
        exp,
    )?);
    rows.push(psd_row(
        "psd_partial_sum_chain",
        CovarianceState::partial_sum(model, &cfg.w0),
        exp,
    )?);

    match check_variance_chain_order(model, &cfg) {
        Ok(report) => {
            let worst = report
                .worst_monotone
                .min(report.worst_crude)
                .min(report.worst_refined)
                .min(report.worst_lower);
            rows.push(VerifyRow::new(
                "variance_order",
                if report.passed { STATUS_PASS } else { STATUS_FAIL },
                Some(worst + report.tolerance),
                format!(
                    "worst margins over {steps} steps: monotone {:.3e}, crude {:.3e}, \
                     refined {:.3e}, lower {:.3e}",
                    report.worst_monotone,
                    report.worst_crude,
                    report.worst_refined,
                    report.worst_lower
                ),
            ));
        }
        Err(Error::RequiresWellSpecified(_)) => rows.push(VerifyRow::new(
            "variance_order",
            STATUS_SKIP,
            None,
            "requires well-specified noise".to_string(),
        )),
        Err(Error::InvalidConfig(msg)) => rows.push(VerifyRow::new(
            "variance_order",
            STATUS_FAIL,
            None,
            msg,
        )),
        Err(Error::Divergence { step }) => rows.push(VerifyRow::new(
            "variance_order",
            STATUS_DIVERGENT,
            None,
            format!("non-finite entries at step {step}"),
        )),
        Err(e) => return Err(e),
    }

    match check_partial_sum_order(model, &cfg) {
        Ok(report) => {
            let worst = report.worst_monotone.min(report.worst_refined);
            rows.push(VerifyRow::new(
                "partial_sum_order",
                if report.passed { STATUS_PASS } else { STATUS_FAIL },
                Some(worst + report.tolerance),
                format!(
                    "worst margins over {steps} steps: monotone {:.3e}, refined {:.3e}",
                    report.worst_monotone, report.worst_refined
                ),
            ));
        }
        Err(Error::InvalidConfig(msg)) => rows.push(VerifyRow::new(
            "partial_sum_order",
            STATUS_FAIL,
            None,
            msg,
        )),
        Err(Error::Divergence { step }) => rows.push(VerifyRow::new(
            "partial_sum_order",
            STATUS_DIVERGENT,
            None,
            format!("non-finite entries at step {step}"),
        )),
        Err(e) => return Err(e),
    }

    const DECOMPOSITION_TOL: f64 = 1e-10;
    match exact_risk(model, &cfg) {
        Ok((total, bias, variance)) => {
            let rel = (bias + variance - total).abs() / total.abs().max(f64::MIN_POSITIVE);
            let slack = DECOMPOSITION_TOL - rel;
            rows.push(VerifyRow::new(
                "decomposition",
                if slack >= 0.0 { STATUS_PASS } else { STATUS_FAIL },
                Some(slack),
                format!(
                    "bias {bias:.6e} + variance {variance:.6e} vs total {total:.6e}, \
                     relative gap {rel:.3e}"
                ),
            ));
        }
        Err(Error::RequiresWellSpecified(_)) => rows.push(VerifyRow::new(
            "decomposition",
            STATUS_SKIP,
            None,
            "requires well-specified noise".to_string(),
        )),
        Err(Error::Divergence { step }) => rows.push(VerifyRow::new(
            "decomposition",
            STATUS_DIVERGENT,
            None,
            format!("non-finite accumulator at step {step}"),
        )),
        Err(e) => return Err(e),
    }

    const MOMENT_TOL: f64 = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let constants = verify_moment_constants(model, run.moment_trials, &mut rng);
    let alpha_slack = GAUSSIAN_ALPHA + MOMENT_TOL - constants.alpha;
    rows.push(VerifyRow::new(
        "moment_alpha",
        if alpha_slack >= 0.0 { STATUS_PASS } else { STATUS_FAIL },
        Some(alpha_slack),
        format!(
            "alpha_hat = {:.12} over {} trials, bound 3",
            constants.alpha, run.moment_trials
        ),
    ));
    let beta_slack = constants.beta - (GAUSSIAN_BETA - MOMENT_TOL);
    rows.push(VerifyRow::new(
        "moment_beta",
        if beta_slack >= 0.0 { STATUS_PASS } else { STATUS_FAIL },
        Some(beta_slack),
        format!(
            "beta_hat = {:.12} over {} trials, bound 1",
            constants.beta, run.moment_trials
        ),
    ));
    let spec = model.spectrum();
    let r_sq_expected = spec.trace() + 2.0 * spec.lambda_max();
    let r_rel = (constants.r_squared - r_sq_expected).abs() / r_sq_expected;
    rows.push(VerifyRow::new(
        "moment_r_squared",
        if r_rel <= MOMENT_TOL { STATUS_PASS } else { STATUS_FAIL },
        Some(MOMENT_TOL - r_rel),
        format!(
            "r_squared = {:.12}, expected tr H + 2 lambda_1 = {:.12}",
            constants.r_squared, r_sq_expected
        ),
    ));
    let beta_two_slack = constants.beta - (2.0 - MOMENT_TOL);
    rows.push(VerifyRow::new(
        "beta_two_claim",
        if beta_two_slack >= 0.0 { STATUS_PASS } else { STATUS_FAIL },
        Some(beta_two_slack),
        format!(
            "beta_hat = {:.12}; beta = 2 holds only at d = 1 \
             (singular directions force beta_hat -> 1 for d >= 2)",
            constants.beta
        ),
    ));

    Ok(rows)
}

/// Exit code for a verify run: 4 on divergence, 3 on any failing check
/// (the `beta_two_claim` row counts only under `strict_beta`), else 0.
pub fn verify_exit_code(rows: &[VerifyRow], strict_beta: bool) -> i32 {
    if rows.iter().any(|r| r.status == STATUS_DIVERGENT) {
        return 4;
    }
    let failing = rows
        .iter()
        .any(|r| r.status == STATUS_FAIL && (strict_beta || r.check != "beta_two_claim"));
    if failing {
        3
    } else {
        0
    }
}

/// One `sweep` output row. The fit columns repeat the grid-level fit on
/// every row so the table stays flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub gamma: f64,
    pub tail_start: usize,
    pub oracle_risk: Option<f64>,
    pub mc_risk: Option<f64>,
    pub mc_std_err: Option<f64>,
    /// Risk used for the rate fit: the oracle value when present, else the
    /// Monte Carlo mean.
    pub risk: Option<f64>,
    pub status: String,
    pub fitted_slope: Option<f64>,
    pub predicted_slope: Option<f64>,
    pub fit_status: String,
}

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

/// Risk over the `N` grid plus a log-log rate fit over the largest half of
/// the grid. Requires at least 4 grid points spanning at least 3 octaves.
/// Divergent and zero-risk points are excluded from the fit; if fewer than
/// two points remain the fit is marked `degenerate`.
pub fn cmd_sweep(exp: &ResolvedExperiment) -> Result<Vec<SweepRow>> {
    let model = exp.model();
    let run = &exp.config().run;
    let ns = &exp.config().sgd.n;
    let d = model.dim();

    let mut rows = Vec::new();
    for &n in ns {
        let cfg = exp.sgd_config(n);
        let use_oracle = match run.oracle {
            OracleMode::Always => true,
            OracleMode::Never => false,
            OracleMode::Auto => {
                model.well_specified() && oracle_enabled(OracleMode::Auto, d, cfg.tail_start + n)
            }
        };
        let mut status = "ok";
        let mut oracle_risk = None;
        let mut mc_risk = None;
        let mut mc_std_err = None;
        if use_oracle {
            match exact_risk(model, &cfg) {
                Ok((total, _, _)) => oracle_risk = Some(total),
                Err(Error::Divergence { .. }) => status = STATUS_DIVERGENT,
                Err(e) => return Err(e),
            }
        } else {
            match monte_carlo_risk(model, &cfg, run.replicates) {
                Ok(RiskEstimate { mean, std_err, .. }) => {
                    mc_risk = Some(mean);
                    mc_std_err = Some(std_err);
                }
                Err(Error::Divergence { .. }) => status = STATUS_DIVERGENT,
                Err(e) => return Err(e),
            }
        }
        let risk = oracle_risk.or(mc_risk);
        rows.push(SweepRow {
            n,
            gamma: cfg.gamma,
            tail_start: cfg.tail_start,
            oracle_risk,
            mc_risk,
            mc_std_err,
            risk,
            status: status.to_string(),
            fitted_slope: None,
            predicted_slope: None,
            fit_status: String::new(),
        });
    }

    let cut = ns.len() / 2;
    let fit_points: Vec<(f64, f64)> = rows[cut..]
        .iter()
        .filter(|r| r.status == "ok")
        .filter_map(|r| r.risk.filter(|&v| v > 0.0).map(|v| (r.n as f64, v)))
        .collect();
    let (fitted, predicted, fit_status) = if fit_points.len() < 2 {
        (None, None, "degenerate")
    } else {
        let fitted = log_log_slope(&fit_points);
        let predicted = run.rate.as_ref().map(|case| {
            let pred: Vec<(f64, f64)> = fit_points
                .iter()
                .map(|&(n, _)| (n, rate_prediction(case, n as usize)))
                .collect();
            log_log_slope(&pred)
        });
        (Some(fitted), predicted, "ok")
    };
    for row in &mut rows {
        row.fitted_slope = fitted;
        row.predicted_slope = predicted;
        row.fit_status = fit_status.to_string();
    }
    Ok(rows)
}

/// One `compare` output row: one estimator at one `N` (ridge appears once
/// per configured penalty). Bound columns are empty when the bound is
/// inadmissible for the configuration or its index rule has no solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub n: usize,
    pub estimator: String,
    pub lambda_reg: Option<f64>,
    pub replicates: usize,
    pub risk_mean: f64,
    pub risk_std_err: f64,
    pub risk_median: f64,
    pub bound_lower: Option<f64>,
    pub bound_upper: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("risk samples are finite"));
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn compare_row(
    n: usize,
    estimator: &str,
    lambda_reg: Option<f64>,
    samples: Vec<f64>,
    bound_lower: Option<f64>,
    bound_upper: Option<f64>,
) -> CompareRow {
    let est = RiskEstimate::from_samples(&samples);
    CompareRow {
        n,
        estimator: estimator.to_string(),
        lambda_reg,
        replicates: samples.len(),
        risk_mean: est.mean,
        risk_std_err: est.std_err,
        risk_median: median(samples),
        bound_lower,
        bound_upper,
    }
}

/// Monte Carlo excess risk of averaged SGD, the min-norm interpolator, and
/// ridge regression on matched sample budgets, with comparator bounds.
pub fn cmd_compare(exp: &ResolvedExperiment) -> Result<Vec<CompareRow>> {
    let model = exp.model();
    let run = &exp.config().run;
    let spec = model.spectrum();
    let sigma_sq = model.noise_second_moment();
    let mut rows = Vec::new();
    for &n in &exp.config().sgd.n {
        let cfg = exp.sgd_config(n);

        let sgd_samples = monte_carlo_risk_samples(model, &cfg, run.replicates)?;
        let ub = upper_bound(model, &cfg, GAUSSIAN_ALPHA)?;
        let lb = lower_bound(model, &cfg, GAUSSIAN_BETA)?;
        rows.push(compare_row(
            n,
            "sgd",
            None,
            sgd_samples,
            lb.admissible.then_some(lb.total),
            ub.admissible.then_some(ub.total),
        ));

        let ols_samples =
            estimator_risk_samples(model, n, run.replicates, run.seed, |s| Ok(fit_min_norm(s)))?;
        let ols_lower = ols_lower_bound(spec, n, sigma_sq, run.ols_b, run.ols_c)?;
        rows.push(compare_row(n, "min_norm", None, ols_samples, ols_lower, None));

        for &lam in &run.ridge_lambdas {
            let samples =
                estimator_risk_samples(model, n, run.replicates, run.seed, |s| fit_ridge(s, lam))?;
            let (lo, up) = ridge_bounds(spec, n, sigma_sq, lam, model.w_star(), &run.ridge_constants)?;
            rows.push(compare_row(n, "ridge", Some(lam), samples, Some(lo), Some(up)));
        }
    }
    Ok(rows)
}

/// Writes rows as CSV with a header row derived from the row struct.
pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .from_path(path)
        .map_err(|e| Error::Output(e.to_string()))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Output(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes rows as a pretty-printed JSON array mirroring the CSV columns.
pub fn write_json<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(rows).map_err(|e| Error::Output(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// The four runner commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Bounds,
    Verify,
    Sweep,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bounds => "bounds",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Compare => "compare",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything the CLI passes down: the config path plus flag overrides.
#[derive(Debug, Clone, Default)]
pub struct CliInvocation {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force_oracle: bool,
    pub force_mc: bool,
    pub replicates: Option<usize>,
}

fn prepare(cmd: Command, inv: &CliInvocation) -> Result<ResolvedExperiment> {
    if inv.force_oracle && inv.force_mc {
        return Err(Error::InvalidConfig(
            "--force-oracle and --force-mc are mutually exclusive".to_string(),
        ));
    }
    let mut config = ExperimentConfig::from_path(&inv.config)?;
    if let Some(seed) = inv.seed {
        config.run.seed = seed;
    }
    if let Some(replicates) = inv.replicates {
        config.run.replicates = replicates;
    }
    if inv.force_oracle {
        config.run.oracle = OracleMode::Always;
    }
    if inv.force_mc {
        config.run.oracle = OracleMode::Never;
    }
    if let Some(out) = &inv.out {
        config.output.dir = out.clone();
    }
    let exp = config.resolve()?;
    precheck(cmd, &exp)?;
    Ok(exp)
}

fn precheck(cmd: Command, exp: &ResolvedExperiment) -> Result<()> {
    let config = exp.config();
    match cmd {
        Command::Sweep => {
            let ns = &config.sgd.n;
            if ns.len() < 4 {
                return Err(Error::InvalidConfig(format!(
                    "sweep needs at least 4 sample counts, got {}",
                    ns.len()
                )));
            }
            if (ns[ns.len() - 1] as f64) < 8.0 * ns[0] as f64 {
                return Err(Error::InvalidConfig(format!(
                    "sweep needs an N grid spanning at least 3 octaves, got {}..{}",
                    ns[0],
                    ns[ns.len() - 1]
                )));
            }
        }
        Command::Compare => {
            if config.run.replicates < 2 {
                return Err(Error::InvalidConfig(
                    "compare needs run.replicates >= 2".to_string(),
                ));
            }
        }
        Command::Bounds | Command::Verify => {}
    }
    Ok(())
}

fn run_and_write(cmd: Command, exp: &ResolvedExperiment) -> Result<(i32, Vec<String>)> {
    let out_dir = &exp.config().output.dir;
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", cmd.name()));
    let json_path = out_dir.join(format!("{}.json", cmd.name()));
    let mut lines = Vec::new();
    let code = match cmd {
        Command::Bounds => {
            let rows = cmd_bounds(exp)?;
            write_csv(&rows, &csv_path)?;
            write_json(&rows, &json_path)?;
            lines.push(format!("bounds: {} rows", rows.len()));
            0
        }
        Command::Verify => {
            let rows = cmd_verify(exp)?;
            write_csv(&rows, &csv_path)?;
            write_json(&rows, &json_path)?;
            for row in &rows {
                lines.push(format!("verify {}: {}", row.check, row.status));
            }
            verify_exit_code(&rows, exp.config().run.strict_beta)
        }
        Command::Sweep => {
            let rows = cmd_sweep(exp)?;
            write_csv(&rows, &csv_path)?;
            write_json(&rows, &json_path)?;
            match (rows[0].fitted_slope, rows[0].predicted_slope) {
                (Some(f), Some(p)) => {
                    lines.push(format!("sweep: fitted slope {f:.4}, predicted {p:.4}"))
                }
                (Some(f), None) => lines.push(format!("sweep: fitted slope {f:.4}")),
                _ => lines.push(format!("sweep: fit {}", rows[0].fit_status)),
            }
            0
        }
        Command::Compare => {
            let rows = cmd_compare(exp)?;
            write_csv(&rows, &csv_path)?;
            write_json(&rows, &json_path)?;
            lines.push(format!("compare: {} rows", rows.len()));
            0
        }
    };
    lines.push(format!(
        "wrote {} and {}",
        csv_path.display(),
        json_path.display()
    ));
    Ok((code, lines))
}

/// Loads, runs, writes, and maps errors to process exit codes: 0 success,
/// 2 config (or output-location) error, 3 invariant failure, 4 divergence.
pub fn execute(cmd: Command, inv: &CliInvocation) -> i32 {
    let exp = match prepare(cmd, inv) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    match run_and_write(cmd, &exp) {
        Ok((code, lines)) => {
            for line in lines {
                println!("{line}");
            }
            code
        }
        Err(e @ Error::Divergence { .. }) => {
            eprintln!("divergence: {e}");
            4
        }
        Err(e @ Error::Io(_)) => {
            eprintln!("config error: {e}");
            2
        }
        Err(e) => {
            eprintln!("invariant failure: {e}");
            3
        }
    }
}
