//! Constant-stepsize SGD with tail averaging, and Monte Carlo estimation of
//! its excess risk.
//!
//! One pass of the recursion is
//!
//! ```text
//! w_t = w_{t-1} + gamma * (y_t - <w_{t-1}, x_t>) * x_t
//! ```
//!
//! and the returned iterate is the tail average over a window of `n_samples`
//! iterates starting at `tail_start`:
//!
//! ```text
//! w_bar = (1/N) * sum_{t=s}^{s+N-1} w_t ,   N = n_samples, s = tail_start.
//! ```
//!
//! Every runner consumes exactly `dim + 1` standard-normal draws per step,
//! so chains started from the same seed see the same feature and noise
//! streams. That is what makes the bias/variance decomposition exact
//! pathwise: with shared streams,
//! `(w_full - w*) = (w_bias - w*) + (w_var - w*)` at every step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::RegressionModel;
use crate::error::{Error, Result};
use crate::kahan::KahanSum;

/// Parameters of one averaged-SGD run.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    /// Constant stepsize `gamma`.
    pub gamma: f64,
    /// Number of iterates averaged (the `N` in the risk bounds).
    pub n_samples: usize,
    /// Index `s` of the first averaged iterate; `0` averages from the start.
    pub tail_start: usize,
    /// Initial iterate `w_0` in the eigenbasis.
    pub w0: Vec<f64>,
    /// Base seed; replicate `r` uses `seed + r`.
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "stepsize gamma must be finite and positive, got {}",
                self.gamma
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig(
                "n_samples must be at least 1".into(),
            ));
        }
        if self.w0.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.w0.len(),
            });
        }
        if self.w0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("w0 entries must be finite".into()));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of an excess risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub replicates: usize,
}

impl RiskEstimate {
    /// Sample mean and standard error of a batch of risk values
    /// (`std_err` is NaN for a single sample).
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = kahan_mean(samples);
        let mut m2 = KahanSum::new();
        for &s in samples {
            let d = s - mean;
            m2.add(d * d);
        }
        let std_err = if n > 1 {
            (m2.value() / (n as f64 * (n - 1) as f64)).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            std_err,
            replicates: n,
        }
    }
}

fn kahan_mean(samples: &[f64]) -> f64 {
    let mut sum = KahanSum::new();
    for &s in samples {
        sum.add(s);
    }
    sum.value() / samples.len() as f64
}

#[derive(Clone, Copy, PartialEq)]
enum ChainMode {
    /// Noisy labels, started at `w0`.
    Full,
    /// Noiseless labels, started at `w0`.
    Bias,
    /// Noisy labels, started at `w*`.
    Variance,
}

fn run_chain(
    model: &RegressionModel,
    cfg: &SgdConfig,
    rng: &mut impl Rng,
    mode: ChainMode,
) -> Result<Vec<f64>> {
    cfg.validate(model.dim())?;
    let d = model.dim();
    let (s, n) = (cfg.tail_start, cfg.n_samples);

    let mut w: Vec<f64> = match mode {
        ChainMode::Variance => model.w_star().to_vec(),
        _ => cfg.w0.clone(),
    };
    let mut avg = vec![0.0; d];
    let mut averaged = 0usize;
    let mut x = vec![0.0; d];

    for t in 0..(s + n) {
        if t >= s {
            averaged += 1;
            let inv = 1.0 / averaged as f64;
            for i in 0..d {
                avg[i] += (w[i] - avg[i]) * inv;
            }
        }
        if t + 1 == s + n {
            break;
        }
        let y_full = model.sample_into(rng, &mut x);
        let y = match mode {
            ChainMode::Bias => {
                // Strip the noise but keep the rng stream aligned with the
                // other chain modes.
                let mut signal = KahanSum::new();
                for i in 0..d {
                    signal.add(model.w_star()[i] * x[i]);
                }
                signal.value()
            }
            _ => y_full,
        };
        let mut pred = 0.0;
        for i in 0..d {
            pred += w[i] * x[i];
        }
        let residual = y - pred;
        if !residual.is_finite() {
            return Err(Error::Divergence { step: t + 1 });
        }
        let step = cfg.gamma * residual;
        for i in 0..d {
            w[i] += step * x[i];
        }
    }
    if avg.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { step: s + n });
    }
    Ok(avg)
}

/// Runs one averaged-SGD pass and returns the tail-averaged iterate.
pub fn run_sgd(model: &RegressionModel, cfg: &SgdConfig, rng: &mut impl Rng) -> Result<Vec<f64>> {
    run_chain(model, cfg, rng, ChainMode::Full)
}

/// The bias chain: same features, noiseless labels, started at `w0`.
pub fn run_bias_chain(
    model: &RegressionModel,
    cfg: &SgdConfig,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    run_chain(model, cfg, rng, ChainMode::Bias)
}

/// The variance chain: same features and noise, started at `w*`.
pub fn run_variance_chain(
    model: &RegressionModel,
    cfg: &SgdConfig,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    run_chain(model, cfg, rng, ChainMode::Variance)
}

fn replicate_rng(cfg: &SgdConfig, replicate: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(replicate as u64))
}

fn check_replicates(replicates: usize) -> Result<()> {
    if replicates < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 replicates for a standard error, got {replicates}"
        )));
    }
    Ok(())
}

/// Runs independent SGD replicates and returns the excess risk of each
/// tail average, in replicate order. Replicate `r` is seeded with
/// `cfg.seed + r`, so results are reproducible and independent of thread
/// scheduling.
pub fn monte_carlo_risk_samples(
    model: &RegressionModel,
    cfg: &SgdConfig,
    replicates: usize,
) -> Result<Vec<f64>> {
    check_replicates(replicates)?;
    cfg.validate(model.dim())?;
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(cfg, r);
            let avg = run_sgd(model, cfg, &mut rng)?;
            model.excess_risk(&avg)
        })
        .collect()
}

/// Estimates the excess risk of tail-averaged SGD over independent
/// replicates.
pub fn monte_carlo_risk(
    model: &RegressionModel,
    cfg: &SgdConfig,
    replicates: usize,
) -> Result<RiskEstimate> {
    let risks = monte_carlo_risk_samples(model, cfg, replicates)?;
    Ok(RiskEstimate::from_samples(&risks))
}

/// Estimates the bias and variance components of the excess risk on coupled
/// sample streams: replicate `r` runs the bias chain and the variance chain
/// from the same seed `cfg.seed + r`, so both see identical features and
/// noise draws.
pub fn monte_carlo_decomposition(
    model: &RegressionModel,
    cfg: &SgdConfig,
    replicates: usize,
) -> Result<(RiskEstimate, RiskEstimate)> {
    check_replicates(replicates)?;
    cfg.validate(model.dim())?;
    let pairs: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng_b = replicate_rng(cfg, r);
            let mut rng_v = rng_b.clone();
            let bias_avg = run_bias_chain(model, cfg, &mut rng_b)?;
            let var_avg = run_variance_chain(model, cfg, &mut rng_v)?;
            Ok((model.excess_risk(&bias_avg)?, model.excess_risk(&var_avg)?))
        })
        .collect::<Result<_>>()?;
    let bias: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let var: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok((
        RiskEstimate::from_samples(&bias),
        RiskEstimate::from_samples(&var),
    ))
}
