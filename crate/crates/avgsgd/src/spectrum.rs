//! Eigenvalue spectra of the data covariance and the head/tail functionals
//! built on them.
//!
//! Everything downstream works in the eigenbasis of the covariance H, so a
//! spectrum (the eigenvalues in non-increasing order) fully describes the
//! feature distribution geometry. The quantities computed here are the ones
//! the risk bounds are written in:
//!
//! ```text
//! effective dimension   k* = max{ k : lambda_k >= 1/(gamma * horizon) }
//! tail power sum        sum_{i>k} lambda_i^p
//! split norms           ||v||^2 w.r.t. H_{0:k}^{-1}  and  H_{k:d}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kahan::{kahan_sum, KahanSum};

/// Eigenvalues of the data covariance H, sorted non-increasing, all positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    trace: f64,
}

/// Named spectrum families plus explicit lists.
///
/// The string tags used in experiment configs are the serde names:
/// `piecewise`, `power_law`, `log_poly`, `exponential`, `explicit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumFamily {
    /// `lambda_k = 1/s` for `k <= s`, `1/(d-s)` for `s < k <= d`.
    ///
    /// Callers sweeping over N derive `s = ceil(N^r)`, `d = ceil(N^q)`.
    Piecewise { s: usize, d: usize },
    /// `lambda_k = k^{-(1+r)}`, `r > 0`.
    PowerLaw { r: f64, d: usize },
    /// `lambda_k = k^{-1} * ln(k+1)^{-beta}`, `beta > 1`.
    LogPoly { beta: f64, d: usize },
    /// `lambda_k = e^{-k}`.
    Exponential { d: usize },
    /// User-supplied eigenvalues, re-sorted non-increasing (stable).
    Explicit { values: Vec<f64> },
}

impl SpectrumFamily {
    /// Dimension of the spectrum this family will produce.
    pub fn dim(&self) -> usize {
        match self {
            SpectrumFamily::Piecewise { d, .. }
            | SpectrumFamily::PowerLaw { d, .. }
            | SpectrumFamily::LogPoly { d, .. }
            | SpectrumFamily::Exponential { d } => *d,
            SpectrumFamily::Explicit { values } => values.len(),
        }
    }

    /// Same family with the dimension replaced (used by per-N sweeps).
    pub fn with_dim(&self, new_d: usize) -> SpectrumFamily {
        match self {
            SpectrumFamily::Piecewise { s, .. } => SpectrumFamily::Piecewise { s: *s, d: new_d },
            SpectrumFamily::PowerLaw { r, .. } => SpectrumFamily::PowerLaw { r: *r, d: new_d },
            SpectrumFamily::LogPoly { beta, .. } => SpectrumFamily::LogPoly {
                beta: *beta,
                d: new_d,
            },
            SpectrumFamily::Exponential { .. } => SpectrumFamily::Exponential { d: new_d },
            SpectrumFamily::Explicit { values } => SpectrumFamily::Explicit {
                values: values.clone(),
            },
        }
    }
}

/// Builds the spectrum of a named family (or validates an explicit list).
pub fn build_spectrum(family: &SpectrumFamily) -> Result<Spectrum> {
    let values = match family {
        SpectrumFamily::Piecewise { s, d } => {
            if *s == 0 || *d <= *s {
                return Err(Error::InvalidSpectrum(format!(
                    "piecewise family needs 0 < s < d, got s={s}, d={d}"
                )));
            }
            if *d < 2 * *s {
                return Err(Error::InvalidSpectrum(format!(
                    "piecewise family needs d >= 2s so the head dominates the tail, \
                     got s={s}, d={d}"
                )));
            }
            let head = 1.0 / *s as f64;
            let tail = 1.0 / (*d - *s) as f64;
            (1..=*d)
                .map(|k| if k <= *s { head } else { tail })
                .collect()
        }
        SpectrumFamily::PowerLaw { r, d } => {
            if !(*r > 0.0) {
                return Err(Error::InvalidSpectrum(format!(
                    "power-law exponent must satisfy r > 0, got r={r}"
                )));
            }
            (1..=*d).map(|k| (k as f64).powf(-(1.0 + r))).collect()
        }
        SpectrumFamily::LogPoly { beta, d } => {
            if !(*beta > 1.0) {
                return Err(Error::InvalidSpectrum(format!(
                    "log-poly family needs beta > 1, got beta={beta}"
                )));
            }
            (1..=*d)
                .map(|k| ((k + 1) as f64).ln().powf(-beta) / k as f64)
                .collect()
        }
        SpectrumFamily::Exponential { d } => (1..=*d).map(|k| (-(k as f64)).exp()).collect(),
        SpectrumFamily::Explicit { values } => {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).expect("explicit eigenvalues must not be NaN"));
            sorted
        }
    };
    Spectrum::new(values)
}

impl Spectrum {
    /// Validates and wraps a non-increasing list of positive eigenvalues.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpectrum("empty eigenvalue list".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidSpectrum(format!(
                    "eigenvalue {i} is {v}; all eigenvalues must be finite and positive"
                )));
            }
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidSpectrum(
                "eigenvalues must be sorted non-increasing".into(),
            ));
        }
        let trace = kahan_sum(values.iter().copied());
        Ok(Self { values, trace })
    }

    /// Eigenvalues, non-increasing.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `tr(H)`, compensated.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Largest eigenvalue `lambda_1`.
    pub fn lambda_max(&self) -> f64 {
        self.values[0]
    }

    /// Effective dimension `max{ k : lambda_k >= 1/(gamma*horizon) }`
    /// (1-based; 0 when every eigenvalue is below the threshold).
    ///
    /// Called with `horizon = N` this is k*, with `horizon = s + N` it is
    /// the tail-averaging index k-dagger. The inequality is weak: an
    /// eigenvalue exactly at the threshold counts into the head.
    pub fn effective_dim(&self, gamma: f64, horizon: usize) -> usize {
        assert!(gamma > 0.0, "effective_dim needs gamma > 0, got {gamma}");
        assert!(horizon >= 1, "effective_dim needs horizon >= 1");
        let threshold = 1.0 / (gamma * horizon as f64);
        self.values.partition_point(|&l| l >= threshold)
    }

    /// `sum_{i > k} lambda_i^p` (compensated); 0 when `k = d`.
    pub fn tail_power_sum(&self, k: usize, p: u32) -> f64 {
        assert!(
            k <= self.dim(),
            "tail_power_sum split index {k} exceeds dimension {}",
            self.dim()
        );
        assert!(p >= 1, "tail_power_sum exponent must be >= 1");
        // Sum smallest-to-largest so the many tiny tail terms are not
        // absorbed by the first large one.
        kahan_sum(self.values[k..].iter().rev().map(|l| l.powi(p as i32)))
    }

    /// Head norm `sum_{i<=k} v_i^2/lambda_i` and tail norm
    /// `sum_{i>k} lambda_i v_i^2` of a vector in the eigenbasis.
    pub fn split_norms(&self, v: &[f64], k: usize) -> Result<(f64, f64)> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        assert!(k <= self.dim(), "split index {k} exceeds dimension");
        let mut head = KahanSum::new();
        for i in 0..k {
            head.add(v[i] * v[i] / self.values[i]);
        }
        let mut tail = KahanSum::new();
        for i in (k..self.dim()).rev() {
            tail.add(self.values[i] * v[i] * v[i]);
        }
        Ok((head.value(), tail.value()))
    }

    /// `sum_i lambda_i v_i^2`, the squared H-norm of a vector in the
    /// eigenbasis.
    pub fn h_norm_sq(&self, v: &[f64]) -> Result<f64> {
        let (_, tail) = self.split_norms(v, 0)?;
        Ok(tail)
    }
}
