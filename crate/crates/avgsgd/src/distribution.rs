//! The data distribution: Gaussian features in the covariance eigenbasis,
//! well- or mis-specified labels, and the fourth-moment machinery the risk
//! analysis rests on.
//!
//! Features are sampled as `x_i = sqrt(lambda_i) * z_i` with `z` standard
//! normal, so `E[x x^T] = H = diag(lambda)`. Labels are
//!
//! ```text
//! well-specified:  y = <w*, x> + noise_std * eps
//! mis-specified:   y = <w*, x> + noise_std * eps * ||x|| / sqrt(tr H)
//! ```
//!
//! with `eps ~ N(0,1)` independent of `x`. The mis-specified multiplier has
//! unit second moment, so `E[(y - <w*,x>)^2] = noise_std^2` in both cases,
//! but the conditional noise level then correlates with `||x||`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::linalg::{check_symmetric, symmetric_extreme_eigenvalues};
use crate::spectrum::Spectrum;

/// Fourth-moment bound on `alpha` that Gaussian features attain.
pub const GAUSSIAN_ALPHA: f64 = 3.0;
/// Matching lower fourth-moment constant for Gaussian features in
/// dimension at least two.
pub const GAUSSIAN_BETA: f64 = 1.0;

/// A linear regression data distribution in the covariance eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    spectrum: Spectrum,
    w_star: Vec<f64>,
    noise_std: f64,
    well_specified: bool,
    sqrt_lambdas: Vec<f64>,
}

impl RegressionModel {
    pub fn new(
        spectrum: Spectrum,
        w_star: Vec<f64>,
        noise_std: f64,
        well_specified: bool,
    ) -> Result<Self> {
        if w_star.len() != spectrum.dim() {
            return Err(Error::DimensionMismatch {
                expected: spectrum.dim(),
                got: w_star.len(),
            });
        }
        if w_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "w_star entries must be finite".into(),
            ));
        }
        if !noise_std.is_finite() || noise_std < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise_std must be finite and non-negative, got {noise_std}"
            )));
        }
        let sqrt_lambdas = spectrum.values().iter().map(|l| l.sqrt()).collect();
        Ok(Self {
            spectrum,
            w_star,
            noise_std,
            well_specified,
            sqrt_lambdas,
        })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn well_specified(&self) -> bool {
        self.well_specified
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    /// Smallest `c` with `E[(y - <w*,x>)^2 x x^T] <= c * H` in the
    /// semidefinite order.
    ///
    /// Well-specified noise is independent of `x`, giving `noise_std^2`.
    /// The mis-specified multiplier yields
    /// `noise_std^2 (H + 2 H^2 / tr H)`, so the constant picks up the
    /// top eigenvalue: `noise_std^2 (1 + 2 lambda_1 / tr H)`.
    pub fn noise_second_moment(&self) -> f64 {
        let s2 = self.noise_std * self.noise_std;
        if self.well_specified {
            s2
        } else {
            s2 * (1.0 + 2.0 * self.spectrum.lambda_max() / self.spectrum.trace())
        }
    }

    /// Draws one `(x, y)` pair. Consumes exactly `dim + 1` standard-normal
    /// draws from `rng` regardless of the noise level, so runs with equal
    /// seeds see identical feature streams.
    pub fn sample_example(&self, rng: &mut impl Rng) -> (Vec<f64>, f64) {
        let mut x = vec![0.0; self.dim()];
        let y = self.sample_into(rng, &mut x);
        (x, y)
    }

    /// Buffer-reusing form of [`sample_example`](Self::sample_example).
    pub fn sample_into(&self, rng: &mut impl Rng, x: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut signal = KahanSum::new();
        let mut norm_sq = KahanSum::new();
        for i in 0..self.dim() {
            let z: f64 = rng.sample(StandardNormal);
            let xi = self.sqrt_lambdas[i] * z;
            x[i] = xi;
            signal.add(self.w_star[i] * xi);
            norm_sq.add(xi * xi);
        }
        let eps: f64 = rng.sample(StandardNormal);
        let noise = if self.well_specified {
            self.noise_std * eps
        } else {
            self.noise_std * eps * (norm_sq.value() / self.spectrum.trace()).sqrt()
        };
        signal.value() + noise
    }

    /// Excess risk `(1/2) sum_i lambda_i (w_i - w*_i)^2` of a parameter
    /// vector given in the eigenbasis.
    pub fn excess_risk(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: w.len(),
            });
        }
        let mut sum = KahanSum::new();
        for i in (0..self.dim()).rev() {
            let diff = w[i] - self.w_star[i];
            sum.add(self.spectrum.values()[i] * diff * diff);
        }
        Ok(0.5 * sum.value())
    }
}

/// Fourth-moment constants of a data distribution.
///
/// `alpha` and `beta` bound the fourth-moment operator relative to `H`:
/// for every PSD matrix `A`,
///
/// ```text
/// beta * tr(A H) * H  <=  E[x x^T A x x^T] - H A H  and
///                         E[x x^T A x x^T]          <=  alpha * tr(A H) * H.
/// ```
///
/// `r_squared` bounds `E[||x||^2 x x^T] <= r_squared * H`, and `sigma_sq`
/// is the noise level from
/// [`noise_second_moment`](RegressionModel::noise_second_moment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub sigma_sq: f64,
}

impl MomentConstants {
    /// Exact constants for the Gaussian features of `model`:
    /// `alpha = 3`, `beta = 1`, `r_squared = tr H + 2 lambda_1`.
    pub fn gaussian(model: &RegressionModel) -> Self {
        let spec = model.spectrum();
        Self {
            alpha: GAUSSIAN_ALPHA,
            beta: GAUSSIAN_BETA,
            r_squared: spec.trace() + 2.0 * spec.lambda_max(),
            sigma_sq: model.noise_second_moment(),
        }
    }
}

/// Applies the Gaussian fourth-moment operator to a symmetric matrix:
/// `M(A) = E[x x^T A x x^T] = tr(A H) H + 2 H A H` with `H = diag(lambda)`.
pub fn fourth_moment_apply(spec: &Spectrum, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = spec.dim();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a.nrows().max(a.ncols()),
        });
    }
    check_symmetric(a, 1e-8)?;
    let lambdas = spec.values();
    let trace_ah: f64 = (0..d).map(|i| lambdas[i] * a[(i, i)]).sum();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = 2.0 * lambdas[i] * lambdas[j] * a[(i, j)];
        }
        out[(i, i)] += lambdas[i] * trace_ah;
    }
    Ok(out)
}

/// `H^{-1/2} M(A) H^{-1/2} = 2 D A D + tr(A H) I` with `D = H^{1/2}`.
fn reduced_fourth_moment(spec: &Spectrum, a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = spec.dim();
    let lambdas = spec.values();
    let trace_ah: f64 = (0..d).map(|i| lambdas[i] * a[(i, i)]).sum();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = 2.0 * (lambdas[i] * lambdas[j]).sqrt() * a[(i, j)];
        }
        out[(i, i)] += trace_ah;
    }
    out
}

/// Measures the fourth-moment constants of `model` empirically, without
/// assuming Gaussianity of the formulas.
///
/// Scans the identity, every eigenbasis projector `e_k e_k^T`, and
/// `trials` random Gram matrices `V V^T`, recording for each test matrix
/// `A` (with `t = tr(A H)`)
///
/// ```text
/// alpha_hat(A) = lambda_max(H^{-1/2} M(A) H^{-1/2}) / t
/// beta_hat(A)  = lambda_min(H^{-1/2} (M(A) - H A H) H^{-1/2}) / t
/// ```
///
/// and returns the worst cases: the largest `alpha_hat`, the smallest
/// `beta_hat`, and `r_squared = lambda_max(H^{-1/2} M(I) H^{-1/2})`.
pub fn verify_moment_constants(
    model: &RegressionModel,
    trials: usize,
    rng: &mut impl Rng,
) -> MomentConstants {
    let spec = model.spectrum();
    let d = spec.dim();
    let lambdas = spec.values();

    let mut alpha: f64 = f64::NEG_INFINITY;
    let mut beta: f64 = f64::INFINITY;
    let mut scan = |a: &DMatrix<f64>| {
        let t: f64 = (0..d).map(|i| lambdas[i] * a[(i, i)]).sum();
        if t <= 0.0 {
            return;
        }
        let reduced = reduced_fourth_moment(spec, a);
        let (_, max) = symmetric_extreme_eigenvalues(&reduced);
        alpha = alpha.max(max / t);
        // M(A) - H A H reduces to D A D + t I: subtract one of the two
        // D A D terms inside the reduced operator.
        let mut centered = reduced;
        for i in 0..d {
            for j in 0..d {
                centered[(i, j)] -= (lambdas[i] * lambdas[j]).sqrt() * a[(i, j)];
            }
        }
        let (min, _) = symmetric_extreme_eigenvalues(&centered);
        beta = beta.min(min / t);
    };

    let identity = DMatrix::identity(d, d);
    scan(&identity);
    for k in 0..d {
        let mut proj = DMatrix::zeros(d, d);
        proj[(k, k)] = 1.0;
        scan(&proj);
    }
    for _ in 0..trials {
        let m = rng.gen_range(1..=d);
        let v = DMatrix::from_fn(d, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gram = &v * v.transpose();
        scan(&gram);
    }

    let (_, r_squared) = symmetric_extreme_eigenvalues(&reduced_fourth_moment(spec, &identity));
    MomentConstants {
        alpha,
        beta,
        r_squared,
        sigma_sq: model.noise_second_moment(),
    }
}
