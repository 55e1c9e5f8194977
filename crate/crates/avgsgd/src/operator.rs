//! Exact evolution of the second-moment matrices behind averaged SGD, the
//! closed-form excess-risk oracle, and executable checks of the
//! semidefinite-order comparisons the risk bounds rest on.
//!
//! Writing `beta_t = w_t - w*` for the deviation of the SGD iterate, three
//! matrix chains capture everything the risk needs:
//!
//! ```text
//! bias chain        B_t = E[beta_t beta_t^T],  noiseless labels, B_0 = beta_0 beta_0^T
//! variance chain    C_t = E[beta_t beta_t^T],  started at w*,    C_0 = 0
//! partial-sum chain S_t = B_0 + B_1 + ... + B_t
//! ```
//!
//! All three evolve by the same linear contraction
//!
//! ```text
//! (I - gamma T) A = A - gamma (H A + A H) + gamma^2 M(A)
//! ```
//!
//! (the variance chain additionally injects `gamma^2 sigma^2 H` each step,
//! the partial-sum chain injects `B_0`), where `M` is the fourth-moment
//! operator. Everything here is exact only for Gaussian features, because
//! `M` is used in closed form.
//!
//! The risk oracle never materialises `d x d` matrices: with `H` diagonal
//! the diagonals of each chain evolve autonomously, and the excess risk of
//! the tail-averaged iterate depends only on those diagonals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distribution::{RegressionModel, GAUSSIAN_ALPHA};
use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::linalg::{check_symmetric, max_abs_entry, min_eigenvalue, symmetrize};
use crate::sgd::SgdConfig;
use crate::spectrum::Spectrum;

/// Relative tolerance for the PSD invariant: the smallest eigenvalue may
/// dip below zero by at most this fraction of the largest matrix entry.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Which second-moment chain a [`CovarianceState`] tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Bias,
    Variance,
    PartialSum,
}

/// A second-moment matrix `E[beta_t beta_t^T]` (or a partial sum of them)
/// together with its step index.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    matrix: DMatrix<f64>,
    step: usize,
    kind: ChainKind,
}

fn deviation(model: &RegressionModel, w0: &[f64]) -> Result<Vec<f64>> {
    if w0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: w0.len(),
        });
    }
    Ok(w0
        .iter()
        .zip(model.w_star())
        .map(|(a, b)| a - b)
        .collect())
}

fn outer(v: &[f64]) -> DMatrix<f64> {
    let d = v.len();
    DMatrix::from_fn(d, d, |i, j| v[i] * v[j])
}

impl CovarianceState {
    /// Bias chain at step 0: `B_0 = (w0 - w*)(w0 - w*)^T`.
    pub fn bias(model: &RegressionModel, w0: &[f64]) -> Result<Self> {
        Ok(Self {
            matrix: outer(&deviation(model, w0)?),
            step: 0,
            kind: ChainKind::Bias,
        })
    }

    /// Variance chain at step 0: `C_0 = 0`.
    pub fn variance(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
            step: 0,
            kind: ChainKind::Variance,
        }
    }

    /// Partial-sum chain at step 0: `S_0 = B_0`.
    pub fn partial_sum(model: &RegressionModel, w0: &[f64]) -> Result<Self> {
        Ok(Self {
            matrix: outer(&deviation(model, w0)?),
            step: 0,
            kind: ChainKind::PartialSum,
        })
    }

    /// Wraps an arbitrary matrix after validating the state invariants
    /// (symmetry to 1e-12 relative, PSD to [`PSD_TOLERANCE`]).
    pub fn new(matrix: DMatrix<f64>, step: usize, kind: ChainKind) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        check_symmetric(&matrix, 1e-12)?;
        let scale = max_abs_entry(&matrix);
        let min_eig = min_eigenvalue(&matrix);
        if min_eig < -PSD_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::PsdViolation {
                step,
                min_eigenvalue: min_eig,
                scale,
            });
        }
        Ok(Self { matrix, step, kind })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }
}

/// One step of the stochastic contraction
/// `A - gamma (H A + A H) + gamma^2 M(A)` with `H = diag(lambda)`.
pub fn apply_contraction(spec: &Spectrum, gamma: f64, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert!(
        gamma.is_finite() && gamma > 0.0,
        "stepsize must be finite and positive, got {gamma}"
    );
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
            let li = lambdas[i];
            let lj = lambdas[j];
            out[(i, j)] = a[(i, j)] * (1.0 - gamma * (li + lj) + 2.0 * gamma * gamma * li * lj);
        }
        out[(i, i)] += gamma * gamma * lambdas[i] * trace_ah;
    }
    Ok(out)
}

/// One step of the deterministic (gradient-descent) contraction
/// `(I - gamma H) A (I - gamma H)`.
pub fn apply_deterministic_contraction(
    spec: &Spectrum,
    gamma: f64,
    a: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    assert!(
        gamma.is_finite() && gamma > 0.0,
        "stepsize must be finite and positive, got {gamma}"
    );
    let d = spec.dim();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a.nrows().max(a.ncols()),
        });
    }
    check_symmetric(a, 1e-8)?;
    let lambdas = spec.values();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = (1.0 - gamma * lambdas[i]) * (1.0 - gamma * lambdas[j]) * a[(i, j)];
        }
    }
    Ok(out)
}

fn injection(state: &CovarianceState, model: &RegressionModel, cfg: &SgdConfig) -> Result<Option<DMatrix<f64>>> {
    match state.kind {
        ChainKind::Bias => Ok(None),
        ChainKind::Variance => {
            if !model.well_specified() {
                return Err(Error::RequiresWellSpecified("variance chain evolution"));
            }
            let g2s2 = cfg.gamma * cfg.gamma * model.noise_std() * model.noise_std();
            let d = model.dim();
            let mut m = DMatrix::zeros(d, d);
            for i in 0..d {
                m[(i, i)] = g2s2 * model.spectrum().values()[i];
            }
            Ok(Some(m))
        }
        ChainKind::PartialSum => Ok(Some(outer(&deviation(model, &cfg.w0)?))),
    }
}

/// Advances a chain `steps` steps under its exact recursion, symmetrizing
/// and re-checking the PSD invariant after every step.
pub fn evolve(
    mut state: CovarianceState,
    model: &RegressionModel,
    cfg: &SgdConfig,
    steps: usize,
) -> Result<CovarianceState> {
    assert!(steps >= 1, "evolve needs at least one step");
    cfg.validate(model.dim())?;
    if state.matrix.nrows() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: state.matrix.nrows(),
        });
    }
    let inject = injection(&state, model, cfg)?;
    for k in 0..steps {
        let step = state.step + k + 1;
        let mut next = apply_contraction(model.spectrum(), cfg.gamma, &state.matrix)?;
        if let Some(m) = &inject {
            next += m;
        }
        symmetrize(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        let scale = max_abs_entry(&next);
        let min_eig = min_eigenvalue(&next);
        if min_eig < -PSD_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::PsdViolation {
                step,
                min_eigenvalue: min_eig,
                scale,
            });
        }
        state.matrix = next;
    }
    state.step += steps;
    Ok(state)
}

/// Runs a chain to (numerical) stationarity: stops when one more step moves
/// the trace by less than 1e-12 relative, capped at 1e6 steps. The trace of
/// every chain decays or saturates geometrically, so the cap is generous.
pub fn evolve_to_stationarity(
    mut state: CovarianceState,
    model: &RegressionModel,
    cfg: &SgdConfig,
) -> Result<CovarianceState> {
    const CAP: usize = 1_000_000;
    let lambdas = model.spectrum().values();
    let trace_h = |m: &DMatrix<f64>| -> f64 { (0..m.nrows()).map(|i| m[(i, i)]).sum() };
    let _ = lambdas;
    let mut prev = trace_h(&state.matrix);
    for _ in 0..CAP {
        state = evolve(state, model, cfg, 1)?;
        let cur = trace_h(&state.matrix);
        if (cur - prev).abs() <= 1e-12 * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok(state);
        }
        prev = cur;
    }
    Ok(state)
}

/// Exact expected excess risk of the tail-averaged iterate, split into its
/// bias and variance parts: returns `(total, bias, variance)`.
///
/// With `beta_t = w_t - w*`, `u_i = 1 - gamma lambda_i`, `s = tail_start`,
/// `N = n_samples` and `M = s + N - 1`, the risk of the average is the
/// double sum
///
/// ```text
/// (1/(2N^2)) [ sum_t <H, D_t> + 2 sum_{t<k} <(I-gamma H)^{k-t} H, D_t> ]
/// ```
///
/// over the window `t, k in {s, ..., M}`, which is exact because
/// `E[beta_k | beta_t] = (I - gamma H)^{k-t} beta_t`. The inner geometric
/// sums collapse per eigendirection into the weight
///
/// ```text
/// w_i(t) = lambda_i + (2/gamma) (u_i - u_i^{M-t+1}),
/// ```
///
/// and only the chain diagonals `d_i(t)` enter, which evolve autonomously:
///
/// ```text
/// d_i <- (1 - 2 gamma lambda_i + 2 gamma^2 lambda_i^2) d_i
///        + gamma^2 lambda_i sum_j lambda_j d_j   (+ gamma^2 sigma^2 lambda_i).
/// ```
///
/// Total cost is O((s+N) d). Requires a well-specified model so that the
/// noise injection is exactly `gamma^2 sigma^2 H`.
pub fn exact_risk(model: &RegressionModel, cfg: &SgdConfig) -> Result<(f64, f64, f64)> {
    if !model.well_specified() {
        return Err(Error::RequiresWellSpecified("exact_risk"));
    }
    cfg.validate(model.dim())?;
    let d = model.dim();
    let lambdas = model.spectrum().values();
    let gamma = cfg.gamma;
    let (s, n) = (cfg.tail_start, cfg.n_samples);
    let last = s + n - 1;
    let sigma_sq = model.noise_std() * model.noise_std();

    // Chain diagonals: bias, variance, and the full chain (evolved
    // independently so the decomposition identity is a real check, not a
    // definition).
    let mut db: Vec<f64> = cfg
        .w0
        .iter()
        .zip(model.w_star())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    let mut dc = vec![0.0; d];
    let mut da = db.clone();

    let mut bias_acc = KahanSum::new();
    let mut var_acc = KahanSum::new();
    let mut total_acc = KahanSum::new();

    for t in 0..=last {
        if t >= s {
            let remaining = (last - t + 1) as i32;
            for i in 0..d {
                let u = 1.0 - gamma * lambdas[i];
                let weight = lambdas[i] + (2.0 / gamma) * (u - u.powi(remaining));
                bias_acc.add(weight * db[i]);
                var_acc.add(weight * dc[i]);
                total_acc.add(weight * da[i]);
            }
        }
        if t == last {
            break;
        }
        // One diagonal step of each chain.
        let mut tb = KahanSum::new();
        let mut tc = KahanSum::new();
        let mut ta = KahanSum::new();
        for i in 0..d {
            tb.add(lambdas[i] * db[i]);
            tc.add(lambdas[i] * dc[i]);
            ta.add(lambdas[i] * da[i]);
        }
        let (tb, tc, ta) = (tb.value(), tc.value(), ta.value());
        if !(tb.is_finite() && tc.is_finite() && ta.is_finite()) {
            return Err(Error::Divergence { step: t + 1 });
        }
        for i in 0..d {
            let l = lambdas[i];
            let contract = 1.0 - 2.0 * gamma * l + 2.0 * gamma * gamma * l * l;
            let g2l = gamma * gamma * l;
            db[i] = contract * db[i] + g2l * tb;
            dc[i] = contract * dc[i] + g2l * tc + g2l * sigma_sq;
            da[i] = contract * da[i] + g2l * ta + g2l * sigma_sq;
        }
    }

    let norm = 1.0 / (2.0 * (n as f64) * (n as f64));
    let bias = norm * bias_acc.value();
    let variance = norm * var_acc.value();
    let total = norm * total_acc.value();
    if !(bias.is_finite() && variance.is_finite() && total.is_finite()) {
        return Err(Error::Divergence { step: last });
    }
    Ok((total, bias, variance))
}

/// Per-step normalized minimum-eigenvalue margins for the variance-chain
/// order comparisons. A margin is `lambda_min(difference) / scale` with
/// `scale` the largest entry of either side; negative values beyond
/// `-`[`PSD_TOLERANCE`] fail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceOrderMargins {
    pub step: usize,
    /// `C_t - C_{t-1}` (monotone growth).
    pub monotone: f64,
    /// `K I - C_t` with `K = gamma sigma^2 / (1 - gamma alpha tr H)`.
    pub crude: f64,
    /// `K (I - (I - gamma H)^t) - C_t`.
    pub refined: f64,
    /// `C_t - (gamma sigma^2 / 2)(I - (I - gamma H)^{2t})`.
    pub lower: f64,
}

/// Report from [`check_variance_chain_order`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceOrderReport {
    pub per_step: Vec<VarianceOrderMargins>,
    pub worst_monotone: f64,
    pub worst_crude: f64,
    pub worst_refined: f64,
    pub worst_lower: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn normalized_margin(diff: &DMatrix<f64>, scale: f64) -> f64 {
    if scale <= 0.0 {
        return 0.0;
    }
    min_eigenvalue(diff) / scale
}

/// Evolves the variance chain for `n_samples` steps and checks, per step,
/// monotone growth, the crude stationary upper bound, the refined
/// time-dependent upper bound, and the matching lower bound.
pub fn check_variance_chain_order(
    model: &RegressionModel,
    cfg: &SgdConfig,
) -> Result<VarianceOrderReport> {
    if !model.well_specified() {
        return Err(Error::RequiresWellSpecified("check_variance_chain_order"));
    }
    cfg.validate(model.dim())?;
    let spec = model.spectrum();
    let denom = 1.0 - cfg.gamma * GAUSSIAN_ALPHA * spec.trace();
    if denom <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "variance-chain bounds need gamma < 1/(alpha tr H); \
             gamma = {}, alpha tr H = {}",
            cfg.gamma,
            GAUSSIAN_ALPHA * spec.trace()
        )));
    }
    let d = model.dim();
    let sigma_sq = model.noise_std() * model.noise_std();
    let k_crude = cfg.gamma * sigma_sq / denom;
    let lambdas = spec.values();

    let mut state = CovarianceState::variance(d);
    let mut u_pow: Vec<f64> = vec![1.0; d]; // (1 - gamma lambda_i)^t
    let mut per_step = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let prev = state.matrix().clone();
        state = evolve(state, model, cfg, 1)?;
        for (p, &l) in u_pow.iter_mut().zip(lambdas) {
            *p *= 1.0 - cfg.gamma * l;
        }
        let c = state.matrix();
        let c_scale = max_abs_entry(c);

        let monotone = normalized_margin(&(c - &prev), c_scale.max(max_abs_entry(&prev)));

        let mut crude_diff = -c.clone();
        for i in 0..d {
            crude_diff[(i, i)] += k_crude;
        }
        let crude = normalized_margin(&crude_diff, c_scale.max(k_crude));

        let mut refined_diff = -c.clone();
        let mut refined_scale = c_scale;
        for i in 0..d {
            let bound = k_crude * (1.0 - u_pow[i]);
            refined_diff[(i, i)] += bound;
            refined_scale = refined_scale.max(bound);
        }
        let refined = normalized_margin(&refined_diff, refined_scale);

        let mut lower_diff = c.clone();
        let mut lower_scale = c_scale;
        for i in 0..d {
            let bound = 0.5 * cfg.gamma * sigma_sq * (1.0 - u_pow[i] * u_pow[i]);
            lower_diff[(i, i)] -= bound;
            lower_scale = lower_scale.max(bound);
        }
        let lower = normalized_margin(&lower_diff, lower_scale);

        per_step.push(VarianceOrderMargins {
            step: state.step(),
            monotone,
            crude,
            refined,
            lower,
        });
    }

    let fold = |f: fn(&VarianceOrderMargins) -> f64| {
        per_step.iter().map(f).fold(f64::INFINITY, f64::min)
    };
    let worst_monotone = fold(|m| m.monotone);
    let worst_crude = fold(|m| m.crude);
    let worst_refined = fold(|m| m.refined);
    let worst_lower = fold(|m| m.lower);
    let passed = [worst_monotone, worst_crude, worst_refined, worst_lower]
        .iter()
        .all(|&m| m >= -PSD_TOLERANCE);
    Ok(VarianceOrderReport {
        per_step,
        worst_monotone,
        worst_crude,
        worst_refined,
        worst_lower,
        tolerance: PSD_TOLERANCE,
        passed,
    })
}

/// Per-step margins for the partial-sum chain comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialSumOrderMargins {
    pub step: usize,
    /// `S_t - S_{t-1}` (monotone growth).
    pub monotone: f64,
    /// Refined upper bound minus `S_t`.
    pub refined: f64,
}

/// Report from [`check_partial_sum_order`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSumOrderReport {
    pub per_step: Vec<PartialSumOrderMargins>,
    pub worst_monotone: f64,
    pub worst_refined: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Evolves the partial-sum chain for `n_samples` steps and checks monotone
/// growth and the refined upper bound
///
/// ```text
/// S_t <= sum_{k=0}^{t} (I-gamma H)^k B_0 (I-gamma H)^k
///        + [gamma alpha tr(B_0) / (1 - gamma alpha tr H)] sum_{k=0}^{t} (I-gamma H)^{2k} H.
/// ```
pub fn check_partial_sum_order(
    model: &RegressionModel,
    cfg: &SgdConfig,
) -> Result<PartialSumOrderReport> {
    cfg.validate(model.dim())?;
    let spec = model.spectrum();
    let denom = 1.0 - cfg.gamma * GAUSSIAN_ALPHA * spec.trace();
    if denom <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "partial-sum bounds need gamma < 1/(alpha tr H); \
             gamma = {}, alpha tr H = {}",
            cfg.gamma,
            GAUSSIAN_ALPHA * spec.trace()
        )));
    }
    let d = model.dim();
    let lambdas = spec.values();
    let beta0 = deviation(model, &cfg.w0)?;
    let b0 = outer(&beta0);
    let trace_b0: f64 = (0..d).map(|i| b0[(i, i)]).sum();
    let k_tail = cfg.gamma * GAUSSIAN_ALPHA * trace_b0 / denom;

    let mut state = CovarianceState::partial_sum(model, &cfg.w0)?;
    // Running refined bound, accumulated one k-term per step. At t = 0 it
    // holds the k = 0 terms B_0 + k_tail * H, matching S_0 = B_0.
    let mut u_pow: Vec<f64> = vec![1.0; d];
    let mut bound = b0.clone();
    for i in 0..d {
        bound[(i, i)] += k_tail * lambdas[i];
    }
    let mut per_step = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let prev = state.matrix().clone();
        state = evolve(state, model, cfg, 1)?;
        for (p, &l) in u_pow.iter_mut().zip(lambdas) {
            *p *= 1.0 - cfg.gamma * l;
        }
        for i in 0..d {
            for j in 0..d {
                bound[(i, j)] += u_pow[i] * u_pow[j] * b0[(i, j)];
            }
            bound[(i, i)] += k_tail * u_pow[i] * u_pow[i] * lambdas[i];
        }
        let s_mat = state.matrix();
        let scale = max_abs_entry(s_mat).max(max_abs_entry(&bound));
        let monotone = normalized_margin(&(s_mat - &prev), scale);
        let refined = normalized_margin(&(&bound - s_mat), scale);
        per_step.push(PartialSumOrderMargins {
            step: state.step(),
            monotone,
            refined,
        });
    }

    let worst_monotone = per_step
        .iter()
        .map(|m| m.monotone)
        .fold(f64::INFINITY, f64::min);
    let worst_refined = per_step
        .iter()
        .map(|m| m.refined)
        .fold(f64::INFINITY, f64::min);
    let passed = worst_monotone >= -PSD_TOLERANCE && worst_refined >= -PSD_TOLERANCE;
    Ok(PartialSumOrderReport {
        per_step,
        worst_monotone,
        worst_refined,
        tolerance: PSD_TOLERANCE,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{fourth_moment_apply, MomentConstants};
    use crate::sgd::monte_carlo_risk;
    use crate::spectrum::Spectrum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn model(lambdas: &[f64], w_star: &[f64], noise_std: f64) -> RegressionModel {
        let spec = Spectrum::new(lambdas.to_vec()).unwrap();
        RegressionModel::new(spec, w_star.to_vec(), noise_std, true).unwrap()
    }

    fn cfg(gamma: f64, n: usize, s: usize, w0: Vec<f64>, seed: u64) -> SgdConfig {
        SgdConfig {
            gamma,
            n_samples: n,
            tail_start: s,
            w0,
            seed,
        }
    }

    fn random_psd(d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        &v * v.transpose()
    }

    #[test]
    fn contraction_is_linear_and_kills_zero() {
        let spec = Spectrum::new(vec![1.0, 0.5]).unwrap();
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(apply_contraction(&spec, 0.1, &zero).unwrap(), zero);
    }

    #[test]
    fn contraction_scalar_closed_form() {
        let spec = Spectrum::new(vec![0.7]).unwrap();
        let a = DMatrix::from_element(1, 1, 2.5);
        let gamma = 0.3;
        let got = apply_contraction(&spec, gamma, &a).unwrap()[(0, 0)];
        let want = 2.5 * (1.0 - 2.0 * gamma * 0.7 + 3.0 * gamma * gamma * 0.49);
        assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
    }

    #[test]
    fn contraction_preserves_psd() {
        let spec = Spectrum::new(vec![1.0, 0.6, 0.3, 0.1]).unwrap();
        let gamma = 1.0 / (3.0 * spec.trace());
        let mut a = random_psd(4, 1);
        for _ in 0..30 {
            a = apply_contraction(&spec, gamma, &a).unwrap();
            symmetrize(&mut a);
            let min = min_eigenvalue(&a);
            assert!(
                min >= -1e-12 * max_abs_entry(&a),
                "lost PSD-ness: min eigenvalue {min}"
            );
        }
    }

    #[test]
    fn deterministic_contraction_scalar_and_composition() {
        let spec = Spectrum::new(vec![1.0]).unwrap();
        let a = DMatrix::from_element(1, 1, 1.0);
        let once = apply_deterministic_contraction(&spec, 0.5, &a).unwrap();
        assert!((once[(0, 0)] - 0.25).abs() < 1e-15);

        let spec2 = Spectrum::new(vec![1.0, 0.4]).unwrap();
        let b = random_psd(2, 3);
        let twice = apply_deterministic_contraction(
            &spec2,
            0.2,
            &apply_deterministic_contraction(&spec2, 0.2, &b).unwrap(),
        )
        .unwrap();
        // Applying twice is congruence by (I - gamma H)^2.
        for i in 0..2 {
            for j in 0..2 {
                let ui = (1.0 - 0.2 * spec2.values()[i]).powi(2);
                let uj = (1.0 - 0.2 * spec2.values()[j]).powi(2);
                let want = ui * uj * b[(i, j)];
                assert!((twice[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn contraction_difference_is_psd_and_matches_fourth_moment() {
        let spec = Spectrum::new(vec![1.0, 0.5, 0.2]).unwrap();
        let gamma = 0.15;
        let a = random_psd(3, 7);
        let stoch = apply_contraction(&spec, gamma, &a).unwrap();
        let det = apply_deterministic_contraction(&spec, gamma, &a).unwrap();
        let diff = &stoch - &det;

        // Difference identity: gamma^2 (M(a) - H a H).
        let m = fourth_moment_apply(&spec, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let hah = spec.values()[i] * spec.values()[j] * a[(i, j)];
                let want = gamma * gamma * (m[(i, j)] - hah);
                assert!(
                    (diff[(i, j)] - want).abs() < 1e-13,
                    "entry ({i},{j}): {} vs {want}",
                    diff[(i, j)]
                );
            }
        }
        assert!(min_eigenvalue(&diff) >= -1e-12 * max_abs_entry(&diff));
    }

    #[test]
    fn state_constructors_match_initial_conditions() {
        let m = model(&[1.0, 0.5], &[1.0, -1.0], 0.3);
        let b = CovarianceState::bias(&m, &[2.0, -1.0]).unwrap();
        // beta_0 = (1, 0), so B_0 = e1 e1^T.
        assert_eq!(b.matrix()[(0, 0)], 1.0);
        assert_eq!(b.matrix()[(1, 1)], 0.0);
        assert_eq!(b.step(), 0);
        assert_eq!(b.kind(), ChainKind::Bias);

        let c = CovarianceState::variance(2);
        assert_eq!(max_abs_entry(c.matrix()), 0.0);
        assert_eq!(c.kind(), ChainKind::Variance);

        let s = CovarianceState::partial_sum(&m, &[2.0, -1.0]).unwrap();
        assert_eq!(s.matrix(), b.matrix());
        assert_eq!(s.kind(), ChainKind::PartialSum);
    }

    #[test]
    fn state_validation_rejects_indefinite_matrices() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            CovarianceState::new(bad, 0, ChainKind::Bias),
            Err(Error::PsdViolation { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            CovarianceState::new(asym, 0, ChainKind::Bias),
            Err(Error::Asymmetric { .. })
        ));
    }

    #[test]
    fn variance_chain_stays_zero_without_noise() {
        let m = model(&[1.0, 0.5], &[1.0, 1.0], 0.0);
        let c = cfg(0.1, 8, 0, vec![0.0, 0.0], 0);
        let state = evolve(CovarianceState::variance(2), &m, &c, 20).unwrap();
        assert_eq!(max_abs_entry(state.matrix()), 0.0);
        assert_eq!(state.step(), 20);
    }

    #[test]
    fn variance_chain_first_step_injects_gamma_sq_sigma_sq_h() {
        let m = model(&[1.0, 0.25], &[0.0, 0.0], 0.5);
        let c = cfg(0.2, 8, 0, vec![0.0, 0.0], 0);
        let state = evolve(CovarianceState::variance(2), &m, &c, 1).unwrap();
        let g2s2 = 0.04 * 0.25;
        assert!((state.matrix()[(0, 0)] - g2s2 * 1.0).abs() < 1e-16);
        assert!((state.matrix()[(1, 1)] - g2s2 * 0.25).abs() < 1e-16);
        assert_eq!(state.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn variance_chain_requires_well_specified_noise() {
        let spec = Spectrum::new(vec![1.0, 0.5]).unwrap();
        let m = RegressionModel::new(spec, vec![0.0, 0.0], 0.5, false).unwrap();
        let c = cfg(0.1, 4, 0, vec![0.0, 0.0], 0);
        assert!(matches!(
            evolve(CovarianceState::variance(2), &m, &c, 1),
            Err(Error::RequiresWellSpecified(_))
        ));
        assert!(matches!(
            exact_risk(&m, &c),
            Err(Error::RequiresWellSpecified(_))
        ));
    }

    #[test]
    fn bias_chain_scalar_closed_form() {
        let m = model(&[0.8], &[0.0], 0.0);
        let c = cfg(0.25, 4, 0, vec![1.5], 0);
        let state = evolve(CovarianceState::bias(&m, &c.w0).unwrap(), &m, &c, 7).unwrap();
        let rate: f64 = 1.0 - 2.0 * 0.25 * 0.8 + 3.0 * 0.0625 * 0.64;
        let want = rate.powi(7) * 2.25;
        let got = state.matrix()[(0, 0)];
        assert!(
            (got - want).abs() < 1e-12 * want,
            "got {got}, want {want}"
        );
    }

    #[test]
    fn exact_risk_is_zero_at_the_optimum_without_noise() {
        let m = model(&[1.0, 0.5, 0.1], &[1.0, -2.0, 0.0], 0.0);
        let c = cfg(0.2, 16, 4, m.w_star().to_vec(), 0);
        let (total, bias, variance) = exact_risk(&m, &c).unwrap();
        assert_eq!((total, bias, variance), (0.0, 0.0, 0.0));
    }

    // Frozen hand-expanded oracle: d=1, lambda=1, gamma=0.1, sigma=1,
    // w0 - w* = 1, N=2, s=0. Expanding E[(beta_0 + beta_1)^2]/(2*4) gives
    // bias = 363/800, variance = 1/800.
    #[test]
    fn exact_risk_matches_two_step_symbolic_expansion() {
        let m = model(&[1.0], &[0.0], 1.0);
        let c = cfg(0.1, 2, 0, vec![1.0], 0);
        let (total, bias, variance) = exact_risk(&m, &c).unwrap();
        assert!((bias - 363.0 / 800.0).abs() < 1e-15, "bias {bias}");
        assert!((variance - 1.0 / 800.0).abs() < 1e-15, "variance {variance}");
        assert!((total - 0.455).abs() < 1e-15, "total {total}");
    }

    // Independent full-matrix oracle: evolve D_t with apply_contraction and
    // accumulate the double sum with explicit matrix powers.
    fn naive_risk(model: &RegressionModel, c: &SgdConfig) -> (f64, f64, f64) {
        let d = model.dim();
        let spec = model.spectrum();
        let lambdas = spec.values();
        let (s, n) = (c.tail_start, c.n_samples);
        let last = s + n - 1;
        let sigma_sq = model.noise_std() * model.noise_std();

        let beta0: Vec<f64> = c
            .w0
            .iter()
            .zip(model.w_star())
            .map(|(a, b)| a - b)
            .collect();
        let mut b = DMatrix::from_fn(d, d, |i, j| beta0[i] * beta0[j]);
        let mut cvar = DMatrix::zeros(d, d);
        let mut a = b.clone();

        let mut bias_terms: Vec<DMatrix<f64>> = Vec::new();
        let mut var_terms: Vec<DMatrix<f64>> = Vec::new();
        let mut all_terms: Vec<DMatrix<f64>> = Vec::new();
        for t in 0..=last {
            if t >= s {
                bias_terms.push(b.clone());
                var_terms.push(cvar.clone());
                all_terms.push(a.clone());
            }
            if t == last {
                break;
            }
            b = apply_contraction(spec, c.gamma, &b).unwrap();
            cvar = apply_contraction(spec, c.gamma, &cvar).unwrap();
            a = apply_contraction(spec, c.gamma, &a).unwrap();
            for i in 0..d {
                cvar[(i, i)] += c.gamma * c.gamma * sigma_sq * lambdas[i];
                a[(i, i)] += c.gamma * c.gamma * sigma_sq * lambdas[i];
            }
        }

        let window = last + 1 - s;
        let accumulate = |terms: &[DMatrix<f64>]| -> f64 {
            let mut acc = 0.0;
            for (ti, dt) in terms.iter().enumerate() {
                // <H, D_t>
                for i in 0..d {
                    acc += lambdas[i] * dt[(i, i)];
                }
                // 2 <(I - gamma H)^{k-t} H, D_t> for k > t in the window.
                for k in (ti + 1)..window {
                    for i in 0..d {
                        let u = (1.0 - c.gamma * lambdas[i]).powi((k - ti) as i32);
                        acc += 2.0 * u * lambdas[i] * dt[(i, i)];
                    }
                }
            }
            acc / (2.0 * (n * n) as f64)
        };
        (
            accumulate(&all_terms),
            accumulate(&bias_terms),
            accumulate(&var_terms),
        )
    }

    #[test]
    fn exact_risk_matches_full_matrix_oracle() {
        let m = model(&[1.0, 0.4, 0.15], &[1.0, 0.5, -0.5], 0.7);
        for (s, n) in [(0usize, 6usize), (7, 6), (3, 1)] {
            let c = cfg(0.2, n, s, vec![0.0, 1.0, 1.0], 0);
            let (total, bias, variance) = exact_risk(&m, &c).unwrap();
            let (nt, nb, nv) = naive_risk(&m, &c);
            assert!(
                (total - nt).abs() <= 1e-11 * nt.abs().max(1e-12),
                "s={s} n={n}: total {total} vs naive {nt}"
            );
            assert!((bias - nb).abs() <= 1e-11 * nb.abs().max(1e-12));
            assert!((variance - nv).abs() <= 1e-11 * nv.abs().max(1e-12));
        }
    }

    #[test]
    fn exact_risk_total_decomposes() {
        let m = model(&[1.0, 0.3, 0.05], &[2.0, -1.0, 0.5], 0.4);
        let c = cfg(0.25, 50, 25, vec![0.0, 0.0, 0.0], 0);
        let (total, bias, variance) = exact_risk(&m, &c).unwrap();
        assert!(
            (total - (bias + variance)).abs() <= 1e-10 * total,
            "total {total} vs bias+variance {}",
            bias + variance
        );
        assert!(bias > 0.0 && variance > 0.0);
    }

    #[test]
    fn exact_risk_reports_divergence_for_huge_stepsizes() {
        let m = model(&[1.0], &[0.0], 1.0);
        let c = cfg(50.0, 400, 0, vec![1.0], 0);
        assert!(matches!(exact_risk(&m, &c), Err(Error::Divergence { .. })));
    }

    // Deterministic-GD analogue: with the deterministic contraction the
    // bias term collapses per eigendirection to
    // (lambda_i b0_i / (2 N^2)) (sum_{t=s}^{M} u_i^t)^2.
    #[test]
    fn deterministic_double_sum_matches_closed_form() {
        let spec = Spectrum::new(vec![1.0, 0.4]).unwrap();
        let gamma = 0.3;
        let (s, n) = (0usize, 5usize);
        let beta0 = [1.0, -2.0];
        let b0 = DMatrix::from_fn(2, 2, |i, j| beta0[i] * beta0[j]);

        let mut terms = Vec::new();
        let mut b = b0.clone();
        for t in 0..(s + n) {
            if t >= s {
                terms.push(b.clone());
            }
            if t + 1 < s + n {
                b = apply_deterministic_contraction(&spec, gamma, &b).unwrap();
            }
        }
        let mut acc = 0.0;
        for (ti, dt) in terms.iter().enumerate() {
            for i in 0..2 {
                acc += spec.values()[i] * dt[(i, i)];
                for k in (ti + 1)..n {
                    let u = (1.0 - gamma * spec.values()[i]).powi((k - ti) as i32);
                    acc += 2.0 * u * spec.values()[i] * dt[(i, i)];
                }
            }
        }
        acc /= 2.0 * (n * n) as f64;

        let mut closed = 0.0;
        for i in 0..2 {
            let u = 1.0 - gamma * spec.values()[i];
            let geo: f64 = (s..s + n).map(|t| u.powi(t as i32)).sum();
            closed += spec.values()[i] * beta0[i] * beta0[i] * geo * geo;
        }
        closed /= 2.0 * (n * n) as f64;
        assert!(
            (acc - closed).abs() < 1e-13 * closed,
            "double sum {acc} vs closed form {closed}"
        );
    }

    #[test]
    fn exact_risk_agrees_with_monte_carlo() {
        let m = model(&[1.0, 0.35], &[1.0, -1.0], 0.5);
        let c = cfg(0.2, 24, 8, vec![0.0, 0.5], 551);
        let (total, _, _) = exact_risk(&m, &c).unwrap();
        let est = monte_carlo_risk(&m, &c, 20_000).unwrap();
        assert!(
            (est.mean - total).abs() <= 3.0 * est.std_err,
            "MC {} vs exact {total} (se {})",
            est.mean,
            est.std_err
        );
    }

    // Simulate the bias and variance chains directly and compare averaged
    // outer products to the evolved matrices, entry by entry.
    #[test]
    fn evolved_matrices_match_simulated_second_moments() {
        let m = model(&[1.0, 0.5], &[1.0, -1.0], 0.8);
        let c = cfg(0.2, 4, 0, vec![0.0, 0.0], 0);
        let t_target = 3usize;
        let paths = 100_000usize;

        let bias_state = evolve(
            CovarianceState::bias(&m, &c.w0).unwrap(),
            &m,
            &c,
            t_target,
        )
        .unwrap();
        let var_state = evolve(CovarianceState::variance(2), &m, &c, t_target).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut mean_b = DMatrix::<f64>::zeros(2, 2);
        let mut m2_b = DMatrix::<f64>::zeros(2, 2);
        let mut mean_c = DMatrix::<f64>::zeros(2, 2);
        let mut m2_c = DMatrix::<f64>::zeros(2, 2);
        for p in 0..paths {
            let mut beta_b = [-1.0, 1.0]; // w0 - w*
            let mut beta_c = [0.0, 0.0];
            for _ in 0..t_target {
                let x = [
                    1.0f64.sqrt() * rng.sample::<f64, _>(StandardNormal),
                    0.5f64.sqrt() * rng.sample::<f64, _>(StandardNormal),
                ];
                let eps: f64 = rng.sample(StandardNormal);
                let dot_b = x[0] * beta_b[0] + x[1] * beta_b[1];
                let dot_c = x[0] * beta_c[0] + x[1] * beta_c[1];
                for i in 0..2 {
                    beta_b[i] -= c.gamma * dot_b * x[i];
                    beta_c[i] += c.gamma * (0.8 * eps - dot_c) * x[i];
                }
            }
            let nf = (p + 1) as f64;
            for i in 0..2 {
                for j in 0..2 {
                    let sb = beta_b[i] * beta_b[j];
                    let db = sb - mean_b[(i, j)];
                    mean_b[(i, j)] += db / nf;
                    m2_b[(i, j)] += db * (sb - mean_b[(i, j)]);
                    let sc = beta_c[i] * beta_c[j];
                    let dc = sc - mean_c[(i, j)];
                    mean_c[(i, j)] += dc / nf;
                    m2_c[(i, j)] += dc * (sc - mean_c[(i, j)]);
                }
            }
        }
        for (label, mean, m2, state) in [
            ("bias", &mean_b, &m2_b, &bias_state),
            ("variance", &mean_c, &m2_c, &var_state),
        ] {
            for i in 0..2 {
                for j in 0..2 {
                    let se =
                        (m2[(i, j)] / (paths as f64 * (paths - 1) as f64)).sqrt();
                    let diff = (mean[(i, j)] - state.matrix()[(i, j)]).abs();
                    assert!(
                        diff <= 3.0 * se,
                        "{label} entry ({i},{j}): simulated {} vs evolved {} (se {se})",
                        mean[(i, j)],
                        state.matrix()[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn variance_order_checks_pass_on_a_random_spectrum() {
        let m = model(&[1.3, 0.45], &[0.0, 0.0], 1.0);
        let gamma = 0.9 / (GAUSSIAN_ALPHA * m.spectrum().trace());
        let c = cfg(gamma, 60, 0, vec![0.0, 0.0], 0);
        let report = check_variance_chain_order(&m, &c).unwrap();
        assert!(report.passed, "worst margins: {report:?}");
        assert_eq!(report.per_step.len(), 60);
        assert!(report.worst_monotone >= -PSD_TOLERANCE);
        assert!(report.worst_lower >= -PSD_TOLERANCE);
    }

    #[test]
    fn variance_order_checks_are_trivial_without_noise() {
        let m = model(&[1.0, 0.5], &[0.0, 0.0], 0.0);
        let c = cfg(0.05, 10, 0, vec![0.0, 0.0], 0);
        let report = check_variance_chain_order(&m, &c).unwrap();
        assert!(report.passed);
        assert!(report.per_step.iter().all(|s| s.monotone == 0.0));
    }

    #[test]
    fn variance_order_checks_reject_oversized_stepsizes() {
        let m = model(&[1.0], &[0.0], 1.0);
        let c = cfg(0.5, 10, 0, vec![0.0], 0);
        assert!(matches!(
            check_variance_chain_order(&m, &c),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn partial_sum_order_checks_pass() {
        let m = model(&[1.0, 0.4], &[1.0, 0.0], 0.3);
        let gamma = 0.9 / (3.0 * m.spectrum().trace());
        // d=2 with w0 - w* = e1.
        let c = cfg(gamma, 40, 0, vec![2.0, 0.0], 0);
        let report = check_partial_sum_order(&m, &c).unwrap();
        assert!(report.passed, "{report:?}");

        // d=1 scalar: the refined bound reduces to a geometric-series
        // comparison, which must also hold.
        let m1 = model(&[0.9], &[0.0], 0.0);
        let c1 = cfg(0.2, 50, 0, vec![1.0], 0);
        let report1 = check_partial_sum_order(&m1, &c1).unwrap();
        assert!(report1.passed, "{report1:?}");
    }

    #[test]
    fn partial_sum_is_trivial_from_the_optimum() {
        let m = model(&[1.0, 0.4], &[0.5, -0.5], 0.0);
        let c = cfg(0.1, 10, 0, m.w_star().to_vec(), 0);
        let report = check_partial_sum_order(&m, &c).unwrap();
        assert!(report.passed);
        assert!(report.per_step.iter().all(|s| s.monotone == 0.0));
    }

    #[test]
    fn stationary_variance_is_reached_and_bounded() {
        let m = model(&[1.0, 0.5], &[0.0, 0.0], 1.0);
        let gamma = 0.5 / (GAUSSIAN_ALPHA * m.spectrum().trace());
        let c = cfg(gamma, 8, 0, vec![0.0, 0.0], 0);
        let state = evolve_to_stationarity(CovarianceState::variance(2), &m, &c).unwrap();
        let trace_before: f64 = (0..2).map(|i| state.matrix()[(i, i)]).sum();
        let next = evolve(state, &m, &c, 1).unwrap();
        let trace_after: f64 = (0..2).map(|i| next.matrix()[(i, i)]).sum();
        assert!((trace_after - trace_before).abs() <= 1e-11 * trace_after);
        // Stationary point sits below the crude bound.
        let k_crude = gamma * 1.0 / (1.0 - gamma * GAUSSIAN_ALPHA * m.spectrum().trace());
        let mut diff = -next.matrix().clone();
        for i in 0..2 {
            diff[(i, i)] += k_crude;
        }
        assert!(min_eigenvalue(&diff) >= -1e-12 * k_crude);
    }

    // Exact moment constants are consistent with the contraction: for
    // gamma <= 1/(alpha tr H) the crude variance bound is positive.
    #[test]
    fn gaussian_alpha_matches_contraction_budget() {
        let m = model(&[1.0, 0.5], &[0.0, 0.0], 1.0);
        let consts = MomentConstants::gaussian(&m);
        assert_eq!(consts.alpha, 3.0);
    }
}
