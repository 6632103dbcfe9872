//! Joint robust location and scatter (Hettmansperger–Randles).
//!
//! [`hr_estimate`] is the high-dimensional variant: it starts from the
//! spatial median and the inverse of a sign-covariance graphical lasso, then
//! alternates a whitened spatial-sign location step with a banded
//! sign-covariance scatter step renormalized to trace `p`. [`hr_classic`] is
//! the unbanded low-dimensional iteration, kept as an oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HrError, Result};
use crate::linalg::{rel_frobenius, SpdMatrix, SymMatrix, EPS_PD_RELATIVE};
use crate::sglasso::{lambda_default, sglasso, SglassoConfig};
use crate::spatial::{center_rows, row_signs, sign_cov, spatial_median, zero_threshold, zeta1_from_norms, ZetaEstimates};
use crate::DataMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HrConfig {
    /// Band half-width applied to the whitened sign covariance.
    pub bandwidth: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Explicit graphical-lasso penalty; `None` uses `lambda_c1`/`lambda_c2`.
    pub lambda: Option<f64>,
    pub lambda_c1: f64,
    pub lambda_c2: f64,
    /// Eigenvalue floor relative to `trace / p`.
    pub eps_pd: f64,
    pub median_tol: f64,
    pub median_max_iter: usize,
    pub sglasso: SglassoConfig,
}

impl Default for HrConfig {
    fn default() -> Self {
        HrConfig {
            bandwidth: 3,
            tol: 1e-4,
            max_iter: 100,
            lambda: None,
            lambda_c1: 1.0,
            lambda_c2: 0.5,
            eps_pd: EPS_PD_RELATIVE,
            median_tol: 1e-6,
            median_max_iter: 200,
            sglasso: SglassoConfig::default(),
        }
    }
}

impl HrConfig {
    pub fn lambda_for(&self, n: usize, p: usize) -> f64 {
        self.lambda
            .unwrap_or_else(|| lambda_default(n, p, self.lambda_c1, self.lambda_c2))
    }
}

#[derive(Debug, Clone)]
pub struct HrEstimate {
    pub mu: DVector<f64>,
    /// Scatter, normalized to trace `p`.
    pub sigma: SpdMatrix,
    pub omega: SpdMatrix,
    pub omega_sqrt: SpdMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub bandwidth: usize,
    pub lambda: f64,
    /// Number of eigenvalue clamps applied to the banded sign covariance or
    /// to the updated scatter.
    pub psd_projections: usize,
    /// `‖n⁻¹ Σ U(ε̂_i)‖` at the start of every iteration.
    pub stationarity_path: Vec<f64>,
}

impl HrEstimate {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Whitened residuals `Ω̂^{1/2}(X_i − μ̂)` as rows.
    pub fn whiten(&self, x: &DataMatrix) -> DMatrix<f64> {
        center_rows(x, &self.mu) * self.omega_sqrt.as_matrix()
    }

    /// Mean inverse whitened radius.
    pub fn zeta1_hat(&self, x: &DataMatrix) -> Result<ZetaEstimates> {
        zeta1_from_norms(&whitened_radii(x, self)?)
    }
}

/// Current scatter with the square roots needed by the next step.
struct ScatterState {
    sigma: SpdMatrix,
    root: DMatrix<f64>,
    inv_root: DMatrix<f64>,
}

impl ScatterState {
    fn new(sigma: SpdMatrix) -> Self {
        let root = sigma.sqrt().into_inner();
        let inv_root = sigma.inv_sqrt().into_inner();
        ScatterState { sigma, root, inv_root }
    }
}

fn normalize_trace(m: DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let tr = m.trace();
    m * (p as f64 / tr)
}

/// Averages `U_i U_iᵀ` over rows, only for entries within `h` of the diagonal.
fn banded_sign_cov(signs: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let (n, p) = signs.shape();
    if h + 1 >= p {
        return signs.transpose() * signs / n as f64;
    }
    let mut out = DMatrix::zeros(p, p);
    for j in 0..p {
        let cj = signs.column(j);
        for i in j..p.min(j + h + 1) {
            let v = cj.dot(&signs.column(i)) / n as f64;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn check_finite(x: &DataMatrix) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(HrError::Contract("data contain non-finite values".into()));
    }
    Ok(())
}

struct StepOutput {
    mu: DVector<f64>,
    sign_cov: DMatrix<f64>,
    stationarity: f64,
    scale: f64,
}

/// Steps 1–2 plus the raw sign covariance needed by Step 3.
fn location_step(
    x: &DataMatrix,
    mu: &DVector<f64>,
    state: &ScatterState,
    tol_zero: f64,
    bandwidth: Option<usize>,
) -> Result<StepOutput> {
    let (n, p) = x.shape();
    let eps = center_rows(x, mu) * &state.inv_root;
    let (signs, norms) = row_signs(&eps, tol_zero);
    let used = norms.iter().filter(|&&r| r > 0.0).count();
    if used == 0 {
        return Err(HrError::Degenerate("all whitened residuals vanish".into()));
    }
    let mean_inv = norms.iter().filter(|&&r| r > 0.0).map(|r| 1.0 / r).sum::<f64>() / n as f64;
    let mean_u: DVector<f64> = signs.row_sum().transpose() / n as f64;
    let stationarity = mean_u.norm();
    let new_mu = mu + &state.root * &mean_u / mean_inv;
    let sc = match bandwidth {
        Some(h) => banded_sign_cov(&signs, h),
        None => signs.transpose() * &signs / n as f64,
    };
    Ok(StepOutput {
        mu: new_mu,
        sign_cov: sc,
        stationarity,
        scale: 1.0 / (mean_inv * (p as f64).sqrt()),
    })
}

fn finish(
    mu: DVector<f64>,
    state: ScatterState,
    iterations: usize,
    converged: bool,
    bandwidth: usize,
    lambda: f64,
    psd_projections: usize,
    stationarity_path: Vec<f64>,
) -> HrEstimate {
    let omega = state.sigma.inverse();
    let omega_sqrt = state.sigma.inv_sqrt();
    HrEstimate {
        mu,
        sigma: state.sigma,
        omega,
        omega_sqrt,
        iterations,
        converged,
        bandwidth,
        lambda,
        psd_projections,
        stationarity_path,
    }
}

/// High-dimensional HR estimator.
///
/// Initialization: spatial median and `Σ̂⁽⁰⁾ = Ω̂₀⁻¹` from the sign-covariance
/// graphical lasso, rescaled to trace `p`. Each iteration whitens with the
/// current scatter, moves the location by the mean spatial sign, and sets
/// `Σ̂ ← p Σ̂^{1/2} B_h(Ŝ) Σ̂^{1/2}` renormalized to trace `p`, where `Ŝ` is
/// the sign covariance of the whitened residuals. A banded `Ŝ` that is not
/// positive definite is eigenvalue-clamped first, as is an updated scatter
/// that falls below the eigenvalue floor.
///
/// Stops when both the sup-norm location change (relative to the larger of
/// `‖μ̂‖∞` and the per-coordinate data scale) and the relative Frobenius
/// change of `Σ̂` drop below `tol`; otherwise returns the last iterate with
/// `converged = false`.
pub fn hr_estimate(x: &DataMatrix, config: &HrConfig) -> Result<HrEstimate> {
    let (n, p) = x.shape();
    if n < 3 || p < 2 {
        return Err(HrError::Dimension(format!(
            "hr_estimate needs n >= 3 and p >= 2, got n = {n}, p = {p}"
        )));
    }
    check_finite(x)?;
    let median = spatial_median(x, config.median_tol, config.median_max_iter)?;
    let mut mu = median.location;
    let s0 = sign_cov(x, &mu)?;
    let lambda = config.lambda_for(n, p);
    let precision = sglasso(&s0, p, lambda, &config.sglasso)?;
    let sigma0 = precision.omega.inverse();
    let sigma0 = sigma0.scaled(p as f64 / sigma0.trace());
    let mut state = ScatterState::new(sigma0);

    let tol_zero = {
        let eps = center_rows(x, &mu) * &state.inv_root;
        let norms: Vec<f64> = eps.row_iter().map(|r| r.norm()).collect();
        zero_threshold(&norms)
    };

    let mut path = Vec::new();
    let mut projections = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        let step = location_step(x, &mu, &state, tol_zero, Some(config.bandwidth))?;
        path.push(step.stationarity);

        let banded = SymMatrix::symmetrize(step.sign_cov);
        let floor = config.eps_pd * banded.trace() / p as f64;
        let shifted = banded.as_matrix() - DMatrix::identity(p, p) * floor;
        let b = if shifted.cholesky().is_some() {
            banded.into_inner()
        } else {
            projections += 1;
            crate::linalg::psd_project(&banded, floor).into_inner()
        };
        let next = SymMatrix::symmetrize(normalize_trace(&state.root * b * &state.root, p));
        let floor = config.eps_pd * next.trace() / p as f64;
        let projected = crate::linalg::psd_project(&next, floor);
        if projected.as_matrix() != next.as_matrix() {
            projections += 1;
        }
        let next = projected.scaled(p as f64 / projected.trace());

        let mu_change = (&step.mu - &mu).amax() / mu.amax().max(step.scale);
        let sigma_change = rel_frobenius(next.as_matrix(), state.sigma.as_matrix());
        mu = step.mu;
        state = ScatterState::new(next);
        iterations += 1;
        if mu_change < config.tol && sigma_change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(finish(mu, state, iterations, converged, config.bandwidth, lambda, projections, path))
}

/// Classical (unbanded) HR iteration for `n > p`, started at the spatial
/// median and the identity scatter.
///
/// Converged once `‖n⁻¹ Σ U(ε̂_i)‖ <= tol` and
/// `‖(p/n) Σ U(ε̂_i)U(ε̂_i)ᵀ − I‖_F <= p · tol`.
pub fn hr_classic(x: &DataMatrix, tol: f64, max_iter: usize) -> Result<HrEstimate> {
    let (n, p) = x.shape();
    if n <= p || n < 3 {
        return Err(HrError::Dimension(format!(
            "hr_classic needs n > p and n >= 3 (got n = {n}, p = {p}); use hr_estimate in high dimension"
        )));
    }
    check_finite(x)?;
    let mut mu = spatial_median(x, 1e-10, 10_000)?.location;
    let mut state = ScatterState::new(SpdMatrix::identity(p));
    let tol_zero = {
        let norms: Vec<f64> = center_rows(x, &mu).row_iter().map(|r| r.norm()).collect();
        zero_threshold(&norms)
    };
    let mut path = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let step = location_step(x, &mu, &state, tol_zero, None)?;
        path.push(step.stationarity);
        let shape_gap = (&step.sign_cov * p as f64 - DMatrix::<f64>::identity(p, p)).norm();
        if step.stationarity <= tol && shape_gap <= p as f64 * tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        let next = normalize_trace(&state.root * step.sign_cov * &state.root, p);
        let next = SpdMatrix::new(SymMatrix::symmetrize(next))?;
        mu = step.mu;
        state = ScatterState::new(next);
        iterations += 1;
    }
    Ok(finish(mu, state, iterations, converged, p.saturating_sub(1), 0.0, 0, path))
}

/// Radii `‖Ω̂^{1/2}(X_i − μ̂)‖`; a zero radius is an error.
pub fn whitened_radii(x: &DataMatrix, est: &HrEstimate) -> Result<Vec<f64>> {
    if x.ncols() != est.dim() {
        return Err(HrError::Dimension(format!(
            "data have {} columns, estimate has dimension {}",
            x.ncols(),
            est.dim()
        )));
    }
    let radii: Vec<f64> = est.whiten(x).row_iter().map(|r| r.norm()).collect();
    if radii.contains(&0.0) {
        return Err(HrError::Degenerate("observation coincides with the location estimate".into()));
    }
    Ok(radii)
}

/// Plain serializable view of an [`HrEstimate`], matrices row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HrEstimateDoc {
    pub p: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub omega: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub bandwidth: usize,
    pub lambda: f64,
    pub psd_projections: usize,
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl From<&HrEstimate> for HrEstimateDoc {
    fn from(e: &HrEstimate) -> Self {
        HrEstimateDoc {
            p: e.dim(),
            mu: e.mu.as_slice().to_vec(),
            sigma: row_major(e.sigma.as_matrix()),
            omega: row_major(e.omega.as_matrix()),
            iterations: e.iterations,
            converged: e.converged,
            bandwidth: e.bandwidth,
            lambda: e.lambda,
            psd_projections: e.psd_projections,
        }
    }
}
