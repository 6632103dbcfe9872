//! Spatial-sign primitives.
//!
//! The sign map, the spatial median, the sign covariance, the inverse-radius
//! moment estimator and the diagonal (coordinate-scale) location/scale
//! iteration used by the scalar-invariant tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HrError, Result};
use crate::linalg::{SpdMatrix, SymMatrix};
use crate::DataMatrix;

/// Multiplier on the median row norm below which a residual counts as zero.
pub const TOL_ZERO_RELATIVE: f64 = 1e-12;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200;

/// `U(x) = x / ‖x‖`, and the zero vector at the origin.
pub fn spatial_sign(x: &DVector<f64>) -> DVector<f64> {
    let norm = x.norm();
    if norm > 0.0 {
        x / norm
    } else {
        DVector::zeros(x.len())
    }
}

/// Spatial signs of the rows of `residuals`.
///
/// Rows with norm below `tol_zero` get a zero sign; their norm is reported
/// as `0.0` so callers can skip them.
pub(crate) fn row_signs(residuals: &DMatrix<f64>, tol_zero: f64) -> (DMatrix<f64>, Vec<f64>) {
    let (n, p) = residuals.shape();
    let mut norms = vec![0.0; n];
    for j in 0..p {
        let col = residuals.column(j);
        for i in 0..n {
            norms[i] += col[i] * col[i];
        }
    }
    for v in norms.iter_mut() {
        *v = v.sqrt();
        if *v < tol_zero {
            *v = 0.0;
        }
    }
    let mut signs = residuals.clone();
    for j in 0..p {
        let mut col = signs.column_mut(j);
        for i in 0..n {
            col[i] = if norms[i] > 0.0 { col[i] / norms[i] } else { 0.0 };
        }
    }
    (signs, norms)
}

pub(crate) fn center_rows(x: &DataMatrix, mu: &DVector<f64>) -> DMatrix<f64> {
    let mut r = x.clone();
    for (j, mut col) in r.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    r
}

pub(crate) fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Zero-radius threshold: a fixed fraction of the median row norm.
pub(crate) fn zero_threshold(norms: &[f64]) -> f64 {
    let mut v = norms.to_vec();
    TOL_ZERO_RELATIVE * median_of(&mut v)
}

fn row_norms(r: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = r.shape();
    let mut norms = vec![0.0; n];
    for j in 0..p {
        let col = r.column(j);
        for i in 0..n {
            norms[i] += col[i] * col[i];
        }
    }
    norms.iter().map(|v| v.sqrt()).collect()
}

/// Result of the spatial-median iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpatialMedian {
    pub location: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖n⁻¹ Σ U(X_i − μ)‖` at the returned point.
    pub stationarity: f64,
}

/// Minimizer of `Σ ‖X_i − μ‖` by the Weiszfeld fixed point
/// `μ ← μ + Σ U(X_i − μ) / Σ ‖X_i − μ‖⁻¹`, started at the sample mean.
///
/// Stops once `‖n⁻¹ Σ U(X_i − μ)‖ <= tol`. When the iterate sits on data
/// points, those rows are dropped from both sums and the iterate is accepted
/// as optimal if the remaining sign sum has norm at most their multiplicity.
/// Exhausting `max_iter` is reported through `converged = false`.
pub fn spatial_median(x: &DataMatrix, tol: f64, max_iter: usize) -> Result<SpatialMedian> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(HrError::Contract("spatial median needs a non-empty sample".into()));
    }
    let mut mu: DVector<f64> = x.row_mean().transpose();
    let base_norms = row_norms(&center_rows(x, &mu));
    let tol_zero = zero_threshold(&base_norms);

    let mut iterations = 0;
    loop {
        let resid = center_rows(x, &mu);
        let (signs, norms) = row_signs(&resid, tol_zero);
        let coincident = norms.iter().filter(|&&d| d == 0.0).count();
        let sum_inv: f64 = norms.iter().filter(|&&d| d > 0.0).map(|d| 1.0 / d).sum();
        let sum_u: DVector<f64> = signs.row_sum().transpose();
        let stationarity = sum_u.norm() / n as f64;

        let at_optimum = sum_inv == 0.0
            || stationarity <= tol
            || (coincident > 0 && sum_u.norm() <= coincident as f64);
        if at_optimum || iterations >= max_iter {
            return Ok(SpatialMedian {
                location: mu,
                iterations,
                converged: at_optimum,
                stationarity,
            });
        }
        mu += sum_u / sum_inv;
        iterations += 1;
    }
}

/// Sample spatial-sign covariance `n⁻¹ Σ U(X_i − μ) U(X_i − μ)ᵀ`.
///
/// Rows equal to `mu` contribute nothing; if every row does, the data are
/// degenerate.
pub fn sign_cov(x: &DataMatrix, mu: &DVector<f64>) -> Result<SymMatrix> {
    let (n, p) = x.shape();
    if n == 0 || mu.len() != p {
        return Err(HrError::Dimension(format!(
            "sign covariance: data {}x{}, location length {}",
            n,
            p,
            mu.len()
        )));
    }
    let resid = center_rows(x, mu);
    let norms = row_norms(&resid);
    let tol_zero = zero_threshold(&norms);
    let (signs, norms) = row_signs(&resid, tol_zero);
    if norms.iter().all(|&d| d == 0.0) {
        return Err(HrError::Degenerate(
            "every centered row is zero; sign covariance undefined".into(),
        ));
    }
    Ok(SymMatrix::symmetrize(signs.transpose() * signs / n as f64))
}

/// Estimate of `ζ₁ = E r⁻¹` from whitened radii.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ZetaEstimates {
    pub zeta1_hat: f64,
    pub n_used: usize,
}

/// Mean inverse radius `n⁻¹ Σ ‖Ω^{1/2}(X_i − μ)‖⁻¹`.
pub fn zeta1_hat(x: &DataMatrix, mu: &DVector<f64>, omega_sqrt: &SpdMatrix) -> Result<ZetaEstimates> {
    if mu.len() != x.ncols() || omega_sqrt.dim() != x.ncols() {
        return Err(HrError::Dimension("zeta1_hat: dimension mismatch".into()));
    }
    let whitened = center_rows(x, mu) * omega_sqrt.as_matrix();
    zeta1_from_norms(&row_norms(&whitened))
}

pub(crate) fn zeta1_from_norms(norms: &[f64]) -> Result<ZetaEstimates> {
    if norms.is_empty() {
        return Err(HrError::Degenerate("no observations".into()));
    }
    let mut sorted = norms.to_vec();
    let scale = median_of(&mut sorted);
    if norms.iter().any(|&r| !(r > TOL_ZERO_RELATIVE * scale) || r == 0.0) {
        return Err(HrError::Degenerate(
            "zero whitened radius; inverse-radius moment undefined".into(),
        ));
    }
    let zeta = norms.iter().map(|r| 1.0 / r).sum::<f64>() / norms.len() as f64;
    Ok(ZetaEstimates {
        zeta1_hat: zeta,
        n_used: norms.len(),
    })
}

/// Location and diagonal scatter from the coordinate-scale iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocationScale {
    pub mu: DVector<f64>,
    /// Diagonal of the scatter, normalized to sum to `p`.
    pub d_diag: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LocationScale {
    /// `D̃^{-1/2}(X_i − μ̃)` row-wise.
    pub fn standardize(&self, x: &DataMatrix) -> DMatrix<f64> {
        let mut r = center_rows(x, &self.mu);
        for (j, mut col) in r.column_iter_mut().enumerate() {
            col /= self.d_diag[j].sqrt();
        }
        r
    }
}

/// Joint spatial median and diagonal scale:
///
/// 1. `ε_i = D^{-1/2}(X_i − μ)`
/// 2. `μ ← μ + D^{1/2} Σ U(ε_i) / Σ ‖ε_i‖⁻¹`
/// 3. `d_j ← p · d_j · n⁻¹ Σ U_j(ε_i)²`, then rescaled so `Σ d_j = p`.
///
/// Started from the coordinate-wise median and column variances. Converged
/// when the standardized location step and every relative change in `d` are
/// below `tol`.
pub fn diagonal_hr(x: &DataMatrix, tol: f64, max_iter: usize) -> Result<LocationScale> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(HrError::Contract("diagonal HR needs at least 2 rows".into()));
    }
    let mut mu = DVector::zeros(p);
    let mut d = DVector::zeros(p);
    for j in 0..p {
        let col = x.column(j);
        let mut v: Vec<f64> = col.iter().copied().collect();
        mu[j] = median_of(&mut v);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if !(var > 0.0) {
            return Err(HrError::Degenerate(format!("coordinate {j} is constant")));
        }
        d[j] = var;
    }
    let total = d.sum();
    d *= p as f64 / total;

    let state = LocationScale {
        mu,
        d_diag: d,
        iterations: 0,
        converged: false,
    };
    let tol_zero = zero_threshold(&row_norms(&state.standardize(x)));
    let mut state = state;

    while state.iterations < max_iter {
        let eps = state.standardize(x);
        let (signs, norms) = row_signs(&eps, tol_zero);
        let sum_inv: f64 = norms.iter().filter(|&&r| r > 0.0).map(|r| 1.0 / r).sum();
        if sum_inv == 0.0 {
            return Err(HrError::Degenerate("all standardized residuals are zero".into()));
        }
        let sum_u: DVector<f64> = signs.row_sum().transpose();
        let coincident = norms.iter().filter(|&&r| r == 0.0).count();

        let sqrt_d = state.d_diag.map(f64::sqrt);
        let std_step = &sum_u / sum_inv;
        let at_data_optimum = coincident > 0 && sum_u.norm() <= coincident as f64;
        let step = if at_data_optimum {
            DVector::zeros(p)
        } else {
            std_step.component_mul(&sqrt_d)
        };

        let mut new_d = DVector::zeros(p);
        for j in 0..p {
            let ms = signs.column(j).norm_squared() / n as f64;
            new_d[j] = p as f64 * state.d_diag[j] * ms;
        }
        let total = new_d.sum();
        if !(total > 0.0) || new_d.iter().any(|&v| !(v > 0.0)) {
            return Err(HrError::Degenerate(
                "diagonal scale collapsed to zero in some coordinate".into(),
            ));
        }
        new_d *= p as f64 / total;

        let mu_change = if at_data_optimum { 0.0 } else { std_step.amax() };
        let d_change = new_d
            .iter()
            .zip(state.d_diag.iter())
            .map(|(a, b)| (a / b - 1.0).abs())
            .fold(0.0, f64::max);

        state.mu += step;
        state.d_diag = new_d;
        state.iterations += 1;
        if mu_change <= tol && d_change <= tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
