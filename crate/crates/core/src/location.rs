//! One-sample location tests for `H₀: μ = 0`.
//!
//! `T_MAX` and `T_SUM` are built on the HR estimate; `T_MAX2` and `T_SUM2`
//! on the diagonal (coordinate-scale) iteration. All four are calibrated by
//! a parametric bootstrap from `N(0, Ω̂⁻¹)` by default, and combined with the
//! Cauchy rule into `CC1 = {MAX, SUM}`, `CC2 = {MAX2, SUM2}` and
//! `CC3 = all four`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{HrError, Result};
use crate::hr::{hr_estimate, whitened_radii, HrConfig, HrEstimate};
use crate::linalg::SpdMatrix;
use crate::rng::{standard_normal_rows, substream};
use crate::spatial::{diagonal_hr, row_signs, zeta1_from_norms, LocationScale};
use crate::DataMatrix;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Lower clamp applied to p-values before the tangent transform.
pub const P_CLAMP: f64 = 1e-15;

/// Mean and variance of the limiting Gumbel law `F(x) = exp(−e^{−x/2}/√π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelParams {
    pub mu0: f64,
    pub sigma0_sq: f64,
}

impl GumbelParams {
    pub fn standard() -> Self {
        GumbelParams {
            mu0: -PI.ln() + 2.0 * EULER_GAMMA,
            sigma0_sq: 2.0 * PI * PI / 3.0,
        }
    }
}

pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x / 2.0).exp() / PI.sqrt()).exp()
}

/// `1 − F(x)`, accurate in the upper tail.
pub fn gumbel_sf(x: f64) -> f64 {
    -(-(-x / 2.0).exp() / PI.sqrt()).exp_m1()
}

/// `F⁻¹(q) = −log π − 2 log log(1/q)`.
pub fn gumbel_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(HrError::Domain(format!("Gumbel quantile needs q in (0, 1), got {q}")));
    }
    Ok(-PI.ln() - 2.0 * (-q.ln()).ln())
}

fn normal_sf(z: f64) -> f64 {
    Normal::standard().sf(z)
}

/// `n ζ̂₁² p ‖Ω̂^{1/2} μ̂‖²_∞ − 2 log p + log log p`.
pub fn t_max(mu_hat: &DVector<f64>, omega_sqrt: &SpdMatrix, zeta1_hat: f64, n: usize, p: usize) -> f64 {
    let v = omega_sqrt.as_matrix() * mu_hat;
    let pf = p as f64;
    n as f64 * zeta1_hat.powi(2) * pf * v.amax().powi(2) - 2.0 * pf.ln() + pf.ln().ln()
}

/// `(√(2p)/2)(n ζ̂₁² μ̂ᵀΩ̂μ̂ − 1)`.
pub fn t_sum(mu_hat: &DVector<f64>, omega: &SpdMatrix, zeta1_hat: f64, n: usize, p: usize) -> f64 {
    let q = omega.quad_form(mu_hat);
    (2.0 * p as f64).sqrt() / 2.0 * (n as f64 * zeta1_hat.powi(2) * q - 1.0)
}

fn max2_from(fit: &LocationScale, zeta1: f64, n: usize) -> f64 {
    let p = fit.mu.len();
    let m = fit
        .mu
        .iter()
        .zip(fit.d_diag.iter())
        .map(|(m, d)| (m / d.sqrt()).abs())
        .fold(0.0, f64::max);
    n as f64 * zeta1.powi(2) * p as f64 * m * m * (1.0 - 1.0 / (n as f64).sqrt())
}

/// Signs `U(D̃^{-1/2} X_i)` of the uncentered, diagonally scaled rows.
fn scaled_signs(x: &DataMatrix, d: &DVector<f64>) -> DMatrix<f64> {
    let mut r = x.clone();
    for (j, mut col) in r.column_iter_mut().enumerate() {
        col /= d[j].sqrt();
    }
    row_signs(&r, 0.0).0
}

/// `2/(n(n−1)) Σ_{i<j} U_iᵀU_j` from the row signs.
fn pair_mean(signs: &DMatrix<f64>) -> f64 {
    let n = signs.nrows() as f64;
    let total = signs.row_sum().norm_squared();
    let diag: f64 = signs.row_iter().map(|r| r.norm_squared()).sum();
    (total - diag) / (n * (n - 1.0))
}

/// `2 tr(R̂²)/(n(n−1))` with `tr(R̂²)` the off-diagonal mean of `(U_iᵀU_j)²`.
fn pair_mean_variance(signs: &DMatrix<f64>) -> f64 {
    let n = signs.nrows();
    let gram = signs * signs.transpose();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += gram[(i, j)].powi(2);
            }
        }
    }
    let nf = n as f64;
    let tr_r2 = s / (nf * (nf - 1.0));
    2.0 * tr_r2 / (nf * (nf - 1.0))
}

fn leave_two_out_sum2(x: &DataMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    let (n, p) = x.shape();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let keep: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
            let sub = x.select_rows(&keep);
            let fit = diagonal_hr(&sub, tol, max_iter)?;
            let pair = DMatrix::from_fn(2, p, |r, c| x[(if r == 0 { i } else { j }, c)]);
            let s = scaled_signs(&pair, &fit.d_diag);
            total += s.row(0).dot(&s.row(1));
        }
    }
    Ok(2.0 * total / (n * (n - 1)) as f64)
}

/// `T_SUM2` with the full-sample `D̃`.
pub fn t_sum2(x: &DataMatrix) -> Result<f64> {
    check_n(x, 4)?;
    let fit = diagonal_hr(x, crate::spatial::DEFAULT_TOL, crate::spatial::DEFAULT_MAX_ITER)?;
    Ok(pair_mean(&scaled_signs(x, &fit.d_diag)))
}

/// `n ζ̂₁² p ‖D̃^{-1/2} μ̃‖²_∞ (1 − n^{-1/2})` with `(μ̃, D̃)` from
/// [`diagonal_hr`].
pub fn t_max2(x: &DataMatrix, zeta1_hat: f64) -> Result<f64> {
    check_n(x, 4)?;
    let fit = diagonal_hr(x, crate::spatial::DEFAULT_TOL, crate::spatial::DEFAULT_MAX_ITER)?;
    Ok(max2_from(&fit, zeta1_hat, x.nrows()))
}

fn check_n(x: &DataMatrix, min: usize) -> Result<()> {
    if x.nrows() < min {
        return Err(HrError::Dimension(format!("need at least {min} observations, got {}", x.nrows())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Max,
    Sum,
    Max2,
    Sum2,
    Cc1,
    Cc2,
    Cc3,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Max,
        Method::Sum,
        Method::Max2,
        Method::Sum2,
        Method::Cc1,
        Method::Cc2,
        Method::Cc3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Max => "max",
            Method::Sum => "sum",
            Method::Max2 => "max2",
            Method::Sum2 => "sum2",
            Method::Cc1 => "cc1",
            Method::Cc2 => "cc2",
            Method::Cc3 => "cc3",
        }
    }

    pub fn is_combination(self) -> bool {
        matches!(self, Method::Cc1 | Method::Cc2 | Method::Cc3)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HrError;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| HrError::Config(format!("unknown method '{s}' (expected one of max, sum, max2, sum2, cc1, cc2, cc3)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibration {
    Asymptotic,
    Bootstrap,
}

impl FromStr for Calibration {
    type Err = HrError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asymptotic" => Ok(Calibration::Asymptotic),
            "bootstrap" => Ok(Calibration::Bootstrap),
            _ => Err(HrError::Config(format!("unknown calibration '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestConfig {
    pub hr: HrConfig,
    pub calibration: Calibration,
    pub boot_m: usize,
    pub alpha: f64,
    /// Exact leave-two-out scaling in `T_SUM2`; only honored for `n <= 60`.
    pub leave_two_out: bool,
    pub diag_tol: f64,
    pub diag_max_iter: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            hr: HrConfig::default(),
            calibration: Calibration::Bootstrap,
            boot_m: 50,
            alpha: 0.05,
            leave_two_out: false,
            diag_tol: crate::spatial::DEFAULT_TOL,
            diag_max_iter: crate::spatial::DEFAULT_MAX_ITER,
        }
    }
}

/// The four base statistics, in the order MAX, SUM, MAX2, SUM2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub t_max: f64,
    pub t_sum: f64,
    pub t_max2: f64,
    pub t_sum2: f64,
}

impl Statistics {
    pub fn as_array(&self) -> [f64; 4] {
        [self.t_max, self.t_sum, self.t_max2, self.t_sum2]
    }
}

/// Everything the four statistics are computed from.
#[derive(Debug, Clone)]
pub struct StatisticsDetail {
    pub statistics: Statistics,
    pub hr: HrEstimate,
    pub diagonal: LocationScale,
    pub zeta1_hat: f64,
    pub zeta1_diag: f64,
    /// Null standard deviation estimate of `T_SUM2`.
    pub sum2_sd: f64,
}

pub fn compute_statistics(x: &DataMatrix, config: &TestConfig) -> Result<StatisticsDetail> {
    let (n, p) = x.shape();
    check_n(x, 4)?;
    let hr = hr_estimate(x, &config.hr)?;
    let zeta1 = zeta1_from_norms(&whitened_radii(x, &hr)?)?.zeta1_hat;
    let t_max = t_max(&hr.mu, &hr.omega_sqrt, zeta1, n, p);
    let t_sum = t_sum(&hr.mu, &hr.omega, zeta1, n, p);

    let diagonal = diagonal_hr(x, config.diag_tol, config.diag_max_iter)?;
    let std = diagonal.standardize(x);
    let radii: Vec<f64> = std.row_iter().map(|r| r.norm()).collect();
    let zeta1_diag = zeta1_from_norms(&radii)?.zeta1_hat;
    let t_max2 = max2_from(&diagonal, zeta1_diag, n);
    let signs = scaled_signs(x, &diagonal.d_diag);
    let t_sum2 = if config.leave_two_out && n <= 60 {
        leave_two_out_sum2(x, config.diag_tol, config.diag_max_iter)?
    } else {
        pair_mean(&signs)
    };
    let sum2_sd = pair_mean_variance(&signs).sqrt();
    Ok(StatisticsDetail {
        statistics: Statistics {
            t_max,
            t_sum,
            t_max2,
            t_sum2,
        },
        hr,
        diagonal,
        zeta1_hat: zeta1,
        zeta1_diag,
        sum2_sd,
    })
}

/// Bootstrap means and standard deviations of the four statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapMoments {
    pub mean: [f64; 4],
    pub sd: [f64; 4],
    pub n_success: usize,
    pub n_failed: usize,
    pub n_retried: usize,
}

impl BootstrapMoments {
    pub fn sum(&self) -> (f64, f64) {
        (self.mean[1], self.sd[1])
    }

    pub fn max(&self) -> (f64, f64) {
        (self.mean[0], self.sd[0])
    }
}

fn replicate(
    sigma_sqrt: &DMatrix<f64>,
    n: usize,
    config: &TestConfig,
    seed: u64,
    stream: u64,
) -> Result<Statistics> {
    let p = sigma_sqrt.nrows();
    let mut rng = substream(seed, stream);
    let x = standard_normal_rows(n, p, &mut rng) * sigma_sqrt;
    compute_statistics(&x, config).map(|d| d.statistics)
}

pub(crate) fn bootstrap_with_streams(
    omega_hat: &SpdMatrix,
    n: usize,
    m: usize,
    seed: u64,
    config: &TestConfig,
    stream: impl Fn(usize, bool) -> u64 + Sync,
) -> Result<BootstrapMoments> {
    if m < 2 {
        return Err(HrError::Contract(format!("bootstrap needs M >= 2, got {m}")));
    }
    let sigma_sqrt = omega_hat.inv_sqrt().into_inner();
    let draws: Vec<(Option<Statistics>, bool)> = (0..m)
        .into_par_iter()
        .map(|r| match replicate(&sigma_sqrt, n, config, seed, stream(r, false)) {
            Ok(s) => (Some(s), false),
            Err(_) => (replicate(&sigma_sqrt, n, config, seed, stream(r, true)).ok(), true),
        })
        .collect();
    let retried = draws.iter().filter(|d| d.1).count();
    let ok: Vec<[f64; 4]> = draws.iter().filter_map(|d| d.0.map(|s| s.as_array())).collect();
    let failed = m - ok.len();
    if (ok.len() as f64) < 0.8 * m as f64 || ok.len() < 2 {
        return Err(HrError::Calibration(format!(
            "only {} of {m} bootstrap replicates succeeded",
            ok.len()
        )));
    }
    let k = ok.len() as f64;
    let mut mean = [0.0; 4];
    let mut sd = [0.0; 4];
    for s in 0..4 {
        mean[s] = ok.iter().map(|v| v[s]).sum::<f64>() / k;
        sd[s] = (ok.iter().map(|v| (v[s] - mean[s]).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    }
    Ok(BootstrapMoments {
        mean,
        sd,
        n_success: ok.len(),
        n_failed: failed,
        n_retried: retried,
    })
}

/// Parametric bootstrap of all four statistics from `N(0, Ω̂⁻¹)`.
///
/// Replicate `r` uses stream `r` of `seed`; a failed replicate is redrawn
/// once on stream `M + r`, then skipped. Fewer than `0.8 M` successes is a
/// calibration error.
pub fn bootstrap_calibrate(
    omega_hat: &SpdMatrix,
    n: usize,
    m: usize,
    seed: u64,
    config: &TestConfig,
) -> Result<BootstrapMoments> {
    bootstrap_with_streams(omega_hat, n, m, seed, config, |r, retry| {
        if retry {
            (m + r) as u64
        } else {
            r as u64
        }
    })
}

fn check_sd(sd: f64) -> Result<()> {
    if !(sd > 0.0) {
        return Err(HrError::Calibration(format!("bootstrap standard deviation is {sd}")));
    }
    Ok(())
}

/// `1 − Φ((T − μ*)/σ*)`.
pub fn p_value_sum(t: f64, mean: f64, sd: f64) -> Result<f64> {
    check_sd(sd)?;
    Ok(normal_sf((t - mean) / sd))
}

/// `1 − F(σ₀ (T − μ*)/σ* + μ₀)`.
pub fn p_value_max(t: f64, mean: f64, sd: f64) -> Result<f64> {
    check_sd(sd)?;
    let g = GumbelParams::standard();
    Ok(gumbel_sf(g.sigma0_sq.sqrt() * (t - mean) / sd + g.mu0))
}

/// Combined statistic `Σ w_k tan{(0.5 − p_k)π}`, its p-value, and whether
/// any input had to be clamped into `[1e-15, 1 − 1e-15]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyCombination {
    pub statistic: f64,
    pub p_value: f64,
    pub clamped: bool,
}

pub fn cauchy_combine_detailed(p_values: &[f64], weights: &[f64]) -> Result<CauchyCombination> {
    if p_values.is_empty() || p_values.len() != weights.len() {
        return Err(HrError::Contract("p-values and weights must be nonempty and of equal length".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(HrError::Contract("weights must be positive and sum to 1".into()));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(HrError::Contract("p-values must lie in [0, 1]".into()));
    }
    if p_values.len() == 1 {
        let p = p_values[0];
        let c = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
        return Ok(CauchyCombination {
            statistic: ((0.5 - c) * PI).tan(),
            p_value: p,
            clamped: c != p,
        });
    }
    let mut pairs: Vec<(f64, f64)> = p_values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut clamped = false;
    let mut t = 0.0;
    for (p, w) in pairs {
        let c = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
        clamped |= c != p;
        t += w * ((0.5 - c) * PI).tan();
    }
    Ok(CauchyCombination {
        statistic: t,
        p_value: 0.5 - t.atan() / PI,
        clamped,
    })
}

/// `1 − G(Σ w_k tan{(0.5 − p_k)π})` with `G` the standard Cauchy cdf.
pub fn cauchy_combine(p_values: &[f64], weights: &[f64]) -> Result<f64> {
    cauchy_combine_detailed(p_values, weights).map(|c| c.p_value)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    /// For combinations, the calibration used by the component p-values.
    pub calibration: Calibration,
    pub boot_mean: Option<f64>,
    pub boot_sd: Option<f64>,
    pub alpha_reject: Option<bool>,
}

/// Diagnostics shared by all reports of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestDiagnostics {
    pub n: usize,
    pub p: usize,
    pub hr_iterations: usize,
    pub hr_converged: bool,
    pub psd_projections: usize,
    pub diag_converged: bool,
    pub zeta1_hat: f64,
    pub boot_success: usize,
    pub boot_failed: usize,
    pub boot_retried: usize,
    pub p_clamped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestSuite {
    pub reports: Vec<TestReport>,
    pub diagnostics: TestDiagnostics,
}

impl TestSuite {
    pub fn report(&self, method: Method) -> &TestReport {
        self.reports
            .iter()
            .find(|r| r.method == method)
            .expect("every method is reported")
    }
}

/// Base p-values in the order MAX, SUM, MAX2, SUM2, plus combinations.
pub fn combine_all(base: [f64; 4]) -> Result<([CauchyCombination; 3], bool)> {
    let cc1 = cauchy_combine_detailed(&[base[0], base[1]], &[0.5, 0.5])?;
    let cc2 = cauchy_combine_detailed(&[base[2], base[3]], &[0.5, 0.5])?;
    let cc3 = cauchy_combine_detailed(&base, &[0.25; 4])?;
    let clamped = cc1.clamped || cc2.clamped || cc3.clamped;
    Ok(([cc1, cc2, cc3], clamped))
}

/// Level-`α` decision; `α = 1` always rejects.
pub fn rejects(p_value: f64, alpha: f64) -> bool {
    alpha >= 1.0 || p_value < alpha
}

/// Runs the whole pipeline once and reports all seven methods.
pub fn run_tests(x: &DataMatrix, config: &TestConfig, seed: u64) -> Result<TestSuite> {
    if !(config.alpha > 0.0 && config.alpha <= 1.0) {
        return Err(HrError::Config(format!("alpha must lie in (0, 1], got {}", config.alpha)));
    }
    let (n, p) = x.shape();
    let detail = compute_statistics(x, config)?;
    let stats = detail.statistics.as_array();
    let base_methods = [Method::Max, Method::Sum, Method::Max2, Method::Sum2];
    let is_max = [true, false, true, false];

    let (base_p, moments) = match config.calibration {
        Calibration::Bootstrap => {
            let m = bootstrap_calibrate(&detail.hr.omega, n, config.boot_m, seed, config)?;
            let mut ps = [0.0; 4];
            for k in 0..4 {
                ps[k] = if is_max[k] {
                    p_value_max(stats[k], m.mean[k], m.sd[k])?
                } else {
                    p_value_sum(stats[k], m.mean[k], m.sd[k])?
                };
            }
            (ps, Some(m))
        }
        Calibration::Asymptotic => {
            let pf = p as f64;
            let sum2 = if detail.sum2_sd > 0.0 {
                normal_sf(stats[3] / detail.sum2_sd)
            } else {
                return Err(HrError::Degenerate("T_SUM2 variance estimate is zero".into()));
            };
            let ps = [
                gumbel_sf(stats[0]),
                normal_sf(stats[1]),
                gumbel_sf(stats[2] - 2.0 * pf.ln() + pf.ln().ln()),
                sum2,
            ];
            (ps, None)
        }
    };

    let reject = |pv: f64| Some(rejects(pv, config.alpha));
    let mut reports = Vec::with_capacity(7);
    for k in 0..4 {
        reports.push(TestReport {
            method: base_methods[k],
            statistic: stats[k],
            p_value: base_p[k],
            calibration: config.calibration,
            boot_mean: moments.as_ref().map(|m| m.mean[k]),
            boot_sd: moments.as_ref().map(|m| m.sd[k]),
            alpha_reject: reject(base_p[k]),
        });
    }
    let (combos, clamped) = combine_all(base_p)?;
    for (method, c) in [Method::Cc1, Method::Cc2, Method::Cc3].into_iter().zip(combos) {
        reports.push(TestReport {
            method,
            statistic: c.statistic,
            p_value: c.p_value,
            calibration: config.calibration,
            boot_mean: None,
            boot_sd: None,
            alpha_reject: reject(c.p_value),
        });
    }
    Ok(TestSuite {
        reports,
        diagnostics: TestDiagnostics {
            n,
            p,
            hr_iterations: detail.hr.iterations,
            hr_converged: detail.hr.converged,
            psd_projections: detail.hr.psd_projections,
            diag_converged: detail.diagonal.converged,
            zeta1_hat: detail.zeta1_hat,
            boot_success: moments.as_ref().map_or(0, |m| m.n_success),
            boot_failed: moments.as_ref().map_or(0, |m| m.n_failed),
            boot_retried: moments.as_ref().map_or(0, |m| m.n_retried),
            p_clamped: clamped,
        },
    })
}

pub fn one_sample_test(x: &DataMatrix, method: Method, config: &TestConfig, seed: u64) -> Result<TestReport> {
    run_tests(x, config, seed).map(|s| s.report(method).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(n: usize, p: usize, seed: u64) -> DataMatrix {
        standard_normal_rows(n, p, &mut substream(seed, 0))
    }

    #[test]
    fn gumbel_constants_and_examples() {
        let g = GumbelParams::standard();
        assert!((g.mu0 - 0.0097014).abs() < 1e-7);
        assert!((g.sigma0_sq - 6.579736).abs() < 1e-6);
        assert!((gumbel_cdf(0.0) - (-1.0 / PI.sqrt()).exp()).abs() < 1e-15);
        assert!((gumbel_cdf(0.0) - 0.568821).abs() < 1e-6);
        let q95 = gumbel_quantile(0.95).unwrap();
        let oracle = -PI.ln() - 2.0 * (1.0f64 / 0.95).ln().ln();
        assert!((q95 - oracle).abs() < 1e-14);
        assert!((q95 - 4.795661).abs() < 1e-6);
        assert!(gumbel_quantile(0.0).is_err());
        assert!(gumbel_quantile(1.0).is_err());
    }

    #[test]
    fn gumbel_round_trip() {
        for k in 1..100 {
            let q = k as f64 / 100.0;
            assert!((gumbel_cdf(gumbel_quantile(q).unwrap()) - q).abs() < 1e-12);
        }
        assert!((gumbel_cdf(gumbel_quantile(0.37).unwrap()) - 0.37).abs() < 1e-12);
        assert!((gumbel_sf(3.0) - (1.0 - gumbel_cdf(3.0))).abs() < 1e-15);
    }

    #[test]
    fn t_max_examples() {
        let p = 120;
        let pf = p as f64;
        let zero = t_max(&DVector::zeros(p), &SpdMatrix::identity(p), 0.1, 100, p);
        assert!((zero - (-2.0 * pf.ln() + pf.ln().ln())).abs() < 1e-12);
        let mut mu = DVector::zeros(p);
        mu[5] = -0.3;
        let t = t_max(&mu, &SpdMatrix::identity(p), 0.1, 100, p);
        let oracle = 100.0 * 0.09 * 0.01 * 120.0 - 2.0 * pf.ln() + pf.ln().ln();
        assert!((t - oracle).abs() < 1e-10);
        assert!((t - 2.791023).abs() < 1e-6);
    }

    #[test]
    fn t_sum_examples() {
        assert!((t_sum(&DVector::zeros(8), &SpdMatrix::identity(8), 0.3, 50, 8) + 2.0).abs() < 1e-15);
        // μ̂ᵀΩ̂μ̂ = 1.2 with Ω̂ = I
        let p = 120;
        let mut mu = DVector::zeros(p);
        mu[0] = 1.2f64.sqrt();
        let t = t_sum(&mu, &SpdMatrix::identity(p), 0.1, 100, p);
        let oracle = 240f64.sqrt() / 2.0 * (100.0 * 0.01 * 1.2 - 1.0);
        assert!((t - oracle).abs() < 1e-12);
        assert!((t - 1.54919).abs() < 1e-5);
    }

    #[test]
    fn p_value_examples() {
        assert!((p_value_sum(1.3, 1.3, 2.0).unwrap() - 0.5).abs() < 1e-15);
        let g = GumbelParams::standard();
        let oracle = 1.0 - (-(-g.mu0 / 2.0).exp() / PI.sqrt()).exp();
        let pm = p_value_max(0.7, 0.7, 1.1).unwrap();
        assert!((pm - oracle).abs() < 1e-14);
        assert!((pm - 0.429624).abs() < 1e-6);
        assert!(p_value_sum(1.0, 0.0, 0.0).is_err());
        assert!(matches!(p_value_max(1.0, 0.0, -1.0), Err(HrError::Calibration(_))));
    }

    #[test]
    fn cauchy_examples() {
        assert!((cauchy_combine(&[0.2], &[1.0]).unwrap() - 0.2).abs() < 1e-12);
        assert!((cauchy_combine(&[0.5, 0.5, 0.5], &[0.5, 0.25, 0.25]).unwrap() - 0.5).abs() < 1e-12);
        assert!((cauchy_combine(&[0.01, 0.99], &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-12);
        let c = cauchy_combine_detailed(&[0.0, 0.3], &[0.5, 0.5]).unwrap();
        assert!(c.clamped && c.p_value > 0.0 && c.p_value < 1e-10);
        assert!(cauchy_combine(&[0.2, 0.3], &[0.5, 0.6]).is_err());
        assert!(cauchy_combine(&[1.2], &[1.0]).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("cc4".parse::<Method>().is_err());
        assert_eq!(serde_json::to_string(&Method::Cc3).unwrap(), "\"cc3\"");
    }

    #[test]
    fn sum2_vanishes_for_orthogonal_signs() {
        let x = DMatrix::<f64>::identity(4, 4);
        assert!(t_sum2(&x).unwrap().abs() < 1e-15);
    }

    #[test]
    fn max2_vanishes_for_antisymmetric_sample() {
        let half = gaussian(20, 6, 3);
        let x = DMatrix::from_fn(40, 6, |i, j| if i < 20 { half[(i, j)] } else { -half[(i - 20, j)] });
        assert!(t_max2(&x, 0.5).unwrap() < 1e-20);
    }

    #[test]
    fn sum2_matches_direct_pair_sum() {
        let x = gaussian(12, 5, 4);
        let fit = diagonal_hr(&x, 1e-6, 200).unwrap();
        let u = scaled_signs(&x, &fit.d_diag);
        let mut direct = 0.0;
        for i in 0..12 {
            for j in (i + 1)..12 {
                direct += u.row(i).dot(&u.row(j));
            }
        }
        direct *= 2.0 / (12.0 * 11.0);
        assert!((t_sum2(&x).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn leave_two_out_is_close_to_full_sample() {
        let x = gaussian(30, 8, 5);
        let full = t_sum2(&x).unwrap();
        let l2o = leave_two_out_sum2(&x, 1e-6, 200).unwrap();
        assert!((full - l2o).abs() < 0.05, "{full} {l2o}");
    }

    fn small_config() -> TestConfig {
        TestConfig {
            boot_m: 6,
            ..TestConfig::default()
        }
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let x = gaussian(40, 10, 6);
        let cfg = small_config();
        let d = compute_statistics(&x, &cfg).unwrap();
        let a = bootstrap_calibrate(&d.hr.omega, 40, 6, 11, &cfg).unwrap();
        let b = bootstrap_calibrate(&d.hr.omega, 40, 6, 11, &cfg).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.sd, b.sd);
        assert_eq!(a.n_success, 6);
    }

    #[test]
    fn identical_replicates_have_zero_sd() {
        let x = gaussian(40, 10, 6);
        let cfg = small_config();
        let d = compute_statistics(&x, &cfg).unwrap();
        let m = bootstrap_with_streams(&d.hr.omega, 40, 2, 3, &cfg, |_, _| 0).unwrap();
        assert_eq!(m.sd, [0.0; 4]);
        assert!(bootstrap_calibrate(&d.hr.omega, 40, 1, 3, &cfg).is_err());
    }

    #[test]
    fn suite_reports_every_method() {
        let x = gaussian(40, 10, 8);
        let suite = run_tests(&x, &small_config(), 1).unwrap();
        assert_eq!(suite.reports.len(), 7);
        for r in &suite.reports {
            assert!(r.p_value > 0.0 && r.p_value < 1.0, "{r:?}");
            assert_eq!(r.boot_mean.is_some(), !r.method.is_combination());
        }
        let asym = TestConfig {
            calibration: Calibration::Asymptotic,
            ..small_config()
        };
        let suite = run_tests(&x, &asym, 1).unwrap();
        assert!(suite.reports.iter().all(|r| r.boot_sd.is_none()));
        let s = suite.report(Method::Max).statistic;
        assert!((suite.report(Method::Max).p_value - gumbel_sf(s)).abs() < 1e-15);
    }

    #[test]
    fn alpha_one_always_rejects() {
        let x = gaussian(40, 10, 9);
        let cfg = TestConfig {
            alpha: 1.0,
            ..small_config()
        };
        let suite = run_tests(&x, &cfg, 2).unwrap();
        assert!(suite.reports.iter().all(|r| r.alpha_reject == Some(true)));
    }

    #[test]
    fn shifted_sample_is_rejected() {
        let mut x = gaussian(40, 10, 10);
        x.add_scalar_mut(1.0);
        let suite = run_tests(&x, &small_config(), 3).unwrap();
        for m in Method::ALL {
            assert!(suite.report(m).p_value < 1e-3, "{m}: {:?}", suite.report(m));
        }
    }

    proptest! {
        #[test]
        fn cauchy_is_permutation_invariant(ps in prop::collection::vec(0.0f64..1.0, 2..6), shift in 0usize..6) {
            let k = ps.len();
            let w: Vec<f64> = (0..k).map(|i| (i + 1) as f64).collect();
            let total: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|v| v / total).collect();
            if (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12 {
                let a = cauchy_combine(&ps, &w).unwrap();
                let rot_p: Vec<f64> = (0..k).map(|i| ps[(i + shift) % k]).collect();
                let rot_w: Vec<f64> = (0..k).map(|i| w[(i + shift) % k]).collect();
                let b = cauchy_combine(&rot_p, &rot_w).unwrap();
                prop_assert_eq!(a.to_bits(), b.to_bits());
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }

        #[test]
        fn p_values_decrease_in_statistic(t in -5.0f64..5.0, dt in 0.01f64..3.0, mean in -1.0f64..1.0, sd in 0.1f64..3.0) {
            for f in [p_value_sum, p_value_max] {
                let (hi, lo) = (f(t, mean, sd).unwrap(), f(t + dt, mean, sd).unwrap());
                prop_assert!(lo <= hi);
                if hi < 1.0 - 1e-12 && lo > 1e-12 {
                    prop_assert!(lo < hi);
                }
            }
        }

        #[test]
        fn t_sum_is_bounded_below(seed in 0u64..200, zeta in 0.01f64..1.0) {
            let mu = standard_normal_rows(1, 6, &mut substream(seed, 0)).transpose().column(0).into_owned();
            let t = t_sum(&mu, &SpdMatrix::identity(6), zeta, 30, 6);
            prop_assert!(t >= -(12f64).sqrt() / 2.0);
        }
    }
}
