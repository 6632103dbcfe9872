//! Sparse graphical lasso on the spatial-sign covariance.
//!
//! Solves `min_{Θ ≻ 0} tr(p Ŝ Θ) − log|Θ| + λ‖Θ‖₁` where `Ŝ` is a sign
//! covariance (trace one). The solver is exact block coordinate descent on
//! the primal: each column update minimizes the objective over one
//! row/column of `Θ` with the rest held fixed, so the objective never
//! increases and every iterate stays positive definite. The inner problem
//! for a column is a lasso solved by cyclic coordinate descent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HrError, Result};
use crate::linalg::{sym_eigen, SpdMatrix, SymMatrix};
use crate::spatial::sign_cov;
use crate::DataMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SglassoConfig {
    /// Penalize the diagonal of `Θ` as well (the elementwise ℓ1 norm).
    pub penalize_diagonal: bool,
    pub max_sweeps: usize,
    /// Convergence threshold on the largest entry change of `Θ` per sweep.
    pub tol: f64,
    pub kkt_tol: f64,
    pub max_inner: usize,
    pub inner_tol: f64,
}

impl Default for SglassoConfig {
    fn default() -> Self {
        SglassoConfig {
            penalize_diagonal: true,
            max_sweeps: 500,
            tol: 1e-6,
            kkt_tol: 1e-5,
            max_inner: 1000,
            inner_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub omega: SpdMatrix,
    pub lambda: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Objective value after each sweep.
    pub objective_path: Vec<f64>,
}

/// `c1 · sqrt(log p / n) + c2 / sqrt(p)`.
pub fn lambda_default(n: usize, p: usize, c1: f64, c2: f64) -> f64 {
    lambda_formula(n as f64, p as f64, c1, c2)
}

fn lambda_formula(n: f64, p: f64, c1: f64, c2: f64) -> f64 {
    c1 * (p.ln() / n).sqrt() + c2 / p.sqrt()
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `tr(SΘ) − log|Θ| + λ‖Θ‖₁`; `None` if `Θ` is not positive definite.
pub fn objective(s: &DMatrix<f64>, theta: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> Option<f64> {
    let chol = theta.clone().cholesky()?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let p = s.nrows();
    let mut tr = 0.0;
    let mut l1 = 0.0;
    for j in 0..p {
        for i in 0..p {
            tr += s[(i, j)] * theta[(i, j)];
            if i != j || penalize_diagonal {
                l1 += theta[(i, j)].abs();
            }
        }
    }
    Some(tr - log_det + lambda * l1)
}

/// Largest violation of the stationarity conditions of the penalized
/// problem, given `Θ` and its inverse `W`.
pub fn kkt_residual(s: &DMatrix<f64>, theta: &DMatrix<f64>, w: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> f64 {
    let p = s.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        for i in 0..p {
            let g = s[(i, j)] - w[(i, j)];
            let pen = if i != j || penalize_diagonal { lambda } else { 0.0 };
            let t = theta[(i, j)];
            let v = if t != 0.0 {
                (g + pen * t.signum()).abs()
            } else {
                (g.abs() - pen).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// `W += α x xᵀ + β y yᵀ`, one pass over the columns.
fn rank_two_update(w: &mut DMatrix<f64>, alpha: f64, x: &[f64], beta: f64, y: &[f64]) {
    let p = x.len();
    for (k, col) in w.as_mut_slice().chunks_exact_mut(p).enumerate() {
        let (ax, by) = (alpha * x[k], beta * y[k]);
        for ((wk, xi), yi) in col.iter_mut().zip(x).zip(y) {
            *wk += ax * xi + by * yi;
        }
    }
}

fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Graphical lasso fitted to `p · s_hat`.
pub fn sglasso(s_hat: &SymMatrix, p: usize, lambda: f64, config: &SglassoConfig) -> Result<PrecisionEstimate> {
    if s_hat.dim() != p {
        return Err(HrError::Dimension(format!(
            "sglasso: sign covariance is {0}x{0}, p = {p}",
            s_hat.dim()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(HrError::Contract(format!("lambda must be nonnegative, got {lambda}")));
    }
    let s = s_hat.as_matrix() * p as f64;
    let scale = s.diagonal().amax().max(f64::MIN_POSITIVE);
    let shifted = &s + DMatrix::identity(p, p) * (1e-10 * scale);
    if shifted.cholesky().is_none() {
        let min_eig = sym_eigen(&SymMatrix::symmetrize(s.clone())).values[p - 1];
        return Err(HrError::Contract(format!(
            "sglasso input is not positive semidefinite (min eigenvalue {min_eig:e})"
        )));
    }
    fit(&s, lambda, config)
}

fn fit(s: &DMatrix<f64>, lambda: f64, cfg: &SglassoConfig) -> Result<PrecisionEstimate> {
    let p = s.nrows();
    let diag_pen = if cfg.penalize_diagonal { lambda } else { 0.0 };
    let c: Vec<f64> = (0..p).map(|j| s[(j, j)] + diag_pen).collect();
    if c.iter().any(|&v| !(v > 0.0)) {
        return Err(HrError::Contract(
            "sglasso needs a positive diagonal (or a diagonal penalty)".into(),
        ));
    }

    let mut theta = DMatrix::from_diagonal(&DVector::from_iterator(p, c.iter().map(|v| 1.0 / v)));
    let mut w = DMatrix::from_diagonal(&DVector::from_column_slice(&c));
    let mut path = Vec::new();
    let mut a = DVector::zeros(p);
    let mut g = DVector::zeros(p);
    let mut u = DVector::zeros(p);
    let mut last_residual = f64::INFINITY;

    for sweep in 1..=cfg.max_sweeps {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            // The block inverse is V = W − w wᵀ / w_jj; it is never formed.
            // With a = Wβ and t = wᵀβ, Vβ = a − (t / w_jj) w.
            let wj = w.column(j).clone_owned();
            let wjj = wj[j];
            let cj = c[j];
            let mut beta = theta.column(j).clone_owned();
            beta[j] = 0.0;
            a.fill(0.0);
            for k in 0..p {
                if beta[k] != 0.0 {
                    a.axpy(beta[k], &w.column(k), 1.0);
                }
            }
            let mut t = wj.dot(&beta);
            let update = |k: usize, beta: &mut DVector<f64>, a: &mut DVector<f64>, t: &mut f64| -> f64 {
                let vkk = w[(k, k)] - wj[k] * wj[k] / wjj;
                let gk = a[k] - *t * wj[k] / wjj;
                let r = gk - vkk * beta[k];
                let new = -soft(cj * r + s[(k, j)], lambda) / (cj * vkk);
                let delta = new - beta[k];
                if delta != 0.0 {
                    a.axpy(delta, &w.column(k), 1.0);
                    *t += delta * wj[k];
                    beta[k] = new;
                }
                delta.abs()
            };
            // Full passes alternate with passes over the active set only.
            let mut passes = 0;
            while passes < cfg.max_inner {
                passes += 1;
                let mut full_change: f64 = 0.0;
                for k in (0..p).filter(|&k| k != j) {
                    full_change = full_change.max(update(k, &mut beta, &mut a, &mut t));
                }
                if full_change < cfg.inner_tol {
                    break;
                }
                let active: Vec<usize> = (0..p).filter(|&k| k != j && beta[k] != 0.0).collect();
                while passes < cfg.max_inner {
                    passes += 1;
                    let mut change: f64 = 0.0;
                    for &k in &active {
                        change = change.max(update(k, &mut beta, &mut a, &mut t));
                    }
                    if change < cfg.inner_tol {
                        break;
                    }
                }
            }
            g.copy_from(&a);
            g.axpy(-t / wjj, &wj, 1.0);
            g[j] = 0.0;
            let theta_jj = 1.0 / cj + beta.dot(&g);
            for k in 0..p {
                let new = if k == j { theta_jj } else { beta[k] };
                max_change = max_change.max((new - theta[(k, j)]).abs());
                theta[(k, j)] = new;
                theta[(j, k)] = new;
            }
            // W ← V + c u uᵀ with u = (g, −1 at j)
            u.copy_from(&g);
            u[j] = -1.0;
            rank_two_update(&mut w, -1.0 / wjj, wj.as_slice(), cj, u.as_slice());
        }

        let obj = objective(s, &theta, lambda, cfg.penalize_diagonal).unwrap_or(f64::INFINITY);
        path.push(obj);
        if max_change >= cfg.tol {
            continue;
        }
        // refresh W against accumulated rounding before the optimality check
        w = inverse_spd(&theta).ok_or(HrError::Singular {
            min_eigenvalue: f64::NAN,
            floor: 0.0,
        })?;
        last_residual = kkt_residual(s, &theta, &w, lambda, cfg.penalize_diagonal);
        if last_residual < cfg.kkt_tol {
            let omega = SpdMatrix::new(SymMatrix::symmetrize(theta))?;
            return Ok(PrecisionEstimate {
                omega,
                lambda,
                objective: obj,
                kkt_residual: last_residual,
                iterations: sweep,
                objective_path: path,
            });
        }
    }
    Err(HrError::NoConvergence {
        solver: "sglasso",
        iterations: cfg.max_sweeps,
        residual: last_residual,
        best: Some(Box::new(theta)),
    })
}

/// K-fold choice of `λ` minimizing the held-out loss
/// `tr(p Ŝ_val Θ̂) − log|Θ̂|`. Ties go to the larger `λ`.
pub fn select_lambda_cv(
    x: &DataMatrix,
    mu: &DVector<f64>,
    grid: &[f64],
    folds: usize,
    config: &SglassoConfig,
) -> Result<f64> {
    let (n, p) = x.shape();
    if grid.is_empty() || folds < 2 || folds > n {
        return Err(HrError::Contract(format!(
            "lambda CV needs a non-empty grid and 2 <= folds <= n (got {} and {folds})",
            grid.len()
        )));
    }
    let mut losses = vec![0.0; grid.len()];
    for f in 0..folds {
        let val: Vec<usize> = (0..n).filter(|i| i % folds == f).collect();
        let train: Vec<usize> = (0..n).filter(|i| i % folds != f).collect();
        let xt = x.select_rows(&train);
        let xv = x.select_rows(&val);
        let st = sign_cov(&xt, mu)?;
        let sv = sign_cov(&xv, mu)?.scale(p as f64);
        for (k, &lam) in grid.iter().enumerate() {
            let est = sglasso(&st, p, lam, config)?;
            let tr = (sv.as_matrix().component_mul(est.omega.as_matrix())).sum();
            losses[k] += tr - est.omega.log_det();
        }
    }
    let mut best = 0;
    for k in 1..grid.len() {
        if losses[k] < losses[best] || (losses[k] == losses[best] && grid[k] > grid[best]) {
            best = k;
        }
    }
    Ok(grid[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cov(p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(p, p + 3, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() / (p + 3) as f64 + DMatrix::identity(p, p) * 0.1
    }

    /// Independent oracle: projected gradient ascent on the dual
    /// `max log|W|` over the box `|W − S| <= λ` (diagonal pinned to
    /// `S_jj + λ`). The primal optimum equals `p + log|W*|`.
    fn dual_projected_gradient(s: &DMatrix<f64>, lambda: f64) -> (f64, DMatrix<f64>) {
        let p = s.nrows();
        let project = |w: &DMatrix<f64>| {
            DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    s[(i, i)] + lambda
                } else {
                    w[(i, j)].clamp(s[(i, j)] - lambda, s[(i, j)] + lambda)
                }
            })
        };
        let log_det = |w: &DMatrix<f64>| -> Option<f64> {
            let c = w.clone().cholesky()?;
            Some(2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
        };
        let mut w = project(s);
        let mut f = log_det(&w).unwrap();
        let mut step = 1.0;
        for _ in 0..200_000 {
            let grad = w.clone().cholesky().unwrap().inverse();
            let mut t = step;
            loop {
                let cand = project(&(&w + &grad * t));
                if let Some(fc) = log_det(&cand) {
                    if fc >= f {
                        let moved = (&cand - &w).amax();
                        w = cand;
                        f = fc;
                        step = t * 2.0;
                        if moved < 1e-14 {
                            let theta = w.clone().cholesky().unwrap().inverse();
                            return (p as f64 + f, theta);
                        }
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-20 {
                    let theta = w.clone().cholesky().unwrap().inverse();
                    return (p as f64 + f, theta);
                }
            }
        }
        let theta = w.clone().cholesky().unwrap().inverse();
        (p as f64 + f, theta)
    }

    #[test]
    fn lambda_default_examples() {
        assert!((lambda_formula(100.0, 100f64.exp(), 1.0, 0.0) - 1.0).abs() < 1e-12);
        assert!((lambda_default(50, 100, 0.0, 1.0) - 0.1).abs() < 1e-15);
        let v = lambda_default(100, 120, 1.0, 0.5);
        let oracle = (120f64.ln() / 100.0).sqrt() + 0.5 / 120f64.sqrt();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.26445).abs() < 1e-5, "{v}");
    }

    #[test]
    fn identity_input_without_penalty() {
        let s = SymMatrix::identity(4).scale(0.25);
        let est = sglasso(&s, 4, 0.0, &SglassoConfig::default()).unwrap();
        assert!((est.omega.as_matrix() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn diagonal_input_matches_scalar_calculus() {
        let d = [0.5, 1.0, 2.0, 0.25];
        let p = d.len();
        let s_hat = SymMatrix::from_diagonal(&d).scale(1.0 / p as f64);
        for lambda in [0.01, 0.3, 1.0] {
            let est = sglasso(&s_hat, p, lambda, &SglassoConfig::default()).unwrap();
            for (i, di) in d.iter().enumerate() {
                // argmin θ s − log θ + λθ  →  θ = 1/(s + λ)
                assert!((est.omega.as_matrix()[(i, i)] - 1.0 / (di + lambda)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_dual_oracle_and_satisfies_kkt() {
        let p = 5;
        let cov = random_cov(p, 17);
        let s_hat = SymMatrix::symmetrize(&cov / cov.trace());
        let s = s_hat.as_matrix() * p as f64;
        let lambda = 0.2;
        let cfg = SglassoConfig {
            tol: 1e-10,
            kkt_tol: 1e-9,
            ..SglassoConfig::default()
        };
        let est = sglasso(&s_hat, p, lambda, &cfg).unwrap();
        let (oracle_obj, oracle_theta) = dual_projected_gradient(&s, lambda);
        assert!((est.objective - oracle_obj).abs() < 1e-6, "{} vs {}", est.objective, oracle_obj);
        assert!((est.omega.as_matrix() - oracle_theta).amax() < 1e-4);
        assert!(est.kkt_residual < 1e-5);
        let nnz_off = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && est.omega.as_matrix()[(i, j)] != 0.0)
            .count();
        assert!(nnz_off < p * (p - 1), "penalty should zero out some entries");
    }

    #[test]
    fn objective_never_increases() {
        let p = 12;
        let cov = random_cov(p, 4);
        let s_hat = SymMatrix::symmetrize(&cov / cov.trace());
        let est = sglasso(&s_hat, p, 0.05, &SglassoConfig::default()).unwrap();
        let init = {
            let s = s_hat.as_matrix() * p as f64;
            let theta0 = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / (s[(i, i)] + 0.05) } else { 0.0 });
            objective(&s, &theta0, 0.05, true).unwrap()
        };
        let mut prev = init;
        for &v in &est.objective_path {
            assert!(v <= prev + 1e-10, "objective rose from {prev} to {v}");
            prev = v;
        }
        assert_eq!(est.omega.as_matrix(), &est.omega.as_matrix().transpose());
    }

    #[test]
    fn sparsity_is_monotone_in_lambda() {
        let p = 10;
        let cov = random_cov(p, 23);
        let s_hat = SymMatrix::symmetrize(&cov / cov.trace());
        let mut prev = usize::MAX;
        for lambda in [0.01, 0.03, 0.1, 0.2, 0.4, 0.8] {
            let est = sglasso(&s_hat, p, lambda, &SglassoConfig::default()).unwrap();
            let nnz = (0..p)
                .flat_map(|i| (0..p).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && est.omega.as_matrix()[(i, j)].abs() > 1e-8)
                .count();
            assert!(nnz <= prev, "lambda {lambda}: {nnz} > {prev}");
            prev = nnz;
        }
    }

    #[test]
    fn off_diagonal_only_penalty() {
        let p = 6;
        let cov = random_cov(p, 8);
        let s_hat = SymMatrix::symmetrize(&cov / cov.trace());
        let cfg = SglassoConfig {
            penalize_diagonal: false,
            ..SglassoConfig::default()
        };
        let est = sglasso(&s_hat, p, 0.1, &cfg).unwrap();
        let s = s_hat.as_matrix() * p as f64;
        let w = est.omega.inverse();
        for j in 0..p {
            assert!((w.as_matrix()[(j, j)] - s[(j, j)]).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_indefinite_input_and_reports_non_convergence() {
        let bad = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 0.5])).unwrap();
        assert!(matches!(
            sglasso(&bad, 2, 0.1, &SglassoConfig::default()),
            Err(HrError::Contract(_))
        ));
        let p = 8;
        let cov = random_cov(p, 3);
        let s_hat = SymMatrix::symmetrize(&cov / cov.trace());
        let cfg = SglassoConfig {
            max_sweeps: 1,
            tol: 0.0,
            ..SglassoConfig::default()
        };
        match sglasso(&s_hat, p, 0.01, &cfg) {
            Err(HrError::NoConvergence { best, .. }) => assert!(best.is_some()),
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }
}
