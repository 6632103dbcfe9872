//! Sparse precision matrix from the spatial-sign covariance of AR(1) data.

use hrstat::linalg::rel_frobenius;
use hrstat::sglasso::{lambda_default, sglasso, SglassoConfig};
use hrstat::sim::generate::{gen_elliptical, DistSpec};
use hrstat::sim::models::{make_cov, CovModel};
use hrstat::spatial::{sign_cov, spatial_median, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nalgebra::DVector;

fn main() -> hrstat::Result<()> {
    let (n, p) = (200, 30);
    let model = make_cov(CovModel::I, p)?;
    let x = gen_elliptical(&DistSpec::student_t3(), &DVector::zeros(p), &model.sigma, n, 3)?;
    let med = spatial_median(&x, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let s = sign_cov(&x, &med.location)?;

    let truth = model.omega.scaled(model.sigma.trace() / p as f64);
    for lambda in [0.05, lambda_default(n, p, 1.0, 0.5), 0.5] {
        let fit = sglasso(&s, p, lambda, &SglassoConfig::default())?;
        let nnz = fit.omega.as_matrix().iter().filter(|v| v.abs() > 1e-8).count();
        println!(
            "lambda {lambda:.4}  sweeps {:3}  objective {:.4}  kkt {:.2e}  nonzeros {nnz:4}  rel err {:.3}",
            fit.iterations,
            fit.objective,
            fit.kkt_residual,
            rel_frobenius(fit.omega.as_matrix(), truth.as_matrix()),
        );
    }
    Ok(())
}
