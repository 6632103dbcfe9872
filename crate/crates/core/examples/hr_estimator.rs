//! Joint location and scatter in a p > n setting.

use hrstat::hr::{hr_estimate, HrConfig};
use hrstat::linalg::rel_frobenius;
use hrstat::sim::generate::{gen_elliptical, DistSpec};
use hrstat::sim::models::{make_cov, CovModel};
use nalgebra::DVector;

fn main() -> hrstat::Result<()> {
    let (n, p) = (100, 120);
    let model = make_cov(CovModel::I, p)?;
    let mu = DVector::from_element(p, 0.5);
    let x = gen_elliptical(&DistSpec::student_t3(), &mu, &model.sigma, n, 2024)?;

    let est = hr_estimate(&x, &HrConfig::default())?;
    println!("n = {n}, p = {p}");
    println!("iterations {}  converged {}  lambda {:.4}", est.iterations, est.converged, est.lambda);
    println!("max |mu_hat - mu| = {:.4}", (&est.mu - &mu).amax());
    println!("trace(sigma_hat) = {:.6}", est.sigma.trace());
    println!("sigma_hat[0,1] = {:.4} (truth 0.6)", est.sigma.as_matrix()[(0, 1)]);
    println!(
        "relative Frobenius error of sigma_hat: {:.4}",
        rel_frobenius(est.sigma.as_matrix(), model.sigma.as_matrix())
    );
    for (k, s) in est.stationarity_path.iter().enumerate() {
        println!("  iter {k:2}  stationarity {s:.3e}");
    }
    Ok(())
}
