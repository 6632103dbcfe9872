//! Spatial median and spatial-sign covariance of a contaminated sample.

use hrstat::linalg::SpdMatrix;
use hrstat::sim::generate::{gen_elliptical, DistSpec};
use hrstat::spatial::{sign_cov, spatial_median, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nalgebra::DVector;

fn main() -> hrstat::Result<()> {
    let p = 5;
    let mu = DVector::from_vec(vec![1.0, -1.0, 0.5, 0.0, 2.0]);
    let mut x = gen_elliptical(&DistSpec::student_t3(), &mu, &SpdMatrix::identity(p), 200, 11)?;
    // a handful of gross outliers
    for i in 0..10 {
        for j in 0..p {
            x[(i, j)] = 50.0;
        }
    }

    let med = spatial_median(&x, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let mean = x.row_mean().transpose();
    println!("truth          {:.3?}", mu.as_slice());
    println!("sample mean    {:.3?}", mean.as_slice());
    println!("spatial median {:.3?}", med.location.as_slice());
    println!("iterations {} converged {}", med.iterations, med.converged);

    let s = sign_cov(&x, &med.location)?;
    println!("sign covariance trace {:.6}", s.trace());
    Ok(())
}
