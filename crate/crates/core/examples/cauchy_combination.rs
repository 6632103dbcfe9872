use hrstat::location::{cauchy_combine, cauchy_combine_detailed, gumbel_quantile, p_value_max, GumbelParams};

fn main() -> hrstat::Result<()> {
    println!("q95 of the limiting Gumbel law: {:.6}", gumbel_quantile(0.95)?);
    let g = GumbelParams::standard();
    println!("Gumbel mean {:.6}, variance {:.6}", g.mu0, g.sigma0_sq);
    println!("p-value of T = 8 at the limiting moments: {:.5}", p_value_max(8.0, g.mu0, g.sigma0_sq.sqrt())?);

    let cases: [&[f64]; 4] = [&[0.5, 0.5], &[0.01, 0.9], &[1e-20, 0.3], &[0.04, 0.05, 0.2, 0.7]];
    for ps in cases {
        let w = vec![1.0 / ps.len() as f64; ps.len()];
        let d = cauchy_combine_detailed(ps, &w)?;
        println!("{ps:?} -> T = {:.4}, p = {:.6}, clamped {}", d.statistic, d.p_value, d.clamped);
    }
    println!("identical inputs return themselves: {:.6}", cauchy_combine(&[0.2, 0.2, 0.2], &[0.2, 0.3, 0.5])?);
    Ok(())
}
