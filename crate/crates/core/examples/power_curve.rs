//! Size-corrected power against sparsity for MAX, SUM and their combination.

use hrstat::location::Method;
use hrstat::sim::experiments::{power_experiment, Experiment, SimSpec};
use hrstat::sim::generate::Family;

fn main() -> hrstat::Result<()> {
    let mut spec = SimSpec::new(Experiment::Power, "II", Family::StudentT3, 30, 7)?;
    spec.n = 50;
    spec.reps = 60;
    spec.n_null = 500;
    spec.s_grid = vec![1, 5, 30];
    spec.methods = vec![Method::Max, Method::Sum, Method::Cc1];
    let report = power_experiment(&spec)?;
    println!("{:>4} {:>6} {:>8} {:>8}", "s", "method", "power", "crit");
    for r in &report.rows {
        println!(
            "{:>4} {:>6} {:>8.3} {:>8.3}",
            r.s.unwrap_or(0),
            r.method,
            r.rate,
            r.critical_value.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
