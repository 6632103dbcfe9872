//! A small empirical-size study written as CSV to stdout.

use hrstat::sim::experiments::{size_experiment, Experiment, SimSpec};
use hrstat::sim::generate::Family;

fn main() -> hrstat::Result<()> {
    let mut spec = SimSpec::new(Experiment::Size, "I", Family::Normal, 30, 20240501)?;
    spec.n = 40;
    spec.reps = 100;
    spec.test.boot_m = 20;
    let run = size_experiment(&spec)?;
    run.report.write_csv(std::io::stdout().lock())?;
    eprintln!("dropped {} of {} replications", run.report.n_failed, spec.reps);
    Ok(())
}
