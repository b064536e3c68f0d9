//! Averaged iterate against the last iterate and the efficient covariance.
//!
//! Usage: `efficiency_study [reps] [steps]`.

use distopt::harness::config::ExperimentConfig;
use distopt::harness::studies::{efficiency_study, StudyOptions};

fn main() -> distopt::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mut c = ExperimentConfig::section_six();
    c.replications = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    c.steps = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let exp = c.build()?;
    let r = efficiency_study(&exp, &StudyOptions::from_config(&c))?.report;
    println!("tr Cov(sqrt(K) avg error)   {:.4}  (limit {:.4})", r.averaged_scaled_trace, r.theoretical_averaged_trace);
    println!("tr Cov(last error/sqrt(g))  {:.4}  (limit {:.4})", r.last_scaled_trace, r.theoretical_last_trace);
    println!("tr Cov(avg error)           {:.4e}", r.averaged_error_trace);
    println!("tr Cov(last error)          {:.4e}", r.last_error_trace);
    println!(
        "relative Frobenius error {:.3} ± {:.3}",
        r.relative_frobenius, r.relative_frobenius_std_err
    );
    Ok(())
}
