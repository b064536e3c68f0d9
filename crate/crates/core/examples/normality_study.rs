//! KS tests of `X̃_K/√γ_K` against the limit law and fitted normals.
//!
//! Usage: `normality_study [reps] [steps]`.

use distopt::harness::config::ExperimentConfig;
use distopt::harness::studies::{normality_study, StudyOptions};

fn main() -> distopt::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mut c = ExperimentConfig::section_six();
    c.replications = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    c.steps = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let exp = c.build()?;
    let out = normality_study(&exp, &StudyOptions::from_config(&c))?;
    let r = &out.report;
    println!("agent comp   theory var  D(theory) pass   fitted var  D(fitted) pass");
    for t in &r.components {
        println!(
            "{:>5} {:>4} {:>12.5} {:>10.4} {:>4} {:>12.5} {:>10.4} {:>4}",
            t.agent, t.component, t.theoretical.variance, t.theoretical.statistic, t.theoretical.pass,
            t.fitted.variance, t.fitted.statistic, t.fitted.pass
        );
    }
    println!("critical value {:.4}", r.components[0].theoretical.critical);
    println!(
        "passes: theory {}/9, fitted {}/9 (need {})",
        r.passes_theoretical, r.passes_fitted, r.required_passes
    );
    println!(
        "covariance relative Frobenius error {:.3} ± {:.3}",
        r.relative_frobenius, r.relative_frobenius_std_err
    );
    Ok(())
}
