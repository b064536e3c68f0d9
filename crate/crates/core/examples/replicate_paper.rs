//! The three-agent benchmark end to end, with CSV and JSON artefacts.
//!
//! Usage: `replicate_paper [out_dir]`.

use distopt::harness::config::ExperimentConfig;
use distopt::harness::output::write_paper;
use distopt::harness::studies::{replicate_paper, StudyOptions};

fn main() -> distopt::Result<()> {
    let c = ExperimentConfig::section_six();
    let out = replicate_paper(&c, &StudyOptions::from_config(&c))?;
    let s = &out.summary;
    println!("agent 1 mean {:.4?} ± {:.4?}", s.agent1_mean, s.agent1_std_err);
    println!(
        "median consensus error: k={} {:.4e}, k={} {:.4e}",
        s.early_k, s.median_consensus_early, c.steps, s.median_consensus_final
    );
    println!(
        "fitted KS passes {}/9, theoretical {}/9",
        s.normality.passes_fitted, s.normality.passes_theoretical
    );
    println!("accepted: {}", s.accepted);
    if let Some(dir) = std::env::args().nth(1) {
        write_paper(dir.as_ref(), &out)?;
        println!("wrote {dir}");
    }
    Ok(())
}
