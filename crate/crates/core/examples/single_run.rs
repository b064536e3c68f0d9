//! One trajectory of the three-agent benchmark.
//!
//! Usage: `single_run [steps] [seed]`.

use distopt::engine::{Engine, NoiseSpec, StepSchedule};
use distopt::network::GraphDistribution;
use distopt::problem::section_six_problem;
use distopt::replication_rng;

fn main() -> distopt::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let engine = Engine::new(
        section_six_problem(),
        GraphDistribution::gossip(3, 1.0)?,
        NoiseSpec::isotropic(3, 0.1)?,
        StepSchedule::default(),
    )?;
    let mut rng = replication_rng(seed, 0);
    let traj = engine.run(engine.initial_state(), steps, (steps / 10).max(1), &mut rng)?;
    println!("{:>8} {:>12} {:>12} {:>12}", "k", "gamma", "consensus", "dist to x*");
    for r in &traj.records {
        println!(
            "{:>8} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.state.completed(),
            r.gamma,
            r.diagnostics.consensus_error,
            r.diagnostics.dist_to_optimum.unwrap_or(f64::NAN)
        );
    }
    let last = &traj.last().state;
    for i in 0..3 {
        println!("agent {}: {:.4}", i + 1, last.agent_x(i, 3).transpose());
    }
    Ok(())
}
