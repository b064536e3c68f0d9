//! A two-agent problem with box constraints defined in TOML.

use distopt::harness::config::ExperimentConfig;
use distopt::harness::montecarlo::{median, run_monte_carlo, MonteCarloOptions};

const CONFIG: &str = r#"
mode = "montecarlo"
seed = 3
steps = 20000
replications = 50

[[problem.agents]]
cost = { quadratic = { matrix = [[2.0, 0.0], [0.0, 1.0]], center = [1.0, 1.0] } }
set = { box = { lower = [-0.5, -0.5], upper = [0.5, 0.5] } }
gradient_noise = { additive = { variance = 0.05 } }

[[problem.agents]]
cost = { quadratic = { matrix = [[1.0, 0.0], [0.0, 3.0]], center = [0.0, -1.0] } }
set = "full_space"
gradient_noise = { additive = { variance = 0.05 } }

[[graph.atoms]]
prob = 0.7
edges = [[1, 2, 1.0]]
undirected = true

[[graph.atoms]]
prob = 0.3
edges = []

[noise.primal]
variance = 0.01

[noise.dual]
variance = 0.01
"#;

fn main() -> distopt::Result<()> {
    let c = ExperimentConfig::from_toml(CONFIG)?;
    let exp = c.build()?;
    let mut opts = MonteCarloOptions::new(c.replications, c.steps, c.seed);
    opts.checkpoints = vec![100, 1000, c.steps];
    let mc = run_monte_carlo(&exp.engine, &exp.init, &opts, None)?;
    for &k in &opts.checkpoints {
        let cons: Vec<f64> = mc.checkpoint(k).iter().map(|c| c.consensus_error).collect();
        println!("k = {k:>6}: median consensus error {:.4e}", median(&cons));
    }
    let mean = mc
        .replications
        .iter()
        .fold(nalgebra::DVector::zeros(2), |acc, r| acc + r.final_state.agent_x(0, 2))
        / mc.replications.len() as f64;
    println!("agent 1 mean estimate {:.4}", mean.transpose());
    Ok(())
}
