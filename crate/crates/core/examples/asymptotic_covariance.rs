//! Drift matrix and limit covariances for the three-agent benchmark.

use distopt::asymptotics::AsymptoticModel;
use distopt::harness::config::ExperimentConfig;

fn main() -> distopt::Result<()> {
    let exp = ExperimentConfig::section_six().build()?;
    let model = AsymptoticModel::from_engine(&exp.engine)?;
    let s = model.summary();
    println!("spectral abscissa of F: {:.6} (Hurwitz: {})", s.spectral_abscissa, s.hurwitz);
    println!("Lyapunov residual: {:.2e}", s.lyapunov_residual);
    for (i, (last, avg)) in model
        .agent_blocks(&model.sigma)
        .iter()
        .zip(model.agent_blocks(&model.sigma_avg))
        .enumerate()
    {
        println!("agent {} last-iterate block:{last}", i + 1);
        println!("agent {} averaged block:{avg}", i + 1);
    }
    println!(
        "trace of X blocks: last {:.4}, averaged {:.4}",
        model.x_block(&model.sigma).trace(),
        model.x_block(&model.sigma_avg).trace()
    );
    Ok(())
}
