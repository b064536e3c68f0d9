//! Split one step's randomness into the three noise terms and compare their
//! average squared size with the moment bounds.

use distopt::engine::{decompose_noise, Engine, NoiseSpec, StepSchedule, SystemState};
use distopt::network::GraphDistribution;
use distopt::problem::section_six_problem;
use distopt::replication_rng;
use nalgebra::DVector;

fn main() -> distopt::Result<()> {
    let engine = Engine::new(
        section_six_problem(),
        GraphDistribution::gossip(3, 1.0)?,
        NoiseSpec::isotropic(3, 0.1)?,
        StepSchedule::default(),
    )?;
    let state = SystemState::new(
        DVector::from_fn(9, |i, _| (i as f64 * 0.7).sin()),
        DVector::from_fn(9, |i, _| (i as f64 * 0.3).cos()),
    )?;
    let bounds = engine.noise_bounds();
    println!("{bounds:#?}");
    let lbar = engine.mean_laplacian().clone();
    let mut rng = replication_rng(3, 0);
    let draws = 20_000;
    let mut sq = [0.0; 3];
    for _ in 0..draws {
        let real = engine.draw(&state, &mut rng);
        let v = &real.gradients - engine.problem().stacked_gradient(&state.x);
        let t = decompose_noise(
            &real.graph.laplacian(),
            &lbar,
            &state,
            &real.aggregated_omega(3),
            &real.aggregated_zeta(3),
            &v,
        );
        sq[0] += t.e1.norm_squared();
        sq[1] += t.e2.norm_squared();
        sq[2] += t.e3.norm_squared();
    }
    let limits = [bounds.e1(&state), bounds.e2(&state), bounds.e3(&state)];
    for (j, (s, b)) in sq.iter().zip(limits).enumerate() {
        println!("E||e{}||^2 ~ {:.4}   bound {:.4}", j + 1, s / draws as f64, b);
    }
    Ok(())
}
