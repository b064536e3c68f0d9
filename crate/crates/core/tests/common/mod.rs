#![allow(dead_code)]

use distopt::engine::{Engine, NoiseSpec, StepRealization, StepSchedule, SystemState};
use distopt::linalg::kron_eye;
use distopt::network::{AdjacencyMatrix, GraphDistribution};
use distopt::problem::section_six_problem;
use distopt::SimRng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn section_six_engine() -> Engine {
    Engine::new(
        section_six_problem(),
        GraphDistribution::gossip(3, 1.0).unwrap(),
        NoiseSpec::isotropic(3, 0.1).unwrap(),
        StepSchedule::default(),
    )
    .unwrap()
}

/// A fixed graph whose Laplacian equals the gossip mean Laplacian.
pub fn mean_gossip_graph() -> GraphDistribution {
    GraphDistribution::single(AdjacencyMatrix::complete(3, 1.0 / 3.0)).unwrap()
}

pub fn random_state(rng: &mut SimRng, dim: usize, scale: f64, k: u64) -> SystemState {
    let mut s = SystemState::new(
        DVector::from_fn(dim, |_, _| rng.random_range(-scale..scale)),
        DVector::from_fn(dim, |_, _| rng.random_range(-scale..scale)),
    )
    .unwrap();
    s.k = k;
    s
}

/// Stacked-matrix form of one step using the same realisation.
pub fn compact_step(engine: &Engine, state: &SystemState, draw: &StepRealization) -> (SystemState, DVector<f64>) {
    let p = engine.problem();
    let m = p.m;
    let gamma = engine.schedule().gamma(state.k);
    let lk = kron_eye(&draw.graph.laplacian(), m);
    let omega = draw.aggregated_omega(m);
    let zeta = draw.aggregated_zeta(m);
    let pre = &state.x - &draw.gradients * gamma - &lk * (&state.lambda + &state.x) * gamma + (&zeta + &omega) * gamma;
    let lambda = &state.lambda + (&lk * &state.x - &omega) * gamma;
    let mut x = pre.clone();
    for i in 0..p.n {
        let xi = p.sets[i].project(&pre.rows(i * m, m).into_owned());
        x.rows_mut(i * m, m).copy_from(&xi);
    }
    (
        SystemState {
            k: state.k + 1,
            x,
            lambda,
        },
        pre,
    )
}

/// Pre-projection argument and dual update rebuilt from the mean Laplacian
/// plus the three noise terms.
pub fn mean_field_step(
    engine: &Engine,
    state: &SystemState,
    e1: &DVector<f64>,
    e2: &DVector<f64>,
    e3: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let p = engine.problem();
    let gamma = engine.schedule().gamma(state.k);
    let lbar = kron_eye(engine.mean_laplacian(), p.m);
    let grad = p.stacked_gradient(&state.x);
    let pre = &state.x - grad * gamma - &lbar * (&state.lambda + &state.x) * gamma + (e1 + e2) * gamma;
    let lambda = &state.lambda + (&lbar * &state.x + e3) * gamma;
    (pre, lambda)
}

pub fn max_abs(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

pub fn random_hurwitz(rng: &mut SimRng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let shift = distopt::asymptotics::spectral_abscissa(&a);
    a - DMatrix::identity(d, d) * (shift + rng.random_range(0.2..1.0))
}

pub fn random_psd(rng: &mut SimRng, d: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose()
}

/// `∫₀^T e^{Ft} Σ₁ e^{Fᵀt} dt` by composite Simpson on a uniform grid with
/// the exponential propagated by its exact one-step factor.
pub fn lyapunov_quadrature(f: &DMatrix<f64>, sigma1: &DMatrix<f64>, horizon: f64, intervals: usize) -> DMatrix<f64> {
    let d = f.nrows();
    let h = horizon / intervals as f64;
    let step = (f * h).exp();
    let mut e = DMatrix::identity(d, d);
    let mut acc = DMatrix::zeros(d, d);
    for i in 0..=intervals {
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (&e * sigma1 * e.transpose()) * w;
        e = &step * e;
    }
    acc * (h / 3.0)
}
