//! Distributed constrained stochastic optimisation over random networks.
//!
//! Agents minimise `Σ_i f_i(x)` subject to `x ∈ ∩_i Ω_i` by a projected
//! primal-dual stochastic-approximation scheme. Communication happens over an
//! i.i.d. sequence of random graphs and every exchanged value is corrupted by
//! additive noise; gradients are observed with noise too.
//!
//! - [`network`]: random graphs, Laplacians and the spectral splitting of the mean Laplacian.
//! - [`problem`]: local costs, gradient oracles, constraint sets.
//! - [`engine`]: the recursion itself plus its noise decomposition.
//! - [`asymptotics`]: drift matrix, noise covariances and limit covariances.
//! - [`stats`]: Kolmogorov–Smirnov test and covariance estimators.
//! - [`harness`]: configuration, Monte-Carlo studies and file output.

pub mod asymptotics;
pub mod engine;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod noise;
pub mod problem;
pub mod stats;

pub use error::{Error, Result};

/// Random stream used everywhere. Replication `r` of a study seeded with `s`
/// uses stream `r` of `ChaCha8Rng::seed_from_u64(s)`.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Independent stream `index` derived from `seed`.
pub fn replication_rng(seed: u64, index: u64) -> SimRng {
    use rand::SeedableRng;
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
