//! Independent replications of one experiment.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::asymptotics::Reducer;
use crate::engine::{consensus_error, distance_to_optimum, Engine, SystemState};
use crate::error::{Error, Result};
use crate::replication_rng;

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloOptions {
    pub replications: usize,
    pub steps: u64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub parallel: Option<usize>,
    /// Completed-step counts at which consensus and optimality are sampled.
    pub checkpoints: Vec<u64>,
    /// Accumulate the running mean of the reduced state.
    pub track_average: bool,
}

impl MonteCarloOptions {
    pub fn new(replications: usize, steps: u64, seed: u64) -> Self {
        Self {
            replications,
            steps,
            seed,
            parallel: None,
            checkpoints: Vec::new(),
            track_average: false,
        }
    }
}

/// Consensus and optimality gap after `k` completed steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Checkpoint {
    pub k: u64,
    pub consensus_error: f64,
    pub dist_to_optimum: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub final_state: SystemState,
    /// Step size of the last step.
    pub gamma: f64,
    pub checkpoints: Vec<Checkpoint>,
    /// `θ̄_K = (1/K) Σ_{k≤K} θ_k`, when requested.
    pub average_theta: Option<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloResult {
    pub n: usize,
    pub m: usize,
    pub steps: u64,
    /// Ordered by replication index.
    pub replications: Vec<Replication>,
}

impl MonteCarloResult {
    /// Values of checkpoint `k` across replications.
    pub fn checkpoint(&self, k: u64) -> Vec<Checkpoint> {
        self.replications
            .iter()
            .filter_map(|r| r.checkpoints.iter().find(|c| c.k == k).copied())
            .collect()
    }
}

/// Run one replication on stream `index` of `seed`.
pub fn run_replication(
    engine: &Engine,
    init: &SystemState,
    opts: &MonteCarloOptions,
    reducer: Option<&Reducer>,
    index: usize,
) -> Replication {
    let mut rng = replication_rng(opts.seed, index as u64);
    let m = engine.problem().m;
    let x_star = engine.problem().known_optimum.clone();
    let mut checkpoints = Vec::new();
    let mut sum: Option<DVector<f64>> = None;
    let track = opts.track_average.then_some(reducer).flatten();
    let final_state = engine.run_with(init.clone(), opts.steps, &mut rng, |s| {
        let done = s.completed();
        if opts.checkpoints.contains(&done) {
            checkpoints.push(Checkpoint {
                k: done,
                consensus_error: consensus_error(&s.x, m),
                dist_to_optimum: x_star.as_ref().map(|xs| distance_to_optimum(&s.x, xs)),
            });
        }
        if let Some(r) = track {
            let t = r.theta(s);
            match &mut sum {
                Some(acc) => *acc += t,
                None => sum = Some(t),
            }
        }
    });
    let gamma = engine.schedule().gamma(final_state.k - 1);
    Replication {
        index,
        final_state,
        gamma,
        checkpoints,
        average_theta: sum.map(|s| s / opts.steps as f64),
    }
}

/// Run all replications. Output is identical for any thread count.
pub fn run_monte_carlo(
    engine: &Engine,
    init: &SystemState,
    opts: &MonteCarloOptions,
    reducer: Option<&Reducer>,
) -> Result<MonteCarloResult> {
    if opts.replications == 0 {
        return Err(Error::config("replications", "must be >= 1"));
    }
    if opts.steps == 0 {
        return Err(Error::config("steps", "must be >= 1"));
    }
    if opts.track_average && reducer.is_none() {
        return Err(Error::InvalidProblem("running averages need reduced coordinates".into()));
    }
    engine.check_state(init)?;
    let work = || -> Vec<Replication> {
        (0..opts.replications)
            .into_par_iter()
            .map(|i| run_replication(engine, init, opts, reducer, i))
            .collect()
    };
    let replications = match opts.parallel {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::config("parallel", e.to_string()))?
            .install(work),
        None => work(),
    };
    Ok(MonteCarloResult {
        n: engine.problem().n,
        m: engine.problem().m,
        steps: opts.steps,
        replications,
    })
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
