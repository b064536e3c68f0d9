//! The distributed projected primal-dual recursion with noisy links.
//!
//! Each step samples one graph, one gradient observation per agent and one
//! pair `(ω_ij, ζ_ij)` per edge present in the graph. Every agent then reads
//! its neighbours' perturbed iterates `x_j + ω_ij`, `λ_j + ζ_ij` from the
//! frozen current state and updates
//!
//! ```text
//! x_i ← P_Ωi( x_i − γ g_i − γ Σ_j a_ij (λ_i − λ_ij) − γ Σ_j a_ij (x_i − x_ij) )
//! λ_i ← λ_i + γ Σ_j a_ij (x_i − x_ij)
//! ```

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{AdjacencyMatrix, GraphModel, GraphMoments, MatrixNorm};
use crate::noise::{CovarianceSampler, NoiseFamily};
use crate::problem::ProblemSpec;
use crate::SimRng;

/// `γ_k = gamma0 · k^(−nu)` for `k ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub gamma0: f64,
    pub nu: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            nu: 0.75,
        }
    }
}

impl StepSchedule {
    /// Checked constructor: `gamma0 > 0` and `nu ∈ (0.5, 1]`.
    pub fn new(gamma0: f64, nu: f64) -> Result<Self> {
        let s = Self { gamma0, nu };
        s.validate()?;
        Ok(s)
    }

    /// Schedule with arbitrary exponent, e.g. a constant step for `nu = 0`.
    pub fn unchecked(gamma0: f64, nu: f64) -> Self {
        Self { gamma0, nu }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0) {
            return Err(Error::config("schedule.gamma0", format!("must be > 0, got {}", self.gamma0)));
        }
        if !(self.nu > 0.5 && self.nu <= 1.0) {
            return Err(Error::config("schedule.nu", format!("must lie in (0.5, 1], got {}", self.nu)));
        }
        Ok(())
    }

    /// The regime covered by the limit theorems: `gamma0 = 1`, `nu ∈ (2/3, 1)`.
    pub fn validate_normality(&self) -> Result<()> {
        if self.gamma0 != 1.0 {
            return Err(Error::config(
                "schedule.gamma0",
                format!("normality analysis needs gamma0 = 1, got {}", self.gamma0),
            ));
        }
        if !(self.nu > 2.0 / 3.0 && self.nu < 1.0) {
            return Err(Error::config(
                "schedule.nu",
                format!("normality analysis needs nu in (2/3, 1), got {}", self.nu),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn gamma(&self, k: u64) -> f64 {
        self.gamma0 * (k as f64).powf(-self.nu)
    }
}

/// Covariances of one link-noise channel: a shared matrix plus optional
/// per-pair overrides keyed by `(receiver, sender)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkNoise {
    default: CovarianceSampler,
    pairs: BTreeMap<(usize, usize), CovarianceSampler>,
}

impl LinkNoise {
    pub fn shared(cov: DMatrix<f64>, family: NoiseFamily) -> Result<Self> {
        Ok(Self {
            default: CovarianceSampler::new(cov, family)?,
            pairs: BTreeMap::new(),
        })
    }

    pub fn isotropic(m: usize, variance: f64, family: NoiseFamily) -> Result<Self> {
        Self::shared(DMatrix::identity(m, m) * variance, family)
    }

    pub fn zero(m: usize) -> Self {
        Self {
            default: CovarianceSampler::zero(m),
            pairs: BTreeMap::new(),
        }
    }

    pub fn with_pair(mut self, i: usize, j: usize, cov: DMatrix<f64>, family: NoiseFamily) -> Result<Self> {
        self.pairs.insert((i, j), CovarianceSampler::new(cov, family)?);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.default.dim()
    }

    pub fn pair(&self, i: usize, j: usize) -> &CovarianceSampler {
        self.pairs.get(&(i, j)).unwrap_or(&self.default)
    }

    pub fn overrides(&self) -> impl Iterator<Item = ((usize, usize), &CovarianceSampler)> {
        self.pairs.iter().map(|(&k, v)| (k, v))
    }

    pub fn default_sampler(&self) -> &CovarianceSampler {
        &self.default
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            default: self.default.scaled(c),
            pairs: self.pairs.iter().map(|(&k, v)| (k, v.scaled(c))).collect(),
        }
    }

    /// `max_ij tr R_ij` over pairs with `E[a_ij²] > 0`.
    fn max_trace(&self, sigma: &DMatrix<f64>) -> f64 {
        let n = sigma.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if sigma[(i, j)] > 0.0 {
                    worst = worst.max(self.pair(i, j).trace());
                }
            }
        }
        worst
    }

    /// `R_i = Σ_j σ_ij R_ij` stacked block-diagonally.
    pub fn aggregated_covariance(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let n = sigma.nrows();
        let m = self.dim();
        let blocks: Vec<DMatrix<f64>> = (0..n)
            .map(|i| {
                (0..n).fold(DMatrix::zeros(m, m), |acc, j| {
                    if sigma[(i, j)] > 0.0 {
                        acc + self.pair(i, j).cov() * sigma[(i, j)]
                    } else {
                        acc
                    }
                })
            })
            .collect();
        linalg::block_diag(&blocks)
    }

    fn validate(&self, n: usize, m: usize, what: &str) -> Result<()> {
        if self.dim() != m {
            return Err(Error::Dimension(format!(
                "{what} noise has dimension {}, expected {m}",
                self.dim()
            )));
        }
        for ((i, j), s) in self.overrides() {
            if i >= n || j >= n || i == j {
                return Err(Error::config(
                    format!("noise.{what}.pairs"),
                    format!("pair ({}, {}) is not a valid link", i + 1, j + 1),
                ));
            }
            if s.dim() != m {
                return Err(Error::Dimension(format!("{what} noise for pair ({i}, {j}) has wrong size")));
            }
        }
        Ok(())
    }
}

/// Communication noise on both channels. Gradient noise lives on the costs.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    /// `ω_ij` perturbing the received primal iterate.
    pub primal: LinkNoise,
    /// `ζ_ij` perturbing the received dual iterate.
    pub dual: LinkNoise,
}

impl NoiseSpec {
    pub fn zero(m: usize) -> Self {
        Self {
            primal: LinkNoise::zero(m),
            dual: LinkNoise::zero(m),
        }
    }

    pub fn isotropic(m: usize, variance: f64) -> Result<Self> {
        Ok(Self {
            primal: LinkNoise::isotropic(m, variance, NoiseFamily::Gaussian)?,
            dual: LinkNoise::isotropic(m, variance, NoiseFamily::Gaussian)?,
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            primal: self.primal.scaled(c),
            dual: self.dual.scaled(c),
        }
    }

    /// `μ² = max` over live pairs and both channels of `tr R`.
    pub fn mu_squared(&self, sigma: &DMatrix<f64>) -> f64 {
        self.primal.max_trace(sigma).max(self.dual.max_trace(sigma))
    }
}

/// Stacked primal and dual iterates at step `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    /// Index of the next step to take; starts at 1.
    pub k: u64,
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl SystemState {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            k: 1,
            x: DVector::zeros(n * m),
            lambda: DVector::zeros(n * m),
        }
    }

    pub fn new(x: DVector<f64>, lambda: DVector<f64>) -> Result<Self> {
        if x.len() != lambda.len() {
            return Err(Error::Dimension("primal and dual states differ in length".into()));
        }
        Ok(Self { k: 1, x, lambda })
    }

    /// Number of completed steps.
    pub fn completed(&self) -> u64 {
        self.k - 1
    }

    pub fn agent_x(&self, i: usize, m: usize) -> DVector<f64> {
        linalg::agent_block(&self.x, i, m)
    }
}

/// `max_{i,j} ‖x_i − x_j‖`.
pub fn consensus_error(x: &DVector<f64>, m: usize) -> f64 {
    let n = x.len() / m;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = (0..m)
                .map(|c| (x[i * m + c] - x[j * m + c]).powi(2))
                .sum();
            worst = worst.max(d);
        }
    }
    worst.sqrt()
}

/// `max_i ‖x_i − x*‖`.
pub fn distance_to_optimum(x: &DVector<f64>, x_star: &DVector<f64>) -> f64 {
    let m = x_star.len();
    let n = x.len() / m;
    (0..n)
        .map(|i| {
            (0..m)
                .map(|c| (x[i * m + c] - x_star[c]).powi(2))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        .sqrt()
}

/// Noise drawn on one link `i ← j`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkDraw {
    pub receiver: usize,
    pub sender: usize,
    pub weight: f64,
    pub omega: DVector<f64>,
    pub zeta: DVector<f64>,
}

/// All randomness consumed by one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRealization {
    pub graph: AdjacencyMatrix,
    /// Stacked gradient observations `g_i`.
    pub gradients: DVector<f64>,
    /// One entry per present edge, receiver-major.
    pub links: Vec<LinkDraw>,
}

impl StepRealization {
    /// `ω_i = Σ_j a_ij ω_ij`, stacked.
    pub fn aggregated_omega(&self, m: usize) -> DVector<f64> {
        self.aggregate(m, |l| &l.omega)
    }

    /// `ζ_i = Σ_j a_ij ζ_ij`, stacked.
    pub fn aggregated_zeta(&self, m: usize) -> DVector<f64> {
        self.aggregate(m, |l| &l.zeta)
    }

    fn aggregate(&self, m: usize, pick: impl Fn(&LinkDraw) -> &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.graph.n() * m);
        for l in &self.links {
            let mut block = out.rows_mut(l.receiver * m, m);
            block.axpy(l.weight, pick(l), 1.0);
        }
        out
    }
}

/// The three noise terms of the rewritten recursion
/// `X' = P(X − γ∇f̃ − γ(L̄⊗I)(Λ+X) + γ(e1+e2))`, `Λ' = Λ + γ(L̄⊗I)X + γ e3`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTerms {
    pub e1: DVector<f64>,
    pub e2: DVector<f64>,
    pub e3: DVector<f64>,
}

/// `e1 = ((L̄−L_k)⊗I)(Λ+X)`, `e2 = ζ + ω − v`, `e3 = ((L_k−L̄)⊗I)X − ω`.
pub fn decompose_noise(
    laplacian_k: &DMatrix<f64>,
    mean_laplacian: &DMatrix<f64>,
    state: &SystemState,
    omega: &DVector<f64>,
    zeta: &DVector<f64>,
    v: &DVector<f64>,
) -> NoiseTerms {
    let m = state.x.len() / laplacian_k.nrows();
    let diff = linalg::kron_eye(&(mean_laplacian - laplacian_k), m);
    let e1 = &diff * (&state.lambda + &state.x);
    let e2 = zeta + omega - v;
    let e3 = -(&diff * &state.x) - omega;
    NoiseTerms { e1, e2, e3 }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub laplacian: DMatrix<f64>,
    pub noise: NoiseTerms,
    /// Stacked gradient noise `v = g − ∇f̃(X)`.
    pub gradient_noise: DVector<f64>,
    /// Stacked argument of the projection.
    pub pre_projection: DVector<f64>,
    /// Consensus error of the new state.
    pub consensus_error: f64,
    /// `max_i ‖x_i − x*‖` of the new state, when `x*` is known.
    pub dist_to_optimum: Option<f64>,
}

/// Constants of the conditional second-moment bounds on `e1`, `e2`, `e3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseBounds {
    /// `E‖L_k − L̄‖²`.
    pub c01: f64,
    /// `3 c_v n + 6 n³ μ² η²`.
    pub c02: f64,
    /// `n³ μ² η²`.
    pub c03: f64,
    pub c_v: f64,
    pub mu2: f64,
    pub eta2: f64,
}

impl NoiseBounds {
    pub fn e1(&self, state: &SystemState) -> f64 {
        self.c01 * (&state.lambda + &state.x).norm_squared()
    }

    pub fn e2(&self, state: &SystemState) -> f64 {
        self.c02 + 3.0 * self.c_v * state.x.norm_squared()
    }

    pub fn e3(&self, state: &SystemState) -> f64 {
        self.c01 * state.x.norm_squared() + self.c03
    }
}

/// A recorded point of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub state: SystemState,
    /// Step size of the step that produced `state`.
    pub gamma: f64,
    pub diagnostics: StepDiagnostics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectories hold at least one record")
    }
}

/// A problem wired to a network, a noise model and a step-size schedule.
#[derive(Clone, Debug)]
pub struct Engine {
    problem: ProblemSpec,
    graph: GraphModel,
    noise: NoiseSpec,
    schedule: StepSchedule,
    moments: GraphMoments,
    /// Assert `x_i ∈ Ω_i` after every step.
    pub check_feasibility: bool,
}

impl Engine {
    pub fn new(
        problem: ProblemSpec,
        graph: impl Into<GraphModel>,
        noise: NoiseSpec,
        schedule: StepSchedule,
    ) -> Result<Self> {
        let graph = graph.into();
        if graph.n() != problem.n {
            return Err(Error::Dimension(format!(
                "graph has {} agents, problem has {}",
                graph.n(),
                problem.n
            )));
        }
        noise.primal.validate(problem.n, problem.m, "primal")?;
        noise.dual.validate(problem.n, problem.m, "dual")?;
        let moments = graph.moments(MatrixNorm::Spectral)?;
        Ok(Self {
            problem,
            graph,
            noise,
            schedule,
            moments,
            check_feasibility: cfg!(debug_assertions),
        })
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn graph(&self) -> &GraphModel {
        &self.graph
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn schedule(&self) -> StepSchedule {
        self.schedule
    }

    pub fn moments(&self) -> &GraphMoments {
        &self.moments
    }

    pub fn mean_laplacian(&self) -> &DMatrix<f64> {
        &self.moments.mean_laplacian
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState::zeros(self.problem.n, self.problem.m)
    }

    /// Draw the graph, gradient observations and link noise for one step.
    ///
    /// Draw order is fixed: graph, then `g_1 … g_n`, then `(ω_ij, ζ_ij)` for
    /// each present edge in receiver-major order.
    pub fn draw(&self, state: &SystemState, rng: &mut SimRng) -> StepRealization {
        let (n, m) = (self.problem.n, self.problem.m);
        let graph = self.graph.sample(rng).into_owned();
        let mut gradients = DVector::zeros(n * m);
        for (i, cost) in self.problem.costs.iter().enumerate() {
            let g = cost.observe(&state.agent_x(i, m), rng);
            gradients.rows_mut(i * m, m).copy_from(&g);
        }
        let mut links = Vec::new();
        for i in 0..n {
            for (j, w) in graph.neighbors(i) {
                links.push(LinkDraw {
                    receiver: i,
                    sender: j,
                    weight: w,
                    omega: self.noise.primal.pair(i, j).sample(rng),
                    zeta: self.noise.dual.pair(i, j).sample(rng),
                });
            }
        }
        StepRealization {
            graph,
            gradients,
            links,
        }
    }

    /// Per-agent update from the frozen state. Returns the new state and the
    /// stacked pre-projection argument.
    pub fn apply(&self, state: &SystemState, draw: &StepRealization) -> (SystemState, DVector<f64>) {
        let (n, m) = (self.problem.n, self.problem.m);
        let gamma = self.schedule.gamma(state.k);
        let x = &state.x;
        let lam = &state.lambda;
        let mut pre = x - &draw.gradients * gamma;
        let mut lambda = lam.clone();
        for l in &draw.links {
            let (i, j, a) = (l.receiver, l.sender, l.weight);
            for c in 0..m {
                let x_ij = x[j * m + c] + l.omega[c];
                let lam_ij = lam[j * m + c] + l.zeta[c];
                let primal_gap = a * (x[i * m + c] - x_ij);
                pre[i * m + c] -= gamma * (a * (lam[i * m + c] - lam_ij) + primal_gap);
                lambda[i * m + c] += gamma * primal_gap;
            }
        }
        let mut next_x = pre.clone();
        for i in 0..n {
            let set = &self.problem.sets[i];
            if !set.is_full_space() {
                let p = set.project(&pre.rows(i * m, m).into_owned());
                next_x.rows_mut(i * m, m).copy_from(&p);
            }
        }
        if self.check_feasibility {
            for i in 0..n {
                let xi = next_x.rows(i * m, m).into_owned();
                assert!(
                    self.problem.sets[i].contains(&xi, 1e-9),
                    "agent {i} left its constraint set at step {}",
                    state.k
                );
            }
        }
        (
            SystemState {
                k: state.k + 1,
                x: next_x,
                lambda,
            },
            pre,
        )
    }

    /// One step with full diagnostics.
    pub fn step(&self, state: &SystemState, rng: &mut SimRng) -> (SystemState, StepDiagnostics) {
        let draw = self.draw(state, rng);
        let (next, pre) = self.apply(state, &draw);
        let diag = self.diagnose(state, &draw, &next, pre);
        (next, diag)
    }

    pub fn diagnose(
        &self,
        state: &SystemState,
        draw: &StepRealization,
        next: &SystemState,
        pre_projection: DVector<f64>,
    ) -> StepDiagnostics {
        let m = self.problem.m;
        let laplacian = draw.graph.laplacian();
        let v = &draw.gradients - self.problem.stacked_gradient(&state.x);
        let noise = decompose_noise(
            &laplacian,
            self.mean_laplacian(),
            state,
            &draw.aggregated_omega(m),
            &draw.aggregated_zeta(m),
            &v,
        );
        StepDiagnostics {
            laplacian,
            noise,
            gradient_noise: v,
            pre_projection,
            consensus_error: consensus_error(&next.x, m),
            dist_to_optimum: self
                .problem
                .known_optimum
                .as_ref()
                .map(|xs| distance_to_optimum(&next.x, xs)),
        }
    }

    /// One step without diagnostics.
    pub fn advance(&self, state: &SystemState, rng: &mut SimRng) -> SystemState {
        let draw = self.draw(state, rng);
        self.apply(state, &draw).0
    }

    /// Run `steps` steps, recording every `record_every` steps and the final state.
    pub fn run(
        &self,
        init: SystemState,
        steps: u64,
        record_every: u64,
        rng: &mut SimRng,
    ) -> Result<Trajectory> {
        if steps == 0 {
            return Err(Error::config("steps", "must be >= 1"));
        }
        if record_every == 0 {
            return Err(Error::config("record_every", "must be >= 1"));
        }
        self.check_state(&init)?;
        let mut records = Vec::new();
        let mut state = init;
        for t in 1..=steps {
            if t % record_every == 0 || t == steps {
                let gamma = self.schedule.gamma(state.k);
                let (next, diagnostics) = self.step(&state, rng);
                records.push(Record {
                    state: next.clone(),
                    gamma,
                    diagnostics,
                });
                state = next;
            } else {
                state = self.advance(&state, rng);
            }
        }
        Ok(Trajectory {
            n: self.problem.n,
            m: self.problem.m,
            records,
        })
    }

    /// Run `steps` steps calling `observe` on every new state.
    pub fn run_with(
        &self,
        init: SystemState,
        steps: u64,
        rng: &mut SimRng,
        mut observe: impl FnMut(&SystemState),
    ) -> SystemState {
        let mut state = init;
        for _ in 0..steps {
            state = self.advance(&state, rng);
            observe(&state);
        }
        state
    }

    pub fn check_state(&self, state: &SystemState) -> Result<()> {
        let dim = self.problem.dim();
        if state.x.len() != dim || state.lambda.len() != dim {
            return Err(Error::Dimension(format!(
                "state has length {}/{}, expected {dim}",
                state.x.len(),
                state.lambda.len()
            )));
        }
        if state.k == 0 {
            return Err(Error::config("init.k", "step index starts at 1"));
        }
        Ok(())
    }

    /// Constants of the second-moment bounds on the noise terms.
    pub fn noise_bounds(&self) -> NoiseBounds {
        let n = self.problem.n as f64;
        let sigma = &self.moments.edge_second_moments;
        let eta2 = sigma.max();
        let mu2 = self.noise.mu_squared(sigma);
        let c_v = self
            .problem
            .costs
            .iter()
            .map(|c| c.noise_growth_constant())
            .fold(0.0, f64::max);
        let c03 = n.powi(3) * mu2 * eta2;
        NoiseBounds {
            c01: self.moments.laplacian_variance,
            c02: 3.0 * c_v * n + 6.0 * c03,
            c03,
            c_v,
            mu2,
            eta2,
        }
    }
}
