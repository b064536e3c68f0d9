//! Experiment configuration files (JSON or TOML).
//!
//! Agent indices are 1-based in files and 0-based everywhere else.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, LinkNoise, NoiseSpec, StepSchedule, SystemState};
use crate::error::{Error, Result};
use crate::network::{AdjacencyMatrix, GraphDistribution};
use crate::noise::NoiseFamily;
use crate::problem::{
    section_six_problem, ConstraintSet, CostFunction, GradientNoise, LocalCost, LogisticCost, ProblemSpec,
    QuadraticCost,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    SingleRun,
    Montecarlo,
    Normality,
    Efficiency,
}

fn default_seed() -> u64 {
    1
}

fn default_steps() -> u64 {
    1000
}

fn default_replications() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.05
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Compare against a fitted normal law instead of the theoretical one.
    #[serde(default, skip_serializing_if = "is_false")]
    pub fit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub problem: ProblemConfig,
    pub graph: GraphConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// `"section6"` for the three-agent estimation benchmark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimum: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_optimum: Option<Vec<f64>>,
    /// The intersection of the sets has a relative interior point.
    #[serde(default, skip_serializing_if = "is_false")]
    pub interior_declared: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub cost: CostConfig,
    #[serde(default)]
    pub set: SetConfig,
    #[serde(default)]
    pub gradient_noise: GradientNoiseConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CostConfig {
    /// `½ (x − center)ᵀ matrix (x − center) + ½ noise_variance`.
    Quadratic {
        matrix: Vec<Vec<f64>>,
        center: Vec<f64>,
        #[serde(default)]
        noise_variance: f64,
    },
    Logistic {
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        #[serde(default)]
        ridge: f64,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    #[default]
    FullSpace,
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    /// `{x : matrix · x = vector}`.
    Affine {
        matrix: Vec<Vec<f64>>,
        vector: Vec<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GradientNoiseConfig {
    #[default]
    None,
    /// Streaming-regression observations of a quadratic cost.
    Regression,
    Additive {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cov: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        family: NoiseFamily,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    /// `"gossip"` (one uniformly chosen edge per step) or `"complete"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<AtomConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// `[i, j, w]` triples, 1-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub undirected: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub primal: ChannelConfig,
    #[serde(default)]
    pub dual: ChannelConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Shorthand for `variance · I`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub family: NoiseFamily,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    /// Agent receiving the value, 1-based.
    pub receiver: usize,
    /// Agent sending the value, 1-based.
    pub sender: usize,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Stacked initial primal iterate (`n·m` entries).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

/// A validated configuration turned into runnable objects.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub engine: Engine,
    pub init: SystemState,
}

fn matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::config(
            format!("{path}[{bad}]"),
            format!("row has {} entries, expected {c}", rows[bad].len()),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::config(path, "entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

fn square(rows: &[Vec<f64>], m: usize, path: &str) -> Result<DMatrix<f64>> {
    let a = matrix(rows, path)?;
    if a.shape() != (m, m) {
        return Err(Error::config(
            path,
            format!("expected a {m}x{m} matrix, got {}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(a)
}

fn vector(v: &[f64], len: usize, path: &str) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::config(path, format!("expected {len} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(path, "entries must be finite"));
    }
    Ok(DVector::from_row_slice(v))
}

/// Re-label a library error with the config path it came from.
fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

impl ExperimentConfig {
    /// The three-agent benchmark: gossip graph, `N(0, 0.1 I)` link noise on
    /// both channels, `γ_k = k^(−0.75)`, 1000 replications of 1000 steps.
    pub fn section_six() -> Self {
        let channel = ChannelConfig {
            variance: Some(0.1),
            ..Default::default()
        };
        Self {
            mode: Mode::Normality,
            seed: 2016,
            steps: 1000,
            replications: 1000,
            record_every: None,
            alpha: 0.05,
            fit: true,
            output: None,
            problem: ProblemConfig {
                builtin: Some("section6".into()),
                ..Default::default()
            },
            graph: GraphConfig {
                builtin: Some("gossip".into()),
                weight: Some(1.0),
                atoms: Vec::new(),
            },
            noise: NoiseConfig {
                primal: channel.clone(),
                dual: channel,
            },
            schedule: StepSchedule::default(),
            init: None,
        }
    }

    /// Parse JSON or TOML, chosen by extension (`.toml` is TOML, else JSON).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if toml {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("<root>", e.message().to_string() + &span_hint(&e)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<root>", e.to_string()))
    }

    /// Validate and build the problem, network, noise and initial state.
    pub fn build(&self) -> Result<Experiment> {
        if self.steps == 0 {
            return Err(Error::config("steps", "must be >= 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be >= 1"));
        }
        if self.record_every == Some(0) {
            return Err(Error::config("record_every", "must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        self.schedule.validate()?;
        let problem = self.build_problem()?;
        let (n, m) = (problem.n, problem.m);
        let graph = self.build_graph(n)?;
        let noise = self.build_noise(n, m)?;
        let engine = Engine::new(problem, graph, noise, self.schedule).map_err(at("<root>"))?;
        engine
            .problem()
            .check_dual_optimum(engine.mean_laplacian())
            .map_err(at("problem.dual_optimum"))?;
        if matches!(self.mode, Mode::Normality | Mode::Efficiency) {
            let p = engine.problem();
            if !p.is_unconstrained() {
                return Err(Error::config("problem.agents", "normality and efficiency modes need unconstrained agents"));
            }
            if p.known_optimum.is_none() {
                return Err(Error::config("problem.optimum", "normality and efficiency modes need a known optimum"));
            }
            self.schedule.validate_normality()?;
        }
        let init = self.build_init(n, m)?;
        Ok(Experiment {
            config: self.clone(),
            engine,
            init,
        })
    }

    fn build_problem(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        let mut spec = match (&p.builtin, p.agents.is_empty()) {
            (Some(name), true) if name == "section6" => section_six_problem(),
            (Some(name), true) => {
                return Err(Error::config("problem.builtin", format!("unknown builtin `{name}`")))
            }
            (Some(_), false) => {
                return Err(Error::config("problem", "give either `builtin` or `agents`, not both"))
            }
            (None, true) => return Err(Error::config("problem.agents", "at least one agent is required")),
            (None, false) => {
                let m = match &p.agents[0].cost {
                    CostConfig::Quadratic { center, .. } => center.len(),
                    CostConfig::Logistic { features, .. } => features.first().map_or(0, Vec::len),
                };
                if m == 0 {
                    return Err(Error::config("problem.agents[0].cost", "dimension must be >= 1"));
                }
                let mut costs = Vec::new();
                let mut sets = Vec::new();
                for (i, a) in p.agents.iter().enumerate() {
                    let base = format!("problem.agents[{i}]");
                    costs.push(build_cost(a, m, &base)?);
                    sets.push(build_set(&a.set, m, &format!("{base}.set"))?);
                }
                ProblemSpec::new(costs, sets).map_err(at("problem.agents"))?
            }
        };
        if let Some(x) = &p.optimum {
            let v = vector(x, spec.m, "problem.optimum")?;
            spec = spec.with_optimum(v).map_err(at("problem.optimum"))?;
        }
        if let Some(l) = &p.dual_optimum {
            let v = vector(l, spec.dim(), "problem.dual_optimum")?;
            spec = spec.with_dual_optimum(v).map_err(at("problem.dual_optimum"))?;
        }
        spec.interior_declared = p.interior_declared;
        Ok(spec)
    }

    fn build_graph(&self, n: usize) -> Result<GraphDistribution> {
        let g = &self.graph;
        let weight = g.weight.unwrap_or(1.0);
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::config("graph.weight", "must be > 0"));
        }
        match (&g.builtin, g.atoms.is_empty()) {
            (Some(name), true) => match name.as_str() {
                "gossip" => GraphDistribution::gossip(n, weight).map_err(at("graph.builtin")),
                "complete" => {
                    GraphDistribution::single(AdjacencyMatrix::complete(n, weight)).map_err(at("graph.builtin"))
                }
                other => Err(Error::config("graph.builtin", format!("unknown builtin `{other}`"))),
            },
            (Some(_), false) => Err(Error::config("graph", "give either `builtin` or `atoms`, not both")),
            (None, true) => Err(Error::config("graph.atoms", "at least one atom is required")),
            (None, false) => {
                let mut atoms = Vec::new();
                for (r, atom) in g.atoms.iter().enumerate() {
                    let base = format!("graph.atoms[{r}]");
                    let a = match (&atom.matrix, &atom.edges) {
                        (Some(rows), None) => {
                            let mut w = square(rows, n, &format!("{base}.matrix"))?;
                            if atom.undirected {
                                let directed = w;
                                w = DMatrix::from_fn(n, n, |i, j| directed[(i, j)].max(directed[(j, i)]));
                            }
                            AdjacencyMatrix::new(w).map_err(at(&format!("{base}.matrix")))?
                        }
                        (None, Some(edges)) => {
                            let mut zero_based = Vec::with_capacity(edges.len());
                            for (e, &(i, j, w)) in edges.iter().enumerate() {
                                if i == 0 || j == 0 || i > n || j > n {
                                    return Err(Error::config(
                                        format!("{base}.edges[{e}]"),
                                        format!("agent indices are 1-based and at most {n}"),
                                    ));
                                }
                                zero_based.push((i - 1, j - 1, w));
                            }
                            AdjacencyMatrix::from_edges(n, &zero_based, atom.undirected)
                                .map_err(at(&format!("{base}.edges")))?
                        }
                        _ => {
                            return Err(Error::config(base, "give exactly one of `matrix` or `edges`"));
                        }
                    };
                    atoms.push((a, atom.prob));
                }
                GraphDistribution::new(atoms).map_err(at("graph.atoms"))
            }
        }
    }

    fn build_noise(&self, n: usize, m: usize) -> Result<NoiseSpec> {
        Ok(NoiseSpec {
            primal: build_channel(&self.noise.primal, n, m, "noise.primal")?,
            dual: build_channel(&self.noise.dual, n, m, "noise.dual")?,
        })
    }

    fn build_init(&self, n: usize, m: usize) -> Result<SystemState> {
        let mut s = SystemState::zeros(n, m);
        if let Some(init) = &self.init {
            if let Some(x) = &init.x {
                s.x = vector(x, n * m, "init.x")?;
            }
            if let Some(l) = &init.lambda {
                s.lambda = vector(l, n * m, "init.lambda")?;
            }
        }
        Ok(s)
    }
}

fn span_hint(e: &toml::de::Error) -> String {
    e.span().map_or_else(String::new, |s| format!(" (at byte {})", s.start))
}

fn build_cost(a: &AgentConfig, m: usize, base: &str) -> Result<LocalCost> {
    let cpath = format!("{base}.cost");
    let function = match &a.cost {
        CostConfig::Quadratic {
            matrix: r,
            center,
            noise_variance,
        } => {
            let r = square(r, m, &format!("{cpath}.quadratic.matrix"))?;
            let center = vector(center, m, &format!("{cpath}.quadratic.center"))?;
            if !(noise_variance.is_finite() && *noise_variance >= 0.0) {
                return Err(Error::config(format!("{cpath}.quadratic.noise_variance"), "must be >= 0"));
            }
            let scale = r.amax().max(1.0);
            if crate::linalg::max_abs_asymmetry(&r) > 1e-12 * scale
                || crate::linalg::min_sym_eigenvalue(&r) < -1e-12 * scale
            {
                return Err(Error::config(
                    format!("{cpath}.quadratic.matrix"),
                    "must be symmetric positive semi-definite",
                ));
            }
            CostFunction::Quadratic(QuadraticCost {
                r,
                center,
                noise_variance: *noise_variance,
            })
        }
        CostConfig::Logistic {
            features,
            labels,
            ridge,
        } => {
            let f = matrix(features, &format!("{cpath}.logistic.features"))?;
            if f.ncols() != m {
                return Err(Error::config(
                    format!("{cpath}.logistic.features"),
                    format!("expected {m} columns"),
                ));
            }
            let y = vector(labels, f.nrows(), &format!("{cpath}.logistic.labels"))?;
            if y.iter().any(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::config(format!("{cpath}.logistic.labels"), "labels must be +1 or -1"));
            }
            if !(ridge.is_finite() && *ridge >= 0.0) {
                return Err(Error::config(format!("{cpath}.logistic.ridge"), "must be >= 0"));
            }
            CostFunction::Logistic(LogisticCost {
                features: f,
                labels: y,
                ridge: *ridge,
            })
        }
    };
    let npath = format!("{base}.gradient_noise");
    let noise = match &a.gradient_noise {
        GradientNoiseConfig::None => GradientNoise::None,
        GradientNoiseConfig::Regression => GradientNoise::Regression,
        GradientNoiseConfig::Additive { variance, cov, family } => {
            let c = covariance(*variance, cov.as_deref(), m, &format!("{npath}.additive"))?;
            GradientNoise::Additive(crate::noise::CovarianceSampler::new(c, *family).map_err(at(&npath))?)
        }
    };
    LocalCost::new(function, noise).map_err(at(&npath))
}

fn covariance(variance: Option<f64>, cov: Option<&[Vec<f64>]>, m: usize, path: &str) -> Result<DMatrix<f64>> {
    match (variance, cov) {
        (Some(v), None) => {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{path}.variance"), "must be >= 0"));
            }
            Ok(DMatrix::identity(m, m) * v)
        }
        (None, Some(rows)) => square(rows, m, &format!("{path}.cov")),
        (None, None) => Ok(DMatrix::zeros(m, m)),
        (Some(_), Some(_)) => Err(Error::config(path, "give either `variance` or `cov`, not both")),
    }
}

fn build_set(s: &SetConfig, m: usize, path: &str) -> Result<ConstraintSet> {
    let set = match s {
        SetConfig::FullSpace => ConstraintSet::FullSpace,
        SetConfig::Box { lower, upper } => ConstraintSet::Box {
            lower: vector(lower, m, &format!("{path}.box.lower"))?,
            upper: vector(upper, m, &format!("{path}.box.upper"))?,
        },
        SetConfig::Ball { center, radius } => ConstraintSet::Ball {
            center: vector(center, m, &format!("{path}.ball.center"))?,
            radius: *radius,
        },
        SetConfig::Halfspace { normal, offset } => ConstraintSet::Halfspace {
            normal: vector(normal, m, &format!("{path}.halfspace.normal"))?,
            offset: *offset,
        },
        SetConfig::Affine { matrix: a, vector: b } => {
            let a = matrix(a, &format!("{path}.affine.matrix"))?;
            let b = vector(b, a.nrows(), &format!("{path}.affine.vector"))?;
            ConstraintSet::AffineSlab { matrix: a, vector: b }
        }
    };
    set.validate(m).map_err(at(path))?;
    Ok(set)
}

fn build_channel(c: &ChannelConfig, n: usize, m: usize, path: &str) -> Result<LinkNoise> {
    let cov = covariance(c.variance, c.cov.as_deref(), m, path)?;
    let mut link = LinkNoise::shared(cov, c.family).map_err(at(path))?;
    for (idx, p) in c.pairs.iter().enumerate() {
        let ppath = format!("{path}.pairs[{idx}]");
        if p.receiver == 0 || p.sender == 0 || p.receiver > n || p.sender > n || p.receiver == p.sender {
            return Err(Error::config(ppath, format!("need distinct 1-based agents at most {n}")));
        }
        let cov = square(&p.cov, m, &format!("{ppath}.cov"))?;
        link = link
            .with_pair(p.receiver - 1, p.sender - 1, cov, c.family)
            .map_err(at(&ppath))?;
    }
    Ok(link)
}

impl Experiment {
    pub fn n(&self) -> usize {
        self.engine.problem().n
    }

    pub fn m(&self) -> usize {
        self.engine.problem().m
    }
}
