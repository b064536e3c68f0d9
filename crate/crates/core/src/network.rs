//! Random communication graphs.
//!
//! A network is an i.i.d. sequence of weighted adjacency matrices. The
//! finite-support [`GraphDistribution`] makes every moment the algorithm and
//! its asymptotic analysis need (mean Laplacian, `E[a_ij²]`, `E‖L_k − L̄‖²`)
//! exactly computable. [`GeneratorGraph`] wraps an arbitrary sampler; its
//! moments are Monte-Carlo estimates and are flagged as such.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::SimRng;

/// Eigenvalue threshold below which a Laplacian eigenvalue counts as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-10;

/// Weighted adjacency matrix: `a[i][j] > 0` iff agent `i` hears agent `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    weights: DMatrix<f64>,
}

impl AdjacencyMatrix {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::InvalidAdjacency(format!(
                "matrix must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        let n = weights.nrows();
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidAdjacency(format!("self-edge at ({i}, {i})")));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidAdjacency(format!(
                        "entry ({i}, {j}) = {w} is not a nonnegative finite weight"
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n, n),
        }
    }

    pub fn complete(n: usize, weight: f64) -> Self {
        let mut w = DMatrix::from_element(n, n, weight);
        w.fill_diagonal(0.0);
        Self { weights: w }
    }

    /// Build from 0-based `(i, j, w)` triples. `undirected` also sets `(j, i)`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], undirected: bool) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, weight) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidAdjacency(format!(
                    "edge ({i}, {j}) out of range for {n} agents"
                )));
            }
            w[(i, j)] = weight;
            if undirected {
                w[(j, i)] = weight;
            }
        }
        Self::new(w)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// In-neighbors of `i` with their weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n()).filter_map(move |j| {
            let w = self.weights[(i, j)];
            (w > 0.0).then_some((j, w))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        linalg::max_abs_asymmetry(&self.weights) == 0.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weights: &self.weights * c,
        }
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(self)
    }
}

/// `L = D − A` with `D = diag(row sums)`.
pub fn laplacian(a: &AdjacencyMatrix) -> DMatrix<f64> {
    let n = a.n();
    let mut l = -a.matrix().clone();
    for i in 0..n {
        let degree: f64 = a.matrix().row(i).iter().sum();
        l[(i, i)] = degree;
    }
    l
}

/// Matrix norm used for `E‖L_k − L̄‖²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixNorm {
    #[default]
    Spectral,
    Frobenius,
}

impl MatrixNorm {
    pub fn apply(self, a: &DMatrix<f64>) -> f64 {
        match self {
            MatrixNorm::Spectral => linalg::spectral_norm(a),
            MatrixNorm::Frobenius => a.norm(),
        }
    }
}

/// Finite-support distribution over adjacency matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDistribution {
    atoms: Vec<AdjacencyMatrix>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GraphDistribution {
    pub fn new(atoms: Vec<(AdjacencyMatrix, f64)>) -> Result<Self> {
        let Some(first) = atoms.first() else {
            return Err(Error::InvalidDistribution("no atoms".into()));
        };
        let n = first.0.n();
        if n == 0 {
            return Err(Error::InvalidDistribution("zero agents".into()));
        }
        let mut total = 0.0;
        for (idx, (a, p)) in atoms.iter().enumerate() {
            if a.n() != n {
                return Err(Error::InvalidDistribution(format!(
                    "atom {idx} has {} agents, expected {n}",
                    a.n()
                )));
            }
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {idx} has non-positive probability {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let (atoms, probs): (Vec<_>, Vec<_>) = atoms.into_iter().unzip();
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        let dist = Self {
            atoms,
            probs,
            cumulative,
        };
        let mean_a = dist.mean_adjacency();
        let asym = linalg::max_abs_asymmetry(&mean_a);
        if asym > 1e-12 * mean_a.amax().max(1.0) {
            return Err(Error::InvalidDistribution(format!(
                "mean adjacency is not symmetric (max asymmetry {asym:e})"
            )));
        }
        mean_laplacian(&dist)?;
        Ok(dist)
    }

    /// A fixed (deterministic) graph.
    pub fn single(a: AdjacencyMatrix) -> Result<Self> {
        Self::new(vec![(a, 1.0)])
    }

    /// Gossip on the complete graph: each step one undirected edge is chosen
    /// uniformly and both directions get weight `weight`.
    pub fn gossip(n: usize, weight: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDistribution("gossip needs at least 2 agents".into()));
        }
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        let p = 1.0 / pairs.len() as f64;
        let atoms = pairs
            .iter()
            .map(|&(i, j)| AdjacencyMatrix::from_edges(n, &[(i, j, weight)], true).map(|a| (a, p)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }

    pub fn n(&self) -> usize {
        self.atoms[0].n()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&AdjacencyMatrix, f64)> {
        self.atoms.iter().zip(self.probs.iter().copied())
    }

    pub fn mean_adjacency(&self) -> DMatrix<f64> {
        let n = self.n();
        self.atoms()
            .fold(DMatrix::zeros(n, n), |acc, (a, p)| acc + a.matrix() * p)
    }

    /// `σ_ij = E[a_ij²]`.
    pub fn edge_second_moments(&self) -> DMatrix<f64> {
        let n = self.n();
        self.atoms().fold(DMatrix::zeros(n, n), |acc, (a, p)| {
            acc + a.matrix().map(|w| w * w) * p
        })
    }

    /// Index of a sampled atom.
    pub fn sample_index(&self, rng: &mut SimRng) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.atoms.len() - 1)
    }

    pub fn sample(&self, rng: &mut SimRng) -> &AdjacencyMatrix {
        &self.atoms[self.sample_index(rng)]
    }

    /// `C₀₁ = Σ_r p_r ‖L_r − L̄‖²`.
    pub fn laplacian_variance(&self, norm: MatrixNorm) -> f64 {
        let mean = self.mean_laplacian_unchecked();
        self.atoms()
            .map(|(a, p)| {
                let d = norm.apply(&(laplacian(a) - &mean));
                p * d * d
            })
            .sum()
    }

    fn mean_laplacian_unchecked(&self) -> DMatrix<f64> {
        let n = self.n();
        self.atoms()
            .fold(DMatrix::zeros(n, n), |acc, (a, p)| acc + laplacian(a) * p)
    }
}

/// `L̄ = Σ_r p_r L_r`; errors if the mean graph is disconnected.
pub fn mean_laplacian(dist: &GraphDistribution) -> Result<DMatrix<f64>> {
    let l = dist.mean_laplacian_unchecked();
    check_connected(&l)?;
    Ok(l)
}

fn check_connected(l: &DMatrix<f64>) -> Result<()> {
    let n = l.nrows();
    if n < 2 {
        return Ok(());
    }
    let (vals, _) = linalg::sym_eigen_sorted(l);
    if vals[1] <= ZERO_EIGEN_TOL {
        return Err(Error::MeanGraphDisconnected { lambda2: vals[1] });
    }
    Ok(())
}

/// Sampler callback for simulation-only graph processes.
pub type GraphSamplerFn = dyn Fn(&mut SimRng) -> AdjacencyMatrix + Send + Sync;

/// Graph process given only by a seeded sampler.
#[derive(Clone)]
pub struct GeneratorGraph {
    n: usize,
    sampler: Arc<GraphSamplerFn>,
    /// Draws used to estimate moments.
    pub moment_draws: usize,
    pub moment_seed: u64,
}

impl GeneratorGraph {
    pub fn new(
        n: usize,
        sampler: impl Fn(&mut SimRng) -> AdjacencyMatrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            sampler: Arc::new(sampler),
            moment_draws: 100_000,
            moment_seed: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample(&self, rng: &mut SimRng) -> AdjacencyMatrix {
        (self.sampler)(rng)
    }

    pub(crate) fn moment_rng(&self) -> SimRng {
        SimRng::seed_from_u64(self.moment_seed)
    }
}

impl fmt::Debug for GeneratorGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorGraph")
            .field("n", &self.n)
            .field("moment_draws", &self.moment_draws)
            .field("moment_seed", &self.moment_seed)
            .finish_non_exhaustive()
    }
}

/// Either an exact finite-support distribution or a sampler.
#[derive(Clone, Debug)]
pub enum GraphModel {
    Finite(GraphDistribution),
    Generator(GeneratorGraph),
}

impl From<GraphDistribution> for GraphModel {
    fn from(d: GraphDistribution) -> Self {
        GraphModel::Finite(d)
    }
}

/// First and second moments of the graph process.
#[derive(Clone, Debug)]
pub struct GraphMoments {
    pub mean_laplacian: DMatrix<f64>,
    /// `σ_ij = E[a_ij²]`.
    pub edge_second_moments: DMatrix<f64>,
    /// Standard errors of `σ_ij` (zero when exact).
    pub edge_second_moments_std_err: DMatrix<f64>,
    /// `C₀₁ = E‖L_k − L̄‖²`.
    pub laplacian_variance: f64,
    /// True when the quantities are Monte-Carlo estimates.
    pub estimated: bool,
}

impl GraphModel {
    pub fn n(&self) -> usize {
        match self {
            GraphModel::Finite(d) => d.n(),
            GraphModel::Generator(g) => g.n(),
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> Cow<'_, AdjacencyMatrix> {
        match self {
            GraphModel::Finite(d) => Cow::Borrowed(d.sample(rng)),
            GraphModel::Generator(g) => Cow::Owned(g.sample(rng)),
        }
    }

    pub fn as_finite(&self) -> Option<&GraphDistribution> {
        match self {
            GraphModel::Finite(d) => Some(d),
            GraphModel::Generator(_) => None,
        }
    }

    pub fn moments(&self, norm: MatrixNorm) -> Result<GraphMoments> {
        match self {
            GraphModel::Finite(d) => Ok(GraphMoments {
                mean_laplacian: mean_laplacian(d)?,
                edge_second_moments: d.edge_second_moments(),
                edge_second_moments_std_err: DMatrix::zeros(d.n(), d.n()),
                laplacian_variance: d.laplacian_variance(norm),
                estimated: false,
            }),
            GraphModel::Generator(g) => estimate_moments(g, norm),
        }
    }
}

fn estimate_moments(g: &GeneratorGraph, norm: MatrixNorm) -> Result<GraphMoments> {
    let n = g.n();
    let draws = g.moment_draws.max(2);
    let mut rng = g.moment_rng();
    let samples: Vec<DMatrix<f64>> = (0..draws).map(|_| g.sample(&mut rng).matrix().clone()).collect();
    let inv = 1.0 / draws as f64;
    let mean_a = samples.iter().fold(DMatrix::zeros(n, n), |acc, a| acc + a) * inv;
    let sq = samples
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, a| acc + a.map(|w| w * w))
        * inv;
    let fourth = samples
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, a| acc + a.map(|w| w.powi(4)))
        * inv;
    let var_sq = fourth - sq.map(|s| s * s);
    let std_err = var_sq.map(|v| (v.max(0.0) * inv).sqrt());

    let mean_a = linalg::symmetrize(&mean_a);
    let mean_l = laplacian(&AdjacencyMatrix { weights: mean_a });
    check_connected(&mean_l)?;
    let c01 = samples
        .iter()
        .map(|a| {
            let d = norm.apply(&(laplacian(&AdjacencyMatrix { weights: a.clone() }) - &mean_l));
            d * d
        })
        .sum::<f64>()
        * inv;
    Ok(GraphMoments {
        mean_laplacian: mean_l,
        edge_second_moments: sq,
        edge_second_moments_std_err: std_err,
        laplacian_variance: c01,
        estimated: true,
    })
}

/// Orthogonal splitting `V = (V₁ V₂)` of the mean Laplacian with
/// `Vᵀ L̄ V = blockdiag(S, 0)` and `V₂ = 1/√n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianDecomposition {
    pub mean_laplacian: DMatrix<f64>,
    /// `n × (n−1)`, orthonormal columns spanning `1⊥`.
    pub v1: DMatrix<f64>,
    /// `1/√n`.
    pub v2: DVector<f64>,
    /// Positive eigenvalues `κ₂ ≤ … ≤ κ_n`.
    pub s: DVector<f64>,
    pub kappa_star: f64,
}

impl LaplacianDecomposition {
    pub fn n(&self) -> usize {
        self.mean_laplacian.nrows()
    }

    /// Full orthogonal `V = (V₁ V₂)`.
    pub fn v(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut v = DMatrix::zeros(n, n);
        v.view_mut((0, 0), (n, n - 1)).copy_from(&self.v1);
        v.set_column(n - 1, &self.v2);
        v
    }

    pub fn s_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.s)
    }

    /// `V₁ S⁻¹ V₁ᵀ`, the pseudo-inverse of `L̄`.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let s_inv = DMatrix::from_diagonal(&self.s.map(|k| 1.0 / k));
        &self.v1 * s_inv * self.v1.transpose()
    }

    /// Rebuild with a different `V₁` spanning the same eigenspaces.
    pub fn with_v1(&self, v1: DMatrix<f64>) -> Result<Self> {
        let n = self.n();
        if v1.shape() != (n, n - 1) {
            return Err(Error::Dimension(format!("V1 must be {}x{}", n, n - 1)));
        }
        let out = Self { v1, ..self.clone() };
        let v = out.v();
        let ortho = (v.transpose() * &v - DMatrix::identity(n, n)).amax();
        let mut target = DMatrix::zeros(n, n);
        target
            .view_mut((0, 0), (n - 1, n - 1))
            .copy_from(&out.s_matrix());
        let diag = (v.transpose() * &out.mean_laplacian * &v - target).amax();
        if ortho > 1e-10 || diag > 1e-10 {
            return Err(Error::Dimension(format!(
                "V1 does not diagonalise L̄ (orthogonality {ortho:e}, diagonal residual {diag:e})"
            )));
        }
        Ok(out)
    }
}

/// Split `L̄` into `(V₁, V₂, S)`.
///
/// The known null vector `1/√n` is deflated first: the symmetric eigenproblem
/// is solved on `Qᵀ L̄ Q` with `Q` an orthonormal basis of `1⊥`.
pub fn decompose(mean_laplacian: &DMatrix<f64>) -> Result<LaplacianDecomposition> {
    let n = mean_laplacian.nrows();
    if n != mean_laplacian.ncols() {
        return Err(Error::Dimension("Laplacian must be square".into()));
    }
    if n < 2 {
        return Err(Error::Dimension("need at least 2 agents".into()));
    }
    let scale = mean_laplacian.amax().max(1.0);
    let asym = linalg::max_abs_asymmetry(mean_laplacian);
    if asym > 1e-12 * scale {
        return Err(Error::InvalidDistribution(format!(
            "mean Laplacian is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let row_sum = (mean_laplacian * DVector::from_element(n, 1.0)).amax();
    if row_sum > 1e-12 * scale {
        return Err(Error::InvalidDistribution(format!(
            "mean Laplacian rows do not sum to zero (max {row_sum:e})"
        )));
    }
    let q = linalg::helmert_basis(n);
    let reduced = q.transpose() * mean_laplacian * &q;
    let (kappa, w) = linalg::sym_eigen_sorted(&reduced);
    if kappa[0] <= ZERO_EIGEN_TOL {
        return Err(Error::Disconnected { kappa2: kappa[0] });
    }
    let v1 = q * w;
    let v2 = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let kappa_star = kappa.max();
    Ok(LaplacianDecomposition {
        mean_laplacian: mean_laplacian.clone(),
        v1,
        v2,
        s: kappa,
        kappa_star,
    })
}
