//! Limit theory of the recursion around its saddle point.
//!
//! With `X̃ = X − X*` and `λ̃₁ = (V₁ᵀ⊗I)(Λ − Λ*)` the state `θ = (X̃, λ̃₁)`
//! follows `θ' = θ + γ (g(θ) + e)` where the linearisation of `g` at zero is
//!
//! ```text
//! F = −[ L̄⊗I + H    V₁S⊗I ]
//!      [ −SV₁ᵀ⊗I     0     ]
//! ```
//!
//! and `e = (e1 + e2, V₁ᵀ e3)` has limit covariance `Σ₁`. Then `θ_k/√γ_k`
//! tends to `N(0, Σ)` with `FΣ + ΣFᵀ + Σ₁ = 0`, and the averaged iterate
//! `√k θ̄_k` tends to `N(0, F⁻¹Σ₁F⁻ᵀ)`.

use nalgebra::{linalg::Schur, DMatrix, DVector};
use serde::Serialize;

use crate::engine::{Engine, NoiseSpec, SystemState, Trajectory};
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{decompose, GraphModel, LaplacianDecomposition};
use crate::problem::ProblemSpec;
use crate::SimRng;

/// Threshold on the spectral abscissa below which a matrix counts as Hurwitz.
pub const HURWITZ_TOL: f64 = 1e-10;

/// `Λ* = −(V₁S⁻¹V₁ᵀ ⊗ I)∇f̃(X*)`, the dual optimum with no component along `1`.
pub fn dual_optimum(problem: &ProblemSpec, decomp: &LaplacianDecomposition) -> Result<DVector<f64>> {
    let g = problem.gradient_at_optimum()?;
    Ok(-(linalg::kron_eye(&decomp.pseudo_inverse(), problem.m) * g))
}

/// `blockdiag(∇²f_1(x*), …, ∇²f_n(x*))`.
pub fn hessian_stack(problem: &ProblemSpec) -> Result<DMatrix<f64>> {
    Ok(linalg::block_diag(&problem.hessians_at_optimum()?))
}

/// Assemble the drift matrix from the splitting of `L̄` and the Hessian stack.
pub fn build_f(decomp: &LaplacianDecomposition, h: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let n = decomp.n();
    if h.shape() != (n * m, n * m) {
        return Err(Error::Dimension(format!(
            "Hessian stack is {}x{}, expected {}x{}",
            h.nrows(),
            h.ncols(),
            n * m,
            n * m
        )));
    }
    let sum = (0..n).fold(DMatrix::zeros(m, m), |acc, i| {
        acc + h.view((i * m, i * m), (m, m))
    });
    let min_eig = linalg::min_sym_eigenvalue(&sum);
    if min_eig <= HURWITZ_TOL {
        return Err(Error::HessianSumNotPd { min_eig });
    }
    let v1s = &decomp.v1 * decomp.s_matrix();
    let top_left = linalg::kron_eye(&decomp.mean_laplacian, m) + h;
    let top_right = linalg::kron_eye(&v1s, m);
    let bottom_left = -linalg::kron_eye(&v1s.transpose(), m);
    let k = (n - 1) * m;
    Ok(-linalg::block2x2(&top_left, &top_right, &bottom_left, &DMatrix::zeros(k, k)))
}

/// `max Re λ(F)`.
///
/// The Schur iteration can stall on structured inputs, so it is capped and
/// retried on orthogonally similar copies, which share the spectrum.
pub fn spectral_abscissa(f: &DMatrix<f64>) -> f64 {
    let n = f.nrows();
    let mut g = f.clone();
    for attempt in 0..8 {
        if let Some(schur) = Schur::try_new(g.clone(), f64::EPSILON, 20_000) {
            return schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let v = DVector::from_fn(n, |i, _| 1.0 + ((i + 1) * (attempt + 2)) as f64 * 0.618_033_988_749_895 % 1.0);
        let h = DMatrix::identity(n, n) - 2.0 * &v * v.transpose() / v.norm_squared();
        g = &h * g * &h;
    }
    f64::NAN
}

/// Whether every eigenvalue has real part below `−1e-10`, with the abscissa.
pub fn is_hurwitz(f: &DMatrix<f64>) -> (bool, f64) {
    let a = spectral_abscissa(f);
    (a < -HURWITZ_TOL, a)
}

fn require_hurwitz(f: &DMatrix<f64>) -> Result<()> {
    let (ok, abscissa) = is_hurwitz(f);
    if ok {
        Ok(())
    } else {
        Err(Error::NotHurwitz { abscissa })
    }
}

fn s1_term(l_diff: &DMatrix<f64>, pinv: &DMatrix<f64>, g: &DVector<f64>, m: usize) -> DVector<f64> {
    linalg::kron_eye(&(l_diff * pinv), m) * g
}

/// `S₁ = E[M_k G Gᵀ M_kᵀ]` with `M_k = ((L_k − L̄)V₁S⁻¹V₁ᵀ) ⊗ I` and `G = ∇f̃(X*)`.
///
/// Exact for finite-support graphs; a Monte-Carlo estimate over the
/// generator's moment draws otherwise. The flag reports which.
pub fn build_s1(
    graph: &GraphModel,
    decomp: &LaplacianDecomposition,
    grad_at_opt: &DVector<f64>,
    m: usize,
) -> (DMatrix<f64>, bool) {
    let dim = grad_at_opt.len();
    let mut s1 = DMatrix::zeros(dim, dim);
    if grad_at_opt.iter().all(|&g| g == 0.0) {
        return (s1, matches!(graph, GraphModel::Generator(_)));
    }
    let pinv = decomp.pseudo_inverse();
    let mean = &decomp.mean_laplacian;
    match graph {
        GraphModel::Finite(d) => {
            for (a, p) in d.atoms() {
                let t = s1_term(&(a.laplacian() - mean), &pinv, grad_at_opt, m);
                s1.ger(p, &t, &t, 1.0);
            }
            (s1, false)
        }
        GraphModel::Generator(g) => {
            let mut rng = g.moment_rng();
            let draws = g.moment_draws.max(1);
            for _ in 0..draws {
                let a = g.sample(&mut rng);
                let t = s1_term(&(a.laplacian() - mean), &pinv, grad_at_opt, m);
                s1.ger(1.0 / draws as f64, &t, &t, 1.0);
            }
            (s1, true)
        }
    }
}

/// Block-diagonal limit covariances of `v`, `ω` and `ζ`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseCovariances {
    pub r_v: DMatrix<f64>,
    pub r_omega: DMatrix<f64>,
    pub r_zeta: DMatrix<f64>,
}

impl NoiseCovariances {
    pub fn new(problem: &ProblemSpec, noise: &NoiseSpec, edge_second_moments: &DMatrix<f64>) -> Self {
        let r_v = linalg::block_diag(
            &problem
                .costs
                .iter()
                .map(|c| c.limit_noise_covariance())
                .collect::<Vec<_>>(),
        );
        Self {
            r_v,
            r_omega: noise.primal.aggregated_covariance(edge_second_moments),
            r_zeta: noise.dual.aggregated_covariance(edge_second_moments),
        }
    }

    /// `S₂ = R_v + R_ω + R_ζ`.
    pub fn s2(&self) -> DMatrix<f64> {
        &self.r_v + &self.r_omega + &self.r_zeta
    }
}

/// `S₂ = R_v + R_ω + R_ζ` with `R_ω,i = Σ_j E[a_ij²] R_ω,ij`.
pub fn build_s2(problem: &ProblemSpec, noise: &NoiseSpec, edge_second_moments: &DMatrix<f64>) -> DMatrix<f64> {
    NoiseCovariances::new(problem, noise, edge_second_moments).s2()
}

/// ```text
/// Σ₁ = [ S₁ + S₂            −R_ω(V₁⊗I)       ]
///      [ −(V₁ᵀ⊗I)R_ω        (V₁ᵀ⊗I)R_ω(V₁⊗I) ]
/// ```
pub fn build_sigma1(
    s1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
    r_omega: &DMatrix<f64>,
    v1: &DMatrix<f64>,
    m: usize,
) -> DMatrix<f64> {
    let v = linalg::kron_eye(v1, m);
    let cross = -(r_omega * &v);
    let out = linalg::block2x2(
        &(s1 + s2),
        &cross,
        &cross.transpose(),
        &(v.transpose() * r_omega * &v),
    );
    debug_assert!(linalg::max_abs_asymmetry(&out) <= 1e-12 * out.amax().max(1.0));
    linalg::symmetrize(&out)
}

/// Solve `FΣ + ΣFᵀ + Σ₁ = 0` through `(I⊗F + F⊗I) vec Σ = −vec Σ₁`.
pub fn solve_lyapunov(f: &DMatrix<f64>, sigma1: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_hurwitz(f)?;
    let d = f.nrows();
    let eye = DMatrix::identity(d, d);
    let op = eye.kronecker(f) + f.kronecker(&eye);
    let rhs = -DVector::from_column_slice(sigma1.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator".into()))?;
    Ok(linalg::symmetrize(&DMatrix::from_column_slice(d, d, sol.as_slice())))
}

/// `F⁻¹ Σ₁ F⁻ᵀ`.
pub fn averaged_covariance(f: &DMatrix<f64>, sigma1: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_hurwitz(f)?;
    let lu = f.clone().lu();
    let a = lu
        .solve(sigma1)
        .ok_or_else(|| Error::Singular("drift matrix".into()))?;
    let out = lu
        .solve(&a.transpose())
        .ok_or_else(|| Error::Singular("drift matrix".into()))?;
    Ok(linalg::symmetrize(&out))
}

/// `‖FΣ + ΣFᵀ + Σ₁‖_F / ‖Σ₁‖_F`.
pub fn lyapunov_residual(f: &DMatrix<f64>, sigma: &DMatrix<f64>, sigma1: &DMatrix<f64>) -> f64 {
    let r = f * sigma + sigma * f.transpose() + sigma1;
    r.norm() / sigma1.norm().max(f64::MIN_POSITIVE)
}

/// Error coordinates of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    pub x_tilde: DVector<f64>,
    pub lambda_tilde1: DVector<f64>,
    /// `(V₂ᵀ⊗I)(Λ − Λ*)`, not part of `θ`.
    pub lambda_tilde2: DVector<f64>,
}

impl ReducedState {
    pub fn theta(&self) -> DVector<f64> {
        let (a, b) = (self.x_tilde.len(), self.lambda_tilde1.len());
        let mut t = DVector::zeros(a + b);
        t.rows_mut(0, a).copy_from(&self.x_tilde);
        t.rows_mut(a, b).copy_from(&self.lambda_tilde1);
        t
    }
}

/// Projection of states onto the reduced coordinates.
#[derive(Clone, Debug)]
pub struct Reducer {
    m: usize,
    x_star: DVector<f64>,
    lambda_star: DVector<f64>,
    v1t: DMatrix<f64>,
    v2t: DMatrix<f64>,
}

impl Reducer {
    pub fn new(problem: &ProblemSpec, decomp: &LaplacianDecomposition, lambda_star: DVector<f64>) -> Result<Self> {
        let m = problem.m;
        Ok(Self {
            m,
            x_star: problem.stacked_optimum()?,
            lambda_star,
            v1t: linalg::kron_eye(&decomp.v1.transpose(), m),
            v2t: linalg::kron_eye(&DMatrix::from_row_slice(1, decomp.n(), decomp.v2.as_slice()), m),
        })
    }

    pub fn reduce(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> ReducedState {
        let dl = lambda - &self.lambda_star;
        ReducedState {
            x_tilde: x - &self.x_star,
            lambda_tilde1: &self.v1t * &dl,
            lambda_tilde2: &self.v2t * dl,
        }
    }

    pub fn theta(&self, state: &SystemState) -> DVector<f64> {
        self.reduce(&state.x, &state.lambda).theta()
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// A recorded state in reduced coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedPoint {
    /// Completed steps.
    pub k: u64,
    pub gamma: f64,
    pub theta: DVector<f64>,
    /// `θ / √γ`.
    pub scaled: DVector<f64>,
    /// Mean of `θ` over the records so far.
    pub average: DVector<f64>,
    pub lambda_tilde2: DVector<f64>,
}

/// Map each record of `traj` to reduced coordinates.
pub fn reduce_trajectory(
    traj: &Trajectory,
    problem: &ProblemSpec,
    decomp: &LaplacianDecomposition,
    lambda_star: &DVector<f64>,
) -> Result<Vec<ReducedPoint>> {
    let r = Reducer::new(problem, decomp, lambda_star.clone())?;
    let mut sum: Option<DVector<f64>> = None;
    Ok(traj
        .records
        .iter()
        .enumerate()
        .map(|(idx, rec)| {
            let red = r.reduce(&rec.state.x, &rec.state.lambda);
            let theta = red.theta();
            let s = match sum.take() {
                Some(s) => s + &theta,
                None => theta.clone(),
            };
            let average = &s / (idx + 1) as f64;
            sum = Some(s);
            ReducedPoint {
                k: rec.state.completed(),
                gamma: rec.gamma,
                scaled: &theta / rec.gamma.sqrt(),
                theta,
                average,
                lambda_tilde2: red.lambda_tilde2,
            }
        })
        .collect())
}

/// Noise-free drift in reduced coordinates:
/// `g(θ) = −[∇f̃(X̃+X*) − ∇f̃(X*) + (L̄⊗I)X̃ + (V₁S⊗I)λ̃₁ ; −(SV₁ᵀ⊗I)X̃]`.
pub fn reduced_drift(problem: &ProblemSpec, decomp: &LaplacianDecomposition, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let m = problem.m;
    let nm = problem.dim();
    let k = theta.len() - nm;
    let x_star = problem.stacked_optimum()?;
    let xt = theta.rows(0, nm).into_owned();
    let l1 = theta.rows(nm, k).into_owned();
    let v1s = linalg::kron_eye(&(&decomp.v1 * decomp.s_matrix()), m);
    let top = problem.stacked_gradient(&(&xt + &x_star)) - problem.stacked_gradient(&x_star)
        + linalg::kron_eye(&decomp.mean_laplacian, m) * &xt
        + &v1s * l1;
    let bottom = -(v1s.transpose() * xt);
    let mut g = DVector::zeros(theta.len());
    g.rows_mut(0, nm).copy_from(&(-top));
    g.rows_mut(nm, k).copy_from(&(-bottom));
    Ok(g)
}

/// Everything the limit theorems need for one configuration.
#[derive(Clone, Debug)]
pub struct AsymptoticModel {
    pub n: usize,
    pub m: usize,
    pub decomposition: LaplacianDecomposition,
    pub dual_optimum: DVector<f64>,
    pub h: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub abscissa: f64,
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
    pub covariances: NoiseCovariances,
    pub sigma1: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_avg: DMatrix<f64>,
    /// Graph moments were Monte-Carlo estimates.
    pub estimated: bool,
}

impl AsymptoticModel {
    pub fn from_engine(engine: &Engine) -> Result<Self> {
        let problem = engine.problem();
        if !problem.is_unconstrained() {
            return Err(Error::InvalidProblem(
                "limit covariances are only available for unconstrained problems".into(),
            ));
        }
        let m = problem.m;
        let moments = engine.moments();
        let decomposition = decompose(&moments.mean_laplacian)?;
        Self::with_decomposition(engine, decomposition, m)
    }

    /// Build with a caller-chosen basis `V₁`.
    pub fn with_decomposition(engine: &Engine, decomposition: LaplacianDecomposition, m: usize) -> Result<Self> {
        let problem = engine.problem();
        let moments = engine.moments();
        let grad = problem.gradient_at_optimum()?;
        let dual_optimum = dual_optimum(problem, &decomposition)?;
        let h = hessian_stack(problem)?;
        let f = build_f(&decomposition, &h, m)?;
        let (ok, abscissa) = is_hurwitz(&f);
        if !ok {
            return Err(Error::NotHurwitz { abscissa });
        }
        let (s1, s1_estimated) = build_s1(engine.graph(), &decomposition, &grad, m);
        let covariances = NoiseCovariances::new(problem, engine.noise(), &moments.edge_second_moments);
        let s2 = covariances.s2();
        let sigma1 = build_sigma1(&s1, &s2, &covariances.r_omega, &decomposition.v1, m);
        let sigma = solve_lyapunov(&f, &sigma1)?;
        let sigma_avg = averaged_covariance(&f, &sigma1)?;
        Ok(Self {
            n: problem.n,
            m,
            decomposition,
            dual_optimum,
            h,
            f,
            abscissa,
            s1,
            s2,
            covariances,
            sigma1,
            sigma,
            sigma_avg,
            estimated: moments.estimated || s1_estimated,
        })
    }

    /// The `X̃` block (top-left `nm × nm`) of a `θ` covariance.
    pub fn x_block(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let nm = self.n * self.m;
        cov.view((0, 0), (nm, nm)).into_owned()
    }

    /// Per-agent `m × m` diagonal blocks of the `X̃` part of `cov`.
    pub fn agent_blocks(&self, cov: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let m = self.m;
        (0..self.n)
            .map(|i| cov.view((i * m, i * m), (m, m)).into_owned())
            .collect()
    }

    pub fn reducer(&self, problem: &ProblemSpec) -> Result<Reducer> {
        Reducer::new(problem, &self.decomposition, self.dual_optimum.clone())
    }

    pub fn lyapunov_residual(&self) -> f64 {
        lyapunov_residual(&self.f, &self.sigma, &self.sigma1)
    }

    pub fn summary(&self) -> AsymptoticSummary {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        AsymptoticSummary {
            n: self.n,
            m: self.m,
            spectral_abscissa: self.abscissa,
            hurwitz: self.abscissa < -HURWITZ_TOL,
            lyapunov_residual: self.lyapunov_residual(),
            estimated: self.estimated,
            kappa: self.decomposition.s.iter().copied().collect(),
            dual_optimum: self.dual_optimum.iter().copied().collect(),
            sigma1: rows(&self.sigma1),
            sigma: rows(&self.sigma),
            sigma_avg: rows(&self.sigma_avg),
            agent_blocks: self.agent_blocks(&self.sigma).iter().map(rows).collect(),
            agent_blocks_avg: self.agent_blocks(&self.sigma_avg).iter().map(rows).collect(),
        }
    }
}

/// Serializable view of an [`AsymptoticModel`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticSummary {
    pub n: usize,
    pub m: usize,
    pub spectral_abscissa: f64,
    pub hurwitz: bool,
    pub lyapunov_residual: f64,
    pub estimated: bool,
    pub kappa: Vec<f64>,
    pub dual_optimum: Vec<f64>,
    pub sigma1: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub sigma_avg: Vec<Vec<f64>>,
    /// Per-agent blocks of `Σ`'s `X̃` part.
    pub agent_blocks: Vec<Vec<Vec<f64>>>,
    pub agent_blocks_avg: Vec<Vec<Vec<f64>>>,
}

/// Random orthogonal mixing of `V₁` inside each eigenspace of `L̄`.
pub fn rotate_within_eigenspaces(decomp: &LaplacianDecomposition, rng: &mut SimRng) -> Result<LaplacianDecomposition> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let k = decomp.s.len();
    let mut v1 = decomp.v1.clone();
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && (decomp.s[end] - decomp.s[start]).abs() <= 1e-9 * decomp.kappa_star.max(1.0) {
            end += 1;
        }
        let size = end - start;
        let g = DMatrix::from_fn(size, size, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let block = decomp.v1.columns(start, size) * q;
        v1.columns_mut(start, size).copy_from(&block);
        start = end;
    }
    decomp.with_v1(v1)
}
