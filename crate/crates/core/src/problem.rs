//! Local costs, gradient oracles and the constraint-set catalogue.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::noise::{CovarianceSampler, NoiseFamily};
use crate::SimRng;

/// Closed convex sets with closed-form Euclidean projections.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSet {
    FullSpace,
    /// Componentwise `lower ≤ x ≤ upper`.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    Ball {
        center: DVector<f64>,
        radius: f64,
    },
    /// `{x : normalᵀx ≤ offset}`.
    Halfspace { normal: DVector<f64>, offset: f64 },
    /// Affine subspace `{x : A x = b}`, `A` with full row rank.
    AffineSlab {
        matrix: DMatrix<f64>,
        vector: DVector<f64>,
    },
}

impl ConstraintSet {
    /// Check the set is a nonempty closed convex subset of `ℝ^m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        let dim_err = |what: &str, got: usize| {
            Err(Error::InvalidSet(format!("{what} has dimension {got}, expected {m}")))
        };
        match self {
            ConstraintSet::FullSpace => Ok(()),
            ConstraintSet::Box { lower, upper } => {
                if lower.len() != m {
                    return dim_err("box lower bound", lower.len());
                }
                if upper.len() != m {
                    return dim_err("box upper bound", upper.len());
                }
                if let Some(k) = (0..m).find(|&k| !(lower[k] <= upper[k])) {
                    return Err(Error::InvalidSet(format!(
                        "box lower[{k}] = {} exceeds upper[{k}] = {}",
                        lower[k], upper[k]
                    )));
                }
                Ok(())
            }
            ConstraintSet::Ball { center, radius } => {
                if center.len() != m {
                    return dim_err("ball center", center.len());
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidSet(format!("ball radius {radius} must be > 0")));
                }
                Ok(())
            }
            ConstraintSet::Halfspace { normal, offset } => {
                if normal.len() != m {
                    return dim_err("halfspace normal", normal.len());
                }
                if normal.norm() == 0.0 || !offset.is_finite() {
                    return Err(Error::InvalidSet("halfspace normal must be nonzero".into()));
                }
                Ok(())
            }
            ConstraintSet::AffineSlab { matrix, vector } => {
                if matrix.ncols() != m {
                    return dim_err("affine matrix columns", matrix.ncols());
                }
                if matrix.nrows() != vector.len() {
                    return Err(Error::InvalidSet(format!(
                        "affine matrix has {} rows but vector has {} entries",
                        matrix.nrows(),
                        vector.len()
                    )));
                }
                let gram = matrix * matrix.transpose();
                if gram.nrows() > 0 && linalg::min_sym_eigenvalue(&gram) <= 1e-12 * gram.amax().max(1.0) {
                    return Err(Error::InvalidSet("affine matrix must have full row rank".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_full_space(&self) -> bool {
        matches!(self, ConstraintSet::FullSpace)
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ConstraintSet::FullSpace => x.clone(),
            ConstraintSet::Box { lower, upper } => {
                DVector::from_fn(x.len(), |k, _| x[k].clamp(lower[k], upper[k]))
            }
            ConstraintSet::Ball { center, radius } => {
                let d = x - center;
                let dist = d.norm();
                if dist <= *radius {
                    x.clone()
                } else {
                    center + d * (*radius / dist)
                }
            }
            ConstraintSet::Halfspace { normal, offset } => {
                let excess = normal.dot(x) - offset;
                if excess <= 0.0 {
                    x.clone()
                } else {
                    x - normal * (excess / normal.norm_squared())
                }
            }
            ConstraintSet::AffineSlab { matrix, vector } => {
                // Aᵀ = QR turns Ax = b into Qᵀx = R⁻ᵀb with orthonormal Q.
                let (q, r) = matrix.transpose().qr().unpack();
                let c = r
                    .transpose()
                    .solve_lower_triangular(vector)
                    .unwrap_or_else(|| DVector::zeros(vector.len()));
                x - &q * (q.transpose() * x - c)
            }
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (self.project(x) - x).norm() <= tol
    }
}

/// `f(x) = ½ (x − c)ᵀ R (x − c) + ½ σ²`, so `∇f(x) = R (x − c)`.
///
/// `σ²` is the observation-noise variance of the regression model the cost
/// comes from; it only shifts the value.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCost {
    pub r: DMatrix<f64>,
    pub center: DVector<f64>,
    pub noise_variance: f64,
}

/// L2-regularised logistic loss `Σ_s log(1 + exp(−y_s a_sᵀ x)) + ½ ρ ‖x‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticCost {
    /// One sample per row.
    pub features: DMatrix<f64>,
    /// Labels in `{−1, +1}`.
    pub labels: DVector<f64>,
    pub ridge: f64,
}

impl LogisticCost {
    fn margins(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.features * x).component_mul(&self.labels)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostFunction {
    Quadratic(QuadraticCost),
    Logistic(LogisticCost),
}

impl CostFunction {
    pub fn dim(&self) -> usize {
        match self {
            CostFunction::Quadratic(q) => q.center.len(),
            CostFunction::Logistic(l) => l.features.ncols(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            CostFunction::Quadratic(q) => {
                let d = x - &q.center;
                0.5 * d.dot(&(&q.r * &d)) + 0.5 * q.noise_variance
            }
            CostFunction::Logistic(l) => {
                let loss: f64 = l
                    .margins(x)
                    .iter()
                    .map(|&t| if t > 0.0 { (-t).exp().ln_1p() } else { -t + t.exp().ln_1p() })
                    .sum();
                loss + 0.5 * l.ridge * x.norm_squared()
            }
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            CostFunction::Quadratic(q) => &q.r * (x - &q.center),
            CostFunction::Logistic(l) => {
                let weights = l
                    .margins(x)
                    .zip_map(&l.labels, |t, y| -y * sigmoid(-t));
                l.features.transpose() * weights + x * l.ridge
            }
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            CostFunction::Quadratic(q) => q.r.clone(),
            CostFunction::Logistic(l) => {
                let curv = l.margins(x).map(|t| {
                    let s = sigmoid(t);
                    s * (1.0 - s)
                });
                let m = l.features.ncols();
                let scaled = DMatrix::from_diagonal(&curv) * &l.features;
                l.features.transpose() * scaled + DMatrix::identity(m, m) * l.ridge
            }
        }
    }

    /// A Lipschitz constant of the gradient.
    pub fn lipschitz(&self) -> f64 {
        match self {
            CostFunction::Quadratic(q) => linalg::spectral_norm(&q.r),
            CostFunction::Logistic(l) => {
                0.25 * linalg::spectral_norm(&(l.features.transpose() * &l.features)) + l.ridge
            }
        }
    }
}

/// How noisy gradient observations `g = ∇f(x) + v` are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum GradientNoise {
    None,
    /// `v` independent of `x` with a fixed covariance.
    Additive(CovarianceSampler),
    /// Streaming least squares: sample `u ~ N(0, R)`, `d = uᵀx* + ν` with
    /// `ν ~ N(0, σ²)` and return `g = u uᵀ x − d u`. Requires a quadratic cost.
    Regression,
}

/// One agent's private cost and its gradient oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalCost {
    pub function: CostFunction,
    pub noise: GradientNoise,
    regressor: Option<DMatrix<f64>>,
}

impl LocalCost {
    pub fn new(function: CostFunction, noise: GradientNoise) -> Result<Self> {
        let regressor = match (&noise, &function) {
            (GradientNoise::Regression, CostFunction::Quadratic(q)) => {
                Some(linalg::psd_factor(&q.r, "regressor covariance")?)
            }
            (GradientNoise::Regression, _) => {
                return Err(Error::InvalidProblem(
                    "regression gradient noise needs a quadratic cost".into(),
                ))
            }
            (GradientNoise::Additive(s), f) if s.dim() != f.dim() => {
                return Err(Error::Dimension(format!(
                    "gradient noise has dimension {}, cost has {}",
                    s.dim(),
                    f.dim()
                )))
            }
            _ => None,
        };
        Ok(Self {
            function,
            noise,
            regressor,
        })
    }

    pub fn quadratic(r: DMatrix<f64>, center: DVector<f64>) -> Self {
        Self {
            function: CostFunction::Quadratic(QuadraticCost {
                r,
                center,
                noise_variance: 0.0,
            }),
            noise: GradientNoise::None,
            regressor: None,
        }
    }

    /// Quadratic cost observed through the streaming regression model.
    pub fn regression(r: DMatrix<f64>, x_star: DVector<f64>, noise_variance: f64) -> Result<Self> {
        Self::new(
            CostFunction::Quadratic(QuadraticCost {
                r,
                center: x_star,
                noise_variance,
            }),
            GradientNoise::Regression,
        )
    }

    pub fn with_additive_noise(self, cov: DMatrix<f64>, family: NoiseFamily) -> Result<Self> {
        let sampler = CovarianceSampler::new(cov, family)?;
        Self::new(self.function, GradientNoise::Additive(sampler))
    }

    pub fn dim(&self) -> usize {
        self.function.dim()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.function.value(x)
    }

    pub fn exact_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.function.gradient(x)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.function.hessian(x)
    }

    pub fn has_noise_model(&self) -> bool {
        !matches!(self.noise, GradientNoise::None)
    }

    /// Noisy gradient observation. `agent` is only used for error reporting.
    pub fn noisy_gradient(&self, x: &DVector<f64>, rng: &mut SimRng, agent: usize) -> Result<DVector<f64>> {
        match &self.noise {
            GradientNoise::None => Err(Error::NoNoiseModel { agent }),
            _ => Ok(self.observe(x, rng)),
        }
    }

    /// Gradient observation used by the engine: exact when no noise model is set.
    pub(crate) fn observe(&self, x: &DVector<f64>, rng: &mut SimRng) -> DVector<f64> {
        match &self.noise {
            GradientNoise::None => self.exact_gradient(x),
            GradientNoise::Additive(s) => self.exact_gradient(x) + s.sample(rng),
            GradientNoise::Regression => {
                let CostFunction::Quadratic(q) = &self.function else {
                    unreachable!("checked in LocalCost::new")
                };
                let factor = self.regressor.as_ref().expect("regressor factor");
                let m = q.center.len();
                let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
                let u = factor * z;
                let nu: f64 = rng.sample::<f64, _>(StandardNormal) * q.noise_variance.sqrt();
                let d = u.dot(&q.center) + nu;
                &u * (u.dot(x) - d)
            }
        }
    }

    /// `lim E[v vᵀ]` at the optimum.
    pub fn limit_noise_covariance(&self) -> DMatrix<f64> {
        let m = self.dim();
        match (&self.noise, &self.function) {
            (GradientNoise::None, _) => DMatrix::zeros(m, m),
            (GradientNoise::Additive(s), _) => s.cov().clone(),
            (GradientNoise::Regression, CostFunction::Quadratic(q)) => &q.r * q.noise_variance,
            (GradientNoise::Regression, _) => unreachable!("checked in LocalCost::new"),
        }
    }

    /// A constant `c_v` with `E‖v‖² ≤ c_v (1 + ‖x‖²)` for every `x`.
    ///
    /// Regression model: `E‖v‖² = dᵀ(R² + tr(R) R)d + σ² tr(R)` with
    /// `d = x − x*` (Gaussian fourth moments), then `‖d‖² ≤ 2‖x‖² + 2‖x*‖²`.
    pub fn noise_growth_constant(&self) -> f64 {
        match (&self.noise, &self.function) {
            (GradientNoise::None, _) => 0.0,
            (GradientNoise::Additive(s), _) => s.trace(),
            (GradientNoise::Regression, CostFunction::Quadratic(q)) => {
                let q4 = &q.r * &q.r + &q.r * q.r.trace();
                let qn = linalg::spectral_norm(&q4);
                let constant = 2.0 * qn * q.center.norm_squared() + q.noise_variance * q.r.trace();
                (2.0 * qn).max(constant)
            }
            (GradientNoise::Regression, _) => unreachable!("checked in LocalCost::new"),
        }
    }
}

/// How far the relative-interior condition on `∩Ω_i` could be checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteriorStatus {
    /// Every set is the full space.
    Verified,
    /// Taken on trust from configuration.
    Declared,
    Unknown,
}

/// `n` agents minimising `Σ_i f_i(x)` over `∩_i Ω_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    pub costs: Vec<LocalCost>,
    pub sets: Vec<ConstraintSet>,
    pub known_optimum: Option<DVector<f64>>,
    pub known_dual_optimum: Option<DVector<f64>>,
    pub interior_declared: bool,
}

impl ProblemSpec {
    pub fn new(costs: Vec<LocalCost>, sets: Vec<ConstraintSet>) -> Result<Self> {
        let n = costs.len();
        if n == 0 {
            return Err(Error::InvalidProblem("no agents".into()));
        }
        if sets.len() != n {
            return Err(Error::InvalidProblem(format!(
                "{n} costs but {} constraint sets",
                sets.len()
            )));
        }
        let m = costs[0].dim();
        for (i, c) in costs.iter().enumerate() {
            if c.dim() != m {
                return Err(Error::Dimension(format!(
                    "agent {i} cost has dimension {}, expected {m}",
                    c.dim()
                )));
            }
        }
        for s in &sets {
            s.validate(m)?;
        }
        Ok(Self {
            n,
            m,
            costs,
            sets,
            known_optimum: None,
            known_dual_optimum: None,
            interior_declared: false,
        })
    }

    pub fn unconstrained(costs: Vec<LocalCost>) -> Result<Self> {
        let n = costs.len();
        Self::new(costs, vec![ConstraintSet::FullSpace; n])
    }

    /// Attach `x*`; checked against first-order optimality when unconstrained.
    pub fn with_optimum(mut self, x_star: DVector<f64>) -> Result<Self> {
        if x_star.len() != self.m {
            return Err(Error::Dimension(format!(
                "optimum has dimension {}, expected {}",
                x_star.len(),
                self.m
            )));
        }
        if self.is_unconstrained() {
            let total = self
                .costs
                .iter()
                .fold(DVector::zeros(self.m), |acc, c| acc + c.exact_gradient(&x_star));
            if total.amax() > 1e-10 {
                return Err(Error::InvalidProblem(format!(
                    "known optimum violates Σ∇f_i(x*) = 0 (residual {:e})",
                    total.amax()
                )));
            }
        }
        self.known_optimum = Some(x_star);
        Ok(self)
    }

    pub fn with_dual_optimum(mut self, lambda_star: DVector<f64>) -> Result<Self> {
        if lambda_star.len() != self.n * self.m {
            return Err(Error::Dimension("dual optimum must have n·m entries".into()));
        }
        self.known_dual_optimum = Some(lambda_star);
        Ok(self)
    }

    pub fn is_unconstrained(&self) -> bool {
        self.sets.iter().all(ConstraintSet::is_full_space)
    }

    pub fn interior_status(&self) -> InteriorStatus {
        if self.is_unconstrained() {
            InteriorStatus::Verified
        } else if self.interior_declared {
            InteriorStatus::Declared
        } else {
            InteriorStatus::Unknown
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.m
    }

    /// `∇f̃(X) = col(∇f_1(x_1), …, ∇f_n(x_n))`.
    pub fn stacked_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.m;
        let mut out = DVector::zeros(self.dim());
        for (i, c) in self.costs.iter().enumerate() {
            let g = c.exact_gradient(&linalg::agent_block(x, i, m));
            out.rows_mut(i * m, m).copy_from(&g);
        }
        out
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.costs.iter().map(|c| c.value(x)).sum()
    }

    /// `X* = 1 ⊗ x*`.
    pub fn stacked_optimum(&self) -> Result<DVector<f64>> {
        let x = self.known_optimum.as_ref().ok_or(Error::NoKnownOptimum)?;
        Ok(DVector::from_fn(self.dim(), |r, _| x[r % self.m]))
    }

    pub fn gradient_at_optimum(&self) -> Result<DVector<f64>> {
        Ok(self.stacked_gradient(&self.stacked_optimum()?))
    }

    pub fn hessians_at_optimum(&self) -> Result<Vec<DMatrix<f64>>> {
        let x = self.known_optimum.as_ref().ok_or(Error::NoKnownOptimum)?;
        Ok(self.costs.iter().map(|c| c.hessian(x)).collect())
    }

    /// `L_f = max_i` of the per-agent gradient Lipschitz constants.
    pub fn lipschitz_constant(&self) -> f64 {
        self.costs
            .iter()
            .map(|c| c.function.lipschitz())
            .fold(0.0, f64::max)
    }

    /// Verify `∇f̃(X*) + (L̄⊗I)Λ* = 0` and `(L̄⊗I)X* = 0` for the attached duals.
    pub fn check_dual_optimum(&self, mean_laplacian: &DMatrix<f64>) -> Result<()> {
        let Some(lam) = &self.known_dual_optimum else {
            return Ok(());
        };
        let lk = linalg::kron_eye(mean_laplacian, self.m);
        let x_star = self.stacked_optimum()?;
        let r1 = (self.stacked_gradient(&x_star) + &lk * lam).amax();
        let r2 = (&lk * &x_star).amax();
        if r1 > 1e-8 || r2 > 1e-8 {
            return Err(Error::InvalidProblem(format!(
                "dual optimum violates the saddle-point conditions (residuals {r1:e}, {r2:e})"
            )));
        }
        Ok(())
    }
}

/// Regressor covariances of the three-agent parameter-estimation benchmark.
pub fn section_six_regressors() -> [DMatrix<f64>; 3] {
    [
        DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1.0, 0.0])),
        DMatrix::from_diagonal(&DVector::from_row_slice(&[0.0, 1.0, 1.0])),
        DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 0.0, 1.0])),
    ]
}

/// Three agents estimating `x* = (1, 2, 3)` from streaming scalar
/// regressions `d = u x* + ν` with `u ~ N(0, R_{u,i})`, `ν ~ N(0, 0.1)`.
pub fn section_six_problem() -> ProblemSpec {
    let x_star = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
    let costs = section_six_regressors()
        .into_iter()
        .map(|r| LocalCost::regression(r, x_star.clone(), 0.1).expect("valid regressor"))
        .collect();
    ProblemSpec::unconstrained(costs)
        .and_then(|p| p.with_optimum(x_star))
        .expect("benchmark problem is well formed")
}
