//! Zero-mean vector noise with a prescribed covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg;
use crate::SimRng;

/// Shape of the unit-variance scalar draws that are mixed into a noise vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// Uniform on `[−√3, √3]`.
    Uniform,
    /// `±1` with equal probability.
    Rademacher,
}

impl NoiseFamily {
    #[inline]
    pub fn draw(self, rng: &mut SimRng) -> f64 {
        match self {
            NoiseFamily::Gaussian => rng.sample(StandardNormal),
            NoiseFamily::Uniform => (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt(),
            NoiseFamily::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Draws `C z` with `C Cᵀ = cov` and `z` i.i.d. unit-variance.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSampler {
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    family: NoiseFamily,
    zero: bool,
}

impl CovarianceSampler {
    pub fn new(cov: DMatrix<f64>, family: NoiseFamily) -> Result<Self> {
        let factor = linalg::psd_factor(&cov, "noise")?;
        let zero = cov.iter().all(|&v| v == 0.0);
        Ok(Self {
            cov,
            factor,
            family,
            zero,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            cov: DMatrix::zeros(dim, dim),
            factor: DMatrix::zeros(dim, dim),
            family: NoiseFamily::Gaussian,
            zero: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Scale the covariance by `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            cov: &self.cov * c,
            factor: &self.factor * c.sqrt(),
            family: self.family,
            zero: self.zero || c == 0.0,
        }
    }

    /// Zero-noise samplers consume no randomness.
    pub fn sample(&self, rng: &mut SimRng) -> DVector<f64> {
        let m = self.dim();
        if self.zero {
            return DVector::zeros(m);
        }
        let z = DVector::from_fn(m, |_, _| self.family.draw(rng));
        &self.factor * z
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }
}
