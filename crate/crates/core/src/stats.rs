//! One-sample Kolmogorov–Smirnov test and covariance estimators.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::SimRng;

/// Fewest samples the KS test accepts.
pub const KS_MIN_SAMPLES: usize = 50;

/// CDF of `N(mean, variance)`.
pub fn normal_cdf(x: f64, mean: f64, variance: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (2.0 * variance).sqrt())
}

/// `c(α) = sqrt(−ln(α/2) / 2)`, the asymptotic Kolmogorov quantile.
pub fn kolmogorov_quantile(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Critical value `c(α)/√n`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    kolmogorov_quantile(alpha) / (n as f64).sqrt()
}

/// `D_n = sup_x |F_n(x) − F(x)|`, evaluated at the jump points.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Test `samples` against `N(mean, variance)` at level `alpha`.
pub fn ks_normal_test(samples: &[f64], mean: f64, variance: f64, alpha: f64) -> Result<KsResult> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if !(variance.is_finite() && variance > 1e-14) {
        return Err(Error::DegenerateVariance(format!(
            "reference variance {variance:e} is not positive"
        )));
    }
    let statistic = ks_statistic(samples, |x| normal_cdf(x, mean, variance));
    let critical = ks_critical_value(samples.len(), alpha);
    Ok(KsResult {
        statistic,
        critical,
        pass: statistic < critical,
        samples: samples.len(),
        mean,
        variance,
    })
}

/// Test against the normal law with the sample's own mean and variance.
pub fn ks_fitted_normal_test(samples: &[f64], alpha: f64) -> Result<KsResult> {
    let (mean, variance) = mean_variance(samples);
    if !(variance > 1e-14) {
        return Err(Error::DegenerateVariance(format!(
            "sample variance {variance:e} is not positive"
        )));
    }
    ks_normal_test(samples, mean, variance, alpha)
}

/// Sample mean and unbiased variance.
pub fn mean_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn sample_mean(rows: &[DVector<f64>]) -> DVector<f64> {
    let d = rows[0].len();
    rows.iter().fold(DVector::zeros(d), |acc, r| acc + r) / rows.len() as f64
}

/// Unbiased sample covariance of the rows.
pub fn sample_covariance(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let mean = sample_mean(rows);
    let d = mean.len();
    let mut acc = DMatrix::zeros(d, d);
    for r in rows {
        let c = r - &mean;
        acc.ger(1.0, &c, &c, 1.0);
    }
    acc / (rows.len() as f64 - 1.0)
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn relative_frobenius(estimate: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (estimate - target).norm() / target.norm()
}

/// Bootstrap standard error of the relative Frobenius error of the sample covariance.
pub fn bootstrap_relative_frobenius_se(
    rows: &[DVector<f64>],
    target: &DMatrix<f64>,
    resamples: usize,
    rng: &mut SimRng,
) -> f64 {
    let n = rows.len();
    let errs: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<DVector<f64>> = (0..n).map(|_| rows[rng.random_range(0..n)].clone()).collect();
            relative_frobenius(&sample_covariance(&draw), target)
        })
        .collect();
    mean_variance(&errs).1.sqrt()
}

/// Componentwise standard error of the sample mean.
pub fn mean_std_err(rows: &[DVector<f64>]) -> DVector<f64> {
    let n = rows.len() as f64;
    sample_covariance(rows).diagonal().map(|v| (v / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::StandardNormal;

    #[test]
    fn critical_value_at_five_percent() {
        assert_relative_eq!(kolmogorov_quantile(0.05), 1.3581, epsilon = 1e-4);
        assert!(ks_critical_value(100, 0.05) > ks_critical_value(1000, 0.05));
        assert!(ks_critical_value(100, 0.01) > ks_critical_value(100, 0.05));
    }

    #[test]
    fn normal_cdf_values() {
        assert_relative_eq!(normal_cdf(0.0, 0.0, 1.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.959963984540054, 0.0, 1.0), 0.975, epsilon = 1e-10);
        assert_relative_eq!(normal_cdf(3.0, 1.0, 4.0), normal_cdf(1.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn statistic_on_a_five_point_sample() {
        let xs = [-1.2, 0.3, -0.1, 2.0, 0.7];
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let f = |x| normal_cdf(x, 0.0, 1.0);
        let mut brute: f64 = 0.0;
        for (i, &x) in sorted.iter().enumerate() {
            brute = brute.max((f(x) - i as f64 / 5.0).abs());
            brute = brute.max((f(x) - (i + 1) as f64 / 5.0).abs());
        }
        assert_relative_eq!(ks_statistic(&xs, f), brute, epsilon = 1e-15);
    }

    #[test]
    fn normal_samples_pass_and_uniform_fail() {
        let mut rng = SimRng::seed_from_u64(11);
        let normal: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_normal_test(&normal, 0.0, 1.0, 0.05).unwrap().pass);
        let uniform: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        assert!(!ks_normal_test(&uniform, 0.0, 1.0, 0.05).unwrap().pass);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let xs = vec![1.0; 100];
        assert!(matches!(ks_normal_test(&xs, 0.0, 0.0, 0.05), Err(Error::DegenerateVariance(_))));
        assert!(matches!(ks_fitted_normal_test(&xs, 0.05), Err(Error::DegenerateVariance(_))));
        assert!(matches!(
            ks_normal_test(&xs[..10], 0.0, 1.0, 0.05),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn covariance_of_known_rows() {
        let rows = vec![
            DVector::from_row_slice(&[1.0, 2.0]),
            DVector::from_row_slice(&[3.0, 2.0]),
            DVector::from_row_slice(&[2.0, 5.0]),
        ];
        let c = sample_covariance(&rows);
        assert_relative_eq!(c[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(c[(1, 1)], 3.0, epsilon = 1e-15);
        assert_relative_eq!(c[(0, 1)], 0.0, epsilon = 1e-15);
    }
}
