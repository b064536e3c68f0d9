//! Normality and efficiency studies against the limit covariances.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::asymptotics::AsymptoticModel;
use crate::error::{Error, Result};
use crate::harness::config::{Experiment, ExperimentConfig};
use crate::harness::montecarlo::{median, run_monte_carlo, MonteCarloOptions, MonteCarloResult};
use crate::replication_rng;
use crate::stats::{
    bootstrap_relative_frobenius_se, ks_fitted_normal_test, ks_normal_test, mean_std_err, relative_frobenius,
    sample_covariance, sample_mean, KsResult,
};

/// Largest acceptable relative Frobenius error between empirical and limit covariances.
pub const COVARIANCE_TOLERANCE: f64 = 0.35;

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Run-size and test settings shared by the studies.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyOptions {
    pub replications: usize,
    pub steps: u64,
    pub seed: u64,
    pub parallel: Option<usize>,
    pub alpha: f64,
    /// Judge normality against fitted normals rather than the limit law.
    pub fit: bool,
}

impl StudyOptions {
    pub fn from_config(c: &ExperimentConfig) -> Self {
        Self {
            replications: c.replications,
            steps: c.steps,
            seed: c.seed,
            parallel: None,
            alpha: c.alpha,
            fit: c.fit,
        }
    }

    fn monte_carlo(&self) -> MonteCarloOptions {
        MonteCarloOptions {
            replications: self.replications,
            steps: self.steps,
            seed: self.seed,
            parallel: self.parallel,
            checkpoints: Vec::new(),
            track_average: false,
        }
    }
}

/// KS results for one coordinate of one agent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentTest {
    /// 1-based.
    pub agent: usize,
    /// 1-based.
    pub component: usize,
    /// Against `N(0, Σ_jj)`.
    pub theoretical: KsResult,
    /// Against `N(sample mean, sample variance)`.
    pub fitted: KsResult,
    pub sample_mean: f64,
    pub sample_mean_std_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalityReport {
    pub replications: usize,
    pub steps: u64,
    pub gamma_final: f64,
    pub alpha: f64,
    pub fit: bool,
    pub components: Vec<ComponentTest>,
    pub passes_theoretical: usize,
    pub passes_fitted: usize,
    pub required_passes: usize,
    /// Enough KS passes in the selected mode.
    pub accepted: bool,
    /// Sample covariance of `X̃_K/√γ_K`.
    pub empirical_covariance: Vec<Vec<f64>>,
    /// `X̃` block of `Σ`.
    pub theoretical_covariance: Vec<Vec<f64>>,
    pub relative_frobenius: f64,
    pub relative_frobenius_std_err: f64,
    pub covariance_within_tolerance: bool,
    pub lyapunov_residual: f64,
    pub estimated: bool,
}

/// Samples and report of a normality study.
#[derive(Clone, Debug)]
pub struct NormalityOutcome {
    pub report: NormalityReport,
    /// `X̃_K/√γ_K` per replication.
    pub scaled_errors: Vec<DVector<f64>>,
    pub monte_carlo: MonteCarloResult,
    pub model: AsymptoticModel,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// KS passes needed out of `total`: one miss allowed per nine tests.
pub fn required_passes(total: usize) -> usize {
    total - total / 9
}

fn x_tilde(exp: &Experiment, state_x: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(state_x - exp.engine.problem().stacked_optimum()?)
}

fn noisy_model(exp: &Experiment) -> Result<AsymptoticModel> {
    let model = AsymptoticModel::from_engine(&exp.engine)?;
    if model.sigma1.norm() <= 1e-14 {
        return Err(Error::DegenerateVariance(
            "the limit noise covariance is zero, so the scaled errors have no spread to test".into(),
        ));
    }
    Ok(model)
}

/// Compare `X̃_K/√γ_K` across replications with `N(0, Σ)`.
pub fn normality_study(exp: &Experiment, opts: &StudyOptions) -> Result<NormalityOutcome> {
    let model = noisy_model(exp)?;
    let mut mc_opts = opts.monte_carlo();
    mc_opts.checkpoints = vec![10.min(opts.steps), opts.steps];
    let mc = run_monte_carlo(&exp.engine, &exp.init, &mc_opts, None)?;
    normality_from_runs(exp, opts, model, mc)
}

pub(crate) fn normality_from_runs(
    exp: &Experiment,
    opts: &StudyOptions,
    model: AsymptoticModel,
    mc: MonteCarloResult,
) -> Result<NormalityOutcome> {
    let (n, m) = (exp.n(), exp.m());
    let gamma_final = mc.replications[0].gamma;
    let scaled: Vec<DVector<f64>> = mc
        .replications
        .iter()
        .map(|r| x_tilde(exp, &r.final_state.x).map(|x| x / r.gamma.sqrt()))
        .collect::<Result<_>>()?;
    let theory = model.x_block(&model.sigma);
    let se = mean_std_err(&scaled);
    let means = sample_mean(&scaled);
    let mut components = Vec::with_capacity(n * m);
    for j in 0..n * m {
        let column: Vec<f64> = scaled.iter().map(|s| s[j]).collect();
        components.push(ComponentTest {
            agent: j / m + 1,
            component: j % m + 1,
            theoretical: ks_normal_test(&column, 0.0, theory[(j, j)], opts.alpha)?,
            fitted: ks_fitted_normal_test(&column, opts.alpha)?,
            sample_mean: means[j],
            sample_mean_std_err: se[j],
        });
    }
    let passes_theoretical = components.iter().filter(|c| c.theoretical.pass).count();
    let passes_fitted = components.iter().filter(|c| c.fitted.pass).count();
    let required = required_passes(components.len());
    let empirical = sample_covariance(&scaled);
    let rel = relative_frobenius(&empirical, &theory);
    let mut rng = replication_rng(opts.seed, u64::MAX);
    let rel_se = bootstrap_relative_frobenius_se(&scaled, &theory, BOOTSTRAP_RESAMPLES, &mut rng);
    let report = NormalityReport {
        replications: scaled.len(),
        steps: mc.steps,
        gamma_final,
        alpha: opts.alpha,
        fit: opts.fit,
        passes_theoretical,
        passes_fitted,
        required_passes: required,
        accepted: if opts.fit {
            passes_fitted >= required
        } else {
            passes_theoretical >= required
        },
        components,
        empirical_covariance: rows(&empirical),
        theoretical_covariance: rows(&theory),
        relative_frobenius: rel,
        relative_frobenius_std_err: rel_se,
        covariance_within_tolerance: rel <= COVARIANCE_TOLERANCE,
        lyapunov_residual: model.lyapunov_residual(),
        estimated: model.estimated,
    };
    Ok(NormalityOutcome {
        report,
        scaled_errors: scaled,
        monte_carlo: mc,
        model,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub replications: usize,
    pub steps: u64,
    /// Sample covariance of `√K X̃̄_K`.
    pub empirical_covariance: Vec<Vec<f64>>,
    /// `X̃` block of `F⁻¹Σ₁F⁻ᵀ`.
    pub theoretical_covariance: Vec<Vec<f64>>,
    pub relative_frobenius: f64,
    pub relative_frobenius_std_err: f64,
    pub covariance_within_tolerance: bool,
    /// `tr Cov(√K X̃̄_K)`.
    pub averaged_scaled_trace: f64,
    /// `tr Cov(X̃_K/√γ_K)`.
    pub last_scaled_trace: f64,
    /// `tr Cov(X̃̄_K)`, the averaged estimator's error covariance.
    pub averaged_error_trace: f64,
    /// `tr Cov(X̃_K)`, the last iterate's error covariance.
    pub last_error_trace: f64,
    pub averaged_beats_last: bool,
    pub theoretical_averaged_trace: f64,
    pub theoretical_last_trace: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct EfficiencyOutcome {
    pub report: EfficiencyReport,
    /// `√K X̃̄_K` per replication.
    pub averaged_errors: Vec<DVector<f64>>,
    /// `X̃_K/√γ_K` per replication.
    pub last_errors: Vec<DVector<f64>>,
    pub model: AsymptoticModel,
}

/// Compare `√K θ̄_K` across replications with `N(0, F⁻¹Σ₁F⁻ᵀ)`.
pub fn efficiency_study(exp: &Experiment, opts: &StudyOptions) -> Result<EfficiencyOutcome> {
    let model = noisy_model(exp)?;
    let reducer = model.reducer(exp.engine.problem())?;
    let mut mc_opts = opts.monte_carlo();
    mc_opts.track_average = true;
    let mc = run_monte_carlo(&exp.engine, &exp.init, &mc_opts, Some(&reducer))?;
    let nm = exp.n() * exp.m();
    let k = opts.steps as f64;
    let averaged: Vec<DVector<f64>> = mc
        .replications
        .iter()
        .map(|r| {
            r.average_theta
                .as_ref()
                .expect("averages are tracked")
                .rows(0, nm)
                .into_owned()
                * k.sqrt()
        })
        .collect();
    let last: Vec<DVector<f64>> = mc
        .replications
        .iter()
        .map(|r| x_tilde(exp, &r.final_state.x).map(|x| x / r.gamma.sqrt()))
        .collect::<Result<_>>()?;
    let gamma_final = mc.replications[0].gamma;
    let theory = model.x_block(&model.sigma_avg);
    let empirical = sample_covariance(&averaged);
    let last_cov = sample_covariance(&last);
    let rel = relative_frobenius(&empirical, &theory);
    let mut rng = replication_rng(opts.seed, u64::MAX);
    let rel_se = bootstrap_relative_frobenius_se(&averaged, &theory, BOOTSTRAP_RESAMPLES, &mut rng);
    let averaged_scaled_trace = empirical.trace();
    let last_scaled_trace = last_cov.trace();
    let averaged_error_trace = averaged_scaled_trace / k;
    let last_error_trace = last_scaled_trace * gamma_final;
    let averaged_beats_last = averaged_error_trace < last_error_trace;
    let within = rel <= COVARIANCE_TOLERANCE;
    let report = EfficiencyReport {
        replications: averaged.len(),
        steps: opts.steps,
        empirical_covariance: rows(&empirical),
        theoretical_covariance: rows(&theory),
        relative_frobenius: rel,
        relative_frobenius_std_err: rel_se,
        covariance_within_tolerance: within,
        averaged_scaled_trace,
        last_scaled_trace,
        averaged_error_trace,
        last_error_trace,
        averaged_beats_last,
        theoretical_averaged_trace: theory.trace(),
        theoretical_last_trace: model.x_block(&model.sigma).trace(),
        accepted: averaged_beats_last && within,
    };
    Ok(EfficiencyOutcome {
        report,
        averaged_errors: averaged,
        last_errors: last,
        model,
    })
}

/// Summary of the three-agent benchmark replication.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaperReplication {
    pub normality: NormalityReport,
    /// Agent 1's final estimates averaged over replications.
    pub agent1_mean: Vec<f64>,
    pub agent1_std_err: Vec<f64>,
    pub optimum: Vec<f64>,
    /// Every component of `agent1_mean` within 3 standard errors of `x*`.
    pub agent1_consistent: bool,
    pub early_k: u64,
    pub median_consensus_early: f64,
    pub median_consensus_final: f64,
    pub consensus_decreased: bool,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct PaperOutcome {
    pub summary: PaperReplication,
    pub normality: NormalityOutcome,
}

/// Run the three-agent benchmark end to end.
pub fn replicate_paper(config: &ExperimentConfig, opts: &StudyOptions) -> Result<PaperOutcome> {
    let exp = config.build()?;
    let outcome = normality_study(&exp, opts)?;
    let m = exp.m();
    let x_star = exp.engine.problem().known_optimum.clone().expect("benchmark optimum");
    let agent1: Vec<DVector<f64>> = outcome
        .monte_carlo
        .replications
        .iter()
        .map(|r| r.final_state.x.rows(0, m).into_owned())
        .collect();
    let mean = sample_mean(&agent1);
    let se = mean_std_err(&agent1);
    let consistent = (0..m).all(|c| (mean[c] - x_star[c]).abs() <= 3.0 * se[c]);
    let early_k = 10.min(opts.steps);
    let median_of = |k| {
        let v: Vec<f64> = outcome
            .monte_carlo
            .checkpoint(k)
            .iter()
            .map(|c| c.consensus_error)
            .collect();
        median(&v)
    };
    let early = median_of(early_k);
    let last = median_of(opts.steps);
    let decreased = last < early;
    let summary = PaperReplication {
        accepted: outcome.report.accepted && consistent && decreased,
        normality: outcome.report.clone(),
        agent1_mean: mean.iter().copied().collect(),
        agent1_std_err: se.iter().copied().collect(),
        optimum: x_star.iter().copied().collect(),
        agent1_consistent: consistent,
        early_k,
        median_consensus_early: early,
        median_consensus_final: last,
        consensus_decreased: decreased,
    };
    Ok(PaperOutcome {
        summary,
        normality: outcome,
    })
}
