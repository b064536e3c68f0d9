//! End-to-end acceptance criteria. Each criterion prints one line and the
//! process exits non-zero if any of them fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use distopt::asymptotics::{
    build_f, is_hurwitz, lyapunov_residual, reduced_drift, solve_lyapunov, AsymptoticModel,
};
use distopt::engine::{consensus_error, decompose_noise, distance_to_optimum, Engine, NoiseSpec, StepSchedule};
use distopt::harness::config::{ExperimentConfig, InitConfig};
use distopt::harness::montecarlo::{median, run_monte_carlo, MonteCarloOptions};
use distopt::harness::studies::{efficiency_study, normality_study, EfficiencyReport, NormalityOutcome, StudyOptions};
use distopt::linalg::{block2x2, kron_eye};
use distopt::problem::{section_six_regressors, ConstraintSet, LocalCost, ProblemSpec};
use distopt::{replication_rng, SimRng};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

const CONSISTENCY_DISTANCE: f64 = 0.1;
const CONSISTENCY_CONSENSUS: f64 = 0.05;
const KS_PASSES_REQUIRED: usize = 8;
const COVARIANCE_REL_FROBENIUS: f64 = 0.35;
const LYAPUNOV_RESIDUAL: f64 = 1e-8;
const LYAPUNOV_QUADRATURE: f64 = 1e-6;
const MOMENT_SE: f64 = 3.0;
const STEP_AGREEMENT: f64 = 1e-12;
const DRIFT_AGREEMENT: f64 = 1e-10;
const IDEMPOTENCE: f64 = 1e-12;
const NON_EXPANSIVE: f64 = 1e-12;
const NORMAL_CONE: f64 = 1e-10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn consistency() -> Verdict {
    let exp = ExperimentConfig::section_six().build().unwrap();
    let x_star = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
    let mut opts = MonteCarloOptions::new(100, 100_000, 2016);
    opts.checkpoints = vec![100_000];
    let mc = run_monte_carlo(&exp.engine, &exp.init, &opts, None).unwrap();
    let dist: Vec<f64> = mc
        .replications
        .iter()
        .map(|r| distance_to_optimum(&r.final_state.x, &x_star))
        .collect();
    let cons: Vec<f64> = mc
        .replications
        .iter()
        .map(|r| consensus_error(&r.final_state.x, 3))
        .collect();
    let (d, c) = (median(&dist), median(&cons));
    verdict(
        d <= CONSISTENCY_DISTANCE && c <= CONSISTENCY_CONSENSUS,
        format!("median max_i distance {d:.4} (<= {CONSISTENCY_DISTANCE}), median consensus {c:.4} (<= {CONSISTENCY_CONSENSUS})"),
    )
}

fn benchmark_normality() -> NormalityOutcome {
    let c = ExperimentConfig::section_six();
    let exp = c.build().unwrap();
    let mut opts = StudyOptions::from_config(&c);
    opts.replications = 1000;
    opts.steps = 1000;
    opts.fit = true;
    normality_study(&exp, &opts).unwrap()
}

fn fitted_normality(out: &NormalityOutcome) -> Verdict {
    let r = &out.report;
    verdict(
        r.passes_fitted >= KS_PASSES_REQUIRED,
        format!(
            "{} of {} fitted KS tests pass at alpha {} (theoretical variance: {} of {})",
            r.passes_fitted,
            r.components.len(),
            r.alpha,
            r.passes_theoretical,
            r.components.len()
        ),
    )
}

fn theoretical_covariance(out: &NormalityOutcome) -> Verdict {
    let r = &out.report;
    verdict(
        r.relative_frobenius <= COVARIANCE_REL_FROBENIUS,
        format!(
            "relative Frobenius error {:.4} ± {:.4} (<= {COVARIANCE_REL_FROBENIUS}), fitted KS passes {}",
            r.relative_frobenius, r.relative_frobenius_std_err, r.passes_fitted
        ),
    )
}

fn lyapunov() -> Verdict {
    let mut rng = SimRng::seed_from_u64(4);
    let (mut worst_res, mut worst_quad) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = rng.random_range(3..=20);
        let f = random_hurwitz(&mut rng, d);
        let s1 = random_psd(&mut rng, d);
        let sigma = solve_lyapunov(&f, &s1).unwrap();
        worst_res = worst_res.max(lyapunov_residual(&f, &sigma, &s1));
        let abscissa = is_hurwitz(&f).1;
        let radius = f.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let horizon = 40.0 / abscissa.abs();
        let intervals = 2 * ((horizon * radius / 0.1).ceil() as usize / 2 + 1);
        let coarse = lyapunov_quadrature(&f, &s1, horizon, intervals);
        let fine = lyapunov_quadrature(&f, &s1, horizon, 2 * intervals);
        // Richardson step for the fourth-order Simpson error.
        let quad = (fine * 16.0 - coarse) / 15.0;
        worst_quad = worst_quad.max((&sigma - &quad).norm() / sigma.norm());
    }
    verdict(
        worst_res <= LYAPUNOV_RESIDUAL && worst_quad <= LYAPUNOV_QUADRATURE,
        format!("worst residual {worst_res:.2e} (<= {LYAPUNOV_RESIDUAL:e}), worst quadrature gap {worst_quad:.2e} (<= {LYAPUNOV_QUADRATURE:e})"),
    )
}

fn hurwitz() -> Verdict {
    let mut rng = SimRng::seed_from_u64(7);
    let mut family = 0;
    for _ in 0..100 {
        let p = rng.random_range(2..12);
        let q = rng.random_range(1..=p);
        let x = random_psd(&mut rng, p) + DMatrix::identity(p, p) * 0.05;
        let y = DMatrix::from_fn(q, p, |_, _| rng.random_range(-1.0..1.0));
        let f = -block2x2(&x, &y.transpose(), &(-&y), &DMatrix::zeros(q, q));
        if is_hurwitz(&f).0 {
            family += 1;
        }
    }
    let model = AsymptoticModel::from_engine(&section_six_engine()).unwrap();
    let (bench, abscissa) = is_hurwitz(&model.f);
    let dec = &model.decomposition;
    let rejected_by_builder = build_f(dec, &DMatrix::zeros(9, 9), 3).is_err();
    let v1s = kron_eye(&(&dec.v1 * dec.s_matrix()), 3);
    let zero_h = -block2x2(
        &kron_eye(&dec.mean_laplacian, 3),
        &v1s,
        &(-v1s.transpose()),
        &DMatrix::zeros(6, 6),
    );
    let (zero_h_hurwitz, zero_h_abscissa) = is_hurwitz(&zero_h);
    verdict(
        family == 100 && bench && model.f.shape() == (15, 15) && rejected_by_builder && !zero_h_hurwitz,
        format!(
            "{family}/100 random instances Hurwitz, benchmark abscissa {abscissa:.4}, H=0 abscissa {zero_h_abscissa:.1e} rejected"
        ),
    )
}

fn moment_bounds() -> Verdict {
    let engine = section_six_engine();
    let bounds = engine.noise_bounds();
    let lbar = engine.mean_laplacian().clone();
    let draws = 100_000;
    let mut rng = replication_rng(6, 0);
    let (mut bound_ok, mut mean_ok, mut outlying_components) = (0, 0, 0);
    let mut worst_ratio = 0.0f64;
    for s in 0..10 {
        let state = random_state(&mut rng, 9, 2.0, 1);
        let mut sq = [(0.0, 0.0); 3];
        let mut sums = [DVector::zeros(9), DVector::zeros(9), DVector::zeros(9)];
        let mut sums2 = [DVector::zeros(9), DVector::zeros(9), DVector::zeros(9)];
        let mut draw_rng = replication_rng(600, s);
        for _ in 0..draws {
            let draw = engine.draw(&state, &mut draw_rng);
            let v = &draw.gradients - engine.problem().stacked_gradient(&state.x);
            let t = decompose_noise(
                &draw.graph.laplacian(),
                &lbar,
                &state,
                &draw.aggregated_omega(3),
                &draw.aggregated_zeta(3),
                &v,
            );
            for (j, e) in [&t.e1, &t.e2, &t.e3].into_iter().enumerate() {
                let n2 = e.norm_squared();
                sq[j].0 += n2;
                sq[j].1 += n2 * n2;
                sums[j] += e;
                sums2[j] += e.component_mul(e);
            }
        }
        let n = draws as f64;
        let limits = [bounds.e1(&state), bounds.e2(&state), bounds.e3(&state)];
        for j in 0..3 {
            let mean = sq[j].0 / n;
            let se = ((sq[j].1 / n - mean * mean).max(0.0) / n).sqrt();
            if mean <= limits[j] + MOMENT_SE * se {
                bound_ok += 1;
            }
            worst_ratio = worst_ratio.max(mean / limits[j]);
            // Standard error of the mean vector: √(tr Cov / N).
            let mu = &sums[j] / n;
            let var = &sums2[j] / n - mu.component_mul(&mu);
            let se = (var.sum().max(0.0) / n).sqrt();
            if mu.norm() <= MOMENT_SE * se {
                mean_ok += 1;
            }
            outlying_components += (0..9)
                .filter(|&c| mu[c].abs() > MOMENT_SE * (var[c].max(0.0) / n).sqrt())
                .count();
        }
    }
    verdict(
        bound_ok == 30 && mean_ok == 30,
        format!(
            "{bound_ok}/30 second moments within bound + 3 SE (largest mean/bound {worst_ratio:.3}), {mean_ok}/30 mean vectors within 3 SE of 0 ({outlying_components} of 270 components beyond 3 SE, 0.7 expected)"
        ),
    )
}

fn algebraic_oracles() -> Verdict {
    let engine = section_six_engine();
    let mut rng = replication_rng(7, 0);
    let (mut step_gap, mut decomposition_gap) = (0.0f64, 0.0f64);
    let mut state = random_state(&mut rng, 9, 3.0, 1);
    for _ in 0..1000 {
        let draw = engine.draw(&state, &mut rng);
        let (a, pre) = engine.apply(&state, &draw);
        let (b, _) = compact_step(&engine, &state, &draw);
        step_gap = step_gap.max(max_abs(&a.x, &b.x)).max(max_abs(&a.lambda, &b.lambda));
        let v = &draw.gradients - engine.problem().stacked_gradient(&state.x);
        let t = decompose_noise(
            &draw.graph.laplacian(),
            engine.mean_laplacian(),
            &state,
            &draw.aggregated_omega(3),
            &draw.aggregated_zeta(3),
            &v,
        );
        let (pre2, lambda2) = mean_field_step(&engine, &state, &t.e1, &t.e2, &t.e3);
        decomposition_gap = decomposition_gap.max(max_abs(&pre, &pre2)).max(max_abs(&a.lambda, &lambda2));
        state = a;
    }

    let x_star = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
    let quiet = ProblemSpec::unconstrained(
        section_six_regressors()
            .into_iter()
            .map(|r| LocalCost::quadratic(r, x_star.clone()))
            .collect(),
    )
    .unwrap()
    .with_optimum(x_star)
    .unwrap();
    let engine = Engine::new(quiet, mean_gossip_graph(), NoiseSpec::zero(3), StepSchedule::default()).unwrap();
    let model = AsymptoticModel::from_engine(&engine).unwrap();
    let reducer = model.reducer(engine.problem()).unwrap();
    let mut drift_gap = 0.0f64;
    let mut state = random_state(&mut rng, 9, 3.0, 1);
    for _ in 0..1000 {
        let gamma = engine.schedule().gamma(state.k);
        let theta = reducer.theta(&state);
        let next = engine.advance(&state, &mut rng);
        let predicted = &theta + reduced_drift(engine.problem(), &model.decomposition, &theta).unwrap() * gamma;
        drift_gap = drift_gap.max(max_abs(&reducer.theta(&next), &predicted));
        state = next;
    }
    verdict(
        step_gap <= STEP_AGREEMENT && decomposition_gap <= STEP_AGREEMENT && drift_gap <= DRIFT_AGREEMENT,
        format!("per-agent vs stacked {step_gap:.1e}, noise decomposition {decomposition_gap:.1e}, reduced drift {drift_gap:.1e}"),
    )
}

fn random_vec(rng: &mut SimRng, m: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.random_range(-scale..scale))
}

fn random_set(rng: &mut SimRng, variant: usize, m: usize) -> ConstraintSet {
    match variant {
        0 => ConstraintSet::FullSpace,
        1 => {
            let lower = random_vec(rng, m, 5.0);
            let upper = &lower + DVector::from_fn(m, |_, _| rng.random_range(0.1..5.0));
            ConstraintSet::Box { lower, upper }
        }
        2 => ConstraintSet::Ball {
            center: random_vec(rng, m, 5.0),
            radius: rng.random_range(0.1..5.0),
        },
        3 => ConstraintSet::Halfspace {
            normal: random_vec(rng, m, 2.0).add_scalar(0.01),
            offset: rng.random_range(-5.0..5.0),
        },
        _ => {
            let rows = rng.random_range(1..m);
            ConstraintSet::AffineSlab {
                matrix: DMatrix::from_fn(rows, m, |_, _| rng.random_range(-1.0..1.0)),
                vector: random_vec(rng, rows, 2.0),
            }
        }
    }
}

/// A boundary point and a direction from the closed-form normal cone there.
fn analytic_cone(rng: &mut SimRng, set: &ConstraintSet, m: usize) -> Option<(DVector<f64>, DVector<f64>)> {
    match set {
        ConstraintSet::Box { lower, upper } => {
            let mut x = DVector::zeros(m);
            let mut v = DVector::zeros(m);
            for c in 0..m {
                match rng.random_range(0..3) {
                    0 => {
                        x[c] = lower[c];
                        v[c] = -rng.random_range(0.0..4.0);
                    }
                    1 => {
                        x[c] = upper[c];
                        v[c] = rng.random_range(0.0..4.0);
                    }
                    _ => x[c] = rng.random_range(lower[c]..upper[c]),
                }
            }
            Some((x, v))
        }
        ConstraintSet::Ball { center, radius } => {
            let u = random_vec(rng, m, 1.0).add_scalar(1e-3).normalize();
            Some((center + &u * *radius, u * rng.random_range(0.0..10.0)))
        }
        ConstraintSet::Halfspace { normal, offset } => {
            let z = random_vec(rng, m, 5.0);
            let x = &z - normal * ((normal.dot(&z) - offset) / normal.norm_squared());
            Some((x, normal * rng.random_range(0.0..10.0)))
        }
        _ => None,
    }
}

fn projections() -> Verdict {
    let names = ["full space", "box", "ball", "halfspace", "affine"];
    let mut rng = SimRng::seed_from_u64(8);
    let mut failures = Vec::new();
    let (mut idem, mut expand, mut cone) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    for (variant, name) in names.iter().enumerate() {
        let mut bad = 0;
        for _ in 0..1000 {
            let m = rng.random_range(2..6);
            let set = random_set(&mut rng, variant, m);
            let x = random_vec(&mut rng, m, 10.0);
            let y = random_vec(&mut rng, m, 10.0);
            let (px, py) = (set.project(&x), set.project(&y));
            let i = (set.project(&px) - &px).amax();
            let e = (&px - &py).norm() - (&x - &y).norm();
            // z − P(z) lies in the normal cone at P(z) for every variant.
            let s = rng.random_range(0.0..5.0);
            let mut c = (set.project(&(&px + (&x - &px) * s)) - &px).amax();
            if let Some((b, v)) = analytic_cone(&mut rng, &set, m) {
                c = c.max((set.project(&(&b + v)) - &b).amax());
            }
            idem = idem.max(i);
            expand = expand.max(e);
            cone = cone.max(c);
            if i > IDEMPOTENCE || e > NON_EXPANSIVE || c > NORMAL_CONE {
                bad += 1;
            }
        }
        if bad > 0 {
            failures.push(format!("{name}: {bad}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "5 variants x 1000 instances, idempotence {idem:.1e}, expansion {expand:.1e}, normal cone {cone:.1e}{}",
            if failures.is_empty() { String::new() } else { format!(", failing {}", failures.join(", ")) }
        ),
    )
}

fn efficiency_report(c: &ExperimentConfig) -> EfficiencyReport {
    let exp = c.build().unwrap();
    let mut opts = StudyOptions::from_config(c);
    opts.replications = 1000;
    opts.steps = 10_000;
    efficiency_study(&exp, &opts).unwrap().report
}

fn efficiency() -> Verdict {
    let c = ExperimentConfig::section_six();
    let r = efficiency_report(&c);
    // Same protocol started at the optimum, to separate the start-up transient.
    let mut warm = c.clone();
    warm.init = Some(InitConfig {
        x: Some([1.0, 2.0, 3.0].repeat(3)),
        lambda: None,
    });
    let w = efficiency_report(&warm);
    verdict(
        r.averaged_beats_last && r.relative_frobenius <= COVARIANCE_REL_FROBENIUS,
        format!(
            "error trace averaged {:.3e} vs last {:.3e}, scaled traces {:.3} vs {:.3} (limits {:.3} vs {:.3}), relative Frobenius {:.4} ± {:.4} (<= {COVARIANCE_REL_FROBENIUS}); started at x*: {:.4} ± {:.4}",
            r.averaged_error_trace,
            r.last_error_trace,
            r.averaged_scaled_trace,
            r.last_scaled_trace,
            r.theoretical_averaged_trace,
            r.theoretical_last_trace,
            r.relative_frobenius,
            r.relative_frobenius_std_err,
            w.relative_frobenius,
            w.relative_frobenius_std_err
        ),
    )
}

type Check<'a> = Box<dyn FnOnce() -> Verdict + 'a>;

fn main() -> ExitCode {
    let start = Instant::now();
    let normality = benchmark_normality();
    let criteria: Vec<(&str, Check)> = vec![
        ("benchmark consistency", Box::new(consistency)),
        ("fitted normality", Box::new(|| fitted_normality(&normality))),
        ("theoretical covariance", Box::new(|| theoretical_covariance(&normality))),
        ("Lyapunov solver", Box::new(lyapunov)),
        ("Hurwitz drift", Box::new(hurwitz)),
        ("noise moment bounds", Box::new(moment_bounds)),
        ("algebraic oracles", Box::new(algebraic_oracles)),
        ("projections", Box::new(projections)),
        ("averaged iterate efficiency (slow)", Box::new(efficiency)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} [{:.1}s] {}",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {} of 9 passed in {:.0}s", 9 - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
