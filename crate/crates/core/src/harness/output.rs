//! CSV and JSON emission.
//!
//! Floats in CSV files are written with 17 significant digits so equal runs
//! give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::engine::Trajectory;
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::studies::{EfficiencyOutcome, NormalityOutcome, PaperOutcome};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, fields: impl IntoIterator<Item = String>) {
    let row: Vec<String> = fields.into_iter().collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `k,gamma,agent,x0..,lambda0..,consensus_err,dist_opt`, one row per agent per record.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let m = traj.m;
    let mut out = String::new();
    let mut header = vec!["k".to_string(), "gamma".into(), "agent".into()];
    header.extend((0..m).map(|c| format!("x{c}")));
    header.extend((0..m).map(|c| format!("lambda{c}")));
    header.extend(["consensus_err".to_string(), "dist_opt".into()]);
    push_row(&mut out, header);
    for rec in &traj.records {
        let d = &rec.diagnostics;
        for i in 0..traj.n {
            let mut row = vec![
                rec.state.completed().to_string(),
                fmt_f64(rec.gamma),
                (i + 1).to_string(),
            ];
            row.extend((0..m).map(|c| fmt_f64(rec.state.x[i * m + c])));
            row.extend((0..m).map(|c| fmt_f64(rec.state.lambda[i * m + c])));
            row.push(fmt_f64(d.consensus_error));
            row.push(d.dist_to_optimum.map_or_else(String::new, fmt_f64));
            push_row(&mut out, row);
        }
    }
    out
}

#[derive(Serialize)]
struct FinalState<'a> {
    k: u64,
    x: Vec<f64>,
    lambda: Vec<f64>,
    consensus_err: f64,
    dist_opt: Option<f64>,
    config: &'a ExperimentConfig,
}

/// Trajectory CSV, JSON summary and a timing sidecar.
pub fn write_run(dir: &Path, config: &ExperimentConfig, traj: &Trajectory, seconds: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(traj))?;
    let last = traj.last();
    let summary = FinalState {
        k: last.state.completed(),
        x: last.state.x.iter().copied().collect(),
        lambda: last.state.lambda.iter().copied().collect(),
        consensus_err: last.diagnostics.consensus_error,
        dist_opt: last.diagnostics.dist_to_optimum,
        config,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_timing(dir, seconds)
}

/// Runtime lives apart from the summaries so those stay reproducible.
pub fn write_timing(dir: &Path, seconds: f64) -> Result<()> {
    write_json(&dir.join("timing.json"), &serde_json::json!({ "runtime_seconds": seconds }))
}

/// `replication,agent,component,value` for stacked per-replication vectors.
pub fn samples_csv(samples: &[DVector<f64>], m: usize) -> String {
    let mut out = String::from("replication,agent,component,value\n");
    for (r, s) in samples.iter().enumerate() {
        for (j, v) in s.iter().enumerate() {
            push_row(
                &mut out,
                [r.to_string(), (j / m + 1).to_string(), (j % m + 1).to_string(), fmt_f64(*v)],
            );
        }
    }
    out
}

pub fn write_normality(dir: &Path, outcome: &NormalityOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let m = outcome.model.m;
    fs::write(dir.join("scaled_errors.csv"), samples_csv(&outcome.scaled_errors, m))?;
    fs::write(dir.join("ks.csv"), ks_csv(outcome))?;
    write_json(&dir.join("normality.json"), &outcome.report)?;
    write_json(&dir.join("asymptotics.json"), &outcome.model.summary())
}

fn ks_csv(outcome: &NormalityOutcome) -> String {
    let mut out = String::from(
        "agent,component,theory_variance,ks_theory,ks_theory_pass,fitted_mean,fitted_variance,ks_fitted,ks_fitted_pass,critical\n",
    );
    for c in &outcome.report.components {
        push_row(
            &mut out,
            [
                c.agent.to_string(),
                c.component.to_string(),
                fmt_f64(c.theoretical.variance),
                fmt_f64(c.theoretical.statistic),
                c.theoretical.pass.to_string(),
                fmt_f64(c.fitted.mean),
                fmt_f64(c.fitted.variance),
                fmt_f64(c.fitted.statistic),
                c.fitted.pass.to_string(),
                fmt_f64(c.theoretical.critical),
            ],
        );
    }
    out
}

pub fn write_efficiency(dir: &Path, outcome: &EfficiencyOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let m = outcome.model.m;
    fs::write(dir.join("averaged_errors.csv"), samples_csv(&outcome.averaged_errors, m))?;
    fs::write(dir.join("last_errors.csv"), samples_csv(&outcome.last_errors, m))?;
    write_json(&dir.join("efficiency.json"), &outcome.report)?;
    write_json(&dir.join("asymptotics.json"), &outcome.model.summary())
}

/// Per-agent estimate CSVs plus the normality artefacts and a summary.
pub fn write_paper(dir: &Path, outcome: &PaperOutcome) -> Result<()> {
    write_normality(dir, &outcome.normality)?;
    let n = outcome.normality.model.n;
    let m = outcome.normality.model.m;
    for i in 0..n {
        let mut out = String::from("replication");
        for c in 0..m {
            let _ = write!(out, ",x{c}");
        }
        out.push('\n');
        for r in &outcome.normality.monte_carlo.replications {
            let mut row = vec![r.index.to_string()];
            row.extend((0..m).map(|c| fmt_f64(r.final_state.x[i * m + c])));
            push_row(&mut out, row);
        }
        fs::write(dir.join(format!("agent{}_estimates.csv", i + 1)), out)?;
    }
    write_json(&dir.join("replication.json"), &outcome.summary)
}
