use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use distopt::asymptotics::AsymptoticModel;
use distopt::harness::config::ExperimentConfig;
use distopt::harness::montecarlo::{median, run_monte_carlo, MonteCarloOptions};
use distopt::harness::output::{self, fmt_f64};
use distopt::harness::studies::{efficiency_study, normality_study, replicate_paper, StudyOptions};
use distopt::{replication_rng, Result};

/// Distributed primal-dual stochastic approximation over noisy random networks.
#[derive(Parser)]
#[command(name = "distopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write it as CSV.
    Run {
        #[command(flatten)]
        common: Common,
        /// Record every N-th step.
        #[arg(long, value_name = "N")]
        record_every: Option<u64>,
    },
    /// Independent replications with consensus and optimality checkpoints.
    Montecarlo(Common),
    /// Drift matrix, limit covariances and per-agent blocks.
    Asymptotics(Common),
    /// KS tests of the scaled last iterate against its limit law.
    Normality(Common),
    /// Averaged iterate against the efficient covariance.
    Efficiency(Common),
    /// The three-agent benchmark end to end.
    ReplicatePaper(Common),
    /// Parse and validate a config, then exit.
    ValidateConfig(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON experiment file. Defaults to the three-agent benchmark.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Number of replications.
    #[arg(long, value_name = "N")]
    reps: Option<usize>,
    /// Steps per replication.
    #[arg(long, value_name = "K")]
    steps: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Judge normality against fitted normals.
    #[arg(long)]
    fit: bool,
    /// Worker threads for replications.
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::section_six(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(r) = self.reps {
            c.replications = r;
        }
        if let Some(k) = self.steps {
            c.steps = k;
        }
        if let Some(o) = &self.out {
            c.output = Some(o.clone());
        }
        c.fit |= self.fit;
        Ok(c)
    }

    fn study(&self, c: &ExperimentConfig) -> StudyOptions {
        let mut o = StudyOptions::from_config(c);
        o.parallel = self.parallel;
        o
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

enum Outcome {
    Pass,
    Fail,
}

fn accepted(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

#[derive(Serialize)]
struct CheckpointSummary {
    k: u64,
    median_consensus_err: f64,
    median_dist_opt: Option<f64>,
}

fn checkpoints(steps: u64) -> Vec<u64> {
    let mut ks: Vec<u64> = std::iter::successors(Some(10u64), |k| k.checked_mul(10))
        .take_while(|&k| k < steps)
        .collect();
    ks.push(steps);
    ks
}

fn montecarlo(common: &Common) -> Result<Outcome> {
    let c = common.load()?;
    let exp = c.build()?;
    let mut opts = MonteCarloOptions::new(c.replications, c.steps, c.seed);
    opts.parallel = common.parallel;
    opts.checkpoints = checkpoints(c.steps);
    let start = Instant::now();
    let mc = run_monte_carlo(&exp.engine, &exp.init, &opts, None)?;
    let seconds = start.elapsed().as_secs_f64();
    let summary: Vec<CheckpointSummary> = opts
        .checkpoints
        .iter()
        .map(|&k| {
            let cps = mc.checkpoint(k);
            let cons: Vec<f64> = cps.iter().map(|c| c.consensus_error).collect();
            let dist: Option<Vec<f64>> = cps.iter().map(|c| c.dist_to_optimum).collect();
            CheckpointSummary {
                k,
                median_consensus_err: median(&cons),
                median_dist_opt: dist.map(|d| median(&d)),
            }
        })
        .collect();
    match &c.output {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let m = exp.m();
            let mut csv = String::from("replication,agent");
            for j in 0..m {
                csv.push_str(&format!(",x{j}"));
            }
            for j in 0..m {
                csv.push_str(&format!(",lambda{j}"));
            }
            csv.push('\n');
            for r in &mc.replications {
                for i in 0..exp.n() {
                    let mut row = vec![r.index.to_string(), (i + 1).to_string()];
                    row.extend((0..m).map(|j| fmt_f64(r.final_state.x[i * m + j])));
                    row.extend((0..m).map(|j| fmt_f64(r.final_state.lambda[i * m + j])));
                    csv.push_str(&row.join(","));
                    csv.push('\n');
                }
            }
            std::fs::write(dir.join("final_states.csv"), csv)?;
            output::write_json(&dir.join("montecarlo.json"), &summary)?;
            output::write_timing(dir, seconds)?;
        }
        None => print_json(&summary)?,
    }
    Ok(Outcome::Pass)
}

fn run(common: &Common, record_every: Option<u64>) -> Result<Outcome> {
    let mut c = common.load()?;
    if record_every.is_some() {
        c.record_every = record_every;
    }
    let exp = c.build()?;
    let every = c.record_every.unwrap_or(1);
    let mut rng = replication_rng(c.seed, 0);
    let start = Instant::now();
    let traj = exp.engine.run(exp.init.clone(), c.steps, every, &mut rng)?;
    let seconds = start.elapsed().as_secs_f64();
    match &c.output {
        Some(dir) => output::write_run(dir, &c, &traj, seconds)?,
        None => print!("{}", output::trajectory_csv(&traj)),
    }
    Ok(Outcome::Pass)
}

fn asymptotics(common: &Common) -> Result<Outcome> {
    let c = common.load()?;
    let exp = c.build()?;
    let summary = AsymptoticModel::from_engine(&exp.engine)?.summary();
    match &c.output {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            output::write_json(&dir.join("asymptotics.json"), &summary)?;
        }
        None => print_json(&summary)?,
    }
    Ok(Outcome::Pass)
}

fn timed<T>(dir: Option<&Path>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let v = f()?;
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        output::write_timing(d, start.elapsed().as_secs_f64())?;
    }
    Ok(v)
}

fn normality(common: &Common) -> Result<Outcome> {
    let c = common.load()?;
    let exp = c.build()?;
    let opts = common.study(&c);
    let out = timed(c.output.as_deref(), || normality_study(&exp, &opts))?;
    match &c.output {
        Some(dir) => output::write_normality(dir, &out)?,
        None => print_json(&out.report)?,
    }
    Ok(accepted(out.report.accepted))
}

fn efficiency(common: &Common) -> Result<Outcome> {
    let c = common.load()?;
    let exp = c.build()?;
    let opts = common.study(&c);
    let out = timed(c.output.as_deref(), || efficiency_study(&exp, &opts))?;
    match &c.output {
        Some(dir) => output::write_efficiency(dir, &out)?,
        None => print_json(&out.report)?,
    }
    Ok(accepted(out.report.accepted))
}

fn paper(common: &Common) -> Result<Outcome> {
    let c = common.load()?;
    let opts = common.study(&c);
    let out = timed(c.output.as_deref(), || replicate_paper(&c, &opts))?;
    match &c.output {
        Some(dir) => output::write_paper(dir, &out)?,
        None => print_json(&out.summary)?,
    }
    Ok(accepted(out.summary.accepted))
}

fn validate(common: &Common) -> Result<Outcome> {
    let c = common.load()?;
    let exp = c.build()?;
    println!(
        "ok: {} agents, dimension {}, mode {:?}",
        exp.n(),
        exp.m(),
        c.mode
    );
    Ok(Outcome::Pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, record_every } => run(common, *record_every),
        Command::Montecarlo(c) => montecarlo(c),
        Command::Asymptotics(c) => asymptotics(c),
        Command::Normality(c) => normality(c),
        Command::Efficiency(c) => efficiency(c),
        Command::ReplicatePaper(c) => paper(c),
        Command::ValidateConfig(c) => validate(c),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => {
            eprintln!("statistical acceptance failed");
            ExitCode::from(2)
        }
        Err(e) => {
            if e.is_config_error() {
                eprintln!("{e}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
    }
}

