//! Command-line laboratory for multiclass parallel-server queueing systems.
//!
//! The binary exposes five subcommands:
//!
//! - `analyze`: solve the fluid relaxation of a model file and print the
//!   allocation, heavy-traffic verdicts, and diffusion coefficients as JSON.
//! - `simulate`: run replications of one policy at a fixed system size and
//!   write scaled sample paths and per-replication summaries as CSV.
//! - `bcp`: estimate the Brownian control lower bound on long-run cost for a
//!   model and print the estimate as JSON.
//! - `study`: run a full convergence study (several system sizes, several
//!   policies, common random numbers) and write its report bundle.
//! - `report`: re-render a stored study report as Markdown.
//!
//! Exit codes: 0 on success, 2 for configuration and modeling errors, 1 for
//! runtime failures.  Usage errors reported by the argument parser also exit
//! with 2.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nds_core::bcp::{lower_bound_estimate, RbmParams};
use nds_core::config;
use nds_core::fluid;
use nds_core::model::build_instance;
use nds_core::policy::{Policy, PolicyKind};
use nds_core::rng::rep_seed;
use nds_core::sim::{run_simulation, write_paths_csv, write_summary_csv, RecordMode, RunConfig};
use nds_core::study::{load_report, render_markdown, run_convergence_study, write_study_outputs};
use nds_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "nds-lab",
    version,
    about = "Simulation and diffusion analysis for multiclass parallel-server queues"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fluid relaxation of a model and print the analysis as JSON
    Analyze {
        /// Model file (TOML or JSON)
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
    },
    /// Run replications at one system size and write CSV records
    Simulate {
        /// Model file (TOML or JSON)
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// System size n
        #[arg(long)]
        n: u64,
        /// Horizon in diffusion time units
        #[arg(long, default_value_t = 10.0)]
        u: f64,
        /// Scheduling policy: tracking, greedy, random, or fifo
        #[arg(long, default_value = "tracking")]
        policy: PolicyKind,
        /// Master seed; replication r draws from streams keyed by (seed, r)
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of replications
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Directory for paths-<rep>.csv and summary.csv
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Estimate the Brownian lower bound on long-run cost and print JSON
    Bcp {
        /// Model file (TOML or JSON)
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Horizon of the reflected diffusion
        #[arg(long, default_value_t = 10.0)]
        u: f64,
        /// Time step (default: horizon / 10000)
        #[arg(long)]
        dt: Option<f64>,
        /// Number of independent diffusion replications
        #[arg(long, default_value_t = 400)]
        reps: usize,
        /// Seed for the diffusion noise streams
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a convergence study described by a config with a [study] table
    Study {
        /// Study config file (TOML or JSON)
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Output directory (overrides the config's out_dir)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Render a stored study report as Markdown on stdout
    Report {
        /// Directory containing report.json
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Analyze { model } => cmd_analyze(&model),
        Command::Simulate { model, n, u, policy, seed, reps, out } => {
            cmd_simulate(&model, n, u, policy, seed, reps, &out)
        }
        Command::Bcp { model, u, dt, reps, seed } => cmd_bcp(&model, u, dt, reps, seed),
        Command::Study { config, out } => cmd_study(&config, out),
        Command::Report { dir } => cmd_report(&dir),
    }
}

fn to_pretty_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Writes text to stdout.  A closed pipe (for example `nds-lab analyze | head`)
/// ends the program quietly instead of failing.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let outcome = out.write_all(text.as_bytes()).and_then(|()| out.flush());
    match outcome {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(Error::Io(e)),
    }
}

fn cmd_analyze(model: &Path) -> Result<()> {
    let spec = config::load_model(model)?;
    let solution = fluid::analyze(&spec.topology, &spec.params)?;
    let root = solution
        .theta
        .as_ref()
        .map(|theta| spec.tracking.root_class.unwrap_or_else(|| spec.cost.default_root(theta)));
    let stationary_mean = solution
        .workload_drift()
        .zip(solution.workload_variance())
        .and_then(|(m, v)| RbmParams::new(m, v).stationary_mean());
    let out = serde_json::json!({
        "fluid": solution,
        "workload_drift": solution.workload_drift(),
        "workload_variance": solution.workload_variance(),
        "workload_stationary_mean": stationary_mean,
        "cost": spec.cost.kind_name(),
        "tracking_root_class": root,
    });
    emit(&format!("{}\n", to_pretty_json(&out)?))
}

fn cmd_simulate(
    model: &Path,
    n: u64,
    u: f64,
    policy: PolicyKind,
    seed: u64,
    reps: usize,
    out: &Path,
) -> Result<()> {
    if reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    let spec = config::load_model(model)?;
    let solution = fluid::analyze(&spec.topology, &spec.params)?;
    let instance = build_instance(&spec.topology, &spec.params, n)?;
    let policy = Policy::build(policy, &instance, &solution, &spec.cost, &spec.tracking)?;
    std::fs::create_dir_all(out)?;

    let mut summaries = Vec::with_capacity(reps);
    for rep in 0..reps {
        let cfg = RunConfig {
            horizon: u,
            seed: rep_seed(seed, rep as u64),
            record: RecordMode::Auto,
            ..RunConfig::default()
        };
        let run = run_simulation(&instance, &solution, &spec.cost, &policy, &spec.tracking, &cfg)?;
        if let Some(path) = &run.path {
            let file = File::create(out.join(format!("paths-{rep}.csv")))?;
            let mut writer = BufWriter::new(file);
            write_paths_csv(&mut writer, path, &spec.topology.edges)?;
            writer.flush()?;
        }
        summaries.push(run.summary);
    }

    let file = File::create(out.join("summary.csv"))?;
    let mut writer = BufWriter::new(file);
    write_summary_csv(&mut writer, &summaries)?;
    writer.flush()?;

    let events: u64 = summaries.iter().map(|s| s.events).sum();
    emit(&format!(
        "simulated {reps} replication(s) at n={n} over horizon {u} ({events} events); wrote {}\n",
        out.display()
    ))
}

fn cmd_bcp(model: &Path, u: f64, dt: Option<f64>, reps: usize, seed: u64) -> Result<()> {
    let spec = config::load_model(model)?;
    let solution = fluid::analyze(&spec.topology, &spec.params)?;
    let (Some(drift), Some(variance)) = (solution.workload_drift(), solution.workload_variance())
    else {
        return Err(Error::Fluid(format!(
            "the workload diffusion is undefined for this model: {}",
            solution.notes.join("; ")
        )));
    };
    let theta = solution.theta.as_ref().expect("drift implies a workload direction");
    let dt = dt.unwrap_or(u / 1e4);
    let estimate =
        lower_bound_estimate(&spec.cost, theta, &RbmParams::new(drift, variance), u, dt, reps, seed)?;
    emit(&format!("{}\n", to_pretty_json(&estimate)?))
}

fn cmd_study(config_path: &Path, out_flag: Option<PathBuf>) -> Result<()> {
    let spec = config::load_study(config_path)?;
    let out_dir = out_flag
        .or_else(|| spec.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("study-out"));
    let outcome = run_convergence_study(&spec)?;
    let written = write_study_outputs(&outcome, &spec.model.topology.edges, &out_dir)?;

    let report = &outcome.report;
    let mut lines = format!(
        "study complete: {} cells, {} events, {} invariant violations\n",
        report.cells.len(),
        report.total_events,
        report.total_violations
    );
    lines.push_str(&format!(
        "diffusion lower bound {:.6} (se {:.3e}) over horizon {}\n",
        report.lower_bound.mean, report.lower_bound.se, report.lower_bound.horizon
    ));
    for cell in &report.cells {
        lines.push_str(&format!(
            "  {:>9} n={:<6} cost {:.4}  ratio to bound {:.3}\n",
            cell.policy, cell.n, cell.cost_mean, cell.ratio_to_lb
        ));
    }
    for path in &written {
        lines.push_str(&format!("wrote {}\n", path.display()));
    }
    emit(&lines)
}

fn cmd_report(dir: &Path) -> Result<()> {
    let report = load_report(dir)?;
    let mut markdown = render_markdown(&report);
    if !markdown.ends_with('\n') {
        markdown.push('\n');
    }
    emit(&markdown)
}
