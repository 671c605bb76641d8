mod inputs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use viral3cm::montecarlo::{criterion_disagreement, estimate, estimate_with_log};
use viral3cm::report::{sweep_csv, to_json, trajectory_csv, trial_log_csv, DisagreementDocument, EstimateDocument};
use viral3cm::stochastic::PRNG_IDENTITY;
use viral3cm::{classify, integrate, ExperimentConfig, Parameters, StabilityReport};

use inputs::{load_experiment, AnalyzeConfig, IntegratorArgs, ParamArgs, SimulateConfig};
use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "viral3cm", version, about = "Three-component HIV model: stability, trajectories and persistence Monte-Carlo")]
struct Cli {
    /// Master seed; overrides `master_seed` from a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte-Carlo runs (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reproduction number, equilibria and their local stability.
    Analyze {
        /// Saved analyze config (`config.echo.json` from an earlier run).
        #[arg(long, conflicts_with_all = ["preset", "params"])]
        config: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Integrate one trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate the extinction probability for an experiment config.
    Montecarlo {
        config: PathBuf,
        /// Also write the per-cell table `sweep.csv`.
        #[arg(long)]
        per_cell: bool,
        /// Write one row per trial to this CSV file.
        #[arg(long)]
        per_trial: Option<PathBuf>,
    },
    /// Trials on which the asymptotic and finite-time criteria disagree.
    Disagreement { config: PathBuf },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Saved simulate config (`config.echo.json` from an earlier run).
    #[arg(long, conflicts_with_all = ["preset", "params", "t0", "i0", "v0", "t_end"])]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
    /// Initial healthy T cells, cells/μL.
    #[arg(long, allow_negative_numbers = true)]
    t0: Option<f64>,
    /// Initial infected cells, cells/μL.
    #[arg(long, allow_negative_numbers = true)]
    i0: Option<f64>,
    /// Initial virions, copies/μL.
    #[arg(long, allow_negative_numbers = true)]
    v0: Option<f64>,
    /// End time in days.
    #[arg(long, allow_negative_numbers = true)]
    t_end: Option<f64>,
    #[command(flatten)]
    integrator: IntegratorArgs,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("integration failed ({kind}): {message}")]
    Integration { kind: &'static str, message: String },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Integration { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<viral3cm::ConfigError> for CliError {
    fn from(e: viral3cm::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Successful run; `trial_failures` selects exit code 4.
struct Outcome {
    trial_failures: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome { trial_failures: 0 }) => ExitCode::SUCCESS,
        Ok(Outcome { trial_failures }) => {
            eprintln!("error: {trial_failures} trials failed; see `failures` in the output document");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", cli.out_dir.display())))?;
    let started = Instant::now();
    match &cli.command {
        Command::Analyze { config, params } => {
            let cfg = match config {
                Some(path) => inputs::load_file::<AnalyzeConfig>(path)?,
                None => AnalyzeConfig { params: params.resolve()? },
            };
            let doc = AnalyzeDocument::new(cfg.params);
            println!("R = {}  stable equilibrium: {:?}", doc.report.r, doc.report.stable_equilibrium);
            let mut m = Manifest::new("analyze", &cfg, None);
            write_output(cli, &mut m, "stability.json", to_json(&doc))?;
            finish(cli, m, &cfg, started, 0)
        }
        Command::Simulate(args) => {
            let cfg = match &args.config {
                Some(path) => inputs::load_file::<SimulateConfig>(path)?,
                None => SimulateConfig::from_args(args)?,
            };
            let traj = integrate(&cfg.params, cfg.init, cfg.t_end, &cfg.integrator)
                .map_err(|e| CliError::Integration { kind: e.kind(), message: e.to_string() })?;
            let last = traj.last();
            println!(
                "{} samples; state at t = {}: T = {}, I = {}, V = {}",
                traj.samples.len(),
                last.t,
                last.state.t_cells,
                last.state.infected,
                last.state.virions
            );
            let mut m = Manifest::new("simulate", &cfg, None);
            write_output(cli, &mut m, "trajectory.csv", trajectory_csv(&traj))?;
            finish(cli, m, &cfg, started, 0)
        }
        Command::Montecarlo { config, per_cell, per_trial } => {
            let cfg = experiment(cli, config)?;
            let (est, rows) = if per_trial.is_some() {
                let (est, rows) = estimate_with_log(&cfg, cli.workers)?;
                (est, Some(rows))
            } else {
                (estimate(&cfg, cli.workers)?, None)
            };
            println!(
                "p_extinct = {} [{}, {}] over {} trials ({} failed)",
                est.p_extinct, est.ci_low, est.ci_high, est.n_trials, est.n_failed
            );
            let mut m = Manifest::new("montecarlo", &cfg, Some(cfg.master_seed));
            write_output(cli, &mut m, "estimate.json", to_json(&EstimateDocument::new(&est)))?;
            if *per_cell {
                if est.cells.is_none() {
                    return Err(CliError::Config("--per-cell needs an initial-condition grid (`kind = \"grid\"`)".into()));
                }
                write_output(cli, &mut m, "sweep.csv", sweep_csv(&est))?;
            }
            if let (Some(path), Some(rows)) = (per_trial, rows) {
                write_file(&mut m, path, trial_log_csv(&rows))?;
            }
            finish(cli, m, &cfg, started, est.n_failed)
        }
        Command::Disagreement { config } => {
            let cfg = experiment(cli, config)?;
            let summary = criterion_disagreement(&cfg, cli.workers)?;
            println!(
                "R > 1 but below threshold: {}; R <= 1 but above threshold: {} (of {} trials)",
                summary.r_above_one_below_threshold.count, summary.r_at_most_one_above_threshold.count, summary.n_trials
            );
            let mut m = Manifest::new("disagreement", &cfg, Some(cfg.master_seed));
            write_output(cli, &mut m, "disagreement.json", to_json(&DisagreementDocument::new(&summary)))?;
            finish(cli, m, &cfg, started, summary.n_failed)
        }
    }
}

#[derive(Serialize)]
struct AnalyzeDocument {
    params: Parameters,
    #[serde(flatten)]
    report: StabilityReport,
}

impl AnalyzeDocument {
    fn new(params: Parameters) -> Self {
        AnalyzeDocument { params, report: classify(&params) }
    }
}

fn experiment(cli: &Cli, path: &Path) -> Result<ExperimentConfig, CliError> {
    let mut cfg = load_experiment(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(cli: &Cli, m: &mut Manifest, name: &str, contents: String) -> Result<(), CliError> {
    write_file(m, &cli.out_dir.join(name), contents)
}

fn write_file(m: &mut Manifest, path: &Path, contents: String) -> Result<(), CliError> {
    std::fs::write(path, contents.as_bytes()).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    m.add_output(path, contents.as_bytes());
    Ok(())
}

fn finish<C: Serialize>(cli: &Cli, mut m: Manifest, config: &C, started: Instant, failures: u64) -> Result<Outcome, CliError> {
    let echo = to_json(config);
    let echo_path = cli.out_dir.join("config.echo.json");
    std::fs::write(&echo_path, echo.as_bytes())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", echo_path.display())))?;
    if m.master_seed.is_some() {
        m.prng = Some(PRNG_IDENTITY);
    }
    m.wall_clock_seconds = started.elapsed().as_secs_f64();
    let path = cli.out_dir.join("manifest.json");
    std::fs::write(&path, to_json(&m)).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(Outcome { trial_failures: failures })
}
