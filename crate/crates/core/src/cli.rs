//! The `mdplab` command line.
//!
//! Every artifact carries the run id, a hash of the effective configuration. Timestamps and
//! wall-clock times go only to `registry.jsonl` in the output directory, so all other
//! artifacts are byte-identical across reruns.
//!
//! Exit codes: 0 on success, 2 when a pass criterion fails, 1 on any error (including usage
//! errors).

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use crate::model::verify_assumptions;
use crate::noise::{Control, DeviationScale};
use crate::rate::{optimal_tilt, EndpointRate, RateOptions};
use crate::rng::stream;
use crate::solvers::{evolve_deterministic, evolve_stochastic_with, solve_skeleton, StochasticOptions, TimeGrid, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CRITERION: i32 = 2;

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "MDPLAB_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "mdplab", version, about = "Moderate-deviation experiments for dissipative equations with Poisson noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print nothing on success
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structural assumptions of the configured model
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Integrate the deterministic equation, or the stochastic one when --epsilon is given
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Solve the skeleton equation for the configured constant control
    Skeleton {
        #[command(flatten)]
        common: Common,
    },
    /// Quadratic endpoint rate of a target state
    Rate {
        #[command(flatten)]
        common: Common,
        /// Target state, comma separated
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        target: Option<Vec<f64>>,
        #[arg(long)]
        cg_tol: Option<f64>,
    },
    /// Run an experiment (lln, mdp1, mdp2, tail)
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Overrides experiment.name
        #[arg(long)]
        name: Option<ExperimentKind>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Check { common, .. }
            | Self::Simulate { common, .. }
            | Self::Skeleton { common }
            | Self::Rate { common, .. }
            | Self::Experiment { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Check { .. } => "check",
            Self::Simulate { .. } => "simulate",
            Self::Skeleton { .. } => "skeleton",
            Self::Rate { .. } => "rate",
            Self::Experiment { .. } => "experiment",
        }
    }
}

/// Result of one command: artifacts written and any failed pass criteria.
#[derive(Debug, Default)]
pub struct Outcome {
    pub run_id: String,
    pub artifacts: Vec<PathBuf>,
    pub failures: Vec<String>,
    /// Printed to stdout unless `--quiet`.
    pub summary: String,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let quiet = cli.command.common().quiet;
    match run_in_pool(&cli.command) {
        Ok(outcome) => {
            if !quiet && !outcome.summary.is_empty() {
                println!("{}", outcome.summary);
            }
            if outcome.failures.is_empty() {
                EXIT_OK
            } else {
                eprintln!("pass criteria failed (run {}):", outcome.run_id);
                for f in &outcome.failures {
                    eprintln!("  {f}");
                }
                EXIT_CRITERION
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidConfig(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        // rayon picks the available parallelism
        Err(_) => Ok(0),
    }
}

fn run_in_pool(command: &Command) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count()?)
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_command(command))
}

/// Runs a parsed command and writes its artifacts and registry entry.
pub fn run_command(command: &Command) -> Result<Outcome> {
    let started = Instant::now();
    let common = command.common();
    let mut config = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        if i64::try_from(seed).is_err() {
            return Err(Error::InvalidConfig(format!("--seed {seed} exceeds {}", i64::MAX)));
        }
        config.seed.master = seed;
    }
    if let Some(out) = &common.out {
        config.output.directory = out.clone();
    }
    let out_dir = config.output.directory.clone();
    fs::create_dir_all(&out_dir)?;

    let outcome = match command {
        Command::Check { samples, tol, .. } => cmd_check(&config, *samples, *tol)?,
        Command::Simulate { epsilon, .. } => cmd_simulate(&mut config, *epsilon)?,
        Command::Skeleton { .. } => cmd_skeleton(&config)?,
        Command::Rate { target, cg_tol, .. } => cmd_rate(&mut config, target.clone(), *cg_tol)?,
        Command::Experiment { name, .. } => cmd_experiment(&mut config, *name)?,
    };
    append_registry(&out_dir, command.name(), &outcome, started.elapsed().as_secs_f64())?;
    Ok(outcome)
}

fn append_registry(dir: &Path, command: &str, outcome: &Outcome, wall_clock: f64) -> Result<()> {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let entry = json!({
        "run_id": outcome.run_id,
        "timestamp": timestamp,
        "command": command,
        "artifacts": outcome.artifacts,
        "provenance": format!("mdplab {}", env!("CARGO_PKG_VERSION")),
        "wall_clock": wall_clock,
    });
    let mut f = OpenOptions::new().create(true).append(true).open(dir.join("registry.jsonl"))?;
    writeln!(f, "{}", serde_json::to_string(&entry)?)?;
    Ok(())
}

fn write_artifact(dir: &Path, name: &str, contents: &[u8], outcome: &mut Outcome) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    outcome.artifacts.push(path);
    Ok(())
}

fn base_path(config: &RunConfig, problem: &crate::experiments::Problem) -> Result<(TimeGrid, Trajectory)> {
    let grid = TimeGrid::uniform(config.solver.horizon, config.solver.step)?;
    let path = evolve_deterministic(problem.model.as_ref(), &problem.u0, &grid)?;
    Ok((grid, path))
}

fn trajectory_csv(path: &Trajectory, run_id: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    path.write_csv(&mut buf, Some(run_id))?;
    Ok(buf)
}

fn cmd_check(config: &RunConfig, samples: usize, tol: f64) -> Result<Outcome> {
    let run_id = config.run_id_with(&format!("\n# check samples={samples} tol={tol:e}\n"))?;
    let model = config.build_model()?;
    let report = verify_assumptions(model.as_ref(), samples, tol, config.seed.master)?;
    let text = serde_json::to_string_pretty(&json!({ "run_id": run_id, "report": report }))?;
    let mut outcome = Outcome { run_id, ..Default::default() };
    write_artifact(&config.output.directory, "check.json", format!("{text}\n").as_bytes(), &mut outcome)?;
    outcome.failures = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: max relative defect {:.3e} (tolerance {:?})", c.name, c.max_rel_defect, c.tolerance))
        .collect();
    outcome.summary = text;
    Ok(outcome)
}

fn cmd_simulate(config: &mut RunConfig, epsilon: Option<f64>) -> Result<Outcome> {
    if let Some(eps) = epsilon {
        config.scale.epsilons = Some(vec![eps]);
    }
    let run_id = config.run_id_with(&format!("\n# simulate epsilon={epsilon:?}\n"))?;
    let problem = config.build_problem()?;
    let grid = TimeGrid::uniform(config.solver.horizon, config.solver.step)?;
    let path = match epsilon {
        None => evolve_deterministic(problem.model.as_ref(), &problem.u0, &grid)?,
        Some(eps) => {
            let scale = DeviationScale::power(eps, config.scale.gamma)?;
            let opts = StochasticOptions { eps_ceiling: config.scale.eps_ceiling, ..Default::default() };
            let mut rng = stream(config.seed.master, 0, "simulate");
            evolve_stochastic_with(problem.model.as_ref(), &problem.noise()?, &scale, &problem.u0, &grid, &opts, &mut rng)?
        }
    };
    let mut outcome = Outcome { run_id, ..Default::default() };
    let csv = trajectory_csv(&path, &outcome.run_id)?;
    write_artifact(&config.output.directory, "trajectory.csv", &csv, &mut outcome)?;
    outcome.summary = format!(
        "{} rows ({} jumps), |u(T)| = {:.6e}, wrote {}",
        path.len(),
        path.jumps().len(),
        crate::linalg::norm(path.final_state()),
        outcome.artifacts[0].display()
    );
    Ok(outcome)
}

fn cmd_skeleton(config: &RunConfig) -> Result<Outcome> {
    let run_id = config.run_id_with("\n# skeleton\n")?;
    let problem = config.build_problem()?;
    let (grid, u0_path) = base_path(config, &problem)?;
    let k = problem.space.len();
    let phi_marks = config.experiment.phi.clone().unwrap_or_else(|| vec![1.0; k]);
    let phi = Control::constant(grid.nodes().to_vec(), &phi_marks)?;
    let y = solve_skeleton(problem.model.as_ref(), &problem.noise()?, &phi, &u0_path, &grid)?;
    let mut outcome = Outcome { run_id, ..Default::default() };
    let csv = trajectory_csv(&y, &outcome.run_id)?;
    write_artifact(&config.output.directory, "skeleton.csv", &csv, &mut outcome)?;
    outcome.summary = format!("|Y(T)| = {:.6e}, wrote {}", crate::linalg::norm(y.final_state()), outcome.artifacts[0].display());
    Ok(outcome)
}

fn json_number(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else if x < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

fn cmd_rate(config: &mut RunConfig, target: Option<Vec<f64>>, cg_tol: Option<f64>) -> Result<Outcome> {
    if let Some(t) = target {
        config.experiment.target = Some(t);
    }
    if let Some(tol) = cg_tol {
        config.experiment.cg_tol = tol;
    }
    let x = config
        .experiment
        .target
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no target: pass --target or set experiment.target".into()))?;
    let run_id = config.run_id_with("\n# rate\n")?;
    let problem = config.build_problem()?;
    crate::model::check_state(problem.model.as_ref(), "target", &x)?;
    let (grid, u0_path) = base_path(config, &problem)?;
    let solver = EndpointRate::new(problem.model.as_ref(), problem.noise()?, &u0_path, &grid)?;
    let opts = RateOptions { cg_tol: config.experiment.cg_tol, ..Default::default() };
    let result = solver.solve(&x, &opts)?;

    // tilt diagnostics at the first noise level of the tail grid
    let exp = config.experiment_config(Some(ExperimentKind::Tail))?;
    let clipping = match exp.epsilons.first() {
        Some(&eps) if result.reachable => {
            let scale = DeviationScale::power(eps, exp.gamma)?;
            Some(optimal_tilt(&result.phi_star, &scale, exp.tilt_bound)?.clipping_fraction)
        }
        _ => None,
    };
    let record = json!({
        "run_id": run_id,
        "target": x,
        "rate": json_number(result.rate),
        "reachable": result.reachable,
        "cg_iterations": result.cg_iterations,
        "residual": json_number(result.residual),
        "clipping_fraction": clipping,
        "gramian_condition": json_number(result.gramian_condition),
        "hit_error": json_number(result.hit_error),
    });
    let text = serde_json::to_string_pretty(&record)?;
    let mut outcome = Outcome { run_id, ..Default::default() };
    write_artifact(&config.output.directory, "rate.json", format!("{text}\n").as_bytes(), &mut outcome)?;
    outcome.summary = text;
    Ok(outcome)
}

fn cmd_experiment(config: &mut RunConfig, name: Option<ExperimentKind>) -> Result<Outcome> {
    if let Some(n) = name {
        config.experiment.name = Some(n);
    }
    let exp: ExperimentConfig = config.experiment_config(None)?;
    let run_id = config.run_id()?;
    let problem = config.build_problem()?;
    let report = run_experiment(&problem, &exp)?;
    let mut outcome = Outcome { run_id, ..Default::default() };
    let dir = config.output.directory.clone();
    let stem = exp.kind.as_str();
    if config.output.formats.iter().any(|f| f == "jsonl") {
        let text = report.to_jsonl(&outcome.run_id)?;
        write_artifact(&dir, &format!("{stem}.jsonl"), text.as_bytes(), &mut outcome)?;
    }
    if config.output.formats.iter().any(|f| f == "csv") {
        let text = report.to_summary_csv(&outcome.run_id);
        write_artifact(&dir, &format!("{stem}_summary.csv"), text.as_bytes(), &mut outcome)?;
    }
    outcome.failures = report.failed_checks().iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
    let mut summary =
        format!("{stem} on {} (run {}): {}", report.model, outcome.run_id, if report.passed { "PASS" } else { "FAIL" });
    for c in &report.checks {
        summary.push_str(&format!("\n  [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail));
    }
    outcome.summary = summary;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["mdplab", "frobnicate"]), EXIT_ERROR);
        assert_eq!(cli_main(["mdplab"]), EXIT_ERROR);
        assert_eq!(cli_main(["mdplab", "check"]), EXIT_ERROR);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(cli_main(["mdplab", "--help"]), EXIT_OK);
        assert_eq!(cli_main(["mdplab", "--version"]), EXIT_OK);
    }

    #[test]
    fn missing_config_is_an_error() {
        assert_eq!(cli_main(["mdplab", "check", "--config", "/nonexistent/x.toml", "--quiet"]), EXIT_ERROR);
    }

    #[test]
    fn non_finite_numbers_are_strings() {
        assert_eq!(json_number(f64::INFINITY), json!("inf"));
        assert_eq!(json_number(1.5), json!(1.5));
    }
}
