//! Monte Carlo and deterministic experiments: law of large numbers, skeleton continuity
//! under oscillating controls, convergence of the controlled fluctuation to the skeleton,
//! and tail exponents with importance sampling.
//!
//! Replicas run on the current rayon pool with streams `stream(seed, replica, tag)`; results
//! are collected in replica order and reduced with pairwise sums, so a report depends only on
//! its configuration.

mod lln;
mod mdp1;
mod mdp2;
mod tail;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use lln::run_lln;
pub use mdp1::run_mdp1;
pub use mdp2::run_mdp2;
pub use tail::run_tail;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::noise::{is_moderate_window, AffineJump, DeviationScale, MarkSpace, Noise};
use crate::solvers::{StochasticOptions, TimeGrid, DEFAULT_EPS_CEILING};
use crate::stats::{Estimate, SlopeFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Lln,
    Mdp1,
    Mdp2,
    Tail,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Lln => "lln",
            Self::Mdp1 => "mdp1",
            Self::Mdp2 => "mdp2",
            Self::Tail => "tail",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lln" => Ok(Self::Lln),
            "mdp1" => Ok(Self::Mdp1),
            "mdp2" => Ok(Self::Mdp2),
            "tail" => Ok(Self::Tail),
            other => Err(Error::InvalidConfig(format!("unknown experiment `{other}` (expected lln, mdp1, mdp2 or tail)"))),
        }
    }
}

/// Pass thresholds. Which ones apply depends on the experiment and on whether the model is
/// linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Admissible range of the LLN log-log slope (linear models).
    pub slope_min: f64,
    pub slope_max: f64,
    /// Largest final/initial ratio of the LLN error (nonlinear models).
    pub lln_ratio: f64,
    /// Largest ratio of the last to the first MDP-1 error along the frequency list.
    pub mdp1_ratio: f64,
    /// Largest final/initial ratio of the MDP-2 statistic.
    pub mdp2_ratio: f64,
    /// Smallest admissible log-log slope of the fluctuation size against ε (boundedness).
    pub bounded_slope_min: f64,
    /// Relative tolerance between the tail exponent and the ball rate.
    pub tail_rel: f64,
    /// Naive hit count from which IS and naive estimates must agree.
    pub min_naive_hits: usize,
    /// Relative CG tolerance for endpoint rates.
    pub cg_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            slope_min: 0.8,
            slope_max: 1.2,
            lln_ratio: 0.01,
            mdp1_ratio: 0.1,
            mdp2_ratio: 0.1,
            bounded_slope_min: -0.2,
            tail_rel: 0.3,
            min_naive_hits: 50,
            cg_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Strictly decreasing noise intensities.
    pub epsilons: Vec<f64>,
    /// `a(ε) = ε^γ`.
    pub gamma: f64,
    pub eps_ceiling: f64,
    pub replicas: usize,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    /// Admissibility budget `m`.
    pub m: f64,
    /// Per-mark constant base control `φ`.
    pub phi: Vec<f64>,
    /// Per-mark amplitude `ρ` of the oscillating perturbation.
    pub rho: Vec<f64>,
    pub frequencies: Vec<u32>,
    /// Tilt bound `n`: tilts live in `[1/n, n]`.
    pub tilt_bound: f64,
    pub target: Option<Vec<f64>>,
    pub delta: f64,
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    /// Defaults for `kind`; `phi` and `rho` are one per mark.
    pub fn new(kind: ExperimentKind, n_marks: usize) -> Self {
        let epsilons = match kind {
            ExperimentKind::Lln => (4..=10).map(|p| 0.5f64.powi(p)).collect(),
            ExperimentKind::Mdp1 => Vec::new(),
            ExperimentKind::Mdp2 => (4..=12).map(|p| 0.5f64.powi(p)).collect(),
            ExperimentKind::Tail => [6, 8, 10].iter().map(|p| 0.5f64.powi(*p)).collect(),
        };
        Self {
            kind,
            epsilons,
            gamma: 0.3,
            eps_ceiling: DEFAULT_EPS_CEILING,
            replicas: 10_000,
            horizon: 1.0,
            step: 1e-3,
            seed: 0,
            m: 10.0,
            phi: vec![1.0; n_marks],
            rho: vec![1.0; n_marks],
            frequencies: (0..=6).map(|k| 1 << k).collect(),
            tilt_bound: 10.0,
            target: None,
            delta: 0.25,
            thresholds: Thresholds::default(),
        }
    }

    /// Checks the grid, replica count and step settings.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            problems.push("gamma must lie in (0, 0.5)".to_string());
        }
        if self.kind != ExperimentKind::Mdp1 && self.epsilons.is_empty() {
            problems.push("epsilon grid is empty".into());
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            problems.push("epsilon grid must decrease strictly".into());
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e <= self.eps_ceiling)) {
            problems.push(format!("epsilon {e} outside (0, {}]", self.eps_ceiling));
        }
        if self.replicas == 0 {
            problems.push("replicas must be at least 1".into());
        }
        if !(self.horizon > 0.0 && self.step > 0.0 && self.step <= self.horizon) {
            problems.push("need 0 < step <= horizon".into());
        }
        if !(self.tilt_bound >= 1.0 && self.tilt_bound.is_finite()) {
            problems.push("tilt_bound must be a finite number >= 1".into());
        }
        if !(self.delta > 0.0) {
            problems.push("delta must be positive".into());
        }
        if self.kind == ExperimentKind::Mdp1 && self.frequencies.is_empty() {
            problems.push("frequency list is empty".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(problems))
        }
    }

    pub fn scales(&self) -> Result<Vec<DeviationScale>> {
        self.epsilons.iter().map(|&e| DeviationScale::power(e, self.gamma)).collect()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.horizon, self.step)
    }

    pub(crate) fn solver_options(&self) -> StochasticOptions {
        StochasticOptions { eps_ceiling: self.eps_ceiling, ..Default::default() }
    }
}

/// Runs the experiment named in `config`.
pub fn run_experiment(problem: &Problem, config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.kind {
        ExperimentKind::Lln => run_lln(problem, config),
        ExperimentKind::Mdp1 => run_mdp1(problem, config),
        ExperimentKind::Mdp2 => run_mdp2(problem, config),
        ExperimentKind::Tail => run_tail(problem, config),
    }
}

/// Model, noise and initial condition shared by all experiments.
pub struct Problem {
    pub model: Box<dyn Model>,
    pub jump: AffineJump,
    pub space: MarkSpace,
    pub u0: Vec<f64>,
}

impl Problem {
    pub fn new(model: Box<dyn Model>, jump: AffineJump, space: MarkSpace, u0: Vec<f64>) -> Result<Self> {
        crate::model::check_state(model.as_ref(), "u0", &u0)?;
        if crate::noise::JumpCoefficient::dim(&jump) != model.dim() {
            return Err(crate::error::dim_mismatch("jump coefficient", model.dim(), crate::noise::JumpCoefficient::dim(&jump)));
        }
        let p = Self { model, jump, space, u0 };
        p.noise()?;
        Ok(p)
    }

    pub fn noise(&self) -> Result<Noise<'_>> {
        Noise::new(&self.jump, &self.space)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

/// One line of a report: an ε value (or a frequency) with its estimates and scalars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: String,
    pub value: f64,
    pub estimates: BTreeMap<String, Estimate>,
    pub values: BTreeMap<String, f64>,
}

impl ReportRow {
    pub fn new(key: &str, value: f64) -> Self {
        Self { key: key.to_string(), value, estimates: BTreeMap::new(), values: BTreeMap::new() }
    }

    pub fn estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.get(name)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub model: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub fits: Vec<SlopeFit>,
    pub checks: Vec<Check>,
    pub values: BTreeMap<String, f64>,
    pub passed: bool,
    /// Seconds; kept out of serialized output so reruns compare equal.
    #[serde(skip)]
    pub wall_clock: f64,
}

impl ExperimentReport {
    pub(crate) fn new(config: &ExperimentConfig, model: &dyn Model) -> Self {
        Self {
            experiment: config.kind,
            model: model.label().to_string(),
            seed: config.seed,
            config: config.clone(),
            rows: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            values: BTreeMap::new(),
            passed: false,
            wall_clock: 0.0,
        }
    }

    pub(crate) fn finish(mut self, started: std::time::Instant) -> Self {
        self.passed = self.checks.iter().all(|c| c.passed);
        self.wall_clock = started.elapsed().as_secs_f64();
        self
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// One JSON object per row, each carrying `run_id` and the experiment name.
    pub fn to_jsonl(&self, run_id: &str) -> Result<String> {
        let mut out = String::new();
        for row in &self.rows {
            let rec = serde_json::json!({
                "run_id": run_id,
                "experiment": self.experiment,
                "model": self.model,
                "seed": self.seed,
                "row": row,
            });
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        let summary = serde_json::json!({
            "run_id": run_id,
            "experiment": self.experiment,
            "model": self.model,
            "seed": self.seed,
            "fits": self.fits,
            "checks": self.checks,
            "values": self.values,
            "passed": self.passed,
            "config": self.config,
        });
        out.push_str(&serde_json::to_string(&summary)?);
        out.push('\n');
        Ok(out)
    }

    /// Flat CSV: one line per row and estimate (`mean`, `std_err`, CI), then one per check.
    pub fn to_summary_csv(&self, run_id: &str) -> String {
        let mut out = format!("# run_id={run_id}\nkind,key,value,name,mean,std_err,ci_low,ci_high\n");
        for row in &self.rows {
            for (name, e) in &row.estimates {
                out.push_str(&format!(
                    "estimate,{},{},{},{},{},{},{}\n",
                    row.key, row.value, name, e.mean, e.std_err, e.ci_low, e.ci_high
                ));
            }
            for (name, v) in &row.values {
                out.push_str(&format!("scalar,{},{},{},{},,,\n", row.key, row.value, name, v));
            }
        }
        for f in &self.fits {
            out.push_str(&format!("fit,,,{},{},{},,\n", f.name, f.slope, f.slope_std_err));
        }
        for c in &self.checks {
            out.push_str(&format!("check,,,{},{},,,\n", c.name, u8::from(c.passed)));
        }
        out
    }
}

/// MDP window check along the grid.
pub(crate) fn window_check(config: &ExperimentConfig) -> Result<Check> {
    let scales = config.scales()?;
    let ok = is_moderate_window(&scales);
    Ok(Check::new(
        "moderate_window",
        ok,
        format!("a(eps) and eps/a(eps)^2 {} along the grid", if ok { "decrease" } else { "do not both decrease" }),
    ))
}

/// Monotone decrease of `estimates` along the grid, tolerating overlapping 95% intervals.
/// Returns the check and the keys at which it is violated.
pub(crate) fn monotone_check(name: &str, keys: &[f64], estimates: &[&Estimate]) -> Check {
    let violations: Vec<String> = estimates
        .windows(2)
        .zip(keys.windows(2))
        .filter(|(e, _)| e[1].mean > e[0].mean && !e[1].overlaps(e[0]))
        .map(|(_, k)| format!("{:e} -> {:e}", k[0], k[1]))
        .collect();
    if violations.is_empty() {
        Check::new(name, true, "decreasing within confidence-interval overlap")
    } else {
        Check::new(name, false, format!("increase at {}", violations.join(", ")))
    }
}

pub(crate) fn ratio_check(name: &str, first: f64, last: f64, limit: f64) -> Check {
    let ratio = last / first;
    Check::new(name, ratio <= limit, format!("final/initial = {ratio:.4e} (limit {limit})"))
}

/// Runs `f` on every replica index in parallel and returns results in index order.
pub(crate) fn replicate<T: Send>(replicas: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..replicas as u64).into_par_iter().map(f).collect()
}
