//! Run configuration: a sectioned TOML file with `[model]`, `[noise]`, `[scale]`, `[solver]`,
//! `[experiment]`, `[seed]` and `[output]`.
//!
//! Parsing walks the raw table so that every problem (unknown keys, wrong types, missing or
//! out-of-range values) is reported in one pass.

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::experiments::{ExperimentConfig, ExperimentKind, Problem, Thresholds};
use crate::model::Model;
use crate::models::{build_nse2d, build_sabra, LinearModel, Nse2dConfig, SabraConfig};
use crate::noise::{AffineJump, MarkSpace};
use crate::solvers::DEFAULT_EPS_CEILING;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelSection {
    #[serde(rename = "linear-test")]
    Linear { eigenvalues: Vec<f64> },
    #[serde(rename = "nse2d")]
    Nse2d { k_max: u32, visc: f64 },
    #[serde(rename = "sabra")]
    Sabra { n_shells: usize, k0: f64, lam: f64, visc: f64, coeff_a: f64, coeff_b: f64, coeff_c: f64 },
}

/// Jumps `G(u, z_k) = shift_k + scale_k u`. Shifts are given either explicitly or as one
/// coordinate per mark with a common amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSection {
    pub mark_weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_shift: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_coords: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_scale: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSection {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    pub eps_ceiling: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub horizon: f64,
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
    /// Random initial condition of this norm, drawn from the `u0` stream of the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0_random_norm: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lln_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp1_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp2_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounded_slope_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_naive_hits: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<ExperimentKind>,
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt_bound: Option<f64>,
    pub cg_tol: f64,
    #[serde(default)]
    pub thresholds: ThresholdSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSection {
    pub master: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSection,
    pub noise: NoiseSection,
    pub scale: ScaleSection,
    pub solver: SolverSection,
    pub experiment: ExperimentSection,
    pub seed: SeedSection,
    pub output: OutputSection,
}

const OUTPUT_FORMATS: [&str; 2] = ["jsonl", "csv"];

/// Typed access to one table; consumed keys are tracked so leftovers can be reported.
struct Section<'a> {
    name: String,
    table: Option<&'a Table>,
    used: Vec<String>,
}

impl<'a> Section<'a> {
    fn new(name: &str, table: Option<&'a Table>) -> Self {
        Self { name: name.to_string(), table, used: Vec::new() }
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        self.used.push(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn f64(&mut self, key: &str, errors: &mut Vec<String>) -> Option<f64> {
        let path = self.path(key);
        self.raw(key).and_then(|v| as_f64(v).or_else(|| type_error(errors, &path, "a number")))
    }

    fn f64_or(&mut self, key: &str, default: f64, errors: &mut Vec<String>) -> f64 {
        let present = self.table.is_some_and(|t| t.contains_key(key));
        let v = self.f64(key, errors);
        if present {
            v.unwrap_or(f64::NAN)
        } else {
            default
        }
    }

    fn int(&mut self, key: &str, errors: &mut Vec<String>) -> Option<i64> {
        let path = self.path(key);
        self.raw(key).and_then(|v| v.as_integer().or_else(|| type_error(errors, &path, "an integer")))
    }

    fn uint(&mut self, key: &str, errors: &mut Vec<String>) -> Option<u64> {
        let path = self.path(key);
        let v = self.int(key, errors)?;
        if v < 0 {
            errors.push(format!("{path} must be nonnegative"));
            return None;
        }
        Some(v as u64)
    }

    fn string(&mut self, key: &str, errors: &mut Vec<String>) -> Option<String> {
        let path = self.path(key);
        self.raw(key).and_then(|v| v.as_str().map(str::to_string).or_else(|| type_error(errors, &path, "a string")))
    }

    fn vec_f64(&mut self, key: &str, errors: &mut Vec<String>) -> Option<Vec<f64>> {
        let path = self.path(key);
        let v = self.raw(key)?;
        let arr = v.as_array().or_else(|| type_error(errors, &path, "an array of numbers"))?;
        arr.iter().map(as_f64).collect::<Option<Vec<f64>>>().or_else(|| type_error(errors, &path, "an array of numbers"))
    }

    fn vec_uint(&mut self, key: &str, errors: &mut Vec<String>) -> Option<Vec<u64>> {
        let path = self.path(key);
        let v = self.raw(key)?;
        let arr = v.as_array().or_else(|| type_error(errors, &path, "an array of integers"))?;
        arr.iter()
            .map(|x| x.as_integer().filter(|i| *i >= 0).map(|i| i as u64))
            .collect::<Option<Vec<u64>>>()
            .or_else(|| type_error(errors, &path, "an array of nonnegative integers"))
    }

    fn vec_vec_f64(&mut self, key: &str, errors: &mut Vec<String>) -> Option<Vec<Vec<f64>>> {
        let path = self.path(key);
        let v = self.raw(key)?;
        let arr = v.as_array().or_else(|| type_error(errors, &path, "an array of arrays"))?;
        arr.iter()
            .map(|row| row.as_array().and_then(|r| r.iter().map(as_f64).collect::<Option<Vec<f64>>>()))
            .collect::<Option<Vec<Vec<f64>>>>()
            .or_else(|| type_error(errors, &path, "an array of arrays of numbers"))
    }

    fn vec_string(&mut self, key: &str, errors: &mut Vec<String>) -> Option<Vec<String>> {
        let path = self.path(key);
        let v = self.raw(key)?;
        let arr = v.as_array().or_else(|| type_error(errors, &path, "an array of strings"))?;
        arr.iter()
            .map(|x| x.as_str().map(str::to_string))
            .collect::<Option<Vec<String>>>()
            .or_else(|| type_error(errors, &path, "an array of strings"))
    }

    fn sub_table(&mut self, key: &str, errors: &mut Vec<String>) -> Option<&'a Table> {
        let path = self.path(key);
        self.raw(key).and_then(|v| v.as_table().or_else(|| type_error(errors, &path, "a table")))
    }

    fn finish(self, errors: &mut Vec<String>) {
        if let Some(t) = self.table {
            for key in t.keys() {
                if !self.used.iter().any(|u| u == key) {
                    errors.push(format!("unknown key `{}.{key}`", self.name));
                }
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

fn type_error<T>(errors: &mut Vec<String>, path: &str, expected: &str) -> Option<T> {
    errors.push(format!("{path} must be {expected}"));
    None
}

fn require<T>(v: Option<T>, path: &str, errors: &mut Vec<String>) -> Option<T> {
    if v.is_none() && !errors.iter().any(|e| e.starts_with(path)) {
        errors.push(format!("{path} is required"));
    }
    v
}

fn positive(v: f64, path: &str, errors: &mut Vec<String>) {
    if !(v > 0.0 && v.is_finite()) {
        errors.push(format!("{path} must be a positive finite number"));
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config `{}`: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Schema(vec![describe_toml_error(text, &e)]))?;
    let mut errors = Vec::new();
    let sections = ["model", "noise", "scale", "solver", "experiment", "seed", "output"];
    for (key, value) in &root {
        if !sections.contains(&key.as_str()) {
            errors.push(format!("unknown section `{key}`"));
        } else if !value.is_table() {
            errors.push(format!("`{key}` must be a table"));
        }
    }
    let table = |name: &str| root.get(name).and_then(Value::as_table);

    let mut s = Section::new("model", table("model"));
    let kind = require(s.string("kind", &mut errors), "model.kind", &mut errors);
    let model = match kind.as_deref() {
        Some("linear-test") => {
            let eig = require(s.vec_f64("eigenvalues", &mut errors), "model.eigenvalues", &mut errors);
            if let Some(e) = &eig {
                if e.is_empty() || e.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    errors.push("model.eigenvalues must be a nonempty list of positive numbers".into());
                }
            }
            eig.map(|eigenvalues| ModelSection::Linear { eigenvalues })
        }
        Some("nse2d") => {
            let k = require(s.uint("k_max", &mut errors), "model.k_max", &mut errors);
            let visc = s.f64_or("visc", 1.0, &mut errors);
            positive(visc, "model.visc", &mut errors);
            if k == Some(0) {
                errors.push("model.k_max must be at least 1".into());
            }
            k.map(|k| ModelSection::Nse2d { k_max: k as u32, visc })
        }
        Some("sabra") => {
            let d = SabraConfig::default();
            let n_shells = s.uint("n_shells", &mut errors).map_or(d.n_shells, |v| v as usize);
            let k0 = s.f64_or("k0", d.k0, &mut errors);
            let lam = s.f64_or("lam", d.lam, &mut errors);
            let visc = s.f64_or("visc", d.visc, &mut errors);
            let coeff_a = s.f64_or("coeff_a", d.coeff_a, &mut errors);
            let coeff_b = s.f64_or("coeff_b", d.coeff_b, &mut errors);
            let coeff_c = s.f64_or("coeff_c", d.coeff_c, &mut errors);
            positive(k0, "model.k0", &mut errors);
            positive(visc, "model.visc", &mut errors);
            if !(lam > 1.0) {
                errors.push("model.lam must exceed 1".into());
            }
            if n_shells == 0 {
                errors.push("model.n_shells must be at least 1".into());
            }
            if (coeff_a + coeff_b + coeff_c).abs() > 1e-12 * (coeff_a.abs() + coeff_b.abs() + coeff_c.abs()).max(1.0) {
                errors.push("model.coeff_a + coeff_b + coeff_c must be 0".into());
            }
            Some(ModelSection::Sabra { n_shells, k0, lam, visc, coeff_a, coeff_b, coeff_c })
        }
        Some(other) => {
            errors.push(format!("model.kind `{other}` is not one of linear-test, nse2d, sabra"));
            None
        }
        None => None,
    };
    // parameters of other model kinds are unknown keys for this kind
    s.finish(&mut errors);

    let mut s = Section::new("noise", table("noise"));
    let mark_weights = require(s.vec_f64("mark_weights", &mut errors), "noise.mark_weights", &mut errors);
    if let Some(w) = &mark_weights {
        if w.is_empty() || w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            errors.push("noise.mark_weights must be a nonempty list of positive numbers".into());
        }
    }
    let jump_shift = s.vec_vec_f64("jump_shift", &mut errors);
    let jump_coords = s.vec_uint("jump_coords", &mut errors).map(|v| v.into_iter().map(|c| c as usize).collect::<Vec<_>>());
    let jump_amplitude = s.f64("jump_amplitude", &mut errors);
    let jump_scale = s.vec_f64("jump_scale", &mut errors);
    let n_marks = mark_weights.as_ref().map_or(0, Vec::len);
    match (&jump_shift, &jump_coords) {
        (Some(_), Some(_)) => errors.push("give either noise.jump_shift or noise.jump_coords, not both".into()),
        (None, None) => errors.push("noise.jump_shift or noise.jump_coords is required".into()),
        (Some(sh), None) if sh.len() != n_marks => {
            errors.push(format!("noise.jump_shift has {} rows, expected one per mark ({n_marks})", sh.len()))
        }
        (None, Some(c)) if c.len() != n_marks => {
            errors.push(format!("noise.jump_coords has {} entries, expected one per mark ({n_marks})", c.len()))
        }
        _ => {}
    }
    if jump_amplitude.is_some() && jump_coords.is_none() {
        errors.push("noise.jump_amplitude only applies with noise.jump_coords".into());
    }
    if let Some(sc) = &jump_scale {
        if sc.len() != n_marks {
            errors.push(format!("noise.jump_scale has {} entries, expected one per mark ({n_marks})", sc.len()));
        }
    }
    s.finish(&mut errors);
    let noise = mark_weights.map(|mark_weights| NoiseSection {
        mark_weights,
        jump_shift,
        jump_amplitude: jump_coords.as_ref().map(|_| jump_amplitude.unwrap_or(1.0)),
        jump_coords,
        jump_scale,
    });

    let mut s = Section::new("scale", table("scale"));
    let gamma = s.f64_or("gamma", 0.3, &mut errors);
    if !(gamma > 0.0 && gamma < 0.5) {
        errors.push("gamma must lie in (0, 0.5)".into());
    }
    let epsilons = s.vec_f64("epsilons", &mut errors);
    let eps_ceiling = s.f64_or("eps_ceiling", DEFAULT_EPS_CEILING, &mut errors);
    positive(eps_ceiling, "scale.eps_ceiling", &mut errors);
    if let Some(e) = &epsilons {
        if e.windows(2).any(|w| !(w[1] < w[0])) {
            errors.push("scale.epsilons must decrease strictly".into());
        }
        if e.iter().any(|x| !(*x > 0.0 && *x <= eps_ceiling)) {
            errors.push(format!("scale.epsilons must lie in (0, eps_ceiling = {eps_ceiling}]"));
        }
    }
    s.finish(&mut errors);
    let scale = ScaleSection { gamma, epsilons, eps_ceiling };

    let mut s = Section::new("solver", table("solver"));
    let horizon = s.f64_or("horizon", 1.0, &mut errors);
    let step = s.f64_or("step", 1e-3, &mut errors);
    positive(horizon, "solver.horizon", &mut errors);
    positive(step, "solver.step", &mut errors);
    if step > horizon {
        errors.push("solver.step must not exceed solver.horizon".into());
    }
    let u0 = s.vec_f64("u0", &mut errors);
    let u0_random_norm = s.f64("u0_random_norm", &mut errors);
    if u0.is_some() && u0_random_norm.is_some() {
        errors.push("give either solver.u0 or solver.u0_random_norm, not both".into());
    }
    if let Some(r) = u0_random_norm {
        if !(r >= 0.0 && r.is_finite()) {
            errors.push("solver.u0_random_norm must be a nonnegative number".into());
        }
    }
    s.finish(&mut errors);
    let solver = SolverSection { horizon, step, u0, u0_random_norm };

    let mut s = Section::new("experiment", table("experiment"));
    let name = s.string("name", &mut errors).and_then(|n| match n.parse::<ExperimentKind>() {
        Ok(k) => Some(k),
        Err(e) => {
            errors.push(format!("experiment.name: {e}"));
            None
        }
    });
    let default_replicas = if matches!(model, Some(ModelSection::Linear { .. })) { 10_000 } else { 1_000 };
    let replicas = s.uint("replicas", &mut errors).map_or(default_replicas, |v| v as usize);
    if replicas == 0 {
        errors.push("experiment.replicas must be at least 1".into());
    }
    let m = s.f64("m", &mut errors);
    let target = s.vec_f64("target", &mut errors);
    let delta = s.f64("delta", &mut errors);
    let phi = s.vec_f64("phi", &mut errors);
    let rho = s.vec_f64("rho", &mut errors);
    let frequencies = s.vec_uint("frequencies", &mut errors).map(|v| v.into_iter().map(|f| f as u32).collect());
    let tilt_bound = s.f64("tilt_bound", &mut errors);
    let cg_tol = s.f64_or("cg_tol", 1e-10, &mut errors);
    positive(cg_tol, "experiment.cg_tol", &mut errors);
    if let Some(d) = delta {
        positive(d, "experiment.delta", &mut errors);
    }
    if let Some(b) = tilt_bound {
        if !(b >= 1.0 && b.is_finite()) {
            errors.push("experiment.tilt_bound must be a finite number >= 1".into());
        }
    }
    for (key, v) in [("phi", &phi), ("rho", &rho)] {
        if let Some(v) = v {
            if v.len() != n_marks {
                errors.push(format!("experiment.{key} has {} entries, expected one per mark ({n_marks})", v.len()));
            }
        }
    }
    let th_table = s.sub_table("thresholds", &mut errors);
    s.finish(&mut errors);
    let mut t = Section::new("experiment.thresholds", th_table);
    let thresholds = ThresholdSection {
        slope_min: t.f64("slope_min", &mut errors),
        slope_max: t.f64("slope_max", &mut errors),
        lln_ratio: t.f64("lln_ratio", &mut errors),
        mdp1_ratio: t.f64("mdp1_ratio", &mut errors),
        mdp2_ratio: t.f64("mdp2_ratio", &mut errors),
        bounded_slope_min: t.f64("bounded_slope_min", &mut errors),
        tail_rel: t.f64("tail_rel", &mut errors),
        min_naive_hits: t.uint("min_naive_hits", &mut errors).map(|v| v as usize),
    };
    t.finish(&mut errors);
    let experiment =
        ExperimentSection { name, replicas, m, target, delta, phi, rho, frequencies, tilt_bound, cg_tol, thresholds };

    let mut s = Section::new("seed", table("seed"));
    let master = s.uint("master", &mut errors).unwrap_or(0);
    s.finish(&mut errors);

    let mut s = Section::new("output", table("output"));
    let directory = s.string("directory", &mut errors).map_or_else(|| PathBuf::from("out"), PathBuf::from);
    let formats = s.vec_string("formats", &mut errors).unwrap_or_else(|| OUTPUT_FORMATS.iter().map(|f| f.to_string()).collect());
    for f in &formats {
        if !OUTPUT_FORMATS.contains(&f.as_str()) {
            errors.push(format!("output.formats: unknown format `{f}` (expected jsonl or csv)"));
        }
    }
    s.finish(&mut errors);

    if !errors.is_empty() {
        return Err(Error::Schema(errors));
    }
    let config = RunConfig {
        model: model.expect("validated"),
        noise: noise.expect("validated"),
        scale,
        solver,
        experiment,
        seed: SeedSection { master },
        output: OutputSection { directory, formats },
    };
    // dimension checks need the built model
    config.build_problem()?;
    Ok(config)
}

fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}

impl RunConfig {
    /// Canonical TOML text; parsing it gives back an equal configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(format!("cannot serialize config: {e}")))
    }

    /// Leading 16 hex digits of the SHA-256 of the canonical text. The output directory is
    /// left out so that a rerun into another directory keeps its id.
    pub fn run_id(&self) -> Result<String> {
        self.run_id_with("")
    }

    /// Run id for a command whose parameters are not all part of the configuration; `extra`
    /// is appended to the hashed text.
    pub fn run_id_with(&self, extra: &str) -> Result<String> {
        let mut keyed = self.clone();
        keyed.output.directory = PathBuf::new();
        let mut text = keyed.to_toml()?;
        text.push_str(extra);
        let digest = Sha256::digest(text.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }

    pub fn build_model(&self) -> Result<Box<dyn Model>> {
        Ok(match &self.model {
            ModelSection::Linear { eigenvalues } => Box::new(LinearModel::new(eigenvalues.clone())?),
            ModelSection::Nse2d { k_max, visc } => Box::new(build_nse2d(Nse2dConfig { k_max: *k_max, visc: *visc })?),
            ModelSection::Sabra { n_shells, k0, lam, visc, coeff_a, coeff_b, coeff_c } => Box::new(build_sabra(SabraConfig {
                n_shells: *n_shells,
                k0: *k0,
                lam: *lam,
                visc: *visc,
                coeff_a: *coeff_a,
                coeff_b: *coeff_b,
                coeff_c: *coeff_c,
            })?),
        })
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let model = self.build_model()?;
        let n = model.dim();
        let nz = &self.noise;
        let k = nz.mark_weights.len();
        let shifts = match (&nz.jump_shift, &nz.jump_coords) {
            (Some(sh), _) => {
                if let Some(bad) = sh.iter().find(|r| r.len() != n) {
                    return Err(Error::Schema(vec![format!(
                        "noise.jump_shift rows need {n} entries (model dimension), found {}",
                        bad.len()
                    )]));
                }
                sh.clone()
            }
            (None, Some(coords)) => {
                if let Some(c) = coords.iter().find(|c| **c >= n) {
                    return Err(Error::Schema(vec![format!("noise.jump_coords entry {c} out of range for dimension {n}")]));
                }
                let amp = nz.jump_amplitude.unwrap_or(1.0);
                coords
                    .iter()
                    .map(|&c| {
                        let mut v = vec![0.0; n];
                        v[c] = amp;
                        v
                    })
                    .collect()
            }
            (None, None) => return Err(Error::Schema(vec!["noise.jump_shift or noise.jump_coords is required".into()])),
        };
        let scales = nz.jump_scale.clone().unwrap_or_else(|| vec![0.0; k]);
        let jump = AffineJump::new(shifts, scales)?;
        let space = MarkSpace::new(nz.mark_weights.clone())?;
        let u0 = match (&self.solver.u0, self.solver.u0_random_norm) {
            (Some(u), _) => {
                if u.len() != n {
                    return Err(Error::Schema(vec![format!("solver.u0 has {} entries, model dimension is {n}", u.len())]));
                }
                u.clone()
            }
            (None, Some(r)) => {
                let mut rng = crate::rng::stream(self.seed.master, 0, "u0");
                let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = crate::linalg::norm(&v);
                v.iter().map(|x| x * r / norm).collect()
            }
            (None, None) => vec![0.0; n],
        };
        Problem::new(model, jump, space, u0)
    }

    /// Experiment settings for `kind` (the configured name when `None`), with per-experiment
    /// defaults filled in.
    pub fn experiment_config(&self, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
        let kind = kind
            .or(self.experiment.name)
            .ok_or_else(|| Error::InvalidConfig("no experiment named: set experiment.name".into()))?;
        let e = &self.experiment;
        let mut c = ExperimentConfig::new(kind, self.noise.mark_weights.len());
        if let Some(eps) = &self.scale.epsilons {
            c.epsilons = eps.clone();
        }
        c.gamma = self.scale.gamma;
        c.eps_ceiling = self.scale.eps_ceiling;
        c.replicas = e.replicas;
        c.horizon = self.solver.horizon;
        c.step = self.solver.step;
        c.seed = self.seed.master;
        if let Some(v) = e.m {
            c.m = v;
        }
        if let Some(v) = &e.phi {
            c.phi = v.clone();
        }
        if let Some(v) = &e.rho {
            c.rho = v.clone();
        }
        if let Some(v) = &e.frequencies {
            c.frequencies = v.clone();
        }
        if let Some(v) = e.tilt_bound {
            c.tilt_bound = v;
        }
        if let Some(v) = e.delta {
            c.delta = v;
        }
        c.target = e.target.clone();
        let th = &e.thresholds;
        let d = Thresholds::default();
        c.thresholds = Thresholds {
            slope_min: th.slope_min.unwrap_or(d.slope_min),
            slope_max: th.slope_max.unwrap_or(d.slope_max),
            lln_ratio: th.lln_ratio.unwrap_or(d.lln_ratio),
            mdp1_ratio: th.mdp1_ratio.unwrap_or(d.mdp1_ratio),
            mdp2_ratio: th.mdp2_ratio.unwrap_or(d.mdp2_ratio),
            bounded_slope_min: th.bounded_slope_min.unwrap_or(d.bounded_slope_min),
            tail_rel: th.tail_rel.unwrap_or(d.tail_rel),
            min_naive_hits: th.min_naive_hits.unwrap_or(d.min_naive_hits),
            cg_tol: e.cg_tol,
        };
        c.validate()?;
        Ok(c)
    }
}
