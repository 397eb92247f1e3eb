use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use super::{ratio_check, Check, ExperimentConfig, ExperimentReport, Problem, ReportRow};
use crate::error::{Error, Result};
use crate::noise::Control;
use crate::solvers::{evolve_deterministic, LinearizedFlow};

/// Skeleton response to the oscillating perturbations `φ_n = φ + sin(2πnt) ρ(z)`.
///
/// Reports `e_n = sup_t |Y^{φ_n} − Y^φ| + (∫ ‖Y^{φ_n} − Y^φ‖²)^{1/2}` for each frequency and
/// passes when `e_n` decreases and the last error is at most the configured fraction of the
/// first.
pub fn run_mdp1(problem: &Problem, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let model = problem.model.as_ref();
    let noise = problem.noise()?;
    let k = problem.space.len();
    if config.phi.len() != k || config.rho.len() != k {
        return Err(Error::InvalidConfig(format!("phi and rho need one entry per mark ({k})")));
    }
    let lam = model.eigenvalues();
    let grid = config.grid()?;
    let nodes = grid.nodes().to_vec();
    let u0_path = evolve_deterministic(model, &problem.u0, &grid)?;
    let flow = LinearizedFlow::new(model, noise, &u0_path, &grid)?;
    let mut report = ExperimentReport::new(config, model);

    let phi = Control::constant(nodes.clone(), &config.phi)?;
    let phi_norm = phi.norm2_sq(&problem.space)?.sqrt();
    report.values.insert("phi_norm".into(), phi_norm);
    report.checks.push(Check::new("phi_in_ball", phi_norm <= config.m, format!("|phi|_2 = {phi_norm:.4} (radius {})", config.m)));
    let y_phi = flow.forward(&phi)?;

    let rows: Vec<ReportRow> = config
        .frequencies
        .par_iter()
        .map(|&n| {
            let freq = f64::from(n);
            let phi_n = Control::from_fn(nodes.clone(), k, |t, z| config.phi[z] + (2.0 * PI * freq * t).sin() * config.rho[z])?;
            let d = flow.forward(&phi_n)?.difference(&y_phi)?;
            let (sup, l2) = (d.sup_h_sq(), d.l2v_sq(lam));
            let mut row = ReportRow::new("n", freq);
            row.values.insert("error".into(), sup.sqrt() + l2.sqrt());
            row.values.insert("sup_h".into(), sup.sqrt());
            row.values.insert("l2v".into(), l2.sqrt());
            row.values.insert("phi_n_norm".into(), phi_n.norm2_sq(&problem.space)?.sqrt());
            Ok(row)
        })
        .collect::<Result<_>>()?;
    report.rows = rows;

    let errors: Vec<f64> = report.rows.iter().map(|r| r.values["error"]).collect();
    let increases: Vec<String> = errors
        .windows(2)
        .zip(report.rows.windows(2))
        .filter(|(e, _)| e[1] > e[0])
        .map(|(_, r)| format!("{} -> {}", r[0].value, r[1].value))
        .collect();
    report.checks.push(Check::new(
        "decreasing",
        increases.is_empty(),
        if increases.is_empty() {
            "errors decrease with frequency".to_string()
        } else {
            format!("increase at {}", increases.join(", "))
        },
    ));
    let first = errors.first().copied().unwrap_or(f64::NAN);
    let last = errors.last().copied().unwrap_or(f64::NAN);
    report.checks.push(ratio_check("ratio", first, last, config.thresholds.mdp1_ratio));
    Ok(report.finish(started))
}
