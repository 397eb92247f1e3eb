use std::time::Instant;

use super::{
    monotone_check, ratio_check, replicate, window_check, Check, ExperimentConfig, ExperimentReport, Problem, ReportRow,
};
use crate::error::Result;
use crate::rng::stream;
use crate::solvers::{evolve_deterministic, evolve_stochastic_with, TimeGrid};
use crate::stats::{fit_log_log, Estimate};

/// Distance between `u^ε` and `u⁰` along the ε grid.
///
/// Each replica is compared with the deterministic solution on its own jump-augmented nodes.
/// Linear models are judged on the log-log slope of `E sup |u^ε − u⁰|²`; nonlinear ones on
/// monotone decay of `E[sup |u^ε − u⁰|² + ∫ ‖u^ε − u⁰‖²]` and its final/initial ratio.
pub fn run_lln(problem: &Problem, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let model = problem.model.as_ref();
    let noise = problem.noise()?;
    let lam = model.eigenvalues();
    let grid = config.grid()?;
    let opts = config.solver_options();
    let mut report = ExperimentReport::new(config, model);
    report.checks.push(window_check(config)?);

    for scale in config.scales()? {
        let samples = replicate(config.replicas, |r| {
            let mut rng = stream(config.seed, r, "lln");
            let u = evolve_stochastic_with(model, &noise, &scale, &problem.u0, &grid, &opts, &mut rng)?;
            let mut nodes = u.times().to_vec();
            nodes.dedup();
            let reference = evolve_deterministic(model, &problem.u0, &TimeGrid::from_nodes(nodes)?)?;
            let d = u.difference(&reference)?;
            Ok([d.sup_h_sq(), d.l2v_sq(lam), u.jumps().len() as f64])
        })?;
        let column = |i: usize| samples.iter().map(|s| s[i]).collect::<Vec<f64>>();
        let (sup, l2) = (column(0), column(1));
        let err: Vec<f64> = sup.iter().zip(&l2).map(|(a, b)| a + b).collect();
        let mut row = ReportRow::new("eps", scale.epsilon);
        row.estimates.insert("sup_h_sq".into(), Estimate::from_samples(&sup));
        row.estimates.insert("l2v_sq".into(), Estimate::from_samples(&l2));
        row.estimates.insert("error".into(), Estimate::from_samples(&err));
        row.values.insert("a_of_eps".into(), scale.a_of_eps);
        row.values.insert("mean_jumps".into(), Estimate::from_samples(&column(2)).mean);
        report.rows.push(row);
    }

    let eps: Vec<f64> = report.rows.iter().map(|r| r.value).collect();
    let mean_of = |name: &str| report.rows.iter().map(|r| r.estimates[name].mean).collect::<Vec<f64>>();
    let sup_fit = fit_log_log("sup_h_sq_vs_eps", &eps, &mean_of("sup_h_sq"));
    let err_fit = fit_log_log("error_vs_eps", &eps, &mean_of("error"));
    let errors: Vec<&Estimate> = report.rows.iter().map(|r| &r.estimates["error"]).collect();
    let mut checks = vec![monotone_check("monotone_decay", &eps, &errors)];
    let t = &config.thresholds;
    if model.is_linear() {
        let ok = sup_fit.slope >= t.slope_min && sup_fit.slope <= t.slope_max;
        checks.push(Check::new(
            "slope",
            ok,
            format!("slope {:.4} ± {:.4} (range [{}, {}])", sup_fit.slope, sup_fit.slope_std_err, t.slope_min, t.slope_max),
        ));
    } else {
        let first = errors.first().map_or(f64::NAN, |e| e.mean);
        let last = errors.last().map_or(f64::NAN, |e| e.mean);
        checks.push(ratio_check("decay_ratio", first, last, t.lln_ratio));
    }
    report.fits = vec![sup_fit, err_fit];
    report.checks.extend(checks);
    Ok(report.finish(started))
}
