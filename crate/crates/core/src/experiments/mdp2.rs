use std::time::Instant;

use super::{
    monotone_check, ratio_check, replicate, window_check, Check, ExperimentConfig, ExperimentReport, Problem, ReportRow,
};
use crate::error::{Error, Result};
use crate::noise::{check_admissible, Control, Tilt};
use crate::rng::stream;
use crate::solvers::{evolve_controlled_moderate_with, evolve_deterministic, solve_skeleton, TimeGrid};
use crate::stats::{fit_log_log, Estimate};

/// Distance between the controlled fluctuation `M^{ψ_ε}`, `ψ_ε = 1 + a(ε) φ`, and the skeleton
/// `Y^φ` along the ε grid.
///
/// Each replica's skeleton is solved on the replica's jump-augmented nodes. The size of `M`
/// itself is fitted against ε as a boundedness diagnostic.
pub fn run_mdp2(problem: &Problem, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let model = problem.model.as_ref();
    let noise = problem.noise()?;
    let k = problem.space.len();
    if config.phi.len() != k {
        return Err(Error::InvalidConfig(format!("phi needs one entry per mark ({k})")));
    }
    let lam = model.eigenvalues();
    let grid = config.grid()?;
    let opts = config.solver_options();
    let u0_path = evolve_deterministic(model, &problem.u0, &grid)?;
    let phi = Control::constant(grid.nodes().to_vec(), &config.phi)?;
    let mut report = ExperimentReport::new(config, model);
    report.checks.push(window_check(config)?);
    let mut all_admissible = true;

    for scale in config.scales()? {
        let psi = Tilt::from_control(&phi, scale.a_of_eps, config.tilt_bound)
            .map_err(|e| Error::InvalidConfig(format!("eps = {}: {e}", scale.epsilon)))?;
        let adm = check_admissible(&psi, config.m, &scale, &problem.space)?;
        all_admissible &= adm.admissible;
        let samples = replicate(config.replicas, |r| {
            let mut rng = stream(config.seed, r, "mdp2");
            let m = evolve_controlled_moderate_with(model, &noise, &scale, &psi, &u0_path, &grid, &opts, &mut rng)?;
            let mut nodes = m.times().to_vec();
            nodes.dedup();
            let y = solve_skeleton(model, &noise, &phi, &u0_path, &TimeGrid::from_nodes(nodes)?)?;
            let z = m.difference(&y)?;
            Ok([z.sup_h_sq(), z.l2v_sq(lam), m.sup_h_sq() + m.l2v_sq(lam)])
        })?;
        let column = |i: usize| samples.iter().map(|s| s[i]).collect::<Vec<f64>>();
        let (zsup, zl2, mstat) = (column(0), column(1), column(2));
        let zstat: Vec<f64> = zsup.iter().zip(&zl2).map(|(a, b)| a + b).collect();
        let mut row = ReportRow::new("eps", scale.epsilon);
        row.estimates.insert("z_stat".into(), Estimate::from_samples(&zstat));
        row.estimates.insert("z_sup_h_sq".into(), Estimate::from_samples(&zsup));
        row.estimates.insert("m_stat".into(), Estimate::from_samples(&mstat));
        row.values.insert("a_of_eps".into(), scale.a_of_eps);
        row.values.insert("q".into(), adm.q);
        row.values.insert("q_bound".into(), adm.bound);
        row.values.insert("z_stat_max".into(), zstat.iter().copied().fold(0.0, f64::max));
        report.rows.push(row);
    }

    let eps: Vec<f64> = report.rows.iter().map(|r| r.value).collect();
    let z: Vec<&Estimate> = report.rows.iter().map(|r| &r.estimates["z_stat"]).collect();
    let m_means: Vec<f64> = report.rows.iter().map(|r| r.estimates["m_stat"].mean).collect();
    let t = &config.thresholds;
    report.checks.push(monotone_check("monotone_decay", &eps, &z));
    report.checks.push(ratio_check("decay_ratio", z[0].mean, z[z.len() - 1].mean, t.mdp2_ratio));
    let z_fit = fit_log_log("z_stat_vs_eps", &eps, &z.iter().map(|e| e.mean).collect::<Vec<_>>());
    let m_fit = fit_log_log("m_stat_vs_eps", &eps, &m_means);
    let m_max = m_means.iter().copied().fold(0.0, f64::max);
    report.values.insert("m_stat_sup".into(), m_max);
    let bounded = m_max.is_finite() && (eps.len() < 2 || m_fit.slope >= t.bounded_slope_min);
    report.checks.push(Check::new(
        "bounded",
        bounded,
        format!("sup over grid {m_max:.4e}; slope against eps {:.4} (min {})", m_fit.slope, t.bounded_slope_min),
    ));
    report.checks.push(Check::new(
        "admissible",
        all_admissible,
        format!("Q(psi) <= m a(eps)^2 with m = {} at every eps: {all_admissible}", config.m),
    ));
    report.fits = vec![z_fit, m_fit];
    Ok(report.finish(started))
}
