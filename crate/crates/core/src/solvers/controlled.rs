use rand::Rng;

use super::flow::check_base_path;
use super::stochastic::{check_noise, check_scale};
use super::{check_finite, etd_weights, StochasticOptions, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::model::Model;
use crate::noise::{sample_controlled_prm_with_budget, DeviationScale, Noise, PointProcessSample, Tilt};

/// Simulates the fluctuation `M = (u − u⁰)/a(ε)` of the controlled equation driven by a
/// Poisson measure with intensity `ε⁻¹ ψ ν ⊗ dt`, `M(0) = 0`.
///
/// Drift between events: `−ΛM − a B(M,M) − B(M,u⁰) − B(u⁰,M) − a⁻¹ Σ_k G(t, aM+u⁰, z_k) ν_k`,
/// with `Λ` integrated exactly over each sub-step and the rest frozen at the left endpoint.
/// A jump `(τ, z)` adds `(ε/a) G(τ, aM(τ−) + u⁰(τ), z)`.
pub fn evolve_controlled_moderate<R: Rng + ?Sized>(
    model: &dyn Model,
    noise: &Noise,
    scale: &DeviationScale,
    psi: &Tilt,
    u0_path: &Trajectory,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Trajectory> {
    evolve_controlled_moderate_with(model, noise, scale, psi, u0_path, grid, &StochasticOptions::default(), rng)
}

#[allow(clippy::too_many_arguments)]
pub fn evolve_controlled_moderate_with<R: Rng + ?Sized>(
    model: &dyn Model,
    noise: &Noise,
    scale: &DeviationScale,
    psi: &Tilt,
    u0_path: &Trajectory,
    grid: &TimeGrid,
    opts: &StochasticOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    check_noise(model, noise)?;
    check_scale(scale, opts)?;
    let horizon = grid.horizon();
    check_base_path(u0_path, horizon, model.dim())?;
    if (psi.horizon() - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Input(format!("grid mismatch: tilt horizon {}, grid {horizon}", psi.horizon())));
    }
    let sample = sample_controlled_prm_with_budget(noise.space, scale.epsilon, psi, opts.point_budget, rng)?;
    evolve_controlled_on_sample(model, noise, scale, u0_path, grid, &sample)
}

/// The controlled solver driven by a given point sample, e.g. one drawn under a tilt whose
/// likelihood ratio is needed afterwards.
pub fn evolve_controlled_on_sample(
    model: &dyn Model,
    noise: &Noise,
    scale: &DeviationScale,
    u0_path: &Trajectory,
    grid: &TimeGrid,
    sample: &PointProcessSample,
) -> Result<Trajectory> {
    check_noise(model, noise)?;
    let horizon = grid.horizon();
    check_base_path(u0_path, horizon, model.dim())?;
    if (sample.horizon - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Input(format!("grid mismatch: sample horizon {}, grid {horizon}", sample.horizon)));
    }
    let (eps, a) = (scale.epsilon, scale.a_of_eps);
    let n = model.dim();
    let lam = model.eigenvalues();
    let linear = model.is_linear();
    let nodes = grid.nodes();
    let mut traj = Trajectory::with_capacity(n, format!("{} fluctuation", model.label()), nodes.len() + 2 * sample.count());
    traj.epsilon = Some(eps);

    let mut m = vec![0.0; n];
    let (mut drift, mut tmp, mut state, mut scratch) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut cached: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut advance = |m: &mut Vec<f64>, t0: f64, t1: f64| -> Result<()> {
        let dt = t1 - t0;
        if dt <= 0.0 {
            return Ok(());
        }
        let base = u0_path.state_at(t0);
        for i in 0..n {
            state[i] = a * m[i] + base[i];
        }
        noise.compensator_into(t0, &state, &mut drift, &mut scratch);
        drift.iter_mut().for_each(|x| *x *= -1.0 / a);
        if !linear {
            model.bilinear_into(m, m, &mut tmp);
            axpy(-a, &tmp, &mut drift);
            model.bilinear_into(m, base, &mut tmp);
            axpy(-1.0, &tmp, &mut drift);
            model.bilinear_into(base, m, &mut tmp);
            axpy(-1.0, &tmp, &mut drift);
        }
        if cached.as_ref().is_none_or(|c| c.0 != dt) {
            let (e, w) = etd_weights(lam, dt);
            cached = Some((dt, e, w));
        }
        let (_, e, w) = cached.as_ref().unwrap();
        for i in 0..n {
            m[i] = e[i] * m[i] + w[i] * drift[i];
        }
        check_finite(m, t1)
    };

    let mut t = nodes[0];
    traj.push(t, false, &m);
    let mut points = sample.points.iter().peekable();
    for &tn in &nodes[1..] {
        while let Some(&&(tau, z)) = points.peek() {
            if tau > tn {
                break;
            }
            advance(&mut m, t, tau)?;
            t = tau;
            traj.push(tau, false, &m);
            let base = u0_path.state_at(tau);
            let arg: Vec<f64> = m.iter().zip(base).map(|(x, b)| a * x + b).collect();
            let mut inc = noise.jump.eval(tau, &arg, z);
            inc.iter_mut().for_each(|x| *x *= eps / a);
            let left = m.clone();
            traj.push_jump(tau, z, &left, inc);
            m.copy_from_slice(traj.final_state());
            check_finite(&m, tau)?;
            points.next();
        }
        if tn > t {
            advance(&mut m, t, tn)?;
            t = tn;
            traj.push(tn, false, &m);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_nse2d, Nse2dConfig};
    use crate::noise::{AffineJump, MarkSpace};
    use crate::rng::stream;
    use crate::solvers::evolve_deterministic;

    #[test]
    fn no_noise_no_control_stays_at_zero() {
        let m = build_nse2d(Nse2dConfig { k_max: 3, visc: 0.5 }).unwrap();
        let n = m.dim();
        let g = AffineJump::zero(n, 1);
        let s = MarkSpace::new(vec![1.0]).unwrap();
        let noise = Noise::new(&g, &s).unwrap();
        let grid = TimeGrid::uniform(0.5, 1e-2).unwrap();
        let u0: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let base = evolve_deterministic(&m, &u0, &grid).unwrap();
        let psi = Tilt::unit(grid.nodes().to_vec(), 1).unwrap();
        let scale = DeviationScale::power(0.01, 0.3).unwrap();
        let tr = evolve_controlled_moderate(&m, &noise, &scale, &psi, &base, &grid, &mut stream(3, 0, "c")).unwrap();
        assert!(tr.len() > grid.nodes().len());
        assert!(tr.states().all(|s| s.iter().all(|x| *x == 0.0)));
    }
}
