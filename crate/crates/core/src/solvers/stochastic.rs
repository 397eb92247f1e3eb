use rand::Rng;

use super::{check_finite, semi_implicit_step, TimeGrid, Trajectory};
use crate::error::{dim_mismatch, Error, Result};
use crate::model::{check_state, Model};
use crate::noise::{sample_prm_with_budget, DeviationScale, Noise, DEFAULT_POINT_BUDGET};

/// Largest noise intensity accepted by default.
pub const DEFAULT_EPS_CEILING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StochasticOptions {
    pub eps_ceiling: f64,
    /// Largest expected number of jumps.
    pub point_budget: f64,
}

impl Default for StochasticOptions {
    fn default() -> Self {
        Self { eps_ceiling: DEFAULT_EPS_CEILING, point_budget: DEFAULT_POINT_BUDGET }
    }
}

pub(crate) fn check_scale(scale: &DeviationScale, opts: &StochasticOptions) -> Result<()> {
    if scale.epsilon > opts.eps_ceiling {
        return Err(Error::InvalidConfig(format!("epsilon {} exceeds the ceiling {}", scale.epsilon, opts.eps_ceiling)));
    }
    Ok(())
}

pub(crate) fn check_noise(model: &dyn Model, noise: &Noise) -> Result<()> {
    if noise.dim() != model.dim() {
        return Err(dim_mismatch("jump coefficient", model.dim(), noise.dim()));
    }
    Ok(())
}

/// Jump-adapted semi-implicit scheme for `du + Au dt + B(u,u) dt = ε ∫ G dÑ`, `Ñ` the
/// compensated Poisson measure of intensity `ε⁻¹ ν ⊗ dt`.
///
/// Jump times are inserted into the grid. Between events the state takes a semi-implicit step
/// with compensator drift `-Σ_k G(t, u, z_k) ν_k` evaluated at the left endpoint; at a jump
/// `(τ, z)` the state moves by `ε G(τ, u(τ−), z)`.
pub fn evolve_stochastic<R: Rng + ?Sized>(
    model: &dyn Model,
    noise: &Noise,
    scale: &DeviationScale,
    u0: &[f64],
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Trajectory> {
    evolve_stochastic_with(model, noise, scale, u0, grid, &StochasticOptions::default(), rng)
}

pub fn evolve_stochastic_with<R: Rng + ?Sized>(
    model: &dyn Model,
    noise: &Noise,
    scale: &DeviationScale,
    u0: &[f64],
    grid: &TimeGrid,
    opts: &StochasticOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    check_state(model, "u0", u0)?;
    check_noise(model, noise)?;
    check_scale(scale, opts)?;
    let eps = scale.epsilon;
    let sample = sample_prm_with_budget(noise.space, eps, grid.horizon(), opts.point_budget, rng)?;
    let n = model.dim();
    let nodes = grid.nodes();
    let mut traj = Trajectory::with_capacity(n, model.label(), nodes.len() + 2 * sample.count());
    traj.epsilon = Some(eps);
    let mut u = u0.to_vec();
    let (mut bbuf, mut drift, mut scratch) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut t = nodes[0];
    let mut advance = |u: &mut Vec<f64>, t0: f64, t1: f64| -> Result<()> {
        let dt = t1 - t0;
        if dt > 0.0 {
            noise.compensator_into(t0, u, &mut drift, &mut scratch);
            drift.iter_mut().for_each(|x| *x = -*x);
            semi_implicit_step(model, u, dt, Some(&drift), &mut bbuf);
            check_finite(u, t1)?;
        }
        Ok(())
    };
    traj.push(t, false, &u);
    let mut points = sample.points.iter().peekable();
    for &tn in &nodes[1..] {
        while let Some(&&(tau, z)) = points.peek() {
            if tau > tn {
                break;
            }
            advance(&mut u, t, tau)?;
            t = tau;
            traj.push(tau, false, &u);
            let mut inc = noise.jump.eval(tau, &u, z);
            inc.iter_mut().for_each(|x| *x *= eps);
            let left = u.clone();
            traj.push_jump(tau, z, &left, inc);
            u.copy_from_slice(traj.final_state());
            check_finite(&u, tau)?;
            points.next();
        }
        if tn > t {
            advance(&mut u, t, tn)?;
            t = tn;
            traj.push(tn, false, &u);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearModel;
    use crate::noise::{AffineJump, JumpCoefficient, MarkSpace};
    use crate::rng::stream;
    use crate::solvers::evolve_deterministic;

    #[test]
    fn zero_noise_matches_deterministic_on_same_nodes() {
        let m = crate::models::build_nse2d(crate::models::Nse2dConfig { k_max: 3, visc: 0.5 }).unwrap();
        let n = m.dim();
        let g = AffineJump::zero(n, 2);
        let space = MarkSpace::new(vec![1.0, 2.0]).unwrap();
        let noise = Noise::new(&g, &space).unwrap();
        let scale = DeviationScale::power(0.01, 0.3).unwrap();
        let u0: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let grid = TimeGrid::uniform(0.5, 1e-2).unwrap();
        let tr = evolve_stochastic(&m, &noise, &scale, &u0, &grid, &mut stream(1, 0, "t")).unwrap();
        assert!(!tr.jumps().is_empty());
        let mut nodes: Vec<f64> = tr.times().to_vec();
        nodes.dedup();
        let det = evolve_deterministic(&m, &u0, &TimeGrid::from_nodes(nodes).unwrap()).unwrap();
        let d = tr.difference(&det).unwrap();
        assert_eq!(d.sup_h_sq(), 0.0);
    }

    #[test]
    fn jump_rows_are_consistent() {
        let m = LinearModel::new(vec![1.0, 3.0]).unwrap();
        let g = AffineJump::new(vec![vec![1.0, -0.5]], vec![0.2]).unwrap();
        let space = MarkSpace::new(vec![1.0]).unwrap();
        let noise = Noise::new(&g, &space).unwrap();
        let scale = DeviationScale::power(0.05, 0.3).unwrap();
        let grid = TimeGrid::uniform(1.0, 1e-2).unwrap();
        let tr = evolve_stochastic(&m, &noise, &scale, &[0.3, 0.1], &grid, &mut stream(2, 0, "t")).unwrap();
        assert!(tr.jumps().len() > 3);
        for j in tr.jumps() {
            assert!(tr.is_post_jump(j.row) && !tr.is_post_jump(j.row - 1));
            assert_eq!(tr.time(j.row), tr.time(j.row - 1));
            let left = tr.state(j.row - 1);
            let expect: Vec<f64> = g.eval(0.0, left, 0).iter().map(|x| 0.05 * x).collect();
            for i in 0..2 {
                assert_eq!(j.increment[i], expect[i]);
                assert_eq!(left[i] + j.increment[i], tr.state(j.row)[i]);
            }
        }
    }

    #[test]
    fn ceiling_is_enforced() {
        let m = LinearModel::new(vec![1.0]).unwrap();
        let g = AffineJump::additive(vec![vec![1.0]]).unwrap();
        let space = MarkSpace::new(vec![1.0]).unwrap();
        let noise = Noise::new(&g, &space).unwrap();
        let scale = DeviationScale::power(0.75, 0.3).unwrap();
        let grid = TimeGrid::uniform(1.0, 1e-2).unwrap();
        let err = evolve_stochastic(&m, &noise, &scale, &[0.0], &grid, &mut stream(0, 0, "t")).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn jump_budget_is_a_resource_error() {
        let m = LinearModel::new(vec![1.0]).unwrap();
        let g = AffineJump::additive(vec![vec![1.0]]).unwrap();
        let space = MarkSpace::new(vec![1.0]).unwrap();
        let noise = Noise::new(&g, &space).unwrap();
        let scale = DeviationScale::power(1e-3, 0.3).unwrap();
        let grid = TimeGrid::uniform(1.0, 1e-2).unwrap();
        let opts = StochasticOptions { point_budget: 100.0, ..Default::default() };
        let err = evolve_stochastic_with(&m, &noise, &scale, &[0.0], &grid, &opts, &mut stream(0, 0, "t")).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }
}
