use super::{check_finite, semi_implicit_step, TimeGrid, Trajectory};
use crate::error::Result;
use crate::linalg::{norm_sq, weighted_norm_sq};
use crate::model::{check_state, Model};

/// Semi-implicit Euler for `du/dt + Au + B(u,u) = 0` on the nodes of `grid`.
///
/// Records the energy defect `max_j | |u_j|² + 2 Σ_{l<j} ‖u_{l+1}‖² Δt_l − |u_0|² |`.
pub fn evolve_deterministic(model: &dyn Model, u0: &[f64], grid: &TimeGrid) -> Result<Trajectory> {
    check_state(model, "u0", u0)?;
    let lam = model.eigenvalues();
    let nodes = grid.nodes();
    let mut traj = Trajectory::with_capacity(model.dim(), model.label(), nodes.len());
    let mut u = u0.to_vec();
    let mut bbuf = vec![0.0; u.len()];
    let e0 = norm_sq(u0);
    let mut dissipated = 0.0;
    let mut defect: f64 = 0.0;
    traj.push(nodes[0], false, &u);
    for w in nodes.windows(2) {
        let dt = w[1] - w[0];
        semi_implicit_step(model, &mut u, dt, None, &mut bbuf);
        check_finite(&u, w[1])?;
        dissipated += 2.0 * weighted_norm_sq(lam, &u) * dt;
        defect = defect.max((norm_sq(&u) + dissipated - e0).abs());
        traj.push(w[1], false, &u);
    }
    traj.energy_defect = Some(defect);
    Ok(traj)
}
