use std::sync::OnceLock;

use super::{check_finite, etd_weights, TimeGrid, Trajectory};
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{axpy, dot};
use crate::model::{check_state, Model};
use crate::noise::{Control, Noise};

/// Largest number of cached Jacobian entries (`steps × n²`).
const JACOBIAN_CACHE_LIMIT: usize = 16_000_000;

pub(crate) fn check_base_path(u0_path: &Trajectory, horizon: f64, dim: usize) -> Result<()> {
    if u0_path.dim() != dim {
        return Err(dim_mismatch("u0_path", dim, u0_path.dim()));
    }
    if u0_path.is_empty() || u0_path.time(0) != 0.0 {
        return Err(Error::Input("u0_path must start at t = 0".into()));
    }
    if (u0_path.final_time() - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Input(format!("grid mismatch: u0_path ends at {}, grid at {horizon}", u0_path.final_time())));
    }
    Ok(())
}

/// The linearized skeleton dynamics
/// `dY/dt + AY + B(Y,u⁰) + B(u⁰,Y) = Σ_k G(t,u⁰,z_k) φ(t,z_k) ν_k`, `Y(0) = 0`,
/// discretized with an exponential step on a fixed grid, together with its exact discrete
/// adjoint.
///
/// Forward step: `Y_{j+1} = E_j Y_j + W_j (f_j − J_j Y_j)` with `E = e^{−Λ Δt}`,
/// `W = (1 − e^{−Λ Δt}) Λ⁻¹`, `J_j Y = B(Y,u⁰_j) + B(u⁰_j,Y)`.
/// Adjoint step: `p_j = E_j p_{j+1} − J_jᵀ W_j p_{j+1}`.
pub struct LinearizedFlow<'a> {
    model: &'a dyn Model,
    noise: Noise<'a>,
    nodes: Vec<f64>,
    base: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    /// `G(t_j, u⁰_j, z_k)`, laid out `[j][k][i]`.
    forcing: Vec<f64>,
    /// Rows `J_j e_i`, laid out `[j][i][l]`; built on first adjoint use when small enough.
    jac: OnceLock<Option<Vec<f64>>>,
    linear: bool,
}

impl<'a> LinearizedFlow<'a> {
    pub fn new(model: &'a dyn Model, noise: Noise<'a>, u0_path: &Trajectory, grid: &TimeGrid) -> Result<Self> {
        let n = model.dim();
        if noise.dim() != n {
            return Err(dim_mismatch("jump coefficient", n, noise.dim()));
        }
        check_base_path(u0_path, grid.horizon(), n)?;
        let nodes = grid.nodes().to_vec();
        let steps = nodes.len() - 1;
        let lam = model.eigenvalues();
        let base: Vec<Vec<f64>> = nodes[..steps].iter().map(|&t| u0_path.state_at(t).to_vec()).collect();
        let linear = model.is_linear() || base.iter().all(|u| u.iter().all(|x| *x == 0.0));
        let mut e = Vec::with_capacity(steps);
        let mut w = Vec::with_capacity(steps);
        for win in nodes.windows(2) {
            let (ej, wj) = etd_weights(lam, win[1] - win[0]);
            e.push(ej);
            w.push(wj);
        }
        let k = noise.space.len();
        let mut forcing = vec![0.0; steps * k * n];
        for j in 0..steps {
            for z in 0..k {
                let off = (j * k + z) * n;
                noise.jump.eval_into(nodes[j], &base[j], z, &mut forcing[off..off + n]);
            }
        }
        Ok(Self { model, noise, nodes, base, e, w, forcing, jac: OnceLock::new(), linear })
    }

    fn jacobian_cache(&self) -> Option<&Vec<f64>> {
        self.jac
            .get_or_init(|| {
                let n = self.dim();
                let steps = self.nodes.len() - 1;
                if self.linear || steps * n * n > JACOBIAN_CACHE_LIMIT {
                    return None;
                }
                let mut jac = vec![0.0; steps * n * n];
                let mut basis = vec![0.0; n];
                for j in 0..steps {
                    for i in 0..n {
                        basis[i] = 1.0;
                        let off = (j * n + i) * n;
                        self.apply_jacobian(j, &basis, &mut jac[off..off + n]);
                        basis[i] = 0.0;
                    }
                }
                Some(jac)
            })
            .as_ref()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_marks(&self) -> usize {
        self.noise.space.len()
    }

    pub fn noise(&self) -> Noise<'a> {
        self.noise
    }

    /// `J_j y = B(y,u⁰_j) + B(u⁰_j,y)`.
    fn apply_jacobian(&self, j: usize, y: &[f64], out: &mut [f64]) {
        let n = y.len();
        let mut tmp = vec![0.0; n];
        self.model.bilinear_into(y, &self.base[j], out);
        self.model.bilinear_into(&self.base[j], y, &mut tmp);
        axpy(1.0, &tmp, out);
    }

    /// `J_jᵀ r`.
    fn apply_jacobian_t(&self, j: usize, r: &[f64], out: &mut [f64]) {
        let n = r.len();
        match self.jacobian_cache() {
            Some(jac) => {
                let block = &jac[j * n * n..(j + 1) * n * n];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(&block[i * n..(i + 1) * n], r);
                }
            }
            None => {
                let mut basis = vec![0.0; n];
                let mut col = vec![0.0; n];
                for i in 0..n {
                    basis[i] = 1.0;
                    self.apply_jacobian(j, &basis, &mut col);
                    basis[i] = 0.0;
                    out[i] = dot(&col, r);
                }
            }
        }
    }

    fn check_control(&self, phi: &Control) -> Result<()> {
        if phi.n_marks() != self.n_marks() {
            return Err(Error::Input(format!("control has {} marks, expected {}", phi.n_marks(), self.n_marks())));
        }
        let t = *self.nodes.last().unwrap();
        if (phi.horizon() - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::Input(format!("grid mismatch: control horizon {}, grid {t}", phi.horizon())));
        }
        Ok(())
    }

    fn step_forcing(&self, j: usize, phi: &Control, out: &mut [f64]) {
        let n = out.len();
        let k = self.n_marks();
        out.iter_mut().for_each(|x| *x = 0.0);
        let t = self.nodes[j];
        for z in 0..k {
            let c = phi.at(t, z) * self.noise.space.weight(z);
            if c != 0.0 {
                let off = (j * k + z) * n;
                axpy(c, &self.forcing[off..off + n], out);
            }
        }
    }

    fn run_forward(&self, phi: &Control, mut visit: impl FnMut(usize, &[f64])) -> Result<Vec<f64>> {
        self.check_control(phi)?;
        let n = self.dim();
        let mut y = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut jy = vec![0.0; n];
        visit(0, &y);
        for j in 0..self.nodes.len() - 1 {
            self.step_forcing(j, phi, &mut f);
            if !self.linear {
                self.apply_jacobian(j, &y, &mut jy);
                for i in 0..n {
                    f[i] -= jy[i];
                }
            }
            let (e, w) = (&self.e[j], &self.w[j]);
            for i in 0..n {
                y[i] = e[i] * y[i] + w[i] * f[i];
            }
            check_finite(&y, self.nodes[j + 1])?;
            visit(j + 1, &y);
        }
        Ok(y)
    }

    /// Full path `Y^φ` on the grid nodes.
    pub fn forward(&self, phi: &Control) -> Result<Trajectory> {
        let mut traj = Trajectory::with_capacity(self.dim(), format!("{} skeleton", self.model.label()), self.nodes.len());
        self.run_forward(phi, |j, y| traj.push(self.nodes[j], false, y))?;
        Ok(traj)
    }

    /// `Y^φ(T)`.
    pub fn forward_terminal(&self, phi: &Control) -> Result<Vec<f64>> {
        self.run_forward(phi, |_, _| {})
    }

    fn run_adjoint(&self, terminal: &[f64], mut visit: impl FnMut(usize, &[f64], &[f64])) -> Result<Vec<f64>> {
        check_state(self.model, "terminal", terminal)?;
        let n = self.dim();
        let mut p = terminal.to_vec();
        let mut r = vec![0.0; n];
        let mut jr = vec![0.0; n];
        for j in (0..self.nodes.len() - 1).rev() {
            let (e, w) = (&self.e[j], &self.w[j]);
            for i in 0..n {
                r[i] = w[i] * p[i];
            }
            // r = W_j p_{j+1} is what the control at step j sees
            visit(j, &p, &r);
            if self.linear {
                for i in 0..n {
                    p[i] *= e[i];
                }
            } else {
                self.apply_jacobian_t(j, &r, &mut jr);
                for i in 0..n {
                    p[i] = e[i] * p[i] - jr[i];
                }
            }
            check_finite(&p, self.nodes[j])?;
        }
        Ok(p)
    }

    /// Adjoint path `p` on the grid nodes with `p(T) = terminal`.
    pub fn adjoint(&self, terminal: &[f64]) -> Result<Trajectory> {
        let n = self.dim();
        let m = self.nodes.len();
        let mut states = vec![0.0; m * n];
        states[(m - 1) * n..].copy_from_slice(terminal);
        let p0 = self.run_adjoint(terminal, |j, p_next, _| {
            states[(j + 1) * n..(j + 2) * n].copy_from_slice(p_next);
        })?;
        states[..n].copy_from_slice(&p0);
        Trajectory::from_rows(n, format!("{} adjoint", self.model.label()), self.nodes.clone(), states)
    }

    /// The control `χ` with `⟨Y^φ(T), terminal⟩ = ⟨φ, χ⟩_{L²(ν ⊗ dt)}` for every control
    /// `φ` that is constant on the grid cells.
    pub fn adjoint_control(&self, terminal: &[f64]) -> Result<Control> {
        let n = self.dim();
        let k = self.n_marks();
        let steps = self.nodes.len() - 1;
        let mut values = vec![0.0; steps * k];
        self.run_adjoint(terminal, |j, _, r| {
            let dt = self.nodes[j + 1] - self.nodes[j];
            for z in 0..k {
                let off = (j * k + z) * n;
                values[j * k + z] = dot(&self.forcing[off..off + n], r) / dt;
            }
        })?;
        Control::new(self.nodes.clone(), k, values)
    }
}

/// `Y^φ` on `grid`, with `u⁰` looked up from `u0_path` at left endpoints.
pub fn solve_skeleton(
    model: &dyn Model,
    noise: &Noise,
    phi: &Control,
    u0_path: &Trajectory,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    LinearizedFlow::new(model, *noise, u0_path, grid)?.forward(phi)
}

/// Backward solve of the adjoint linearized flow from `p(T) = terminal`.
///
/// Only the model and base path enter; the noise is not needed.
pub fn linearized_adjoint_solve(
    model: &dyn Model,
    u0_path: &Trajectory,
    terminal: &[f64],
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let zero = crate::noise::AffineJump::zero(model.dim(), 1);
    let space = crate::noise::MarkSpace::new(vec![1.0])?;
    let noise = Noise::new(&zero, &space)?;
    LinearizedFlow::new(model, noise, u0_path, grid)?.adjoint(terminal)
}
