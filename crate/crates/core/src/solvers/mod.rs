//! Time integration of the deterministic, stochastic, skeleton and controlled equations,
//! and of the adjoint of the linearized flow.
//!
//! The deterministic and stochastic equations use semi-implicit Euler (`A` implicit, `B`
//! explicit). The linear skeleton, its adjoint and the controlled fluctuation equation
//! integrate `A` exactly with a first-order exponential (ETD1) step, which keeps the
//! control-to-endpoint map exact for piecewise-constant controls when `B ≡ 0`.

mod controlled;
mod deterministic;
mod flow;
mod grid;
mod stochastic;
mod trajectory;

pub use controlled::{evolve_controlled_moderate, evolve_controlled_moderate_with, evolve_controlled_on_sample};
pub use deterministic::evolve_deterministic;
pub use flow::{linearized_adjoint_solve, solve_skeleton, LinearizedFlow};
pub use grid::TimeGrid;
pub use stochastic::{evolve_stochastic, evolve_stochastic_with, StochasticOptions, DEFAULT_EPS_CEILING};
pub use trajectory::{JumpRecord, Trajectory};

use crate::error::{Error, Result};
use crate::model::Model;

/// Semi-implicit Euler step `(I + dt Λ) u_new = u - dt B(u,u) + dt f`.
///
/// `forcing` is added after the bilinear term; with `forcing = 0` the result is bitwise
/// identical to the unforced step.
pub(crate) fn semi_implicit_step(model: &dyn Model, u: &mut [f64], dt: f64, forcing: Option<&[f64]>, bbuf: &mut [f64]) {
    let lam = model.eigenvalues();
    if model.is_linear() {
        bbuf.iter_mut().for_each(|x| *x = 0.0);
    } else {
        model.bilinear_into(u, u, bbuf);
    }
    match forcing {
        Some(f) => {
            for i in 0..u.len() {
                u[i] = (u[i] - dt * bbuf[i] + dt * f[i]) / (1.0 + dt * lam[i]);
            }
        }
        None => {
            for i in 0..u.len() {
                u[i] = (u[i] - dt * bbuf[i]) / (1.0 + dt * lam[i]);
            }
        }
    }
}

/// `e^{-λ dt}` and `(1 - e^{-λ dt})/λ` for the exponential step.
pub(crate) fn etd_weights(lam: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let e = lam.iter().map(|l| (-l * dt).exp()).collect();
    let w = lam.iter().map(|l| -(-l * dt).exp_m1() / l).collect();
    (e, w)
}

pub(crate) fn check_finite(u: &[f64], t: f64) -> Result<()> {
    if u.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Solver(format!("non-finite state at t = {t}")))
    }
}
