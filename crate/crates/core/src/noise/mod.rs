//! Finite-mark Poisson noise: mark spaces, jump coefficients, controls and tilts,
//! point-process sampling and likelihood ratios.

mod control;
mod jump;
mod prm;

pub use control::{check_admissible, entropy_kernel, q_functional, Admissibility, Control, Tilt};
pub use jump::{check_envelopes, AffineJump, EnvelopeReport, JumpCoefficient};
pub use prm::{
    girsanov_log_weight, sample_controlled_prm, sample_controlled_prm_with_budget, sample_prm, sample_prm_with_budget,
    PointProcessSample, DEFAULT_POINT_BUDGET,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite mark space `Z = {z_1..z_K}` with a finite measure `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkSpace {
    marks: Vec<String>,
    weights: Vec<f64>,
}

impl MarkSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let marks = (0..weights.len()).map(|k| format!("z{}", k + 1)).collect();
        Self::with_names(marks, weights)
    }

    pub fn with_names(marks: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig("mark space needs at least one mark".into()));
        }
        if marks.len() != weights.len() {
            return Err(Error::InvalidConfig("mark names and weights differ in length".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidConfig("mark weights must be finite and strictly positive".into()));
        }
        Ok(Self { marks, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn marks(&self) -> &[String] {
        &self.marks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// `ν(Z)`
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Noise intensity `ε` and deviation scale `a(ε)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationScale {
    pub epsilon: f64,
    pub a_of_eps: f64,
    pub description: String,
}

impl DeviationScale {
    pub fn new(epsilon: f64, a_of_eps: f64, description: impl Into<String>) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0 && a_of_eps.is_finite() && a_of_eps > 0.0) {
            return Err(Error::Input(format!("deviation scale needs ε > 0 and a(ε) > 0, got ε={epsilon}, a={a_of_eps}")));
        }
        Ok(Self { epsilon, a_of_eps, description: description.into() })
    }

    /// `a(ε) = ε^γ`.
    pub fn power(epsilon: f64, gamma: f64) -> Result<Self> {
        Self::new(epsilon, epsilon.powf(gamma), format!("a(eps)=eps^{gamma}"))
    }

    /// `ε / a(ε)²`, the speed of the deviation principle.
    pub fn speed(&self) -> f64 {
        self.epsilon / (self.a_of_eps * self.a_of_eps)
    }
}

/// True when `a(ε)` and `ε/a²(ε)` both decrease strictly along `scales`, ordered by
/// decreasing `ε`.
pub fn is_moderate_window(scales: &[DeviationScale]) -> bool {
    scales.windows(2).all(|w| w[1].epsilon < w[0].epsilon && w[1].a_of_eps < w[0].a_of_eps && w[1].speed() < w[0].speed())
}

/// A jump coefficient together with its mark space.
#[derive(Clone, Copy)]
pub struct Noise<'a> {
    pub jump: &'a dyn JumpCoefficient,
    pub space: &'a MarkSpace,
}

impl<'a> Noise<'a> {
    pub fn new(jump: &'a dyn JumpCoefficient, space: &'a MarkSpace) -> Result<Self> {
        if jump.n_marks() != space.len() {
            return Err(Error::Input(format!("jump coefficient has {} marks, mark space has {}", jump.n_marks(), space.len())));
        }
        Ok(Self { jump, space })
    }

    pub fn dim(&self) -> usize {
        self.jump.dim()
    }

    /// `Σ_k G(t, u, z_k) ν_k`, written into `out`; `scratch` has the state dimension.
    pub fn compensator_into(&self, t: f64, u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (k, w) in self.space.weights().iter().enumerate() {
            self.jump.eval_into(t, u, k, scratch);
            crate::linalg::axpy(*w, scratch, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_scale_window() {
        let scales: Vec<_> = (4..=12).map(|p| DeviationScale::power(0.5f64.powi(p), 0.3).unwrap()).collect();
        assert!(is_moderate_window(&scales));
        // a(ε) = ε^0.6 leaves ε/a² = ε^{-0.2} growing
        let bad: Vec<_> = (4..=6).map(|p| DeviationScale::power(0.5f64.powi(p), 0.6).unwrap()).collect();
        assert!(!is_moderate_window(&bad));
    }

    #[test]
    fn mark_space_validation() {
        assert!(MarkSpace::new(vec![]).is_err());
        assert!(MarkSpace::new(vec![1.0, 0.0]).is_err());
        assert_eq!(MarkSpace::new(vec![0.5, 1.5]).unwrap().total_mass(), 2.0);
    }
}
