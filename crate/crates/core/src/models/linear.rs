use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::model::Model;

/// `B ≡ 0` with a diagonal `A`; the reference model with closed-form statistics.
///
/// `|·|_Q` is the `H` norm, so `a₀ = 1/√λ_min` makes the interpolation bound exact.
#[derive(Clone, Debug)]
pub struct LinearModel {
    eigenvalues: Vec<f64>,
    a0: f64,
    label: String,
}

impl LinearModel {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidConfig("linear model needs at least one eigenvalue".into()));
        }
        if eigenvalues.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidConfig("linear model eigenvalues must be finite and strictly positive".into()));
        }
        let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { a0: 1.0 / min.sqrt(), label: format!("linear-test(n={})", eigenvalues.len()), eigenvalues })
    }
}

impl Model for LinearModel {
    fn label(&self) -> &str {
        &self.label
    }

    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn bilinear_into(&self, _u: &[f64], _v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }

    fn q_norm(&self, v: &[f64]) -> f64 {
        norm(v)
    }

    fn a0(&self) -> f64 {
        self.a0
    }

    fn is_linear(&self) -> bool {
        true
    }
}
