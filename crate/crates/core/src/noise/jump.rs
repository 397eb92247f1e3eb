use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, sub};
use crate::rng::stream;

/// Jump coefficient `G(t, u, z)` on a finite mark space, with the envelopes of the
/// Lipschitz bound `|G(t,u,z) - G(t,v,z)| ≤ L₁(t,z)|u - v|` and the growth bound
/// `|G(t,u,z)| ≤ L₂(t,z) + L₃(t,z)|u|`.
pub trait JumpCoefficient: Send + Sync {
    fn dim(&self) -> usize;

    fn n_marks(&self) -> usize;

    fn eval_into(&self, t: f64, u: &[f64], mark: usize, out: &mut [f64]);

    fn lipschitz(&self, t: f64, mark: usize) -> f64;

    fn growth_constant(&self, t: f64, mark: usize) -> f64;

    fn growth_linear(&self, t: f64, mark: usize) -> f64;

    fn eval(&self, t: f64, u: &[f64], mark: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, u, mark, &mut out);
        out
    }
}

/// `G(t, u, z_k) = shift_k + scale_k · u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineJump {
    dim: usize,
    shifts: Vec<Vec<f64>>,
    scales: Vec<f64>,
}

impl AffineJump {
    pub fn new(shifts: Vec<Vec<f64>>, scales: Vec<f64>) -> Result<Self> {
        let dim = shifts.first().map(Vec::len).unwrap_or(0);
        if shifts.is_empty() || dim == 0 {
            return Err(Error::InvalidConfig("jump coefficient needs at least one mark and a positive dimension".into()));
        }
        if shifts.iter().any(|s| s.len() != dim) {
            return Err(Error::InvalidConfig("jump shifts must all have the state dimension".into()));
        }
        if scales.len() != shifts.len() {
            return Err(Error::InvalidConfig("jump scales need one entry per mark".into()));
        }
        if shifts.iter().flatten().chain(&scales).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("jump coefficient entries must be finite".into()));
        }
        Ok(Self { dim, shifts, scales })
    }

    /// State-independent jumps `G(t, u, z_k) = shift_k`.
    pub fn additive(shifts: Vec<Vec<f64>>) -> Result<Self> {
        let k = shifts.len();
        Self::new(shifts, vec![0.0; k])
    }

    pub fn zero(dim: usize, n_marks: usize) -> Self {
        Self { dim, shifts: vec![vec![0.0; dim]; n_marks], scales: vec![0.0; n_marks] }
    }

    pub fn shift(&self, mark: usize) -> &[f64] {
        &self.shifts[mark]
    }

    pub fn scale(&self, mark: usize) -> f64 {
        self.scales[mark]
    }

    pub fn is_additive(&self) -> bool {
        self.scales.iter().all(|s| *s == 0.0)
    }
}

impl JumpCoefficient for AffineJump {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_marks(&self) -> usize {
        self.shifts.len()
    }

    fn eval_into(&self, _t: f64, u: &[f64], mark: usize, out: &mut [f64]) {
        let s = self.scales[mark];
        for ((o, a), x) in out.iter_mut().zip(&self.shifts[mark]).zip(u) {
            *o = a + s * x;
        }
    }

    fn lipschitz(&self, _t: f64, mark: usize) -> f64 {
        self.scales[mark].abs()
    }

    fn growth_constant(&self, _t: f64, mark: usize) -> f64 {
        norm(&self.shifts[mark])
    }

    fn growth_linear(&self, _t: f64, mark: usize) -> f64 {
        self.scales[mark].abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub samples: usize,
    /// `max |G(u) - G(v)| / (L₁ |u - v|)`, should not exceed 1
    pub lipschitz_ratio: f64,
    /// `max |G(u)| / (L₂ + L₃|u|)`, should not exceed 1
    pub growth_ratio: f64,
    pub passed: bool,
}

/// Spot-checks the Lipschitz and growth envelopes on random states and times in `[0, horizon]`.
pub fn check_envelopes(g: &dyn JumpCoefficient, horizon: f64, n_samples: usize, seed: u64) -> EnvelopeReport {
    let mut rng = stream(seed, 0, "check_envelopes");
    let n = g.dim();
    let (mut lip, mut growth) = (0.0_f64, 0.0_f64);
    for _ in 0..n_samples {
        let t = horizon * rng.random::<f64>();
        let mark = rng.random_range(0..g.n_marks());
        let r: f64 = 3.0 * rng.random::<f64>();
        let u: Vec<f64> = (0..n).map(|_| r * rng.sample::<f64, _>(StandardNormal)).collect();
        let v: Vec<f64> = (0..n).map(|_| r * rng.sample::<f64, _>(StandardNormal)).collect();
        let gu = g.eval(t, &u, mark);
        let gv = g.eval(t, &v, mark);
        let dg = norm(&sub(&gu, &gv));
        let bound = g.lipschitz(t, mark) * norm(&sub(&u, &v));
        lip = lip.max(ratio(dg, bound));
        let bound = g.growth_constant(t, mark) + g.growth_linear(t, mark) * norm(&u);
        growth = growth.max(ratio(norm(&gu), bound));
    }
    let slack = 1.0 + 1e-12;
    EnvelopeReport { samples: n_samples, lipschitz_ratio: lip, growth_ratio: growth, passed: lip <= slack && growth <= slack }
}

fn ratio(value: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        value / bound
    } else if value == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}
