//! The abstract operator contract and executable checks of its structural assumptions.
//!
//! A model is a finite realization of the Gelfand triple `V ⊂ H ⊂ V'`: `H = ℝⁿ` with the
//! Euclidean inner product, `A` diagonal with strictly positive eigenvalues `λ_i`, the
//! energy norm `‖v‖² = Σ λ_i v_i²`, and the `V'`–`V` pairing equal to the `H` inner product.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{dot, norm, weighted_norm_sq};
use crate::rng::stream;

/// Finite realization of `(H, V, A, B, |·|_Q)`.
///
/// Implementations must be pure: evaluation routines may not keep hidden mutable state,
/// so one instance can be shared across worker threads.
pub trait Model: Send + Sync {
    fn label(&self) -> &str;

    fn dim(&self) -> usize;

    /// Eigenvalues of the diagonal operator `A`, all strictly positive.
    fn eigenvalues(&self) -> &[f64];

    /// Writes `B(u, v)` into `out`. Callers guarantee all three slices have length `dim()`.
    fn bilinear_into(&self, u: &[f64], v: &[f64], out: &mut [f64]);

    /// The auxiliary norm `|v|_Q` of the interpolation space.
    fn q_norm(&self, v: &[f64]) -> f64;

    /// Interpolation constant in `|v|_Q² ≤ a₀ |v| ‖v‖`.
    fn a0(&self) -> f64;

    /// True when `B ≡ 0`; solvers use it to skip bilinear evaluations.
    fn is_linear(&self) -> bool {
        false
    }

    /// `‖v‖² = Σ λ_i v_i²`.
    fn v_norm_sq(&self, v: &[f64]) -> f64 {
        weighted_norm_sq(self.eigenvalues(), v)
    }
}

pub(crate) fn check_dim(model: &dyn Model, what: &str, u: &[f64]) -> Result<()> {
    if u.len() != model.dim() {
        return Err(dim_mismatch(what, model.dim(), u.len()));
    }
    Ok(())
}

/// Validates a state vector: matching dimension and finite entries.
pub fn check_state(model: &dyn Model, what: &str, u: &[f64]) -> Result<()> {
    check_dim(model, what, u)?;
    if !crate::linalg::all_finite(u) {
        return Err(Error::Input(format!("{what}: state contains non-finite entries")));
    }
    Ok(())
}

/// `A u = (λ_i u_i)_i`.
pub fn apply_a(model: &dyn Model, u: &[f64]) -> Result<Vec<f64>> {
    check_dim(model, "apply_a", u)?;
    Ok(model.eigenvalues().iter().zip(u).map(|(l, x)| l * x).collect())
}

pub fn bilinear(model: &dyn Model, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_dim(model, "bilinear u", u)?;
    check_dim(model, "bilinear v", v)?;
    let mut out = vec![0.0; model.dim()];
    model.bilinear_into(u, v, &mut out);
    Ok(out)
}

/// `b(u, v, w) = ⟨B(u, v), w⟩`.
pub fn trilinear(model: &dyn Model, u: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    check_dim(model, "trilinear w", w)?;
    Ok(dot(&bilinear(model, u, v)?, w))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub samples: usize,
    pub max_abs_defect: f64,
    pub max_rel_defect: f64,
    /// Observed supremum of the ratio the check bounds, where one exists.
    pub empirical_constant: Option<f64>,
    /// `None` for report-only checks.
    pub tolerance: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub model: String,
    pub dim: usize,
    pub a0: f64,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Default)]
struct Acc {
    abs: f64,
    rel: f64,
    sup: f64,
}

impl Acc {
    fn push(&mut self, defect: f64, scale: f64) {
        let defect = defect.abs();
        self.abs = self.abs.max(defect);
        let rel = if scale > 0.0 {
            defect / scale
        } else if defect == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        self.rel = self.rel.max(rel);
    }

    fn finish(self, name: &str, samples: usize, tol: Option<f64>, constant: Option<f64>) -> AssumptionCheck {
        let passed = match tol {
            Some(t) => self.rel <= t,
            None => constant.is_none_or(f64::is_finite),
        };
        AssumptionCheck {
            name: name.to_string(),
            samples,
            max_abs_defect: self.abs,
            max_rel_defect: self.rel,
            empirical_constant: constant,
            tolerance: tol,
            passed,
        }
    }
}

fn unit_gaussian<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let s = norm(&v);
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Randomized verification of bilinearity, skew symmetry `b(u,v,w) = -b(u,w,v)`, the
/// diagonal identity `b(u,v,v) = 0`, the interpolation bound `|v|_Q² ≤ a₀|v|‖v‖`, and an
/// empirical estimate of the trilinear constant `sup |b(u,v,w)| / (|u|_Q ‖v‖ |w|_Q)`.
///
/// Samples have standard-normal coordinates scaled to unit `H` norm. Defects are made
/// relative with Cauchy–Schwarz scales (e.g. `|B(u,v)||w| + |B(u,w)||v|` for skew symmetry),
/// so the tolerance is scale invariant. The trilinear constant is reported without a
/// threshold.
pub fn verify_assumptions(model: &dyn Model, n_samples: usize, tol: f64, rng_seed: u64) -> Result<AssumptionReport> {
    if n_samples == 0 {
        return Err(Error::Input("verify_assumptions: n_samples must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Input("verify_assumptions: tolerance must be positive".into()));
    }
    let n = model.dim();
    let mut rng = stream(rng_seed, 0, "verify_assumptions");
    let mut bilin = Acc::default();
    let mut skew = Acc::default();
    let mut diag = Acc::default();
    let mut interp = Acc::default();
    let mut b3 = Acc::default();

    let mut buv = vec![0.0; n];
    let mut buw = vec![0.0; n];
    let mut bxv = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for _ in 0..n_samples {
        let u = unit_gaussian(&mut rng, n);
        let v = unit_gaussian(&mut rng, n);
        let w = unit_gaussian(&mut rng, n);
        let x = unit_gaussian(&mut rng, n);
        let alpha: f64 = rng.sample(StandardNormal);
        let beta: f64 = rng.sample(StandardNormal);

        model.bilinear_into(&u, &v, &mut buv);
        model.bilinear_into(&u, &w, &mut buw);
        model.bilinear_into(&x, &v, &mut bxv);

        // first slot: B(αu+βx, v) = αB(u,v) + βB(x,v)
        let comb: Vec<f64> = u.iter().zip(&x).map(|(a, b)| alpha * a + beta * b).collect();
        model.bilinear_into(&comb, &v, &mut tmp);
        let mut d = 0.0_f64;
        let mut s = 0.0_f64;
        for i in 0..n {
            d = d.max((tmp[i] - alpha * buv[i] - beta * bxv[i]).abs());
            s = s.max(alpha.abs() * buv[i].abs() + beta.abs() * bxv[i].abs());
        }
        bilin.push(d, s);
        // second slot: B(u, αv+βw) = αB(u,v) + βB(u,w)
        let comb: Vec<f64> = v.iter().zip(&w).map(|(a, b)| alpha * a + beta * b).collect();
        model.bilinear_into(&u, &comb, &mut tmp);
        let mut d = 0.0_f64;
        let mut s = 0.0_f64;
        for i in 0..n {
            d = d.max((tmp[i] - alpha * buv[i] - beta * buw[i]).abs());
            s = s.max(alpha.abs() * buv[i].abs() + beta.abs() * buw[i].abs());
        }
        bilin.push(d, s);

        let b_uvw = dot(&buv, &w);
        let b_uwv = dot(&buw, &v);
        skew.push(b_uvw + b_uwv, norm(&buv) * norm(&w) + norm(&buw) * norm(&v));
        diag.push(dot(&buv, &v), norm(&buv) * norm(&v));

        let vq = model.q_norm(&v);
        let ratio = vq * vq / (norm(&v) * model.v_norm_sq(&v).sqrt());
        interp.sup = interp.sup.max(ratio);
        interp.push((ratio / model.a0() - 1.0).max(0.0), 1.0);

        let denom = model.q_norm(&u) * model.v_norm_sq(&v).sqrt() * model.q_norm(&w);
        if denom > 0.0 {
            b3.sup = b3.sup.max(b_uvw.abs() / denom);
        }
    }

    let interp_sup = interp.sup;
    let b3_sup = b3.sup;
    Ok(AssumptionReport {
        model: model.label().to_string(),
        dim: n,
        a0: model.a0(),
        checks: vec![
            bilin.finish("bilinearity", n_samples, Some(tol), None),
            skew.finish("skew_symmetry", n_samples, Some(tol), None),
            diag.finish("diagonal_null", n_samples, Some(tol), None),
            interp.finish("interpolation", n_samples, Some(tol), Some(interp_sup)),
            b3.finish("trilinear_bound", n_samples, None, Some(b3_sup)),
        ],
    })
}
