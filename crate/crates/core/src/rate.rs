//! Quadratic rate functional: cost of a control, endpoint rates through the controllability
//! Gramian of the linearized flow, and the induced exponential tilt.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq};
use crate::model::{check_state, Model};
use crate::noise::{Control, DeviationScale, MarkSpace, Noise, Tilt};
use crate::solvers::{LinearizedFlow, TimeGrid, Trajectory};

/// Dimension up to which the Gramian is assembled densely as a cross-check.
pub const DENSE_CHECK_MAX_DIM: usize = 200;

/// Relative Rayleigh-quotient level below which a direction counts as unreachable.
pub const REACHABILITY_THRESHOLD: f64 = 1e-12;

/// `½ ‖φ‖₂² = ½ Σ_jk φ_jk² ν_k Δt_j`.
pub fn rate_of_control(phi: &Control, space: &MarkSpace) -> Result<f64> {
    Ok(0.5 * phi.norm2_sq(space)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateOptions {
    /// Relative residual `‖𝔾y − x‖/‖x‖` at which CG stops.
    pub cg_tol: f64,
    /// `None` means `20 n + 50`.
    pub max_iterations: Option<usize>,
    /// Assemble the dense Gramian when `n ≤ DENSE_CHECK_MAX_DIM`.
    pub dense_check: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self { cg_tol: 1e-10, max_iterations: None, dense_check: true }
    }
}

/// Cross-check data from the assembled Gramian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseCheck {
    pub rate: f64,
    /// `max |𝔾 − 𝔾ᵀ| / max |𝔾|`
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointRateResult {
    pub target: Vec<f64>,
    /// `+∞` when the target is not reachable.
    pub rate: f64,
    pub reachable: bool,
    pub phi_star: Control,
    /// Spectral condition of the Gramian: dense when assembled, otherwise a Lanczos estimate
    /// from the CG coefficients.
    pub gramian_condition: f64,
    pub cg_iterations: usize,
    /// Final relative CG residual.
    pub residual: f64,
    /// `⟨x, 𝔾x⟩ / ⟨x, x⟩`.
    pub rayleigh_quotient: f64,
    pub gramian_trace: f64,
    /// `|Y^{φ*}(T) − x| / |x|`, from an independent forward solve.
    pub hit_error: f64,
    pub dense: Option<DenseCheck>,
}

/// Endpoint rate solver bound to one linearized flow.
pub struct EndpointRate<'a> {
    flow: LinearizedFlow<'a>,
}

impl<'a> EndpointRate<'a> {
    pub fn new(model: &'a dyn Model, noise: Noise<'a>, u0_path: &Trajectory, grid: &TimeGrid) -> Result<Self> {
        Ok(Self { flow: LinearizedFlow::new(model, noise, u0_path, grid)? })
    }

    pub fn flow(&self) -> &LinearizedFlow<'a> {
        &self.flow
    }

    /// `𝔾 v = L L★ v`.
    pub fn gramian_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let chi = self.flow.adjoint_control(v)?;
        self.flow.forward_terminal(&chi)
    }

    /// Dense Gramian, one column per basis vector.
    pub fn gramian(&self) -> Result<DMatrix<f64>> {
        let n = self.flow.dim();
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                self.gramian_apply(&e)
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(n, n, |r, c| cols[c][r]))
    }

    /// Hutchinson estimate of `trace 𝔾` with Rademacher probes from a fixed stream.
    fn trace_estimate(&self, probes: usize) -> Result<f64> {
        let n = self.flow.dim();
        let vals: Vec<f64> = (0..probes)
            .into_par_iter()
            .map(|p| {
                let mut rng = crate::rng::stream(0, p as u64, "gramian-trace");
                let v: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
                Ok(dot(&v, &self.gramian_apply(&v)?))
            })
            .collect::<Result<_>>()?;
        Ok(crate::linalg::pairwise_sum(&vals) / probes as f64)
    }

    pub fn solve(&self, x: &[f64], opts: &RateOptions) -> Result<EndpointRateResult> {
        let n = self.flow.dim();
        if x.len() != n || !crate::linalg::all_finite(x) {
            return Err(Error::Input(format!("target must be a finite vector of length {n}")));
        }
        if !(opts.cg_tol > 0.0) {
            return Err(Error::Input("cg_tol must be positive".into()));
        }
        let zero_control = Control::zeros(self.flow.nodes().to_vec(), self.flow.n_marks())?;
        let dense_mat = if opts.dense_check && n <= DENSE_CHECK_MAX_DIM { Some(self.gramian()?) } else { None };
        let trace = match &dense_mat {
            Some(g) => g.trace(),
            None => self.trace_estimate(16)?,
        };
        let xx = norm_sq(x);
        if xx == 0.0 {
            return Ok(EndpointRateResult {
                target: x.to_vec(),
                rate: 0.0,
                reachable: true,
                phi_star: zero_control,
                gramian_condition: dense_mat.as_ref().map_or(f64::NAN, |g| condition(&eigen_range(g))),
                cg_iterations: 0,
                residual: 0.0,
                rayleigh_quotient: 0.0,
                gramian_trace: trace,
                hit_error: 0.0,
                dense: dense_mat.as_ref().map(|g| dense_check(g, x)),
            });
        }
        let threshold = REACHABILITY_THRESHOLD * trace / n as f64;
        let gx = self.gramian_apply(x)?;
        let rayleigh = dot(x, &gx) / xx;
        let unreachable = |iters: usize, residual: f64, condition: f64| EndpointRateResult {
            target: x.to_vec(),
            rate: f64::INFINITY,
            reachable: false,
            phi_star: zero_control.clone(),
            gramian_condition: condition,
            cg_iterations: iters,
            residual,
            rayleigh_quotient: rayleigh,
            gramian_trace: trace,
            hit_error: f64::NAN,
            dense: dense_mat.as_ref().map(|g| dense_check(g, x)),
        };
        let dense_condition = dense_mat.as_ref().map(|g| condition(&eigen_range(g)));
        if !(rayleigh >= threshold) {
            return Ok(unreachable(0, 1.0, dense_condition.unwrap_or(f64::INFINITY)));
        }

        let max_iter = opts.max_iterations.unwrap_or(20 * n + 50);
        let cg = conjugate_gradient(|v| self.gramian_apply(v), x, opts.cg_tol, max_iter, threshold)?;
        let lanczos_condition = cg.lanczos_condition();
        let condition = dense_condition.unwrap_or(lanczos_condition);
        if cg.null_direction {
            // a zero-curvature direction of the Krylov space is a multiple of the part of `x`
            // outside the range of 𝔾
            return Ok(unreachable(cg.iterations, cg.rel_residual, condition));
        }
        if !cg.converged {
            // A residual stuck in a direction the Gramian cannot reach means `x` is not reachable.
            let gr = self.gramian_apply(&cg.r)?;
            let rq = dot(&cg.r, &gr) / norm_sq(&cg.r);
            if rq < threshold {
                return Ok(unreachable(cg.iterations, cg.rel_residual, condition));
            }
            return Err(Error::Convergence { iterations: cg.iterations, residual: cg.rel_residual });
        }
        let phi_star = self.flow.adjoint_control(&cg.y)?;
        let rate = rate_of_control(&phi_star, self.flow.noise().space)?;
        let hit = self.flow.forward_terminal(&phi_star)?;
        let hit_error = norm(&crate::linalg::sub(&hit, x)) / xx.sqrt();
        Ok(EndpointRateResult {
            target: x.to_vec(),
            rate,
            reachable: true,
            phi_star,
            gramian_condition: condition,
            cg_iterations: cg.iterations,
            residual: cg.rel_residual,
            rayleigh_quotient: rayleigh,
            gramian_trace: trace,
            hit_error,
            dense: dense_mat.as_ref().map(|g| dense_check(g, x)),
        })
    }
}

fn eigen_range(g: &DMatrix<f64>) -> (f64, f64) {
    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    (eig.min(), eig.max())
}

fn condition((lo, hi): &(f64, f64)) -> f64 {
    if *lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn dense_check(g: &DMatrix<f64>, x: &[f64]) -> DenseCheck {
    let scale = g.amax();
    let asymmetry = if scale > 0.0 { (g - g.transpose()).amax() / scale } else { 0.0 };
    let (lo, hi) = eigen_range(g);
    let sym = (g + g.transpose()) * 0.5;
    let xv = DVector::from_column_slice(x);
    let rate = match sym.cholesky() {
        Some(ch) => 0.5 * xv.dot(&ch.solve(&xv)),
        None => f64::INFINITY,
    };
    DenseCheck { rate, asymmetry, min_eigenvalue: lo, max_eigenvalue: hi }
}

struct CgOutcome {
    y: Vec<f64>,
    r: Vec<f64>,
    iterations: usize,
    rel_residual: f64,
    converged: bool,
    null_direction: bool,
    alphas: Vec<f64>,
    betas: Vec<f64>,
}

impl CgOutcome {
    /// Extreme Ritz values of the Lanczos tridiagonal implied by the CG coefficients.
    fn lanczos_condition(&self) -> f64 {
        let k = self.alphas.len();
        if k == 0 {
            return f64::NAN;
        }
        let mut t = DMatrix::zeros(k, k);
        for j in 0..k {
            t[(j, j)] = 1.0 / self.alphas[j] + if j > 0 { self.betas[j - 1] / self.alphas[j - 1] } else { 0.0 };
            if j + 1 < k {
                let off = self.betas[j].sqrt() / self.alphas[j];
                t[(j, j + 1)] = off;
                t[(j + 1, j)] = off;
            }
        }
        let eig = SymmetricEigen::new(t).eigenvalues;
        condition(&(eig.min(), eig.max()))
    }
}

fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    null_level: f64,
) -> Result<CgOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    let mut y = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = norm_sq(&r);
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    let mut iterations = 0;
    let mut null_direction = false;
    while iterations < max_iter && rr.sqrt() > tol * bnorm {
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > null_level * norm_sq(&p)) {
            null_direction = true;
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut y);
        axpy(-alpha, &ap, &mut r);
        let rr_new = norm_sq(&r);
        let beta = rr_new / rr;
        alphas.push(alpha);
        betas.push(beta);
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        iterations += 1;
    }
    let rel_residual = rr.sqrt() / bnorm;
    Ok(CgOutcome { y, r, iterations, rel_residual, converged: rel_residual <= tol, null_direction, alphas, betas })
}

/// `I_T(x) = ½ ⟨x, 𝔾⁻¹ x⟩` for the skeleton endpoint `Y^φ(T) = x`, with `φ* = L★ 𝔾⁻¹ x`.
pub fn endpoint_rate(
    model: &dyn Model,
    noise: &Noise,
    u0_path: &Trajectory,
    x: &[f64],
    grid: &TimeGrid,
    cg_tol: f64,
) -> Result<EndpointRateResult> {
    check_state(model, "target", x)?;
    let opts = RateOptions { cg_tol, ..Default::default() };
    EndpointRate::new(model, *noise, u0_path, grid)?.solve(x, &opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltResult {
    pub tilt: Tilt,
    /// Fraction of entries of `1 + a φ*` that fell outside `[1/n, n]`.
    pub clipping_fraction: f64,
}

/// `ψ = 1 + a(ε) φ*`, clipped into `[1/n, n]`.
pub fn optimal_tilt(phi_star: &Control, scale: &DeviationScale, bound: f64) -> Result<TiltResult> {
    if !(bound >= 1.0 && bound.is_finite()) {
        return Err(Error::Input(format!("tilt bound must be a finite number ≥ 1, got {bound}")));
    }
    let (lo, hi) = (1.0 / bound, bound);
    let raw = phi_star.map(|v| 1.0 + scale.a_of_eps * v);
    let clipped = raw.values().iter().filter(|v| !(**v >= lo && **v <= hi)).count();
    let total = raw.values().len();
    let field = raw.map(|v| v.clamp(lo, hi));
    Ok(TiltResult {
        tilt: Tilt::new(field, bound)?,
        clipping_fraction: if total == 0 { 0.0 } else { clipped as f64 / total as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearModel;
    use crate::noise::AffineJump;
    use crate::solvers::evolve_deterministic;

    #[test]
    fn control_cost() {
        let grid: Vec<f64> = (0..=10).map(|j| j as f64 / 10.0).collect();
        let space = MarkSpace::new(vec![0.5, 1.5]).unwrap();
        let one = Control::constant(grid.clone(), &[1.0, 1.0]).unwrap();
        assert_eq!(rate_of_control(&Control::zeros(grid.clone(), 2).unwrap(), &space).unwrap(), 0.0);
        assert!((rate_of_control(&one, &space).unwrap() - 1.0).abs() < 1e-14);
        let phi = Control::from_fn(grid, 2, |t, z| t - z as f64).unwrap();
        let base = rate_of_control(&phi, &space).unwrap();
        assert_eq!(rate_of_control(&phi.scaled(2.0), &space).unwrap(), 4.0 * base);
        assert_eq!(rate_of_control(&phi.scaled(-0.5), &space).unwrap(), 0.25 * base);
        assert!((rate_of_control(&phi.scaled(3.0), &space).unwrap() - 9.0 * base).abs() <= 1e-14 * base);
    }

    fn scalar() -> (LinearModel, AffineJump, MarkSpace, TimeGrid) {
        (
            LinearModel::new(vec![1.0]).unwrap(),
            AffineJump::additive(vec![vec![1.0]]).unwrap(),
            MarkSpace::new(vec![1.0]).unwrap(),
            TimeGrid::uniform(1.0, 1e-3).unwrap(),
        )
    }

    #[test]
    fn scalar_endpoint_rate() {
        let (m, g, s, grid) = scalar();
        let noise = Noise::new(&g, &s).unwrap();
        let base = evolve_deterministic(&m, &[0.0], &grid).unwrap();
        // ∫₀¹ e^{-2(1-s)} ds by composite Simpson, independent of the solver
        let k = 2000;
        let h = 1.0 / k as f64;
        let f = |s: f64| (-2.0 * (1.0 - s)).exp();
        let simpson: f64 = (0..=k)
            .map(|i| {
                let w = if i == 0 || i == k {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        let res = endpoint_rate(&m, &noise, &base, &[1.0], &grid, 1e-10).unwrap();
        assert!(((res.rate - 0.5 / simpson) / res.rate).abs() <= 1e-6, "{}", res.rate);
        assert!((res.rate - 1.15652).abs() < 1e-5);
        let twice = endpoint_rate(&m, &noise, &base, &[2.0], &grid, 1e-10).unwrap();
        assert!((twice.rate - 4.0 * res.rate).abs() <= 1e-9 * twice.rate);
        let zero = endpoint_rate(&m, &noise, &base, &[0.0], &grid, 1e-10).unwrap();
        assert_eq!(zero.rate, 0.0);
        assert!(zero.phi_star.values().iter().all(|v| *v == 0.0));
        assert!(res.hit_error < 1e-9);
    }

    #[test]
    fn unreachable_direction_is_infinite() {
        let m = LinearModel::new(vec![1.0, 2.0]).unwrap();
        let g = AffineJump::additive(vec![vec![1.0, 0.0]]).unwrap();
        let s = MarkSpace::new(vec![1.0]).unwrap();
        let noise = Noise::new(&g, &s).unwrap();
        let grid = TimeGrid::uniform(1.0, 1e-2).unwrap();
        let base = evolve_deterministic(&m, &[0.0, 0.0], &grid).unwrap();
        let res = endpoint_rate(&m, &noise, &base, &[0.0, 1.0], &grid, 1e-10).unwrap();
        assert!(!res.reachable && res.rate.is_infinite());
        let mixed = endpoint_rate(&m, &noise, &base, &[1.0, 1.0], &grid, 1e-10).unwrap();
        assert!(mixed.rate.is_infinite());
    }

    #[test]
    fn tilt_clipping() {
        let grid: Vec<f64> = vec![0.0, 0.5, 1.0];
        let s01 = DeviationScale::new(0.01, 0.1, "x").unwrap();
        let t = optimal_tilt(&Control::constant(grid.clone(), &[2.0]).unwrap(), &s01, 10.0).unwrap();
        assert!(t.tilt.field().values().iter().all(|v| (*v - 1.2).abs() < 1e-15));
        assert_eq!(t.clipping_fraction, 0.0);
        let s1 = DeviationScale::new(0.01, 1.0, "x").unwrap();
        let t = optimal_tilt(&Control::constant(grid.clone(), &[-5.0]).unwrap(), &s1, 10.0).unwrap();
        assert!(t.tilt.field().values().iter().all(|v| *v == 0.1));
        assert_eq!(t.clipping_fraction, 1.0);
        let t = optimal_tilt(&Control::zeros(grid, 1).unwrap(), &s1, 10.0).unwrap();
        assert!(t.tilt.field().values().iter().all(|v| *v == 1.0));
    }
}
