//! Sabra shell model of turbulence.
//!
//! Shells `n = 1..N` carry complex velocities `u_n` (coordinates `2(n-1)`, `2(n-1)+1`)
//! with wavenumbers `k_n = k0·λⁿ`. The classical nonlinearity
//!
//! ```text
//! N_n(u) = i (a k_{n+1} u*_{n+1} u_{n+2} + b k_n u*_{n-1} u_{n+1} - c k_{n-1} u_{n-1} u_{n-2})
//! ```
//!
//! with `u_{-1} = u_0 = u_{N+1} = u_{N+2} = 0` conserves energy when `a + b + c = 0`.
//! `B(u, u) = -N(u)`, and the bilinear extension is, per triad `(n, n+1, n+2)` with
//! `k = k_{n+1}`:
//!
//! ```text
//! B_n     += i k (c u*_{n+1} v_{n+2} + b v*_{n+1} u_{n+2})
//! B_{n+1} -= i k b v*_n u_{n+2}
//! B_{n+2} += i k c v_n u_{n+1}
//! ```
//!
//! which is the `w`-gradient of `c[F(v,u,w) - F(w,u,v)] + b[F(v,w,u) - F(w,v,u)]` with
//! `F(x,y,z) = k Im(x*_n y*_{n+1} z_{n+2})`, hence antisymmetric in its last two slots.
//!
//! `|v|_Q = (Σ|u_n|⁴)^{1/4}`; since `|v|_Q² ≤ |v|² ≤ |v|‖v‖/√λ_min`, `a₀ = 1/√(visc·k_1²)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Clone, Debug, PartialEq)]
pub struct SabraConfig {
    pub n_shells: usize,
    pub k0: f64,
    pub lam: f64,
    pub visc: f64,
    pub coeff_a: f64,
    pub coeff_b: f64,
    pub coeff_c: f64,
}

impl Default for SabraConfig {
    fn default() -> Self {
        Self { n_shells: 16, k0: 1.0, lam: 2.0, visc: 1e-3, coeff_a: 1.0, coeff_b: -0.5, coeff_c: -0.5 }
    }
}

/// Boundary handling. `Broken` is a negative control: it couples the last two shells to
/// periodic images of the first ones through a single leg of the triad, which violates
/// skew symmetry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SabraBoundary {
    Zero,
    Broken,
}

#[derive(Clone, Debug)]
pub struct Sabra {
    config: SabraConfig,
    boundary: SabraBoundary,
    wavenumbers: Vec<f64>,
    eigenvalues: Vec<f64>,
    a0: f64,
    label: String,
}

pub fn build_sabra(config: SabraConfig) -> Result<Sabra> {
    build_sabra_with_boundary(config, SabraBoundary::Zero)
}

pub fn build_sabra_with_boundary(config: SabraConfig, boundary: SabraBoundary) -> Result<Sabra> {
    let SabraConfig { n_shells, k0, lam, visc, coeff_a, coeff_b, coeff_c } = config;
    if n_shells < 1 {
        return Err(Error::InvalidConfig("sabra: n_shells must be at least 1".into()));
    }
    if !(k0 > 0.0 && k0.is_finite()) || !(lam > 1.0 && lam.is_finite()) || !(visc > 0.0 && visc.is_finite()) {
        return Err(Error::InvalidConfig("sabra: need k0 > 0, lam > 1, visc > 0".into()));
    }
    let sum = coeff_a + coeff_b + coeff_c;
    if sum.abs() > 1e-12 * (coeff_a.abs() + coeff_b.abs() + coeff_c.abs()).max(1.0) {
        return Err(Error::InvalidConfig(format!("sabra: coeff_a + coeff_b + coeff_c must be 0 (got {sum})")));
    }
    let wavenumbers: Vec<f64> = (1..=n_shells as i32).map(|n| k0 * lam.powi(n)).collect();
    let eigenvalues: Vec<f64> = wavenumbers.iter().flat_map(|k| [visc * k * k, visc * k * k]).collect();
    let a0 = 1.0 / eigenvalues[0].sqrt();
    Ok(Sabra { label: format!("sabra(N={n_shells}, lam={lam})"), config, boundary, wavenumbers, eigenvalues, a0 })
}

impl Sabra {
    pub fn config(&self) -> &SabraConfig {
        &self.config
    }

    /// `k_n` for shells `n = 1..N`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// The classical nonlinearity `N(u)` written directly from its shell formula.
    pub fn classical_nonlinearity(&self, u: &[f64]) -> Vec<f64> {
        let n = self.config.n_shells;
        let (a, b, c) = (self.config.coeff_a, self.config.coeff_b, self.config.coeff_c);
        let shell = |j: isize| -> Complex64 {
            if j < 1 || j > n as isize {
                Complex64::new(0.0, 0.0)
            } else {
                let i = (j - 1) as usize;
                Complex64::new(u[2 * i], u[2 * i + 1])
            }
        };
        let k = |j: isize| -> f64 { self.config.k0 * self.config.lam.powi(j as i32) };
        let i = Complex64::new(0.0, 1.0);
        let mut out = vec![0.0; 2 * n];
        for j in 1..=n as isize {
            let z = i
                * (a * k(j + 1) * shell(j + 1).conj() * shell(j + 2) + b * k(j) * shell(j - 1).conj() * shell(j + 1)
                    - c * k(j - 1) * shell(j - 1) * shell(j - 2));
            let idx = (j - 1) as usize;
            out[2 * idx] = z.re;
            out[2 * idx + 1] = z.im;
        }
        out
    }
}

fn get(x: &[f64], n: usize) -> Complex64 {
    Complex64::new(x[2 * n], x[2 * n + 1])
}

fn add(out: &mut [f64], n: usize, z: Complex64) {
    out[2 * n] += z.re;
    out[2 * n + 1] += z.im;
}

impl Model for Sabra {
    fn label(&self) -> &str {
        &self.label
    }

    fn dim(&self) -> usize {
        2 * self.config.n_shells
    }

    fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn bilinear_into(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let n = self.config.n_shells;
        let (b, c) = (self.config.coeff_b, self.config.coeff_c);
        let i = Complex64::new(0.0, 1.0);
        // 0-based triad start s: shells s, s+1, s+2
        for s in 0..n.saturating_sub(2) {
            let k = self.wavenumbers[s + 1];
            let (u1, u2) = (get(u, s + 1), get(u, s + 2));
            let (v0, v1, v2) = (get(v, s), get(v, s + 1), get(v, s + 2));
            add(out, s, i * k * (c * u1.conj() * v2 + b * v1.conj() * u2));
            add(out, s + 1, -i * k * b * v0.conj() * u2);
            add(out, s + 2, i * k * c * v0 * u1);
        }
        if self.boundary == SabraBoundary::Broken && n >= 2 {
            for s in [n - 2, n - 1] {
                let k = self.wavenumbers[s] * self.config.lam;
                let (u1, v2) = (get(u, (s + 1) % n), get(v, (s + 2) % n));
                add(out, s, i * k * c * u1.conj() * v2);
            }
        }
    }

    fn q_norm(&self, v: &[f64]) -> f64 {
        let s: f64 = v.chunks_exact(2).map(|p| (p[0] * p[0] + p[1] * p[1]).powi(2)).sum();
        s.powf(0.25)
    }

    fn a0(&self) -> f64 {
        self.a0
    }
}
