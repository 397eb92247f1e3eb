//! Spectral Galerkin truncation of the 2D Navier–Stokes equations on the torus `[0, 2π]²`.
//!
//! Retained wavevectors are `k ∈ ℤ²` with `0 < |k|² ≤ K²`. Each unordered pair `{k, -k}`
//! is represented by the vector with `k_x > 0`, or `k_x = 0, k_y > 0`, and carries one
//! complex amplitude `a_k` along the fixed divergence-free direction `e_k = k⊥/|k|`
//! (`k⊥ = (-k_y, k_x)`), shared by `k` and `-k`. Reality is structural: `a_{-k} = conj(a_k)`.
//! Real coordinates are `(√2 Re a_k, √2 Im a_k)`, which makes the coordinate Euclidean norm
//! equal to the normalized `L²` norm of the velocity field.
//!
//! `B(u, v)` is the Leray and Galerkin projection of `(u·∇)v`, evaluated by direct
//! convolution over retained modes. No aliasing occurs, so `⟨B(u,v),w⟩ = -⟨B(u,w),v⟩`
//! holds to rounding.
//!
//! `|v|_Q` is the `L⁴` norm (normalized measure) of the reconstructed velocity on a
//! `(4K+1)²` collocation grid; `|v|⁴` is a trigonometric polynomial of degree `4K`, so the
//! grid mean is the exact integral. `a₀ = (Σ_k 1/λ_k)^{1/2}` over all retained `k`, from
//! `|v|_Q² ≤ sup|v| · |v|` and `sup|v| ≤ Σ|a_k| ≤ ‖v‖ (Σ 1/λ_k)^{1/2}`.

use num_complex::Complex64;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::model::Model;

/// Default cap on the number of convolution triads.
pub const DEFAULT_TRIAD_BUDGET: usize = 5_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Nse2dConfig {
    /// Fourier cutoff `K`.
    pub k_max: u32,
    pub visc: f64,
}

#[derive(Clone, Copy, Debug)]
struct Triad {
    /// indices into the full (±) mode list
    p: u32,
    q: u32,
    /// representative index of `p + q`
    m: u32,
    coef: f64,
}

#[derive(Clone, Debug)]
pub struct Nse2d {
    config: Nse2dConfig,
    label: String,
    reps: Vec<[i32; 2]>,
    dirs: Vec<[f64; 2]>,
    eigenvalues: Vec<f64>,
    triads: Vec<Triad>,
    grid: usize,
    /// `cos(k_r·x_j)` and `sin(k_r·x_j)`, row per representative
    cos_tab: Vec<f64>,
    sin_tab: Vec<f64>,
    a0: f64,
}

pub fn build_nse2d(config: Nse2dConfig) -> Result<Nse2d> {
    build_nse2d_with_budget(config, DEFAULT_TRIAD_BUDGET)
}

pub fn build_nse2d_with_budget(config: Nse2dConfig, max_triads: usize) -> Result<Nse2d> {
    if config.k_max < 1 {
        return Err(Error::InvalidConfig("nse2d: k_max must be at least 1".into()));
    }
    if !(config.visc.is_finite() && config.visc > 0.0) {
        return Err(Error::InvalidConfig("nse2d: visc must be positive".into()));
    }
    let k = config.k_max as i32;
    let k2 = k * k;

    let mut reps: Vec<[i32; 2]> = Vec::new();
    for kx in 0..=k {
        for ky in -k..=k {
            let n2 = kx * kx + ky * ky;
            if n2 == 0 || n2 > k2 || (kx == 0 && ky < 0) {
                continue;
            }
            reps.push([kx, ky]);
        }
    }
    reps.sort_by_key(|r| (r[0] * r[0] + r[1] * r[1], r[0], r[1]));
    let r = reps.len();

    // Upper bound on triads before allocating the table.
    let bound = r * 2 * r;
    if bound > max_triads {
        return Err(Error::Resource(format!(
            "nse2d: K={} needs up to {bound} convolution triads, budget is {max_triads}",
            config.k_max
        )));
    }

    let dirs: Vec<[f64; 2]> = reps
        .iter()
        .map(|[kx, ky]| {
            let n = ((kx * kx + ky * ky) as f64).sqrt();
            [-(*ky as f64) / n, *kx as f64 / n]
        })
        .collect();
    let full = |i: usize| -> [i32; 2] {
        if i < r {
            reps[i]
        } else {
            let [a, b] = reps[i - r];
            [-a, -b]
        }
    };
    let lookup_rep = |v: [i32; 2]| -> Option<usize> { reps.iter().position(|x| *x == v) };

    let mut triads = Vec::new();
    for (mi, mv) in reps.iter().enumerate() {
        let em = dirs[mi];
        for pi in 0..2 * r {
            let pv = full(pi);
            let qv = [mv[0] - pv[0], mv[1] - pv[1]];
            let q2 = qv[0] * qv[0] + qv[1] * qv[1];
            if q2 == 0 || q2 > k2 {
                continue;
            }
            let (qi, neg) = match lookup_rep(qv) {
                Some(i) => (i, false),
                None => (lookup_rep([-qv[0], -qv[1]]).expect("retained set is symmetric"), true),
            };
            let ep = dirs[pi % r];
            let eq = dirs[qi];
            let coef = (ep[0] * qv[0] as f64 + ep[1] * qv[1] as f64) * (eq[0] * em[0] + eq[1] * em[1]);
            if coef == 0.0 {
                continue;
            }
            triads.push(Triad { p: pi as u32, q: (if neg { qi + r } else { qi }) as u32, m: mi as u32, coef });
        }
    }

    let mut eigenvalues = Vec::with_capacity(2 * r);
    for [kx, ky] in &reps {
        let l = config.visc * (kx * kx + ky * ky) as f64;
        eigenvalues.push(l);
        eigenvalues.push(l);
    }
    let a0 = (eigenvalues.iter().map(|l| 1.0 / l).sum::<f64>()).sqrt();

    let grid = 4 * config.k_max as usize + 1;
    let mut cos_tab = Vec::with_capacity(r * grid * grid);
    let mut sin_tab = Vec::with_capacity(r * grid * grid);
    for [kx, ky] in &reps {
        for ix in 0..grid {
            for iy in 0..grid {
                let theta = 2.0 * PI * ((*kx as f64) * ix as f64 + (*ky as f64) * iy as f64) / grid as f64;
                cos_tab.push(theta.cos());
                sin_tab.push(theta.sin());
            }
        }
    }

    Ok(Nse2d {
        label: format!("nse2d(K={}, visc={})", config.k_max, config.visc),
        config,
        reps,
        dirs,
        eigenvalues,
        triads,
        grid,
        cos_tab,
        sin_tab,
        a0,
    })
}

impl Nse2d {
    pub fn config(&self) -> &Nse2dConfig {
        &self.config
    }

    /// Representative wavevectors, in coordinate-pair order.
    pub fn wavevectors(&self) -> &[[i32; 2]] {
        &self.reps
    }

    pub fn triad_count(&self) -> usize {
        self.triads.len()
    }

    /// Coordinate index of the real part of representative `k`, if retained.
    pub fn coord_of(&self, k: [i32; 2]) -> Option<usize> {
        self.reps.iter().position(|r| *r == k).map(|i| 2 * i)
    }

    fn amplitudes(&self, coords: &[f64]) -> Vec<Complex64> {
        let r = self.reps.len();
        let mut a = vec![Complex64::new(0.0, 0.0); 2 * r];
        for i in 0..r {
            let z = Complex64::new(coords[2 * i], coords[2 * i + 1]) / SQRT_2;
            a[i] = z;
            a[i + r] = z.conj();
        }
        a
    }

    /// Complex velocity Fourier coefficients `û_k ∈ ℂ²` for every retained `k` (both signs).
    pub fn velocity_coefficients(&self, coords: &[f64]) -> Vec<([i32; 2], [Complex64; 2])> {
        let r = self.reps.len();
        let a = self.amplitudes(coords);
        (0..2 * r)
            .map(|i| {
                let rep = i % r;
                let k = if i < r { self.reps[rep] } else { [-self.reps[rep][0], -self.reps[rep][1]] };
                let e = self.dirs[rep];
                (k, [a[i] * e[0], a[i] * e[1]])
            })
            .collect()
    }

    /// Velocity field on the collocation grid, row-major `[ix][iy] -> (u_x, u_y)`.
    pub fn velocity_on_grid(&self, coords: &[f64]) -> Vec<[f64; 2]> {
        let g2 = self.grid * self.grid;
        let mut field = vec![[0.0; 2]; g2];
        for (ri, e) in self.dirs.iter().enumerate() {
            let (x, y) = (coords[2 * ri], coords[2 * ri + 1]);
            if x == 0.0 && y == 0.0 {
                continue;
            }
            let cs = &self.cos_tab[ri * g2..(ri + 1) * g2];
            let sn = &self.sin_tab[ri * g2..(ri + 1) * g2];
            for j in 0..g2 {
                // 2 Re(a e^{iθ}) with a = (x + i y)/√2
                let s = SQRT_2 * (x * cs[j] - y * sn[j]);
                field[j][0] += s * e[0];
                field[j][1] += s * e[1];
            }
        }
        field
    }
}

impl Model for Nse2d {
    fn label(&self) -> &str {
        &self.label
    }

    fn dim(&self) -> usize {
        2 * self.reps.len()
    }

    fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn bilinear_into(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        let a = self.amplitudes(u);
        let c = self.amplitudes(v);
        let mut b = vec![Complex64::new(0.0, 0.0); self.reps.len()];
        for t in &self.triads {
            // i (e_p·q)(e_q·e_m) a_p c_q
            b[t.m as usize] += a[t.p as usize] * c[t.q as usize] * t.coef;
        }
        for (i, z) in b.iter().enumerate() {
            let iz = Complex64::new(-z.im, z.re);
            out[2 * i] = SQRT_2 * iz.re;
            out[2 * i + 1] = SQRT_2 * iz.im;
        }
    }

    fn q_norm(&self, v: &[f64]) -> f64 {
        let field = self.velocity_on_grid(v);
        let s: f64 = field.iter().map(|[x, y]| (x * x + y * y).powi(2)).sum();
        (s / field.len() as f64).powf(0.25)
    }

    fn a0(&self) -> f64 {
        self.a0
    }
}
