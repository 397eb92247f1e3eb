#![allow(dead_code)]

use mdplab::experiments::Problem;
use mdplab::linalg::norm;
use mdplab::models::{build_nse2d, LinearModel, Nse2dConfig};
use mdplab::noise::{AffineJump, MarkSpace};
use mdplab::Model;

/// `du = -u dt + ε dÑ`, one mark of unit mass, started at rest.
pub fn scalar() -> Problem {
    let m = LinearModel::new(vec![1.0]).unwrap();
    let g = AffineJump::additive(vec![vec![1.0]]).unwrap();
    Problem::new(Box::new(m), g, MarkSpace::new(vec![1.0]).unwrap(), vec![0.0]).unwrap()
}

/// Two decoupled modes with one mark each.
pub fn linear2() -> Problem {
    let m = LinearModel::new(vec![1.0, 2.0]).unwrap();
    let g = AffineJump::additive(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    Problem::new(Box::new(m), g, MarkSpace::new(vec![1.0, 1.0]).unwrap(), vec![1.0, 1.0]).unwrap()
}

/// Fixed deterministic direction of unit length.
pub fn unit_direction(n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) as f64).sin()).collect();
    let s = norm(&v);
    v.iter().map(|x| x / s).collect()
}

/// NSE on the torus with `0 < |k| <= k_max`; three marks kick the first three coordinates.
pub fn nse(k_max: u32) -> Problem {
    let m = build_nse2d(Nse2dConfig { k_max, visc: 1.0 }).unwrap();
    let n = m.dim();
    let shifts = (0..3)
        .map(|c| {
            let mut v = vec![0.0; n];
            v[c] = 1.0;
            v
        })
        .collect();
    let g = AffineJump::additive(shifts).unwrap();
    Problem::new(Box::new(m), g, MarkSpace::new(vec![1.0; 3]).unwrap(), unit_direction(n)).unwrap()
}

/// Composite Simpson rule with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
