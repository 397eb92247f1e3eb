use serde::{Deserialize, Serialize};

use super::{DeviationScale, MarkSpace};
use crate::error::{Error, Result};

/// Piecewise-constant function on `time grid × marks`, an element of `L²(ν_T)`.
///
/// `values` is row-major `M × K`: row `j` holds the values on `[t_j, t_{j+1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    time_grid: Vec<f64>,
    n_marks: usize,
    values: Vec<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Input("control time grid needs at least two nodes".into()));
    }
    if grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) || !grid.iter().all(|t| t.is_finite()) {
        return Err(Error::Input("control time grid must start at 0 and increase strictly".into()));
    }
    Ok(())
}

impl Control {
    pub fn new(time_grid: Vec<f64>, n_marks: usize, values: Vec<f64>) -> Result<Self> {
        check_grid(&time_grid)?;
        if n_marks == 0 || values.len() != (time_grid.len() - 1) * n_marks {
            return Err(Error::Input(format!(
                "control values: expected {} x {n_marks} entries, got {}",
                time_grid.len() - 1,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Input("control values must be finite".into()));
        }
        Ok(Self { time_grid, n_marks, values })
    }

    pub fn zeros(time_grid: Vec<f64>, n_marks: usize) -> Result<Self> {
        let m = time_grid.len().saturating_sub(1);
        Self::new(time_grid, n_marks, vec![0.0; m * n_marks])
    }

    /// Constant in time, `per_mark[k]` on mark `k`.
    pub fn constant(time_grid: Vec<f64>, per_mark: &[f64]) -> Result<Self> {
        Self::from_fn(time_grid, per_mark.len(), |_, k| per_mark[k])
    }

    /// Samples `f(t_j, k)` at the left endpoint of every cell.
    pub fn from_fn(time_grid: Vec<f64>, n_marks: usize, f: impl Fn(f64, usize) -> f64) -> Result<Self> {
        check_grid(&time_grid)?;
        let mut values = Vec::with_capacity((time_grid.len() - 1) * n_marks);
        for t in &time_grid[..time_grid.len() - 1] {
            for k in 0..n_marks {
                values.push(f(*t, k));
            }
        }
        Self::new(time_grid, n_marks, values)
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn horizon(&self) -> f64 {
        *self.time_grid.last().unwrap()
    }

    pub fn n_cells(&self) -> usize {
        self.time_grid.len() - 1
    }

    pub fn n_marks(&self) -> usize {
        self.n_marks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: usize, mark: usize) -> f64 {
        self.values[cell * self.n_marks + mark]
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n_marks..(cell + 1) * self.n_marks]
    }

    pub fn cell_width(&self, cell: usize) -> f64 {
        self.time_grid[cell + 1] - self.time_grid[cell]
    }

    /// Cell `j` with `t_j ≤ t < t_{j+1}`; times at or beyond the horizon map to the last cell.
    pub fn cell_index(&self, t: f64) -> usize {
        let j = self.time_grid.partition_point(|s| *s <= t);
        j.saturating_sub(1).min(self.n_cells() - 1)
    }

    pub fn at(&self, t: f64, mark: usize) -> f64 {
        self.value(self.cell_index(t), mark)
    }

    fn check_marks(&self, space: &MarkSpace) -> Result<()> {
        if space.len() != self.n_marks {
            return Err(Error::Input(format!("control has {} marks, mark space has {}", self.n_marks, space.len())));
        }
        Ok(())
    }

    /// `∫∫ f(φ(t,z)) ν(dz) dt` with exact cell sums.
    pub fn integrate(&self, space: &MarkSpace, f: impl Fn(f64) -> f64) -> Result<f64> {
        self.check_marks(space)?;
        let mut total = 0.0;
        for j in 0..self.n_cells() {
            let dt = self.cell_width(j);
            let row: f64 = self.row(j).iter().zip(space.weights()).map(|(v, w)| f(*v) * w).sum();
            total += row * dt;
        }
        Ok(total)
    }

    /// `‖φ‖₂² = Σ φ_jk² ν_k Δt_j`
    pub fn norm2_sq(&self, space: &MarkSpace) -> Result<f64> {
        self.integrate(space, |v| v * v)
    }

    pub fn inner(&self, other: &Control, space: &MarkSpace) -> Result<f64> {
        self.check_same_layout(other)?;
        self.check_marks(space)?;
        let mut total = 0.0;
        for j in 0..self.n_cells() {
            let row: f64 = (0..self.n_marks).map(|k| self.value(j, k) * other.value(j, k) * space.weight(k)).sum();
            total += row * self.cell_width(j);
        }
        Ok(total)
    }

    fn check_same_layout(&self, other: &Control) -> Result<()> {
        if self.time_grid != other.time_grid || self.n_marks != other.n_marks {
            return Err(Error::Input("controls live on different grids".into()));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Control {
        Control { time_grid: self.time_grid.clone(), n_marks: self.n_marks, values: self.values.iter().map(|v| f(*v)).collect() }
    }

    pub fn scaled(&self, alpha: f64) -> Control {
        self.map(|v| alpha * v)
    }

    /// `α·self + β·other`
    pub fn combine(&self, alpha: f64, other: &Control, beta: f64) -> Result<Control> {
        self.check_same_layout(other)?;
        Ok(Control {
            time_grid: self.time_grid.clone(),
            n_marks: self.n_marks,
            values: self.values.iter().zip(&other.values).map(|(a, b)| alpha * a + beta * b).collect(),
        })
    }

    /// `φ · 1{|φ| ≤ β/a}`
    pub fn truncated(&self, beta: f64, a_of_eps: f64) -> Control {
        let cap = beta / a_of_eps;
        self.map(|v| if v.abs() <= cap { v } else { 0.0 })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Intensity multiplier `ψ ≥ 0` with bound `n`: every entry lies in `[1/n, n]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tilt {
    field: Control,
    bound: f64,
}

impl Tilt {
    pub fn new(field: Control, bound: f64) -> Result<Self> {
        if !(bound >= 1.0 && bound.is_finite()) {
            return Err(Error::Input(format!("tilt bound must be a finite number ≥ 1, got {bound}")));
        }
        let (lo, hi) = (1.0 / bound, bound);
        if let Some(v) = field.values().iter().find(|v| !(**v >= lo && **v <= hi)) {
            return Err(Error::Input(format!("tilt value {v} outside [{lo}, {hi}]")));
        }
        Ok(Self { field, bound })
    }

    pub fn unit(time_grid: Vec<f64>, n_marks: usize) -> Result<Self> {
        Self::new(Control::constant(time_grid, &vec![1.0; n_marks])?, 1.0)
    }

    /// `ψ = 1 + a(ε) φ`, rejected if it leaves `[1/n, n]`.
    pub fn from_control(phi: &Control, a_of_eps: f64, bound: f64) -> Result<Self> {
        Self::new(phi.map(|v| 1.0 + a_of_eps * v), bound)
    }

    pub fn field(&self) -> &Control {
        &self.field
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn horizon(&self) -> f64 {
        self.field.horizon()
    }

    pub fn at(&self, t: f64, mark: usize) -> f64 {
        self.field.at(t, mark)
    }

    /// `φ = (ψ - 1)/a(ε)`
    pub fn induced_control(&self, a_of_eps: f64) -> Control {
        self.field.map(|v| (v - 1.0) / a_of_eps)
    }
}

/// `ℓ(x) = x log x - x + 1`, `ℓ(0) = 1`.
pub fn entropy_kernel(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x * x.ln() - x + 1.0
    }
}

/// `Q(ψ) = Σ ℓ(ψ_jk) ν_k Δt_j` for a nonnegative field.
pub fn q_functional(psi: &Control, space: &MarkSpace) -> Result<f64> {
    if let Some(v) = psi.values().iter().find(|v| **v < 0.0) {
        return Err(Error::Input(format!("Q functional needs nonnegative entries, found {v}")));
    }
    psi.integrate(space, entropy_kernel)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    pub q: f64,
    /// `m a(ε)²`
    pub bound: f64,
    /// `‖(ψ - 1)/a(ε)‖₂`
    pub control_norm: f64,
}

/// Membership of `ψ` in the class `{Q(ψ) ≤ m a(ε)²}`.
pub fn check_admissible(psi: &Tilt, m: f64, scale: &DeviationScale, space: &MarkSpace) -> Result<Admissibility> {
    let q = q_functional(psi.field(), space)?;
    let bound = m * scale.a_of_eps * scale.a_of_eps;
    let control_norm = psi.induced_control(scale.a_of_eps).norm2_sq(space)?.sqrt();
    Ok(Admissibility { admissible: q <= bound, q, bound, control_norm })
}
