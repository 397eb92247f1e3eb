use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{norm_sq, weighted_norm_sq};

/// One jump: the post-jump row index, the mark and the increment added to the left limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub row: usize,
    pub mark: usize,
    pub increment: Vec<f64>,
}

/// A càdlàg path on a node grid. Jump nodes are stored twice: the left limit
/// (`post_jump = false`) followed by the post-jump value (`post_jump = true`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    post_jump: Vec<bool>,
    states: Vec<f64>,
    jumps: Vec<JumpRecord>,
    pub label: String,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    /// Discrete energy defect, recorded by the deterministic solver.
    pub energy_defect: Option<f64>,
}

impl Trajectory {
    pub fn new(dim: usize, label: impl Into<String>) -> Self {
        Self {
            dim,
            times: Vec::new(),
            post_jump: Vec::new(),
            states: Vec::new(),
            jumps: Vec::new(),
            label: label.into(),
            epsilon: None,
            seed: None,
            energy_defect: None,
        }
    }

    pub(crate) fn with_capacity(dim: usize, label: impl Into<String>, rows: usize) -> Self {
        let mut t = Self::new(dim, label);
        t.times.reserve(rows);
        t.post_jump.reserve(rows);
        t.states.reserve(rows * dim);
        t
    }

    pub(crate) fn push(&mut self, t: f64, post_jump: bool, state: &[f64]) {
        debug_assert_eq!(state.len(), self.dim);
        self.times.push(t);
        self.post_jump.push(post_jump);
        self.states.extend_from_slice(state);
    }

    pub(crate) fn push_jump(&mut self, t: f64, mark: usize, left: &[f64], increment: Vec<f64>) {
        let right: Vec<f64> = left.iter().zip(&increment).map(|(a, b)| a + b).collect();
        self.push(t, true, &right);
        self.jumps.push(JumpRecord { row: self.times.len() - 1, mark, increment });
    }

    /// Builds a path from rows without jumps.
    pub fn from_rows(dim: usize, label: impl Into<String>, times: Vec<f64>, states: Vec<f64>) -> Result<Self> {
        if states.len() != times.len() * dim {
            return Err(dim_mismatch("trajectory states", times.len() * dim, states.len()));
        }
        let mut t = Self::new(dim, label);
        t.post_jump = vec![false; times.len()];
        t.times = times;
        t.states = states;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, row: usize) -> f64 {
        self.times[row]
    }

    pub fn is_post_jump(&self, row: usize) -> bool {
        self.post_jump[row]
    }

    pub fn state(&self, row: usize) -> &[f64] {
        &self.states[row * self.dim..(row + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim.max(1))
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    /// State in effect at `t`: the last row with time `≤ t` (post-jump value at a jump time).
    pub fn state_at(&self, t: f64) -> &[f64] {
        let idx = self.times.partition_point(|&s| s <= t).max(1) - 1;
        self.state(idx)
    }

    /// `max_j |u_j|²` over all rows.
    pub fn sup_h_sq(&self) -> f64 {
        self.states().map(norm_sq).fold(0.0, f64::max)
    }

    /// `Σ_j ‖u(t_j)‖² Δt_j` over consecutive rows (zero-length intervals at jump nodes drop out).
    pub fn l2v_sq(&self, eigenvalues: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.len().saturating_sub(1))
            .map(|j| {
                let dt = self.times[j + 1] - self.times[j];
                if dt > 0.0 {
                    weighted_norm_sq(eigenvalues, self.state(j)) * dt
                } else {
                    0.0
                }
            })
            .collect();
        crate::linalg::pairwise_sum(&terms)
    }

    /// Path metric `max(sup-H, L²-V)` between two paths, via [`Trajectory::difference`].
    pub fn path_distance(&self, other: &Trajectory, eigenvalues: &[f64]) -> Result<f64> {
        let d = self.difference(other)?;
        Ok(d.sup_h_sq().sqrt().max(d.l2v_sq(eigenvalues).sqrt()))
    }

    /// `self − reference`, on the rows of `self`.
    ///
    /// Every time of `self` must also be a node of `reference`. Post-jump rows are paired with a
    /// post-jump row of the reference at the same time when there is one.
    pub fn difference(&self, reference: &Trajectory) -> Result<Trajectory> {
        if self.dim != reference.dim {
            return Err(dim_mismatch("trajectory", self.dim, reference.dim));
        }
        let mut out = Trajectory::with_capacity(self.dim, format!("{} - {}", self.label, reference.label), self.len());
        out.epsilon = self.epsilon;
        out.seed = self.seed;
        let mut j = 0;
        let mut buf = vec![0.0; self.dim];
        for i in 0..self.len() {
            let t = self.times[i];
            while j < reference.len() && reference.times[j] < t {
                j += 1;
            }
            if j >= reference.len() || reference.times[j] != t {
                return Err(Error::Input(format!("time {t} is not a node of the reference path")));
            }
            let mut r = j;
            if self.post_jump[i] && r + 1 < reference.len() && reference.times[r + 1] == t && reference.post_jump[r + 1] {
                r += 1;
            }
            for (b, (x, y)) in buf.iter_mut().zip(self.state(i).iter().zip(reference.state(r))) {
                *b = x - y;
            }
            out.push(t, self.post_jump[i], &buf);
        }
        Ok(out)
    }

    /// Rows whose time is an element of `times` (first match per time, left limits at jumps).
    pub fn restrict_to(&self, times: &[f64]) -> Result<Trajectory> {
        let mut out = Trajectory::with_capacity(self.dim, self.label.clone(), times.len());
        out.epsilon = self.epsilon;
        out.seed = self.seed;
        let mut j = 0;
        for &t in times {
            while j < self.len() && self.times[j] < t {
                j += 1;
            }
            if j >= self.len() || self.times[j] != t {
                return Err(Error::Input(format!("time {t} is not a node of the path")));
            }
            out.push(t, false, self.state(j));
        }
        Ok(out)
    }

    /// CSV with header `t,jump_flag,x_0,..`; an optional `# run_id=..` comment line comes first.
    pub fn write_csv<W: Write>(&self, mut w: W, run_id: Option<&str>) -> Result<()> {
        if let Some(id) = run_id {
            writeln!(w, "# run_id={id}")?;
        }
        let mut header = String::from("t,jump_flag");
        for i in 0..self.dim {
            header.push_str(&format!(",x_{i}"));
        }
        writeln!(w, "{header}")?;
        for row in 0..self.len() {
            let mut line = format!("{},{}", self.times[row], u8::from(self.post_jump[row]));
            for x in self.state(row) {
                line.push(',');
                line.push_str(&x.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the format written by [`Trajectory::write_csv`]. Jump records are rebuilt from
    /// consecutive rows; marks are not stored in CSV and come back as `usize::MAX`.
    pub fn read_csv(text: &str, label: impl Into<String>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Input("empty trajectory CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "t" || cols[1] != "jump_flag" {
            return Err(Error::Input(format!("bad trajectory header `{header}`")));
        }
        let dim = cols.len() - 2;
        let mut out = Trajectory::new(dim, label);
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 2 {
                return Err(Error::Input(format!("row {} has {} fields, expected {}", n + 1, fields.len(), dim + 2)));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Input(format!("row {}: {e}", n + 1)));
            let t = parse(fields[0])?;
            let flag = fields[1].trim() == "1";
            let state = fields[2..].iter().map(|s| parse(s)).collect::<Result<Vec<f64>>>()?;
            if flag && !out.is_empty() {
                let prev = out.state(out.len() - 1).to_vec();
                let inc = state.iter().zip(&prev).map(|(a, b)| a - b).collect();
                out.push(t, true, &state);
                out.jumps.push(JumpRecord { row: out.len() - 1, mark: usize::MAX, increment: inc });
            } else {
                out.push(t, flag, &state);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new(2, "x");
        t.push(0.0, false, &[1.0, 0.0]);
        t.push(0.5, false, &[0.5, 0.0]);
        t.push_jump(0.5, 0, &[0.5, 0.0], vec![0.25, -1.0]);
        t.push(1.0, false, &[0.0, 2.0]);
        t
    }

    #[test]
    fn jump_bookkeeping_is_exact() {
        let t = sample();
        let j = &t.jumps()[0];
        assert_eq!(j.row, 2);
        let left = t.state(j.row - 1);
        let right = t.state(j.row);
        for i in 0..2 {
            assert_eq!(left[i] + j.increment[i], right[i]);
        }
    }

    #[test]
    fn norms_use_left_endpoints() {
        let t = sample();
        assert_eq!(t.sup_h_sq(), 4.0);
        // rows 0 and 2 carry the two half-intervals
        let l2 = t.l2v_sq(&[1.0, 1.0]);
        assert!((l2 - (0.5 * 1.0 + 0.5 * (0.75f64.powi(2) + 1.0))).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, Some("abc")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# run_id=abc\nt,jump_flag,x_0,x_1\n"));
        let back = Trajectory::read_csv(&text, "x").unwrap();
        assert_eq!(back.times(), t.times());
        for r in 0..t.len() {
            assert_eq!(back.state(r), t.state(r));
            assert_eq!(back.is_post_jump(r), t.is_post_jump(r));
        }
        assert_eq!(back.jumps()[0].increment, t.jumps()[0].increment);
    }

    #[test]
    fn difference_pairs_jump_rows() {
        let t = sample();
        let d = t.difference(&t).unwrap();
        assert_eq!(d.sup_h_sq(), 0.0);
        let base = Trajectory::from_rows(2, "b", vec![0.0, 0.5, 1.0], vec![0.0; 6]).unwrap();
        let d = t.difference(&base).unwrap();
        assert_eq!(d.state(2), t.state(2));
        assert!(base.difference(&Trajectory::from_rows(2, "c", vec![0.0, 1.0], vec![0.0; 4]).unwrap()).is_err());
    }
}
