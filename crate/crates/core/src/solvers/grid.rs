use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Increasing node times `0 = t_0 < … < t_M = T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    step: f64,
}

impl TimeGrid {
    /// Uniform grid with `M = ⌈T/h⌉` steps; the realized step is `T/M ≤ h`.
    pub fn uniform(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite() && step > 0.0 && step.is_finite()) {
            return Err(Error::Input(format!("time grid needs T > 0 and h > 0, got T={horizon}, h={step}")));
        }
        let m = ((horizon / step) - 1e-9).ceil().max(1.0) as usize;
        let nodes: Vec<f64> = (0..=m).map(|j| if j == m { horizon } else { horizon * j as f64 / m as f64 }).collect();
        Ok(Self { step: horizon / m as f64, nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::Input("time grid must start at 0 and have at least two nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || !nodes.iter().all(|t| t.is_finite()) {
            return Err(Error::Input("time grid nodes must increase strictly".into()));
        }
        let step = nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        Ok(Self { nodes, step })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Largest spacing.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_hits_horizon() {
        let g = TimeGrid::uniform(1.0, 1e-3).unwrap();
        assert_eq!(g.n_steps(), 1000);
        assert_eq!(g.horizon(), 1.0);
        let g = TimeGrid::uniform(1.0, 0.3).unwrap();
        assert_eq!(g.n_steps(), 4);
        assert!((g.step() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_unsorted_nodes() {
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 1.0]).is_err());
    }
}
