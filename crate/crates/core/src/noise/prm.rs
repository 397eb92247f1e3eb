use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::{MarkSpace, Tilt};
use crate::error::{Error, Result};

/// Largest admissible expected number of points before sampling refuses.
pub const DEFAULT_POINT_BUDGET: f64 = 5.0e7;

/// Realization of a point process on `(0, T] × Z`, sorted by time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointProcessSample {
    pub horizon: f64,
    pub points: Vec<(f64, usize)>,
}

impl PointProcessSample {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn count_in(&self, t0: f64, t1: f64, mark: usize) -> usize {
        self.points.iter().filter(|(t, z)| *z == mark && *t > t0 && *t <= t1).count()
    }
}

fn homogeneous<R: Rng + ?Sized>(
    space: &MarkSpace,
    mean: f64,
    horizon: f64,
    budget: f64,
    rng: &mut R,
) -> Result<Vec<(f64, usize)>> {
    if !(mean.is_finite()) || mean > budget {
        return Err(Error::Resource(format!("expected point count {mean:.3e} exceeds budget {budget:.3e}")));
    }
    let count = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| Error::Input(format!("poisson mean {mean}: {e}")))?.sample(rng) as usize
    } else {
        0
    };
    let marks = WeightedIndex::new(space.weights()).map_err(|e| Error::Input(format!("mark weights: {e}")))?;
    let mut points: Vec<(f64, usize)> = (0..count)
        .map(|_| {
            // uniform on (0, T]
            let t = horizon * (1.0 - rng.random::<f64>());
            (t, marks.sample(rng))
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(points)
}

fn check_eps_horizon(epsilon: f64, horizon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite() && horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Input(format!("need ε > 0 and T > 0, got ε={epsilon}, T={horizon}")));
    }
    Ok(())
}

/// Poisson random measure with intensity `ε⁻¹ ν ⊗ Leb` on `(0, T] × Z`.
pub fn sample_prm<R: Rng + ?Sized>(space: &MarkSpace, epsilon: f64, horizon: f64, rng: &mut R) -> Result<PointProcessSample> {
    sample_prm_with_budget(space, epsilon, horizon, DEFAULT_POINT_BUDGET, rng)
}

pub fn sample_prm_with_budget<R: Rng + ?Sized>(
    space: &MarkSpace,
    epsilon: f64,
    horizon: f64,
    budget: f64,
    rng: &mut R,
) -> Result<PointProcessSample> {
    check_eps_horizon(epsilon, horizon)?;
    let mean = 1.0 * space.total_mass() * horizon / epsilon;
    Ok(PointProcessSample { horizon, points: homogeneous(space, mean, horizon, budget, rng)? })
}

/// Point process with intensity `ε⁻¹ ψ(t,z) ν(dz) dt`, built by thinning a dominating
/// process of rate `ε⁻¹ n ν` (with `n` the tilt bound): each dominating point is kept with
/// probability `ψ(t,z)/n`. With `ψ ≡ 1, n = 1` the draws coincide with [`sample_prm`].
pub fn sample_controlled_prm<R: Rng + ?Sized>(
    space: &MarkSpace,
    epsilon: f64,
    psi: &Tilt,
    rng: &mut R,
) -> Result<PointProcessSample> {
    sample_controlled_prm_with_budget(space, epsilon, psi, DEFAULT_POINT_BUDGET, rng)
}

pub fn sample_controlled_prm_with_budget<R: Rng + ?Sized>(
    space: &MarkSpace,
    epsilon: f64,
    psi: &Tilt,
    budget: f64,
    rng: &mut R,
) -> Result<PointProcessSample> {
    let horizon = psi.horizon();
    check_eps_horizon(epsilon, horizon)?;
    if psi.field().n_marks() != space.len() {
        return Err(Error::Input("tilt and mark space disagree on the number of marks".into()));
    }
    let n = psi.bound();
    let mean = n * space.total_mass() * horizon / epsilon;
    let dominating = homogeneous(space, mean, horizon, budget, rng)?;
    let points = dominating
        .into_iter()
        .filter(|(t, z)| {
            let u: f64 = rng.random();
            u < psi.at(*t, *z) / n
        })
        .collect();
    Ok(PointProcessSample { horizon, points })
}

/// `log(dP/dP^ψ)` on a sample drawn under intensity `ε⁻¹ψν`:
/// `-Σ_points log ψ(t,z) + ε⁻¹ Σ_jk (ψ_jk - 1) ν_k Δt_j`.
pub fn girsanov_log_weight(sample: &PointProcessSample, psi: &Tilt, epsilon: f64, space: &MarkSpace) -> Result<f64> {
    if (sample.horizon - psi.horizon()).abs() > 1e-12 * psi.horizon() {
        return Err(Error::Input("sample and tilt horizons differ".into()));
    }
    let mut log_lik = 0.0;
    for (t, z) in &sample.points {
        let v = psi.at(*t, *z);
        if v <= 0.0 {
            return Err(Error::Degenerate(format!("tilt vanishes at observed point t={t}, mark {z}: infinite weight")));
        }
        log_lik += v.ln();
    }
    let compensator = psi.field().integrate(space, |v| v - 1.0)?;
    Ok(-log_lik + compensator / epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Control;
    use crate::rng::stream;

    fn grid(m: usize) -> Vec<f64> {
        (0..=m).map(|j| j as f64 / m as f64).collect()
    }

    #[test]
    fn points_sorted_in_horizon() {
        let space = MarkSpace::new(vec![1.0, 1.0]).unwrap();
        let mut rng = stream(1, 0, "t");
        let s = sample_prm(&space, 0.1, 1.0, &mut rng).unwrap();
        assert!(s.points.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(s.points.iter().all(|(t, z)| *t > 0.0 && *t <= 1.0 && *z < 2));
    }

    #[test]
    fn near_zero_intensity_gives_empty_sample() {
        let space = MarkSpace::new(vec![1.0]).unwrap();
        let mut rng = stream(2, 0, "t");
        assert_eq!(sample_prm(&space, 1e6, 1.0, &mut rng).unwrap().count(), 0);
    }

    #[test]
    fn budget_is_enforced() {
        let space = MarkSpace::new(vec![1.0]).unwrap();
        let mut rng = stream(2, 0, "t");
        assert!(matches!(sample_prm_with_budget(&space, 1e-6, 1.0, 1e3, &mut rng), Err(Error::Resource(_))));
    }

    #[test]
    fn unit_tilt_reproduces_plain_draws() {
        let space = MarkSpace::new(vec![0.5, 1.5]).unwrap();
        let psi = Tilt::unit(grid(10), 2).unwrap();
        for r in 0..20 {
            let a = sample_prm(&space, 0.05, 1.0, &mut stream(3, r, "u")).unwrap();
            let b = sample_controlled_prm(&space, 0.05, &psi, &mut stream(3, r, "u")).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unit_tilt_has_zero_log_weight() {
        let space = MarkSpace::new(vec![1.0]).unwrap();
        let psi = Tilt::unit(grid(7), 1).unwrap();
        let s = sample_controlled_prm(&space, 0.1, &psi, &mut stream(4, 0, "w")).unwrap();
        assert_eq!(girsanov_log_weight(&s, &psi, 0.1, &space).unwrap(), 0.0);
    }

    #[test]
    fn log_weight_closed_form() {
        let space = MarkSpace::new(vec![2.0]).unwrap();
        let psi = Tilt::new(Control::constant(grid(4), &[1.5]).unwrap(), 2.0).unwrap();
        let s = PointProcessSample { horizon: 1.0, points: vec![(0.1, 0), (0.7, 0)] };
        let w = girsanov_log_weight(&s, &psi, 0.5, &space).unwrap();
        let expected = -2.0 * 1.5f64.ln() + (0.5 * 2.0 * 1.0) / 0.5;
        assert!((w - expected).abs() < 1e-14);
    }
}
