//! Monte Carlo summaries and log-log regression.

use serde::{Deserialize, Serialize};

use crate::linalg::pairwise_sum;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean with its normal-approximation 95% confidence interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, variance: f64::NAN, std_err: f64::NAN, ci_low: f64::NAN, ci_high: f64::NAN };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let variance = if n > 1 { pairwise_sum(&sq) / (n - 1) as f64 } else { 0.0 };
        let std_err = (variance / n as f64).sqrt();
        Self { n, mean, variance, std_err, ci_low: mean - Z95 * std_err, ci_high: mean + Z95 * std_err }
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_err: f64,
    pub points: usize,
}

/// Ordinary least squares of `log y` against `log x`.
pub fn fit_log_log(name: &str, xs: &[f64], ys: &[f64]) -> SlopeFit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len();
    let mx = pairwise_sum(&lx) / n as f64;
    let my = pairwise_sum(&ly) / n as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_std_err = if n > 2 {
        let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ssr / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    SlopeFit { name: name.to_string(), slope, intercept, slope_std_err, points: n }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_has_exact_slope() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        let fit = fit_log_log("p", &xs, &ys);
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!(fit.slope_std_err < 1e-10);
    }

    #[test]
    fn estimate_of_constant_has_zero_width() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.variance, 0.0);
        assert!(e.overlaps(&e));
    }
}
