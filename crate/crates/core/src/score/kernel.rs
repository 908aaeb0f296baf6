//! Score of a Gaussian kernel density estimate, d/dr log p̂(r).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub const MIN_SAMPLES: usize = 100;

/// Kernels farther than this many bandwidths are dropped.
const CUTOFF: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// 0.9·min(sd, IQR/1.34)·n^(-1/5).
    Silverman,
    /// Silverman's constant with the n^(-1/7) rate suited to density
    /// derivatives.
    #[default]
    SilvermanDerivative,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(&self, sorted: &[f64]) -> Result<f64> {
        let n = sorted.len() as f64;
        let spread = || {
            let mean = sorted.iter().sum::<f64>() / n;
            let sd = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let q = |p: f64| {
                let pos = p * (n - 1.0);
                let i = pos.floor() as usize;
                let t = pos - i as f64;
                sorted[i] + t * (sorted[(i + 1).min(sorted.len() - 1)] - sorted[i])
            };
            let iqr = q(0.75) - q(0.25);
            let s = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            0.9 * s
        };
        let h = match *self {
            Bandwidth::Silverman => spread() * n.powf(-0.2),
            Bandwidth::SilvermanDerivative => spread() * n.powf(-1.0 / 7.0),
            Bandwidth::Fixed(h) => h,
        };
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {h}")));
        }
        Ok(h)
    }
}

/// Evaluate the KDE score at each point of `at`.
pub fn kernel_score(samples: &[f64], at: &[f64], bandwidth: Bandwidth) -> Result<Vec<f64>> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "kernel score needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().chain(at).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample or evaluation point".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = bandwidth.resolve(&sorted)?;
    Ok(par::map_slice(at, |&x| score_at(&sorted, x, h)))
}

fn score_at(sorted: &[f64], x: f64, h: f64) -> f64 {
    let lo = sorted.partition_point(|v| *v < x - CUTOFF * h);
    let hi = sorted.partition_point(|v| *v <= x + CUTOFF * h);
    // log-sum-exp shift so far-away points do not underflow
    let window = if lo < hi { &sorted[lo..hi] } else { sorted };
    let shift = window
        .iter()
        .map(|v| -0.5 * ((x - v) / h).powi(2))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for v in window {
        let k = (-0.5 * ((x - v) / h).powi(2) - shift).exp();
        num += k * (v - x);
        den += k;
    }
    num / (den * h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{sample, NakagamiParams};

    #[test]
    fn rayleigh_score_at_one() {
        let xs = sample(&NakagamiParams::new(1.0, 1.0).unwrap(), 100_000, 12).unwrap();
        let s = kernel_score(&xs, &[1.0], Bandwidth::default()).unwrap()[0];
        assert!((s + 1.0).abs() < 0.1, "score {s}");
    }

    #[test]
    fn half_normal_interior() {
        // analytic score −r; the reflection at 0 only matters within a few h
        let xs = sample(&NakagamiParams::new(0.5, 1.0).unwrap(), 1_000_000, 13).unwrap();
        let pts: Vec<f64> = (0..=15).map(|i| 0.5 + 0.1 * i as f64).collect();
        let s = kernel_score(&xs, &pts, Bandwidth::default()).unwrap();
        for (r, v) in pts.iter().zip(&s) {
            assert!((v + r).abs() < 0.1, "r={r}: {v}");
        }
    }

    #[test]
    fn symmetric_set_is_stationary_at_its_mean() {
        let xs: Vec<f64> = (0..200).map(|i| 3.0 + ((i as f64) * 0.37).sin()).flat_map(|v| [v, 6.0 - v]).collect();
        let s = kernel_score(&xs, &[3.0], Bandwidth::Silverman).unwrap()[0];
        assert!(s.abs() < 1e-10);
    }

    #[test]
    fn far_points_and_errors() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let s = kernel_score(&xs, &[50.0], Bandwidth::Fixed(0.1)).unwrap()[0];
        // dominated by the closest sample: (0.99 − 50)/h²
        assert!((s - (0.99 - 50.0) / 0.01).abs() < 1e-6 * s.abs());
        assert!(kernel_score(&xs[..99], &[0.5], Bandwidth::Silverman).is_err());
        assert!(kernel_score(&xs, &[0.5], Bandwidth::Fixed(0.0)).is_err());
        assert!(kernel_score(&[1.0; 200], &[1.0], Bandwidth::Silverman).is_err());
    }
}
