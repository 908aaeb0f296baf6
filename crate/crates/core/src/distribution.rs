//! The Nakagami envelope distribution: density, log-density, amplitude score
//! and seeded sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::special::ln_gamma_unchecked;

/// Deterministic RNG used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape `m` and scale `omega` (Ω = E[R²]) of a Nakagami distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NakagamiParams {
    m: f64,
    omega: f64,
}

impl NakagamiParams {
    pub fn new(m: f64, omega: f64) -> Result<Self> {
        ensure_finite("m", m)?;
        ensure_finite("omega", omega)?;
        if m <= 0.0 {
            return Err(Error::InvalidArgument(format!("m must be > 0, got {m}")));
        }
        if omega <= 0.0 {
            return Err(Error::InvalidArgument(format!("omega must be > 0, got {omega}")));
        }
        Ok(Self { m, omega })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// E[R] = Γ(m + ½) / Γ(m) · √(Ω/m).
    pub fn mean(&self) -> f64 {
        (ln_gamma_unchecked(self.m + 0.5) - ln_gamma_unchecked(self.m)).exp()
            * (self.omega / self.m).sqrt()
    }

    fn log_norm(&self) -> f64 {
        std::f64::consts::LN_2 - ln_gamma_unchecked(self.m) + self.m * (self.m / self.omega).ln()
    }
}

/// Probability density at amplitude `r`; zero for `r < 0`.
pub fn pdf(r: f64, p: &NakagamiParams) -> Result<f64> {
    ensure_finite("r", r)?;
    if r < 0.0 {
        return Ok(0.0);
    }
    if r == 0.0 {
        // r^(2m-1) at the origin
        return Ok(match p.m {
            m if m > 0.5 => 0.0,
            m if m == 0.5 => p.log_norm().exp(),
            _ => f64::INFINITY,
        });
    }
    Ok(log_pdf_unchecked(r, p).exp())
}

#[inline]
pub(crate) fn log_pdf_unchecked(r: f64, p: &NakagamiParams) -> f64 {
    p.log_norm() + (2.0 * p.m - 1.0) * r.ln() - p.m / p.omega * r * r
}

fn check_amplitude(r: f64) -> Result<()> {
    ensure_finite("r", r)?;
    if r <= 0.0 {
        return Err(Error::Domain(format!("amplitude must be > 0, got {r}")));
    }
    Ok(())
}

/// Natural log of the density; requires `r > 0`.
pub fn log_pdf(r: f64, p: &NakagamiParams) -> Result<f64> {
    check_amplitude(r)?;
    Ok(log_pdf_unchecked(r, p))
}

/// Sum of [`log_pdf`] over independent samples.
pub fn log_likelihood(samples: &[f64], p: &NakagamiParams) -> Result<f64> {
    samples.iter().map(|&r| log_pdf(r, p)).sum()
}

#[inline]
pub(crate) fn analytic_score_unchecked(r: f64, m: f64, omega: f64) -> f64 {
    (2.0 * m - 1.0) / r - 2.0 * m * r / omega
}

/// d/dr log p(r) = (2m − 1)/r − 2mr/Ω; requires `r > 0`.
pub fn analytic_score(r: f64, p: &NakagamiParams) -> Result<f64> {
    check_amplitude(r)?;
    Ok(analytic_score_unchecked(r, p.m, p.omega))
}

/// One draw: R = √Y with Y ~ Gamma(shape m, scale Ω/m), so E[R²] = Ω.
pub fn sample_one<R: Rng + ?Sized>(p: &NakagamiParams, rng: &mut R) -> f64 {
    let gamma = Gamma::new(p.m, p.omega / p.m).expect("validated parameters");
    gamma.sample(rng).sqrt()
}

/// `n` independent draws, reproducible from `seed`.
pub fn sample(p: &NakagamiParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    Ok(sample_with(p, n, &mut rng))
}

pub fn sample_with<R: Rng + ?Sized>(p: &NakagamiParams, n: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(p.m, p.omega / p.m).expect("validated parameters");
    (0..n).map(|_| gamma.sample(rng).sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: f64, omega: f64) -> NakagamiParams {
        NakagamiParams::new(m, omega).unwrap()
    }

    /// Adaptive Simpson quadrature; test-side oracle.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
        fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        step(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn rayleigh_case_values() {
        let p = params(1.0, 1.0);
        let e = std::f64::consts::E;
        assert!((pdf(1.0, &p).unwrap() - 2.0 / e).abs() < 1e-15);
        assert!((log_pdf(1.0, &p).unwrap() - (2f64.ln() - 1.0)).abs() < 1e-15);
        assert_eq!(analytic_score(1.0, &p).unwrap(), -1.0);
        assert_eq!(pdf(-0.1, &p).unwrap(), 0.0);
        // m = 1 reduces to Rayleigh: pdf = 2r/Ω exp(-r²/Ω)
        for &r in &[0.1, 0.7, 1.9, 3.2] {
            let omega = 2.5;
            let q = params(1.0, omega);
            let rayleigh = 2.0 * r / omega * (-r * r / omega).exp();
            assert!((pdf(r, &q).unwrap() - rayleigh).abs() < 1e-14);
            assert!((analytic_score(r, &q).unwrap() - (1.0 / r - 2.0 * r / omega)).abs() < 1e-14);
        }
    }

    #[test]
    fn m2_density_matches_high_precision_value() {
        // 40-digit evaluation of the density at r = 0.5, m = 2, Ω = 1
        let want = 0.606_530_659_712_633_4;
        assert!((pdf(0.5, &params(2.0, 1.0)).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn log_likelihood_of_two_rayleigh_samples() {
        let got = log_likelihood(&[1.0, 2.0], &params(1.0, 1.0)).unwrap();
        assert!((got - (3.0 * 2f64.ln() - 5.0)).abs() < 1e-14);
    }

    #[test]
    fn exp_log_pdf_equals_pdf() {
        let mut rng = seeded_rng(11);
        for _ in 0..100 {
            let p = params(rng.random_range(0.3..8.0), rng.random_range(0.2..5.0));
            let r = rng.random_range(0.01..3.0);
            let a = pdf(r, &p).unwrap();
            let b = log_pdf(r, &p).unwrap().exp();
            assert!(((a - b) / a).abs() < 1e-12);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for &m in &[0.5, 1.0, 2.0, 5.0] {
            for &omega in &[0.5, 1.0, 4.0] {
                let p = params(m, omega);
                let f = |r: f64| pdf(r, &p).unwrap();
                let upper = 12.0 * omega.sqrt();
                let pieces = 200;
                let h = upper / pieces as f64;
                let total: f64 = (0..pieces)
                    .map(|k| simpson(&f, k as f64 * h, (k + 1) as f64 * h, 1e-13))
                    .sum();
                assert!((total - 1.0).abs() < 1e-6, "m={m} Ω={omega}: {total}");
            }
        }
    }

    #[test]
    fn score_is_derivative_of_log_pdf() {
        let p = params(2.0, 1.0);
        let h = 1e-6;
        let fd = (log_pdf(0.5 + h, &p).unwrap() - log_pdf(0.5 - h, &p).unwrap()) / (2.0 * h);
        assert!((fd - 4.0).abs() < 1e-6);
        assert!((analytic_score(0.5, &p).unwrap() - 4.0).abs() < 1e-14);

        let mut rng = seeded_rng(5);
        for _ in 0..1000 {
            let p = params(rng.random_range(0.3..8.0), rng.random_range(0.2..5.0));
            let r = rng.random_range(0.05..2.5) * p.omega().sqrt();
            let h = 1e-6 * r;
            let fd = (log_pdf(r + h, &p).unwrap() - log_pdf(r - h, &p).unwrap()) / (2.0 * h);
            let s = analytic_score(r, &p).unwrap();
            let scale = s.abs().max(1.0);
            assert!((fd - s).abs() / scale < 1e-5, "r={r} {p:?}: fd {fd} vs {s}");
        }
    }

    #[test]
    fn domain_and_argument_errors() {
        let p = params(1.0, 1.0);
        assert!(matches!(log_pdf(0.0, &p), Err(Error::Domain(_))));
        assert!(matches!(analytic_score(-1.0, &p), Err(Error::Domain(_))));
        assert!(matches!(pdf(f64::NAN, &p), Err(Error::InvalidArgument(_))));
        assert!(NakagamiParams::new(0.0, 1.0).is_err());
        assert!(NakagamiParams::new(1.0, -2.0).is_err());
        assert!(NakagamiParams::new(f64::INFINITY, 1.0).is_err());
        assert!(sample(&p, 0, 1).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = params(1.3, 2.0);
        assert_eq!(sample(&p, 64, 9).unwrap(), sample(&p, 64, 9).unwrap());
        assert_ne!(sample(&p, 64, 9).unwrap(), sample(&p, 64, 10).unwrap());
    }

    #[test]
    fn second_moment_converges_to_omega() {
        let p = params(1.3, 2.0);
        let xs = sample(&p, 1_000_000, 42).unwrap();
        let n = xs.len() as f64;
        let mean_sq = xs.iter().map(|r| r * r).sum::<f64>() / n;
        // Var(R²) = Ω²/m
        let stderr = (p.omega() * p.omega() / p.m() / n).sqrt();
        assert!((mean_sq - 2.0).abs() < 0.01);
        assert!((mean_sq - 2.0).abs() < 5.0 * stderr);
    }

    fn kolmogorov_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn half_normal_special_case() {
        // m = 1/2, Ω = 1 is |N(0, 1)|; CDF = erf(x/√2)
        let p = params(0.5, 1.0);
        let mut xs = sample(&p, 100_000, 3).unwrap();
        let d = kolmogorov_distance(&mut xs, |x| statrs::function::erf::erf(x / 2f64.sqrt()));
        assert!(d < 0.01, "KS distance {d}");
    }

    #[test]
    fn empirical_cdf_matches_quadrature() {
        let p = params(1.7, 0.8);
        // tabulate the CDF by quadrature on a grid, interpolate linearly
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        let f = |r: f64| pdf(r, &p).unwrap();
        let mut table = vec![0.0];
        for w in grid.windows(2) {
            table.push(table.last().unwrap() + simpson(&f, w[0], w[1], 1e-13));
        }
        let cdf = |x: f64| {
            let i = ((x / 0.01) as usize).min(grid.len() - 2);
            let t = (x - grid[i]) / 0.01;
            (table[i] + t * (table[i + 1] - table[i])).min(1.0)
        };
        let mut xs = sample(&p, 100_000, 17).unwrap();
        let d = kolmogorov_distance(&mut xs, cdf);
        assert!(d < 0.01, "KS distance {d}");
    }
}
