//! Closed-form per-pixel shape estimate from the amplitude score:
//!
//! m̂ = (1/r + s) / (2/r − 2r/Ω̂)
//!
//! With s = d/dr log p(r) of a Nakagami(m, Ω̂) law this returns m exactly.
//! When s is the score of a mixture over m it returns the posterior mean
//! E[m | r].

use crate::distribution::analytic_score_unchecked;
use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, MapMeta, OmegaField, ParamMap, ScoreField};
use crate::par;
use crate::window::ClampRange;

/// Relative denominator guard: ε_d = `DENOM_GUARD`·(2/√Ω̂).
pub const DENOM_GUARD: f64 = 1e-3;
/// Amplitude floor relative to the image maximum.
pub const AMPLITUDE_FLOOR: f64 = 1e-6;

pub const METHOD_LABEL: &str = "score";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PixelEstimate {
    Valid(f64),
    /// Closed form fell outside the clamp range; carries the clamped value.
    Clamped(f64),
    /// |2/r − 2r/Ω̂| below the guard (r² ≈ Ω̂).
    Singular,
}

impl PixelEstimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            PixelEstimate::Valid(v) | PixelEstimate::Clamped(v) => Some(*v),
            PixelEstimate::Singular => None,
        }
    }
}

#[inline]
fn closed_form(r: f64, score: f64, omega_hat: f64) -> Option<f64> {
    let denom = 2.0 / r - 2.0 * r / omega_hat;
    if denom.abs() < DENOM_GUARD * 2.0 / omega_hat.sqrt() {
        return None;
    }
    Some((1.0 / r + score) / denom)
}

pub fn score_pixel(r: f64, score: f64, omega_hat: f64, clamp: ClampRange) -> Result<PixelEstimate> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("amplitude must be finite and > 0, got {r}")));
    }
    if !(omega_hat > 0.0 && omega_hat.is_finite()) {
        return Err(Error::InvalidArgument(format!("Ω̂ must be > 0, got {omega_hat}")));
    }
    if !score.is_finite() {
        return Err(Error::Numeric(format!("non-finite score at r = {r}")));
    }
    Ok(match closed_form(r, score, omega_hat) {
        None => PixelEstimate::Singular,
        Some(m) => match clamp.apply(m) {
            (v, false) => PixelEstimate::Valid(v),
            (v, true) => PixelEstimate::Clamped(v),
        },
    })
}

/// Apply [`score_pixel`] everywhere. Singular, clamped, non-finite and
/// out-of-ROI pixels are masked; zero amplitudes are floored at
/// [`AMPLITUDE_FLOOR`]·max before the division.
pub fn score_map(img: &EnvelopeImage, score: &ScoreField, omega: &OmegaField, clamp: ClampRange) -> Result<ParamMap> {
    let (width, height) = img.dims();
    if score.dims() != (width, height) {
        return Err(Error::InvalidArgument(format!(
            "score field is {}x{}, image is {width}x{height}",
            score.width(),
            score.height()
        )));
    }
    omega.check_dims(width, height)?;
    let floor = AMPLITUDE_FLOOR * img.max();
    let (data, s) = (img.data(), score.values());

    let mut cells = vec![(f64::NAN, false, false); width * height];
    par::fill_rows(&mut cells, width, |y, row| {
        for (x, cell) in row.iter_mut().enumerate() {
            let i = y * width + x;
            if !img.in_roi(i) || !s[i].is_finite() {
                continue;
            }
            let r = data[i].max(floor);
            if r <= 0.0 {
                continue;
            }
            *cell = match closed_form(r, s[i], omega.at(i)) {
                Some(m) if m.is_finite() => match clamp.apply(m) {
                    (v, false) => (v, true, false),
                    (_, true) => (f64::NAN, false, true),
                },
                _ => (f64::NAN, false, false),
            };
        }
    });
    let clamped = cells.iter().filter(|c| c.2).count();
    let (values, valid) = cells.into_iter().map(|(v, ok, _)| (v, ok)).unzip();
    let meta = MapMeta {
        estimator: METHOD_LABEL.into(),
        window: "pixelwise".into(),
        omega_mode: Some(omega.mode_tag()),
        clamped,
        ..MapMeta::default()
    };
    ParamMap::new(width, height, values, valid, meta)
}

/// Exact score of each pixel under its own ground-truth Nakagami(m(x), Ω(x)).
pub fn analytic_score_field(img: &EnvelopeImage, gt: &ParamMap, omega: &OmegaField) -> Result<ScoreField> {
    let (width, height) = img.dims();
    if gt.dims() != (width, height) {
        return Err(Error::InvalidArgument("ground truth and image differ in size".into()));
    }
    omega.check_dims(width, height)?;
    let floor = AMPLITUDE_FLOOR * img.max();
    let values = img
        .data()
        .iter()
        .zip(gt.values())
        .enumerate()
        .map(|(i, (&r, &m))| analytic_score_unchecked(r.max(floor), m, omega.at(i)))
        .collect();
    ScoreField::new(width, height, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{analytic_score, sample_one, seeded_rng, NakagamiParams};
    use crate::imaging::phantom::{builtin_phantom, BuiltinPattern};
    use crate::imaging::synth::synthesize_envelope;
    use rand::Rng;

    #[test]
    fn hand_evaluated_example() {
        // r = 0.5, m = 2, Ω = 1: score 4, m̂ = (2 + 4)/(4 − 1) = 2
        let est = score_pixel(0.5, 4.0, 1.0, ClampRange::default()).unwrap();
        assert_eq!(est, PixelEstimate::Valid(2.0));
    }

    #[test]
    fn identity_on_random_triples() {
        let mut rng = seeded_rng(77);
        let mut checked = 0;
        while checked < 1000 {
            let p = NakagamiParams::new(rng.random_range(0.3..8.0), rng.random_range(0.2..5.0)).unwrap();
            let r = sample_one(&p, &mut rng);
            let s = analytic_score(r, &p).unwrap();
            match score_pixel(r, s, p.omega(), ClampRange::default()).unwrap() {
                PixelEstimate::Valid(m) => {
                    assert!((m - p.m()).abs() < 1e-9, "{p:?} r={r}: {m}");
                    checked += 1;
                }
                PixelEstimate::Singular => {}
                PixelEstimate::Clamped(_) => panic!("true m is inside the clamp range"),
            }
        }
    }

    #[test]
    fn singularity_and_argument_checks() {
        let omega: f64 = 2.0;
        let r = omega.sqrt();
        assert_eq!(score_pixel(r, 0.3, omega, ClampRange::default()).unwrap(), PixelEstimate::Singular);
        assert!(matches!(score_pixel(0.0, 1.0, 1.0, ClampRange::default()), Err(Error::Domain(_))));
        assert!(score_pixel(1.0, 1.0, 0.0, ClampRange::default()).is_err());
        assert!(matches!(score_pixel(0.5, f64::NAN, 1.0, ClampRange::default()), Err(Error::Numeric(_))));
        // huge score pushes the estimate past the upper bound
        let est = score_pixel(0.5, 100.0, 1.0, ClampRange::default()).unwrap();
        assert_eq!(est, PixelEstimate::Clamped(10.0));
    }

    #[test]
    fn analytic_map_recovers_phantom() {
        let gt = builtin_phantom(BuiltinPattern::TwoRegion, 64, 64, 0).unwrap();
        let img = synthesize_envelope(&gt, 1.0, 5).unwrap();
        let omega = OmegaField::Global(1.0);
        let score = analytic_score_field(&img, &gt, &omega).unwrap();
        let map = score_map(&img, &score, &omega, ClampRange::default()).unwrap();
        for i in 0..gt.values().len() {
            if map.valid()[i] {
                assert!((map.values()[i] - gt.values()[i]).abs() < 1e-6);
            }
        }
        assert!(map.masked_fraction() < 0.01, "masked {}", map.masked_fraction());
        assert_eq!(map.meta.omega_mode.as_deref(), Some("global"));
    }

    #[test]
    fn amplitude_rescaling_leaves_map_unchanged() {
        let gt = builtin_phantom(BuiltinPattern::Gradient, 32, 32, 0).unwrap();
        let img = synthesize_envelope(&gt, 1.0, 8).unwrap();
        let omega = OmegaField::Global(1.0);
        let score = analytic_score_field(&img, &gt, &omega).unwrap();
        let base = score_map(&img, &score, &omega, ClampRange::default()).unwrap();
        let c = 3.7;
        let scaled_img = img.scaled(c).unwrap();
        let scaled_score = ScoreField::new(32, 32, score.values().iter().map(|s| s / c).collect()).unwrap();
        let scaled = score_map(&scaled_img, &scaled_score, &OmegaField::Global(c * c), ClampRange::default()).unwrap();
        assert_eq!(base.valid(), scaled.valid());
        for (a, b) in base.values().iter().zip(scaled.values()) {
            if a.is_finite() {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let img = EnvelopeImage::new(4, 4, vec![1.0; 16]).unwrap();
        let score = ScoreField::new(2, 8, vec![0.0; 16]).unwrap();
        assert!(score_map(&img, &score, &OmegaField::Global(1.0), ClampRange::default()).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::distribution::{analytic_score, sample, NakagamiParams};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pixel_estimate_is_amplitude_scale_invariant(
            m in 0.3f64..8.0,
            omega in 0.2f64..5.0,
            c in 0.1f64..10.0,
            seed in any::<u64>(),
        ) {
            let p = NakagamiParams::new(m, omega).unwrap();
            let r = sample(&p, 1, seed).unwrap()[0];
            let s = analytic_score(r, &p).unwrap();
            let clamp = ClampRange::new(1e-6, 1e6).unwrap();
            let a = score_pixel(r, s, omega, clamp).unwrap();
            let b = score_pixel(c * r, s / c, c * c * omega, clamp).unwrap();
            if let (PixelEstimate::Valid(x), PixelEstimate::Valid(y)) = (a, b) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
                prop_assert!((x - m).abs() < 1e-9 * m.max(1.0));
            }
        }
    }
}
