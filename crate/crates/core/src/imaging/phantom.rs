//! Ground-truth m-fields: gray-level mapping, builtin patterns and
//! procedural handwritten-style digits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::seeded_rng;
use crate::error::{Error, Result};
use crate::image::{MapMeta, ParamMap};

pub const M_LOW: f64 = 0.5;
pub const M_HIGH: f64 = 2.0;

/// Side of the digit canvas before upscaling.
pub const DIGIT_CANVAS: usize = 28;

/// Map gray levels in [0, 1] to m = 0.5 + 1.5·g.
pub fn phantom_from_gray(width: usize, height: usize, gray: &[f64]) -> Result<ParamMap> {
    if let Some(g) = gray.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::InvalidArgument(format!("gray level {g} outside [0, 1]")));
    }
    let values = gray.iter().map(|g| M_LOW + (M_HIGH - M_LOW) * g).collect();
    let meta = MapMeta {
        estimator: "ground-truth".into(),
        window: "pixelwise".into(),
        ..MapMeta::default()
    };
    ParamMap::from_values(width, height, values, meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinPattern {
    /// Bright disc inclusion on a dark background.
    TwoRegion,
    Checkerboard,
    /// Horizontal ramp from g = 0 to g = 1.
    Gradient,
    /// Random digit, 28×28 upscaled bilinearly to the requested size.
    Digits,
}

impl BuiltinPattern {
    pub fn label(&self) -> &'static str {
        match self {
            BuiltinPattern::TwoRegion => "two-region",
            BuiltinPattern::Checkerboard => "checkerboard",
            BuiltinPattern::Gradient => "gradient",
            BuiltinPattern::Digits => "digits",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "two-region" => Ok(BuiltinPattern::TwoRegion),
            "checkerboard" => Ok(BuiltinPattern::Checkerboard),
            "gradient" => Ok(BuiltinPattern::Gradient),
            "digits" => Ok(BuiltinPattern::Digits),
            other => Err(Error::Config(format!("unknown builtin pattern {other:?}"))),
        }
    }
}

/// Gray levels for a builtin pattern. `seed` only matters for digits.
pub fn builtin_gray(pattern: BuiltinPattern, width: usize, height: usize, seed: u64) -> Result<Vec<f64>> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidArgument("phantom must be at least 2x2".into()));
    }
    let (w, h) = (width as f64, height as f64);
    let gray = match pattern {
        BuiltinPattern::TwoRegion => {
            let radius = 0.3 * w.min(h);
            let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
            grid(width, height, |x, y| {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d <= radius {
                    1.0
                } else {
                    0.0
                }
            })
        }
        BuiltinPattern::Checkerboard => {
            let cell = (width.min(height) / 4).max(1);
            grid(width, height, |x, y| ((x / cell + y / cell) % 2) as f64)
        }
        BuiltinPattern::Gradient => grid(width, height, |x, _| x as f64 / (w - 1.0)),
        BuiltinPattern::Digits => {
            let mut rng = seeded_rng(seed);
            let digit = rng.random_range(0..10);
            let canvas = render_digit(digit, &mut rng);
            resize_bilinear(&canvas, DIGIT_CANVAS, DIGIT_CANVAS, width, height)
        }
    };
    Ok(gray)
}

pub fn builtin_phantom(pattern: BuiltinPattern, width: usize, height: usize, seed: u64) -> Result<ParamMap> {
    let gray = builtin_gray(pattern, width, height, seed)?;
    phantom_from_gray(width, height, &gray)
}

fn grid(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect()
}

/// Bilinear resampling with pixel centres at half-integer positions.
pub fn resize_bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let sample = |v: f64, n: usize| {
        let p = (v.max(0.0)).min((n - 1) as f64);
        let i = (p.floor() as usize).min(n.saturating_sub(2));
        (i, p - i as f64)
    };
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let sy = (y as f64 + 0.5) * sh as f64 / dh as f64 - 0.5;
        let (y0, ty) = sample(sy, sh);
        let y1 = (y0 + 1).min(sh - 1);
        for x in 0..dw {
            let sx = (x as f64 + 0.5) * sw as f64 / dw as f64 - 0.5;
            let (x0, tx) = sample(sx, sw);
            let x1 = (x0 + 1).min(sw - 1);
            let top = src[y0 * sw + x0] * (1.0 - tx) + src[y0 * sw + x1] * tx;
            let bottom = src[y1 * sw + x0] * (1.0 - tx) + src[y1 * sw + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

type Stroke = &'static [(f64, f64)];

// Glyph skeletons in a unit box, y pointing down.
const GLYPHS: [&[Stroke]; 10] = [
    &[&[
        (0.5, 0.08), (0.72, 0.16), (0.82, 0.38), (0.82, 0.62), (0.72, 0.84), (0.5, 0.92),
        (0.28, 0.84), (0.18, 0.62), (0.18, 0.38), (0.28, 0.16), (0.5, 0.08),
    ]],
    &[&[(0.35, 0.25), (0.55, 0.08), (0.55, 0.92)]],
    &[&[(0.2, 0.3), (0.35, 0.12), (0.65, 0.12), (0.8, 0.3), (0.75, 0.5), (0.2, 0.9), (0.85, 0.9)]],
    &[&[(0.2, 0.15), (0.75, 0.15), (0.45, 0.45), (0.75, 0.6), (0.75, 0.8), (0.55, 0.92), (0.2, 0.85)]],
    &[&[(0.65, 0.92), (0.65, 0.08)], &[(0.65, 0.08), (0.15, 0.65), (0.85, 0.65)]],
    &[&[(0.8, 0.1), (0.25, 0.1), (0.2, 0.45), (0.6, 0.4), (0.8, 0.6), (0.7, 0.85), (0.45, 0.92), (0.2, 0.85)]],
    &[&[
        (0.7, 0.1), (0.35, 0.35), (0.2, 0.65), (0.3, 0.88), (0.55, 0.92), (0.75, 0.75), (0.65, 0.55),
        (0.4, 0.52), (0.22, 0.65),
    ]],
    &[&[(0.15, 0.1), (0.85, 0.1), (0.4, 0.92)]],
    &[&[
        (0.5, 0.5), (0.25, 0.35), (0.3, 0.15), (0.5, 0.08), (0.7, 0.15), (0.75, 0.35), (0.5, 0.5),
        (0.22, 0.7), (0.3, 0.9), (0.5, 0.94), (0.7, 0.9), (0.78, 0.7), (0.5, 0.5),
    ]],
    &[&[
        (0.78, 0.35), (0.6, 0.5), (0.35, 0.48), (0.22, 0.3), (0.35, 0.1), (0.6, 0.08), (0.78, 0.25),
        (0.75, 0.6), (0.6, 0.92),
    ]],
];

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Render digit `d` on a 28×28 canvas with random affine jitter and stroke
/// width. Values are in [0, 1] with anti-aliased edges.
pub fn render_digit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let n = DIGIT_CANVAS as f64;
    let angle: f64 = rng.random_range(-0.25..0.25);
    let scale = rng.random_range(16.0..21.0);
    let shear = rng.random_range(-0.2..0.2);
    let (tx, ty) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let half_width = rng.random_range(0.9..1.8);
    let (sin, cos) = angle.sin_cos();
    let place = |(u, v): (f64, f64)| {
        let (u, v) = (u - 0.5 + shear * (v - 0.5), v - 0.5);
        let (u, v) = (cos * u - sin * v, sin * u + cos * v);
        (n / 2.0 + tx + scale * u, n / 2.0 + ty + scale * v)
    };
    let segments: Vec<((f64, f64), (f64, f64))> = GLYPHS[d % 10]
        .iter()
        .flat_map(|stroke| stroke.windows(2).map(|w| (place(w[0]), place(w[1]))))
        .collect();
    grid(DIGIT_CANVAS, DIGIT_CANVAS, |x, y| {
        let p = (x as f64 + 0.5, y as f64 + 0.5);
        let d = segments
            .iter()
            .map(|&(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min);
        (half_width + 0.5 - d).clamp(0.0, 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_to_m_mapping() {
        let map = phantom_from_gray(4, 1, &[0.0, 1.0, 1.0 / 3.0, 0.5]).unwrap();
        let v = map.values();
        assert_eq!(v[0], 0.5);
        assert_eq!(v[1], 2.0);
        assert!((v[2] - 1.0).abs() < 1e-15);
        assert_eq!(v[3], 1.25);
        assert!(phantom_from_gray(1, 1, &[1.2]).is_err());
        assert!(phantom_from_gray(1, 1, &[-0.1]).is_err());
    }

    #[test]
    fn builtins_span_the_m_range() {
        for p in [BuiltinPattern::TwoRegion, BuiltinPattern::Checkerboard, BuiltinPattern::Gradient, BuiltinPattern::Digits] {
            let map = builtin_phantom(p, 64, 64, 3).unwrap();
            let lo = map.values().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = map.values().iter().copied().fold(0.0, f64::max);
            assert_eq!(lo, 0.5, "{}", p.label());
            assert_eq!(hi, 2.0, "{}", p.label());
            assert_eq!(BuiltinPattern::parse(p.label()).unwrap(), p);
        }
    }

    #[test]
    fn digits_are_seeded() {
        let a = builtin_gray(BuiltinPattern::Digits, 64, 64, 11).unwrap();
        let b = builtin_gray(BuiltinPattern::Digits, 64, 64, 11).unwrap();
        let c = builtin_gray(BuiltinPattern::Digits, 64, 64, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // strokes cover a minority of the canvas
        let ink = a.iter().filter(|g| **g > 0.5).count() as f64 / a.len() as f64;
        assert!(ink > 0.03 && ink < 0.4, "ink fraction {ink}");
    }

    #[test]
    fn bilinear_preserves_constants_and_ramps() {
        let src = vec![0.25; 9];
        assert!(resize_bilinear(&src, 3, 3, 7, 5).iter().all(|v| (v - 0.25).abs() < 1e-15));
        let ramp: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let up = resize_bilinear(&ramp, 4, 1, 8, 1);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[7], 3.0);
        assert!((up[3] - 1.25).abs() < 1e-15);
    }
}
