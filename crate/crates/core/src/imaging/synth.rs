//! Measurement synthesis and Ω̂ estimation.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::distribution::seeded_rng;
use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, OmegaField, ParamMap};
use crate::par;

/// Draw every pixel independently from Nakagami(m(x), Ω).
///
/// Each row uses its own ChaCha stream, so the image does not depend on the
/// number of worker threads.
pub fn synthesize_envelope(gt: &ParamMap, omega: f64, seed: u64) -> Result<EnvelopeImage> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("Ω must be > 0, got {omega}")));
    }
    if gt.valid_count() != gt.values().len() {
        return Err(Error::InvalidArgument("ground-truth map has masked pixels".into()));
    }
    if let Some(m) = gt.values().iter().find(|m| **m <= 0.0) {
        return Err(Error::InvalidArgument(format!("ground-truth m must be > 0, got {m}")));
    }
    let (width, height) = gt.dims();
    let mut data = vec![0.0; width * height];
    let values = gt.values();
    par::fill_rows(&mut data, width, |y, row| {
        let mut rng = seeded_rng(seed);
        rng.set_stream(y as u64);
        for (x, r) in row.iter_mut().enumerate() {
            let m = values[y * width + x];
            let gamma = Gamma::new(m, omega / m).expect("validated parameters");
            *r = gamma.sample(&mut rng).sqrt();
        }
    });
    EnvelopeImage::new(width, height, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaMode {
    /// Mean of r² over the ROI.
    #[default]
    Global,
    /// Mean of r² in a `side`×`side` window (shrunk at the borders).
    Local(usize),
}

pub fn estimate_omega(img: &EnvelopeImage, mode: OmegaMode) -> Result<OmegaField> {
    let (width, height) = img.dims();
    let data = img.data();
    let (sum, n) = data
        .iter()
        .enumerate()
        .filter(|(i, _)| img.in_roi(*i))
        .fold((0.0, 0usize), |(s, n), (_, r)| (s + r * r, n + 1));
    if n == 0 {
        return Err(Error::InvalidArgument("ROI is empty".into()));
    }
    let global = sum / n as f64;
    if global <= 0.0 {
        return Err(Error::InvalidArgument("image has zero energy in the ROI".into()));
    }
    match mode {
        OmegaMode::Global => Ok(OmegaField::Global(global)),
        OmegaMode::Local(side) => {
            if side < 1 || side % 2 == 0 {
                return Err(Error::InvalidArgument(format!("Ω̂ window side must be odd, got {side}")));
            }
            let half = side / 2;
            // summed-area table of r²
            let stride = width + 1;
            let mut sat = vec![0.0; stride * (height + 1)];
            for y in 0..height {
                let mut acc = 0.0;
                for x in 0..width {
                    acc += data[y * width + x] * data[y * width + x];
                    sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + acc;
                }
            }
            let mut values = vec![0.0; width * height];
            par::fill_rows(&mut values, width, |y, row| {
                let (y0, y1) = (y.saturating_sub(half), (y + half + 1).min(height));
                for (x, v) in row.iter_mut().enumerate() {
                    let (x0, x1) = (x.saturating_sub(half), (x + half + 1).min(width));
                    let s = sat[y1 * stride + x1] - sat[y0 * stride + x1] - sat[y1 * stride + x0] + sat[y0 * stride + x0];
                    let mean = s / ((y1 - y0) * (x1 - x0)) as f64;
                    // all-zero windows fall back to the global value
                    *v = if mean > 1e-12 * global { mean } else { global };
                }
            });
            Ok(OmegaField::Local {
                width,
                height,
                side,
                values,
            })
        }
    }
}
