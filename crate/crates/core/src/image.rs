//! Raster types shared by every stage: envelope images, parameter maps and
//! Ω̂ fields. All rasters are row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default clamp range for Nakagami shape estimates.
pub const DEFAULT_M_RANGE: (f64, f64) = (0.01, 10.0);

/// Backscattered envelope amplitudes (non-negative, finite).
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    roi: Option<Vec<bool>>,
}

impl EnvelopeImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be non-zero".into()));
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "envelope amplitudes must be finite and >= 0, found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            roi: None,
        })
    }

    pub fn with_roi(mut self, roi: Vec<bool>) -> Result<Self> {
        if roi.len() != self.data.len() {
            return Err(Error::InvalidArgument("ROI mask size mismatch".into()));
        }
        self.roi = Some(roi);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn roi(&self) -> Option<&[bool]> {
        self.roi.as_deref()
    }

    pub fn in_roi(&self, idx: usize) -> bool {
        self.roi.as_ref().is_none_or(|r| r[idx])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Multiply every amplitude by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be > 0, got {c}")));
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * c).collect(),
            roi: self.roi.clone(),
        })
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Provenance carried by every [`ParamMap`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub estimator: String,
    /// Window description, or `"pixelwise"`.
    pub window: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_mode: Option<String>,
    #[serde(default)]
    pub masked_fraction: f64,
    #[serde(default)]
    pub clamped: usize,
}

/// A field of Nakagami shape values with a validity mask (`true` = valid).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    pub meta: MapMeta,
}

impl ParamMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>, meta: MapMeta) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("map dimensions must be non-zero".into()));
        }
        if values.len() != width * height || valid.len() != values.len() {
            return Err(Error::InvalidArgument("map buffer size mismatch".into()));
        }
        if values.iter().zip(&valid).any(|(v, ok)| *ok && !v.is_finite()) {
            return Err(Error::InvalidArgument("valid map pixels must be finite".into()));
        }
        let mut map = Self {
            width,
            height,
            values,
            valid,
            meta,
        };
        map.meta.masked_fraction = map.masked_fraction();
        Ok(map)
    }

    /// A fully valid map.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>, meta: MapMeta) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::new(width, height, values, valid, meta)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        1.0 - self.valid_count() as f64 / self.valid.len() as f64
    }

    /// Mean over valid pixels (NaN when nothing is valid).
    pub fn valid_mean(&self) -> f64 {
        let (sum, n) = self
            .values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }
}

/// Per-pixel amplitude score d/dr log p(r), in 1/amplitude units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScoreField {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "score field of {} values does not fit {width}x{height}",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Ω̂ = E[R²], either one value for the whole ROI or a per-pixel field.
#[derive(Debug, Clone, PartialEq)]
pub enum OmegaField {
    Global(f64),
    Local {
        width: usize,
        height: usize,
        side: usize,
        values: Vec<f64>,
    },
}

impl OmegaField {
    #[inline]
    pub fn at(&self, idx: usize) -> f64 {
        match self {
            OmegaField::Global(v) => *v,
            OmegaField::Local { values, .. } => values[idx],
        }
    }

    pub fn mode_tag(&self) -> String {
        match self {
            OmegaField::Global(_) => "global".to_string(),
            OmegaField::Local { side, .. } => format!("local({side})"),
        }
    }

    pub(crate) fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        match self {
            OmegaField::Global(v) if *v > 0.0 && v.is_finite() => Ok(()),
            OmegaField::Global(v) => Err(Error::InvalidArgument(format!("Ω̂ must be > 0, got {v}"))),
            OmegaField::Local {
                width: w, height: h, ..
            } if (*w, *h) != (width, height) => Err(Error::InvalidArgument(format!(
                "Ω̂ field is {w}x{h}, image is {width}x{height}"
            ))),
            OmegaField::Local { .. } => Ok(()),
        }
    }
}
