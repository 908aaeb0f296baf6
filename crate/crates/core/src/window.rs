//! Classical window-based Nakagami estimators and the sliding-window engine
//! that turns them into parameter maps.
//!
//! Three estimators operate on a bag of amplitudes:
//!
//! * [`moment_estimate`]: m = E[R²]² / E[(R² − E[R²])²], population moments.
//! * [`mle_taylor`]: m = 1 / (2Δ) with Δ = ln E[R²] − E[ln R²].
//! * [`mle_exact`]: the root of ln m − ψ(m) = Δ.
//!
//! [`sliding_map`] evaluates one of them in a square window around each output
//! pixel; [`wmc_map`] averages moment maps over several window sides.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, MapMeta, ParamMap, DEFAULT_M_RANGE};
use crate::par;
use crate::special::{digamma_unchecked, trigamma_unchecked};

/// Windows whose log-moment gap Δ is at or below this are degenerate.
pub const DELTA_MIN: f64 = 1e-12;

const MLE_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BorderPolicy {
    /// Clip the window to the image; border windows hold fewer samples.
    #[default]
    Shrink,
    /// Mirror indices about the edge pixel (edge not repeated).
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    side: usize,
    stride: usize,
    border: BorderPolicy,
}

impl WindowSpec {
    pub fn new(side: usize, stride: usize, border: BorderPolicy) -> Result<Self> {
        if side < 3 || side % 2 == 0 {
            return Err(Error::InvalidArgument(format!("window side must be odd and >= 3, got {side}")));
        }
        if stride == 0 || stride > side {
            return Err(Error::InvalidArgument(format!(
                "window stride must be in 1..={side}, got {stride}"
            )));
        }
        Ok(Self { side, stride, border })
    }

    /// Stride 1, shrink-at-border.
    pub fn dense(side: usize) -> Result<Self> {
        Self::new(side, 1, BorderPolicy::Shrink)
    }

    /// Stride ⌈side/2⌉ as used for the maximum-likelihood maps.
    pub fn half_step(side: usize) -> Result<Self> {
        Self::new(side, side.div_ceil(2), BorderPolicy::Shrink)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn border(&self) -> BorderPolicy {
        self.border
    }

    fn half(&self) -> usize {
        self.side / 2
    }
}

impl fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.side)?;
        if self.stride != 1 {
            write!(f, "/s{}", self.stride)?;
        }
        if self.border == BorderPolicy::Reflect {
            write!(f, "/reflect")?;
        }
        Ok(())
    }
}

/// Amplitudes gathered from one window position.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow(Vec<f64>);

impl SampleWindow {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!("window amplitude {bad} is not a finite value >= 0")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    /// Inverse normalized variance Ω̂²/Var(R²), the moment estimate of m.
    pub m_inv: f64,
    pub omega_hat: f64,
}

pub fn moment_estimate(w: &SampleWindow) -> Result<MomentEstimate> {
    moment_raw(w.values())
}

fn moment_raw(values: &[f64]) -> Result<MomentEstimate> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument("moment estimator needs at least 2 samples".into()));
    }
    let n = values.len() as f64;
    let omega_hat = values.iter().map(|r| r * r).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|r| {
            let d = r * r - omega_hat;
            d * d
        })
        .sum::<f64>()
        / n;
    if !(var > 1e-24 * omega_hat * omega_hat) {
        return Err(Error::DegenerateWindow("zero variance of squared amplitudes".into()));
    }
    Ok(MomentEstimate {
        m_inv: omega_hat * omega_hat / var,
        omega_hat,
    })
}

/// Δ = ln(mean r²) − mean(ln r²); shared by both likelihood estimators.
fn log_moment_gap(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument("likelihood estimators need at least 2 samples".into()));
    }
    if values.iter().any(|&r| r <= 0.0) {
        return Err(Error::Domain("zero amplitude inside a likelihood window".into()));
    }
    let n = values.len() as f64;
    let mean_sq = values.iter().map(|r| r * r).sum::<f64>() / n;
    let mean_log_sq = values.iter().map(|r| 2.0 * r.ln()).sum::<f64>() / n;
    let delta = mean_sq.ln() - mean_log_sq;
    if !(delta > DELTA_MIN) {
        return Err(Error::DegenerateWindow(format!("log-moment gap {delta:e} below threshold")));
    }
    Ok(delta)
}

pub fn mle_taylor(w: &SampleWindow) -> Result<f64> {
    mle_taylor_raw(w.values())
}

fn mle_taylor_raw(values: &[f64]) -> Result<f64> {
    Ok(1.0 / (2.0 * log_moment_gap(values)?))
}

/// ln m − ψ(m), evaluated by its asymptotic series for large m to avoid
/// cancellation.
pub(crate) fn log_minus_digamma(m: f64) -> f64 {
    if m >= 10.0 {
        let inv = 1.0 / m;
        let inv2 = inv * inv;
        0.5 * inv
            + inv2
                * (1.0 / 12.0
                    - inv2
                        * (1.0 / 120.0
                            - inv2
                                * (1.0 / 252.0
                                    - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))))
    } else {
        m.ln() - digamma_unchecked(m)
    }
}

/// Solve ln m − ψ(m) = Δ for m > 0. The left side falls monotonically from
/// +∞ to 0, so the root is unique.
pub fn solve_log_digamma(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("Δ must be finite and > 0, got {delta}")));
    }
    let g = |m: f64| log_minus_digamma(m) - delta;
    // second-order Taylor start: 1/(2m) + 1/(12m²) = Δ
    let start = (3.0 + (9.0 + 12.0 * delta).sqrt()) / (12.0 * delta);
    let (mut lo, mut hi) = (start * 0.5, start * 2.0);
    let mut expand = 0;
    while g(lo) < 0.0 {
        lo *= 0.5;
        expand += 1;
        if expand > 200 {
            return Err(Error::Numeric("could not bracket the likelihood root".into()));
        }
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 200 {
            return Err(Error::Numeric("could not bracket the likelihood root".into()));
        }
    }
    let mut m = start.clamp(lo, hi);
    for _ in 0..MLE_MAX_ITER {
        let val = g(m);
        if val.abs() < 1e-13 * delta.max(1e-3) {
            return Ok(m);
        }
        if val > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let slope = 1.0 / m - trigamma_unchecked(m);
        let newton = m - val / slope;
        m = if newton > lo && newton < hi && slope < 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 4.0 * f64::EPSILON * m {
            return Ok(m);
        }
    }
    Err(Error::Numeric(format!("likelihood root did not converge in {MLE_MAX_ITER} iterations")))
}

pub fn mle_exact(w: &SampleWindow) -> Result<f64> {
    mle_exact_raw(w.values())
}

fn mle_exact_raw(values: &[f64]) -> Result<f64> {
    solve_log_digamma(log_moment_gap(values)?)
}

/// |ln m − ψ(m) − Δ| for a window, the residual of the likelihood equation.
pub fn mle_residual(w: &SampleWindow, m: f64) -> Result<f64> {
    let delta = log_moment_gap(w.values())?;
    Ok((m.ln() - digamma_unchecked(m) - delta).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowEstimator {
    Moment,
    MleTaylor,
    MleExact,
}

impl WindowEstimator {
    pub fn label(&self) -> &'static str {
        match self {
            WindowEstimator::Moment => "moment",
            WindowEstimator::MleTaylor => "mle",
            WindowEstimator::MleExact => "mle-exact",
        }
    }

    pub fn estimate(&self, w: &SampleWindow) -> Result<f64> {
        self.estimate_raw(w.values())
    }

    fn estimate_raw(&self, values: &[f64]) -> Result<f64> {
        match self {
            WindowEstimator::Moment => moment_raw(values).map(|e| e.m_inv),
            WindowEstimator::MleTaylor => mle_taylor_raw(values),
            WindowEstimator::MleExact => mle_exact_raw(values),
        }
    }
}

/// Range that map outputs are clamped to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ClampRange {
    fn default() -> Self {
        Self {
            lo: DEFAULT_M_RANGE.0,
            hi: DEFAULT_M_RANGE.1,
        }
    }
}

impl ClampRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid clamp range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// Clamp and report whether the value moved.
    #[inline]
    pub fn apply(&self, v: f64) -> (f64, bool) {
        let c = v.clamp(self.lo, self.hi);
        (c, c != v)
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Collect the window around `(cx, cy)` into `buf` according to the border
/// policy.
pub(crate) fn gather_window(img: &[f64], width: usize, height: usize, cx: usize, cy: usize, spec: &WindowSpec, buf: &mut Vec<f64>) {
    buf.clear();
    let h = spec.half() as isize;
    match spec.border {
        BorderPolicy::Shrink => {
            let x0 = cx.saturating_sub(spec.half());
            let x1 = (cx + spec.half()).min(width - 1);
            let y0 = cy.saturating_sub(spec.half());
            let y1 = (cy + spec.half()).min(height - 1);
            for y in y0..=y1 {
                buf.extend_from_slice(&img[y * width + x0..=y * width + x1]);
            }
        }
        BorderPolicy::Reflect => {
            for dy in -h..=h {
                let y = reflect(cy as isize + dy, height);
                for dx in -h..=h {
                    let x = reflect(cx as isize + dx, width);
                    buf.push(img[y * width + x]);
                }
            }
        }
    }
}

/// Window centres along one axis and, for each pixel, the index of its
/// nearest centre.
fn centre_grid(len: usize, stride: usize) -> (Vec<usize>, Vec<usize>) {
    let centres: Vec<usize> = (0..len).step_by(stride).collect();
    let nearest = (0..len)
        .map(|p| {
            let k = (p + stride / 2) / stride;
            k.min(centres.len() - 1)
        })
        .collect();
    (centres, nearest)
}

/// Evaluate `estimator` in a window around every output pixel.
///
/// Degenerate windows are masked; valid outputs are clamped to `clamp`.
/// With stride > 1 the estimator runs on a grid of centres and each pixel
/// takes the value of its nearest centre.
pub fn sliding_map(img: &EnvelopeImage, spec: &WindowSpec, estimator: WindowEstimator, clamp: ClampRange) -> Result<ParamMap> {
    let (width, height) = img.dims();
    if width < spec.side || height < spec.side {
        return Err(Error::InvalidArgument(format!(
            "image {width}x{height} is smaller than window side {}",
            spec.side
        )));
    }
    let (cols, col_of) = centre_grid(width, spec.stride);
    let (rows, row_of) = centre_grid(height, spec.stride);
    let data = img.data();

    // (value, valid, clamped) on the centre grid
    let mut grid = vec![(0.0, false, false); cols.len() * rows.len()];
    par::fill_rows(&mut grid, cols.len(), |gy, out| {
        let mut buf = Vec::with_capacity(spec.side * spec.side);
        for (gx, cell) in out.iter_mut().enumerate() {
            gather_window(data, width, height, cols[gx], rows[gy], spec, &mut buf);
            *cell = match estimator.estimate_raw(&buf) {
                Ok(m) if m.is_finite() => {
                    let (c, moved) = clamp.apply(m);
                    (c, true, moved)
                }
                _ => (f64::NAN, false, false),
            };
        }
    });

    let mut values = vec![0.0; width * height];
    let mut valid = vec![false; width * height];
    let mut clamped = 0;
    for y in 0..height {
        for x in 0..width {
            let (v, ok, moved) = grid[row_of[y] * cols.len() + col_of[x]];
            values[y * width + x] = v;
            valid[y * width + x] = ok;
            clamped += moved as usize;
        }
    }
    let meta = MapMeta {
        estimator: estimator.label().to_string(),
        window: spec.to_string(),
        clamped,
        ..MapMeta::default()
    };
    ParamMap::new(width, height, values, valid, meta)
}

/// Window-modulated compounding: the pixel-wise mean of moment maps taken
/// with each window in `specs`. A pixel is masked only when every constituent
/// map masks it; otherwise the mean runs over the valid constituents.
pub fn wmc_map(img: &EnvelopeImage, specs: &[WindowSpec], clamp: ClampRange) -> Result<ParamMap> {
    if specs.len() < 2 {
        return Err(Error::InvalidArgument("compounding needs at least 2 window specs".into()));
    }
    let maps = specs
        .iter()
        .map(|s| sliding_map(img, s, WindowEstimator::Moment, clamp))
        .collect::<Result<Vec<_>>>()?;
    Ok(compound_maps(&maps, specs))
}

pub(crate) fn compound_maps(maps: &[ParamMap], specs: &[WindowSpec]) -> ParamMap {
    let (width, height) = maps[0].dims();
    let n = width * height;
    let mut values = vec![f64::NAN; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        // running mean keeps K identical inputs bit-exact
        let mut mean = 0.0;
        let mut k = 0usize;
        for map in maps {
            if map.valid()[i] {
                k += 1;
                mean += (map.values()[i] - mean) / k as f64;
            }
        }
        if k > 0 {
            values[i] = mean;
            valid[i] = true;
        }
    }
    let window = specs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
    let meta = MapMeta {
        estimator: "wmc".to_string(),
        window,
        clamped: maps.iter().map(|m| m.meta.clamped).sum(),
        ..MapMeta::default()
    };
    ParamMap::new(width, height, values, valid, meta).expect("constituent maps share dimensions")
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::distribution::{sample, NakagamiParams};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn maps_are_amplitude_scale_invariant(m in 0.5f64..4.0, c in 0.05f64..20.0, seed in any::<u64>()) {
            let p = NakagamiParams::new(m, 1.0).unwrap();
            let img = EnvelopeImage::new(16, 16, sample(&p, 256, seed).unwrap()).unwrap();
            let scaled = img.scaled(c).unwrap();
            let clamp = ClampRange::default();
            let spec = WindowSpec::dense(5).unwrap();
            for est in [WindowEstimator::Moment, WindowEstimator::MleTaylor, WindowEstimator::MleExact] {
                let a = sliding_map(&img, &spec, est, clamp).unwrap();
                let b = sliding_map(&scaled, &spec, est, clamp).unwrap();
                prop_assert_eq!(a.valid(), b.valid());
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).abs() <= 1e-7 * x.abs().max(1.0), "{:?}: {} vs {}", est, x, y);
                }
            }
        }

        #[test]
        fn wmc_is_the_mean_of_its_windows(m in 0.5f64..3.0, seed in any::<u64>()) {
            let p = NakagamiParams::new(m, 1.0).unwrap();
            let img = EnvelopeImage::new(20, 20, sample(&p, 400, seed).unwrap()).unwrap();
            let clamp = ClampRange::default();
            let specs: Vec<WindowSpec> = [3, 5, 7].iter().map(|s| WindowSpec::dense(*s).unwrap()).collect();
            let parts: Vec<_> = specs.iter().map(|s| sliding_map(&img, s, WindowEstimator::Moment, clamp).unwrap()).collect();
            let w = wmc_map(&img, &specs, clamp).unwrap();
            for i in 0..400 {
                if w.valid()[i] {
                    let mean = parts.iter().map(|p| p.values()[i]).sum::<f64>() / 3.0;
                    prop_assert!((w.values()[i] - mean).abs() < 1e-12);
                }
            }
        }
    }
}
