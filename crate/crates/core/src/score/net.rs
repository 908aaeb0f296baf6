//! Convolution kernels, forward pass and reverse-mode gradients.
//!
//! Activations are stored channel-major: `[channel][row][col]`. Every
//! convolution is same-padded with zeros.

use rand::Rng;

use crate::distribution::seeded_rng;
use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, ScoreField};

use super::arch::{Architecture, ConvSpec, Head};

/// Network parameters plus the amplitude normalization constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    arch: Architecture,
    params: Vec<f64>,
    /// Amplitudes are divided by `scale` before entering the network.
    scale: f64,
}

impl ScoreModel {
    pub fn new(arch: Architecture, params: Vec<f64>, scale: f64) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::InvalidArgument(format!(
                "architecture needs {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("normalization scale must be > 0, got {scale}")));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self { arch, params, scale })
    }

    pub fn zeros(arch: Architecture, scale: f64) -> Result<Self> {
        let n = arch.param_count();
        Self::new(arch, vec![0.0; n], scale)
    }

    /// He-uniform weights, zero biases, zero output layer (so the untrained
    /// model's score is identically zero).
    pub fn init(arch: Architecture, scale: f64, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeded_rng(seed);
        let mut params = Vec::with_capacity(arch.param_count());
        let last = arch.layers.len() - 1;
        for (i, l) in arch.layers.iter().enumerate() {
            let fan_in = (l.in_channels * l.kernel * l.kernel) as f64;
            let mut bound = (6.0 / fan_in).sqrt();
            if l.residual {
                bound *= 0.5;
            }
            for _ in 0..l.weight_count() {
                params.push(if i == last { 0.0 } else { rng.random_range(-bound..bound) });
            }
            params.extend(std::iter::repeat_n(0.0, l.out_channels));
        }
        Self::new(arch, params, scale)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Score field of an envelope image, in 1/amplitude units.
    pub fn forward(&self, img: &EnvelopeImage) -> Result<ScoreField> {
        let (w, h) = img.dims();
        let y: Vec<f64> = img.data().iter().map(|r| r / self.scale).collect();
        let s = self.forward_normalized(&y, w, h)?;
        ScoreField::new(w, h, s.into_iter().map(|v| v / self.scale).collect())
    }

    /// Score in normalized units for normalized amplitudes `y`.
    pub fn forward_normalized(&self, y: &[f64], width: usize, height: usize) -> Result<Vec<f64>> {
        if width == 0 || height == 0 || y.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes do not fit a {width}x{height} image",
                y.len()
            )));
        }
        let trace = Trace::run(self, y, width, height);
        Ok(trace.score)
    }
}

/// Parameter offsets of one layer.
struct Slices {
    weights: std::ops::Range<usize>,
    bias: std::ops::Range<usize>,
}

fn layer_slices(arch: &Architecture) -> Vec<Slices> {
    let mut at = 0;
    arch.layers
        .iter()
        .map(|l| {
            let weights = at..at + l.weight_count();
            let bias = weights.end..weights.end + l.out_channels;
            at = bias.end;
            Slices { weights, bias }
        })
        .collect()
}

#[inline]
fn tap_ranges(k: usize, kx: usize, ky: usize, dil: usize, w: usize, h: usize) -> Option<(isize, isize, usize, usize, usize, usize)> {
    let c = (k / 2) as isize;
    let dx = (kx as isize - c) * dil as isize;
    let dy = (ky as isize - c) * dil as isize;
    let (wi, hi) = (w as isize, h as isize);
    let x0 = (-dx).max(0);
    let x1 = (wi - dx).min(wi);
    let y0 = (-dy).max(0);
    let y1 = (hi - dy).min(hi);
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    Some((dx, dy, x0 as usize, x1 as usize, y0 as usize, y1 as usize))
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn conv_forward(spec: &ConvSpec, weights: &[f64], bias: &[f64], input: &[f64], w: usize, h: usize, out: &mut [f64]) {
    let hw = w * h;
    let k = spec.kernel;
    for co in 0..spec.out_channels {
        let plane = &mut out[co * hw..(co + 1) * hw];
        plane.fill(bias[co]);
        for ci in 0..spec.in_channels {
            let src = &input[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weights[((co * spec.in_channels + ci) * k + ky) * k + kx];
                    let Some((dx, dy, x0, x1, y0, y1)) = tap_ranges(k, kx, ky, spec.dilation, w, h) else {
                        continue;
                    };
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let src_row = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        axpy(wv, src_row, &mut plane[y * w + x0..y * w + x1]);
                    }
                }
            }
        }
    }
}

/// Accumulate weight/bias gradients and, when `din` is given, the input
/// gradient of one convolution.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    spec: &ConvSpec,
    weights: &[f64],
    input: &[f64],
    w: usize,
    h: usize,
    dout: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    let hw = w * h;
    let k = spec.kernel;
    for co in 0..spec.out_channels {
        let g = &dout[co * hw..(co + 1) * hw];
        dbias[co] += g.iter().sum::<f64>();
        for ci in 0..spec.in_channels {
            let src = &input[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((co * spec.in_channels + ci) * k + ky) * k + kx;
                    let Some((dx, dy, x0, x1, y0, y1)) = tap_ranges(k, kx, ky, spec.dilation, w, h) else {
                        continue;
                    };
                    let sx0 = (x0 as isize + dx) as usize;
                    let len = x1 - x0;
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        acc += dot(&g[y * w + x0..y * w + x1], &src[sy * w + sx0..sy * w + sx0 + len]);
                    }
                    dweights[widx] += acc;
                    if let Some(din) = din.as_deref_mut() {
                        let wv = weights[widx];
                        let dplane = &mut din[ci * hw..(ci + 1) * hw];
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            axpy(wv, &g[y * w + x0..y * w + x1], &mut dplane[sy * w + sx0..sy * w + sx0 + len]);
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn basis_inverse(y: f64, eps: f64) -> f64 {
    y / (y * y + eps * eps)
}

/// Everything the backward pass needs from one forward pass.
pub(crate) struct Trace {
    width: usize,
    height: usize,
    y: Vec<f64>,
    /// Layer inputs; `inputs[0]` holds the features.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
    head_out: Vec<f64>,
    pub(crate) score: Vec<f64>,
}

impl Trace {
    pub(crate) fn run(model: &ScoreModel, y: &[f64], width: usize, height: usize) -> Self {
        let arch = &model.arch;
        let hw = width * height;
        let mut x = Vec::with_capacity(arch.features.len() * hw);
        for f in &arch.features {
            x.extend(y.iter().map(|&v| f.eval(v, arch.eps)));
        }
        let slices = layer_slices(arch);
        let mut inputs = Vec::with_capacity(arch.layers.len());
        let mut pre = Vec::with_capacity(arch.layers.len());
        for (spec, sl) in arch.layers.iter().zip(&slices) {
            let mut z = vec![0.0; spec.out_channels * hw];
            conv_forward(spec, &model.params[sl.weights.clone()], &model.params[sl.bias.clone()], &x, width, height, &mut z);
            let mut out: Vec<f64> = z.iter().map(|&v| spec.activation.apply(v)).collect();
            if spec.residual {
                for (o, i) in out.iter_mut().zip(&x) {
                    *o += i;
                }
            }
            inputs.push(std::mem::replace(&mut x, out));
            pre.push(z);
        }
        let head_out = x;
        let score = match arch.head {
            Head::Direct => head_out.clone(),
            Head::AmplitudeBasis => (0..hw)
                .map(|i| {
                    let (a, b, c) = (head_out[i], head_out[hw + i], head_out[2 * hw + i]);
                    a * basis_inverse(y[i], arch.eps) + b + c * y[i]
                })
                .collect(),
        };
        Self {
            width,
            height,
            y: y.to_vec(),
            inputs,
            pre,
            head_out,
            score,
        }
    }

    /// Add dL/dθ to `grad` given dL/ds for every pixel.
    pub(crate) fn backward(&self, model: &ScoreModel, dscore: &[f64], grad: &mut [f64]) {
        let arch = &model.arch;
        let (w, h) = (self.width, self.height);
        let hw = w * h;
        let mut dh = match arch.head {
            Head::Direct => dscore.to_vec(),
            Head::AmplitudeBasis => {
                let mut d = vec![0.0; 3 * hw];
                for i in 0..hw {
                    d[i] = dscore[i] * basis_inverse(self.y[i], arch.eps);
                    d[hw + i] = dscore[i];
                    d[2 * hw + i] = dscore[i] * self.y[i];
                }
                d
            }
        };
        debug_assert_eq!(self.head_out.len(), dh.len());
        let slices = layer_slices(arch);
        for (l, spec) in arch.layers.iter().enumerate().rev() {
            let sl = &slices[l];
            let dz: Vec<f64> = dh
                .iter()
                .zip(&self.pre[l])
                .map(|(d, &z)| d * spec.activation.derivative(z))
                .collect();
            let mut din = if l > 0 {
                Some(if spec.residual { dh } else { vec![0.0; spec.in_channels * hw] })
            } else {
                None
            };
            let (wgrad, rest) = grad[sl.weights.start..sl.bias.end].split_at_mut(sl.weights.len());
            conv_backward(
                spec,
                &model.params[sl.weights.clone()],
                &self.inputs[l],
                w,
                h,
                &dz,
                wgrad,
                rest,
                din.as_deref_mut(),
            );
            match din {
                Some(d) => dh = d,
                None => break,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::arch::{Activation, InputFeature};

    fn toy_arch() -> Architecture {
        Architecture {
            features: vec![InputFeature::Amplitude, InputFeature::LogAmplitude],
            layers: vec![
                ConvSpec {
                    in_channels: 2,
                    out_channels: 3,
                    kernel: 3,
                    dilation: 2,
                    activation: Activation::Tanh,
                    residual: false,
                },
                ConvSpec {
                    in_channels: 3,
                    out_channels: 3,
                    kernel: 3,
                    dilation: 1,
                    activation: Activation::Identity,
                    residual: false,
                },
            ],
            head: Head::AmplitudeBasis,
            eps: 0.05,
        }
    }

    /// Direct nested-loop convolution used as an oracle.
    fn naive_conv(spec: &ConvSpec, wts: &[f64], bias: &[f64], input: &[f64], w: usize, h: usize) -> Vec<f64> {
        let k = spec.kernel as isize;
        let mut out = vec![0.0; spec.out_channels * w * h];
        for co in 0..spec.out_channels {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = bias[co];
                    for ci in 0..spec.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y + (ky - k / 2) * spec.dilation as isize;
                                let sx = x + (kx - k / 2) * spec.dilation as isize;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let wi = ((co * spec.in_channels + ci) * spec.kernel + ky as usize) * spec.kernel + kx as usize;
                                acc += wts[wi] * input[ci * w * h + sy as usize * w + sx as usize];
                            }
                        }
                    }
                    out[co * w * h + y as usize * w + x as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn convolution_matches_naive_loops() {
        let spec = ConvSpec {
            in_channels: 2,
            out_channels: 3,
            kernel: 5,
            dilation: 2,
            activation: Activation::Identity,
            residual: false,
        };
        let mut rng = seeded_rng(1);
        let (w, h) = (9, 7);
        let wts: Vec<f64> = (0..spec.weight_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = vec![0.1, -0.2, 0.3];
        let input: Vec<f64> = (0..2 * w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut out = vec![0.0; 3 * w * h];
        conv_forward(&spec, &wts, &bias, &input, w, h, &mut out);
        let want = naive_conv(&spec, &wts, &bias, &input, w, h);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_model_gives_zero_score() {
        let model = ScoreModel::zeros(Architecture::default(), 1.0).unwrap();
        let img = EnvelopeImage::new(8, 6, (0..48).map(|i| 0.1 + i as f64 * 0.05).collect()).unwrap();
        let s = model.forward(&img).unwrap();
        assert_eq!(s.dims(), (8, 6));
        assert!(s.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_is_deterministic_and_shape_preserving() {
        let model = ScoreModel::init(Architecture::default(), 0.8, 3).unwrap();
        let mut params = model.params().to_vec();
        let mut rng = seeded_rng(2);
        params.iter_mut().for_each(|p| *p += rng.random_range(-0.05..0.05));
        let model = ScoreModel::new(model.arch().clone(), params, 0.8).unwrap();
        let img = EnvelopeImage::new(13, 11, (0..143).map(|i| 0.2 + (i % 7) as f64 * 0.3).collect()).unwrap();
        let a = model.forward(&img).unwrap();
        let b = model.forward(&img).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dims(), (13, 11));
        assert!(model.forward_normalized(&[1.0; 10], 3, 3).is_err());
    }

    #[test]
    fn score_scales_inversely_with_amplitude() {
        let arch = Architecture::default();
        let mut model = ScoreModel::init(arch.clone(), 1.0, 5).unwrap();
        let mut rng = seeded_rng(6);
        model.params_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.05..0.05));
        let img = EnvelopeImage::new(10, 10, (0..100).map(|_| rng.random_range(0.1..2.0)).collect()).unwrap();
        let c = 2.5;
        let scaled = ScoreModel::new(arch, model.params().to_vec(), c).unwrap();
        let s1 = model.forward(&img).unwrap();
        let s2 = scaled.forward(&img.scaled(c).unwrap()).unwrap();
        for (a, b) in s1.values().iter().zip(s2.values()) {
            assert!((a / c - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn backward_matches_finite_differences_of_weighted_score() {
        let arch = toy_arch();
        let mut model = ScoreModel::init(arch, 1.0, 9).unwrap();
        let mut rng = seeded_rng(10);
        model.params_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.3..0.3));
        let (w, h) = (6, 5);
        let y: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.05..2.0)).collect();
        let weights: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |m: &ScoreModel| -> f64 {
            let s = m.forward_normalized(&y, w, h).unwrap();
            s.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let trace = Trace::run(&model, &y, w, h);
        let mut grad = vec![0.0; model.params().len()];
        trace.backward(&model, &weights, &mut grad);
        for i in 0..model.params().len() {
            let mut plus = model.clone();
            plus.params_mut()[i] += 1e-6;
            let mut minus = model.clone();
            minus.params_mut()[i] -= 1e-6;
            let fd = (objective(&plus) - objective(&minus)) / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-6 * fd.abs().max(1.0), "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
