//! Denoising score-matching loss ‖u + σ·s(R + σu)‖² and its gradient.

use crate::error::{Error, Result};
use crate::image::EnvelopeImage;
use crate::par;

use super::net::{ScoreModel, Trace};

/// One perturbed image: noise `u` (same size as the image) and scale σ in
/// amplitude units.
#[derive(Debug, Clone, Copy)]
pub struct Perturbation<'a> {
    pub image: &'a EnvelopeImage,
    pub noise: &'a [f64],
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    /// Mean of the squared residual over all evaluated pixels.
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// A normalized training example (amplitudes already divided by the model
/// scale).
pub(crate) struct Example<'a> {
    pub y: &'a [f64],
    pub width: usize,
    pub height: usize,
    pub noise: &'a [f64],
    pub sigma: f64,
    /// Pixels whose clean amplitude is below `margin`·σ are left out.
    pub margin: f64,
}

impl Example<'_> {
    fn included(&self, y: f64) -> bool {
        y >= self.margin * self.sigma
    }

    fn count(&self) -> usize {
        self.y.iter().filter(|y| self.included(**y)).count()
    }
}

/// Sum of squared residuals for one example and one noise sign, with the
/// gradient of that sum added into `grad`.
fn example_sum(model: &ScoreModel, ex: &Example, sign: f64, grad: &mut [f64]) -> f64 {
    let noisy: Vec<f64> = ex.y.iter().zip(ex.noise).map(|(y, u)| y + sign * ex.sigma * u).collect();
    let trace = Trace::run(model, &noisy, ex.width, ex.height);
    let mut total = 0.0;
    let dscore: Vec<f64> = trace
        .score
        .iter()
        .zip(ex.noise)
        .zip(ex.y)
        .map(|((s, u), y)| {
            if !ex.included(*y) {
                return 0.0;
            }
            let e = sign * u + ex.sigma * s;
            total += e * e;
            2.0 * ex.sigma * e
        })
        .collect();
    trace.backward(model, &dscore, grad);
    total
}

/// Mean loss and gradient over a batch. With `antithetic` every example is
/// also evaluated with −u. Per-example work runs in parallel and is reduced in
/// batch order, so the result does not depend on the thread count.
pub(crate) fn batch_loss(model: &ScoreModel, batch: &[Example], antithetic: bool) -> Result<LossEval> {
    let n_params = model.params().len();
    let parts = par::map_slice(batch, |ex| {
        let mut grad = vec![0.0; n_params];
        let mut sum = example_sum(model, ex, 1.0, &mut grad);
        if antithetic {
            sum += example_sum(model, ex, -1.0, &mut grad);
        }
        (sum, grad)
    });
    let elements: usize = batch.iter().map(Example::count).sum::<usize>() * if antithetic { 2 } else { 1 };
    let mut grad = vec![0.0; n_params];
    let mut sum = 0.0;
    for (i, (s, g)) in parts.into_iter().enumerate() {
        if !s.is_finite() || g.iter().any(|v| !v.is_finite()) {
            let ex = &batch[i];
            return Err(Error::Numeric(format!(
                "non-finite loss on batch item {i} ({}x{}, σ = {:.3e}, partial sum {s})",
                ex.width, ex.height, ex.sigma
            )));
        }
        sum += s;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if elements == 0 {
        return Err(Error::InvalidArgument("no pixel passes the boundary margin".into()));
    }
    let inv = 1.0 / elements as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(LossEval { loss: sum * inv, grad })
}

/// Loss and parameter gradient for a batch of perturbed envelope images.
pub fn ardae_loss(model: &ScoreModel, batch: &[Perturbation], antithetic: bool) -> Result<LossEval> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let normalized: Vec<Vec<f64>> = batch
        .iter()
        .map(|p| {
            if !(p.sigma > 0.0 && p.sigma.is_finite()) {
                return Err(Error::InvalidArgument(format!("σ_a must be > 0, got {}", p.sigma)));
            }
            if p.noise.len() != p.image.data().len() {
                return Err(Error::InvalidArgument("noise and image differ in size".into()));
            }
            Ok(p.image.data().iter().map(|r| r / model.scale()).collect())
        })
        .collect::<Result<_>>()?;
    let examples: Vec<Example> = batch
        .iter()
        .zip(&normalized)
        .map(|(p, y)| Example {
            y,
            width: p.image.width(),
            height: p.image.height(),
            noise: p.noise,
            sigma: p.sigma / model.scale(),
            margin: 0.0,
        })
        .collect();
    batch_loss(model, &examples, antithetic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::seeded_rng;
    use crate::score::arch::{Activation, Architecture, ConvSpec, Head, InputFeature};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn zero_model_loss_is_noise_energy() {
        let model = ScoreModel::zeros(Architecture::default(), 1.0).unwrap();
        let img = EnvelopeImage::new(64, 64, vec![1.0; 4096]).unwrap();
        let u = noise(4096, 1);
        let eval = ardae_loss(&model, &[Perturbation { image: &img, noise: &u, sigma: 1.0 }], false).unwrap();
        let energy = u.iter().map(|v| v * v).sum::<f64>() / 4096.0;
        assert!((eval.loss - energy).abs() < 1e-12);
        // E‖u‖² = 1 per element, standard error √(2/4096)
        assert!((eval.loss - 1.0).abs() < 0.1);
    }

    #[test]
    fn gradient_matches_central_differences_with_residual_layers() {
        let arch = Architecture {
            features: vec![InputFeature::Amplitude, InputFeature::LogAmplitude, InputFeature::Squared],
            layers: vec![
                ConvSpec { in_channels: 3, out_channels: 4, kernel: 3, dilation: 1, activation: Activation::Silu, residual: false },
                ConvSpec { in_channels: 4, out_channels: 4, kernel: 3, dilation: 2, activation: Activation::Softplus, residual: true },
                ConvSpec { in_channels: 4, out_channels: 3, kernel: 3, dilation: 1, activation: Activation::Identity, residual: false },
            ],
            head: Head::AmplitudeBasis,
            eps: 0.05,
        };
        let mut model = ScoreModel::init(arch, 0.9, 4).unwrap();
        let mut rng = seeded_rng(8);
        model.params_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.2..0.2));
        let img = EnvelopeImage::new(7, 6, (0..42).map(|_| rng.random_range(0.1..2.0)).collect()).unwrap();
        let u = noise(42, 3);
        let batch = [Perturbation { image: &img, noise: &u, sigma: 0.3 }];
        let eval = ardae_loss(&model, &batch, true).unwrap();
        for i in 0..model.params().len() {
            let h = 1e-6;
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let fd = (ardae_loss(&plus, &batch, true).unwrap().loss - ardae_loss(&minus, &batch, true).unwrap().loss) / (2.0 * h);
            let g = eval.grad[i];
            assert!((fd - g).abs() <= 1e-4 * fd.abs().max(g.abs()).max(1e-3), "param {i}: fd {fd} vs {g}");
        }
    }

    #[test]
    fn argument_errors() {
        let model = ScoreModel::zeros(Architecture::default(), 1.0).unwrap();
        let img = EnvelopeImage::new(2, 2, vec![1.0; 4]).unwrap();
        let u = vec![0.0; 4];
        assert!(ardae_loss(&model, &[Perturbation { image: &img, noise: &u, sigma: 0.0 }], false).is_err());
        assert!(ardae_loss(&model, &[Perturbation { image: &img, noise: &u[..3], sigma: 1.0 }], false).is_err());
        assert!(ardae_loss(&model, &[], false).is_err());
    }

    #[test]
    fn overflowing_model_reports_numeric_error() {
        let arch = Architecture::default();
        let n = arch.param_count();
        let model = ScoreModel::new(arch, vec![1e200; n], 1.0).unwrap();
        let img = EnvelopeImage::new(4, 4, vec![1.0; 16]).unwrap();
        let u = noise(16, 2);
        let err = ardae_loss(&model, &[Perturbation { image: &img, noise: &u, sigma: 1.0 }], false).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }
}
