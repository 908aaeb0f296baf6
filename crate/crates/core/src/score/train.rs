//! Training loop: augmentation, annealed perturbation scale, AdamW.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distribution::{seeded_rng, SeededRng};
use crate::error::{Error, Result};
use crate::image::EnvelopeImage;

use super::arch::Architecture;
use super::loss::{batch_loss, Example};
use super::net::ScoreModel;

/// How σ_a is drawn from the annealed level δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// σ_a = |N(0, δ²)|, one draw per image.
    #[default]
    HalfNormal,
    /// σ_a = δ.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Halve the step size from this epoch on (0-based); a value of at least
    /// `epochs` keeps it fixed.
    pub halve_after: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Square crop side, reduced to the image size when larger.
    pub crop: usize,
    /// Annealing bounds for δ, relative to the std of normalized amplitudes.
    pub delta_max: f64,
    pub delta_min: f64,
    pub sigma_mode: SigmaMode,
    /// Evaluate each noise draw u together with −u.
    pub antithetic: bool,
    /// Leave pixels with clean amplitude below `boundary_margin`·σ_a out of
    /// the loss; 0 keeps every pixel.
    pub boundary_margin: f64,
    /// Random flips, quarter turns and crops.
    pub augment: bool,
    pub seed: u64,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 2e-4,
            halve_after: 25,
            weight_decay: 0.01,
            batch_size: 8,
            crop: 256,
            delta_max: 0.1,
            delta_min: 0.001,
            sigma_mode: SigmaMode::HalfNormal,
            antithetic: true,
            boundary_margin: 0.0,
            augment: true,
            seed: 0,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.boundary_margin >= 0.0 && self.boundary_margin.is_finite()) {
            return bad("boundary_margin must be >= 0");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if self.batch_size < 1 || self.crop < 1 {
            return bad("batch_size and crop must be >= 1");
        }
        if !(self.delta_min > 0.0 && self.delta_max >= self.delta_min && self.delta_max.is_finite()) {
            return bad("need delta_max >= delta_min > 0");
        }
        self.arch.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// δ for `epoch`, decreasing linearly from `delta_max` to `delta_min`.
    pub fn delta(&self, epoch: usize, amplitude_std: f64) -> f64 {
        let t = if self.epochs > 1 {
            epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64
        } else {
            1.0
        };
        amplitude_std * (self.delta_max + (self.delta_min - self.delta_max) * t)
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch >= self.halve_after {
            0.5 * self.learning_rate
        } else {
            self.learning_rate
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n: usize, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * (self.weight_decay * params[i] + mhat / (vhat.sqrt() + self.eps));
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub step_loss: Vec<f64>,
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub epochs: usize,
    pub mean_loss: f64,
    pub delta: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ScoreModel,
    pub history: TrainHistory,
    /// Epochs completed in total, including any resumed ones.
    pub epochs_done: usize,
}

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_STEPS: usize = 100;

/// Mean amplitude and the std of amplitude / mean over the whole dataset.
fn dataset_stats(dataset: &[EnvelopeImage]) -> (f64, f64) {
    let n: usize = dataset.iter().map(|i| i.data().len()).sum();
    let mean = dataset.iter().flat_map(|i| i.data()).sum::<f64>() / n as f64;
    let var = dataset
        .iter()
        .flat_map(|i| i.data())
        .map(|r| (r / mean - 1.0).powi(2))
        .sum::<f64>()
        / n as f64;
    (mean, var.sqrt())
}

/// Crop, flip and rotate one image; returns normalized amplitudes and dims.
fn augmented(img: &EnvelopeImage, scale: f64, crop: usize, augment: bool, rng: &mut SeededRng) -> (Vec<f64>, usize, usize) {
    let (w, h) = img.dims();
    let (cw, ch) = (crop.min(w), crop.min(h));
    let (ox, oy) = if augment {
        (rng.random_range(0..=w - cw), rng.random_range(0..=h - ch))
    } else {
        ((w - cw) / 2, (h - ch) / 2)
    };
    let flip = augment && rng.random_bool(0.5);
    let turns = match (augment, cw == ch) {
        (false, _) => 0,
        (true, true) => rng.random_range(0..4u8),
        (true, false) => 2 * rng.random_range(0..2u8),
    };
    let (ow, oh) = if turns % 2 == 1 { (ch, cw) } else { (cw, ch) };
    let mut out = Vec::with_capacity(cw * ch);
    for y in 0..oh {
        for x in 0..ow {
            // map output (x, y) back into the crop
            let (mut sx, sy) = match turns {
                0 => (x, y),
                1 => (y, cw - 1 - x),
                2 => (cw - 1 - x, ch - 1 - y),
                _ => (ch - 1 - y, x),
            };
            if flip {
                sx = cw - 1 - sx;
            }
            out.push(img.get(ox + sx, oy + sy) / scale);
        }
    }
    (out, ow, oh)
}

pub fn train(dataset: &[EnvelopeImage], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, cfg, None, &mut |_| {})
}

/// Train from scratch, or continue `resume = (model, epochs already done)`.
/// `observe` is called after every epoch.
pub fn train_with(
    dataset: &[EnvelopeImage],
    cfg: &TrainConfig,
    resume: Option<(ScoreModel, usize)>,
    observe: &mut dyn FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let (mean, std) = dataset_stats(dataset);
    if !(mean > 0.0) {
        return Err(Error::InvalidArgument("training images are all zero".into()));
    }
    let (mut model, start) = match resume {
        Some((m, done)) => {
            if m.arch() != &cfg.arch {
                return Err(Error::Config("checkpoint architecture differs from the configuration".into()));
            }
            (m, done)
        }
        None => (ScoreModel::init(cfg.arch.clone(), mean, cfg.seed)?, 0),
    };
    let scale = model.scale();
    let mut opt = AdamW::new(model.params().len(), cfg.weight_decay);
    let mut rng = seeded_rng(cfg.seed ^ 0x5eed_0f_7a1e);
    let mut history = TrainHistory::default();
    let mut initial: Option<f64> = None;
    let mut above = 0usize;
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in start..cfg.epochs {
        let delta = cfg.delta(epoch, std);
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut prepared = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (y, w, h) = augmented(&dataset[i], scale, cfg.crop, cfg.augment, &mut rng);
                let noise: Vec<f64> = (0..y.len()).map(|_| rng.sample(StandardNormal)).collect();
                let sigma = match cfg.sigma_mode {
                    SigmaMode::HalfNormal => delta * rng.sample::<f64, _>(StandardNormal).abs(),
                    SigmaMode::Fixed => delta,
                }
                .max(f64::MIN_POSITIVE);
                prepared.push((y, w, h, noise, sigma));
            }
            let batch: Vec<Example> = prepared
                .iter()
                .map(|(y, w, h, noise, sigma)| Example {
                    y,
                    width: *w,
                    height: *h,
                    noise,
                    sigma: *sigma,
                    margin: cfg.boundary_margin,
                })
                .collect();
            let eval = batch_loss(&model, &batch, cfg.antithetic)?;
            let first = *initial.get_or_insert(eval.loss);
            if eval.loss > DIVERGENCE_FACTOR * first {
                above += 1;
                if above >= DIVERGENCE_STEPS {
                    return Err(Error::TrainingFailure(format!(
                        "loss stayed above {DIVERGENCE_FACTOR}x its initial value ({first:.4}) for {DIVERGENCE_STEPS} steps; last {:.4} at epoch {epoch}",
                        eval.loss
                    )));
                }
            } else {
                above = 0;
            }
            opt.step(model.params_mut(), &eval.grad, lr);
            history.step_loss.push(eval.loss);
            epoch_sum += eval.loss;
            steps += 1;
        }
        let mean_loss = epoch_sum / steps as f64;
        history.epoch_loss.push(mean_loss);
        observe(&EpochReport {
            epoch,
            epochs: cfg.epochs,
            mean_loss,
            delta,
            learning_rate: lr,
        });
    }
    Ok(TrainOutcome {
        model,
        history,
        epochs_done: cfg.epochs.max(start),
    })
}
