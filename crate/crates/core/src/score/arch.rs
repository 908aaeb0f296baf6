//! Architecture descriptor for the convolutional score model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Tanh,
    Silu,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Silu => 2,
            Activation::Softplus => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Activation::Identity,
            1 => Activation::Tanh,
            2 => Activation::Silu,
            3 => Activation::Softplus,
            _ => return None,
        })
    }
}

/// Per-pixel input channels computed from the (normalized, possibly noisy)
/// amplitude y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFeature {
    Amplitude,
    /// ½·ln(y² + ε²)
    LogAmplitude,
    Squared,
}

impl InputFeature {
    #[inline]
    pub fn eval(self, y: f64, eps: f64) -> f64 {
        match self {
            InputFeature::Amplitude => y,
            InputFeature::LogAmplitude => 0.5 * (y * y + eps * eps).ln(),
            InputFeature::Squared => y * y,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            InputFeature::Amplitude => 0,
            InputFeature::LogAmplitude => 1,
            InputFeature::Squared => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => InputFeature::Amplitude,
            1 => InputFeature::LogAmplitude,
            2 => InputFeature::Squared,
            _ => return None,
        })
    }
}

/// How the last layer's channels become a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// One channel, used as the score directly.
    Direct,
    /// Three channels (a, b, c): s = a·y/(y² + ε²) + b + c·y.
    AmplitudeBasis,
}

impl Head {
    pub fn channels(self) -> usize {
        match self {
            Head::Direct => 1,
            Head::AmplitudeBasis => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Head::Direct => 0,
            Head::AmplitudeBasis => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Head::Direct,
            1 => Head::AmplitudeBasis,
            _ => return None,
        })
    }
}

/// One same-padded 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub activation: Activation,
    /// Add the layer input to its output (requires in == out channels).
    pub residual: bool,
}

impl ConvSpec {
    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }

    pub fn reach(&self) -> usize {
        self.dilation * (self.kernel / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub features: Vec<InputFeature>,
    pub layers: Vec<ConvSpec>,
    pub head: Head,
    /// Softening ε in the log feature and the basis head (normalized units).
    pub eps: f64,
}

impl Architecture {
    /// One hidden layer of `width` channels per entry of `dilations`, all but
    /// the first residual, followed by the basis head.
    pub fn compact(width: usize, dilations: &[usize]) -> Self {
        let features = vec![InputFeature::Amplitude, InputFeature::LogAmplitude, InputFeature::Squared];
        let mut layers = Vec::new();
        let mut cin = features.len();
        for (i, &d) in dilations.iter().enumerate() {
            layers.push(ConvSpec {
                in_channels: cin,
                out_channels: width,
                kernel: 3,
                dilation: d,
                activation: Activation::Silu,
                residual: i > 0,
            });
            cin = width;
        }
        let head = Head::AmplitudeBasis;
        layers.push(ConvSpec {
            in_channels: cin,
            out_channels: head.channels(),
            kernel: 3,
            dilation: 1,
            activation: Activation::Identity,
            residual: false,
        });
        Self {
            features,
            layers,
            head,
            eps: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("architecture: {msg}")));
        if self.features.is_empty() {
            return bad("no input features".into());
        }
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        let mut cin = self.features.len();
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_channels != cin {
                return bad(format!("layer {i} expects {} channels, receives {cin}", l.in_channels));
            }
            if l.kernel % 2 == 0 || l.kernel == 0 || l.dilation == 0 || l.out_channels == 0 {
                return bad(format!("layer {i} needs an odd kernel, dilation >= 1 and outputs"));
            }
            if l.residual && l.in_channels != l.out_channels {
                return bad(format!("residual layer {i} changes the channel count"));
            }
            cin = l.out_channels;
        }
        if cin != self.head.channels() {
            return bad(format!("last layer has {cin} channels, head needs {}", self.head.channels()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvSpec::param_count).sum()
    }

    /// Receptive-field radius in pixels.
    pub fn reach(&self) -> usize {
        self.layers.iter().map(ConvSpec::reach).sum()
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::compact(16, &[1, 2, 4, 2, 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_consistent() {
        let a = Architecture::default();
        a.validate().unwrap();
        // 3→16, four 16→16, 16→3, all 3×3
        assert_eq!(a.param_count(), (3 * 16 * 9 + 16) + 4 * (16 * 16 * 9 + 16) + (16 * 3 * 9 + 3));
        assert_eq!(a.reach(), 11);
    }

    #[test]
    fn validation_catches_mismatches() {
        let mut a = Architecture::default();
        a.layers[1].in_channels = 7;
        assert!(a.validate().is_err());
        let mut b = Architecture::default();
        b.head = Head::Direct;
        assert!(b.validate().is_err());
    }

    #[test]
    fn activation_derivatives() {
        for act in [Activation::Identity, Activation::Tanh, Activation::Silu, Activation::Softplus] {
            for &z in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
                let h = 1e-6;
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                assert!((fd - act.derivative(z)).abs() < 1e-8, "{act:?} at {z}");
            }
            assert_eq!(Activation::from_code(act.code()), Some(act));
        }
    }
}
