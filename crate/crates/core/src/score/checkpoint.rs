//! Versioned little-endian checkpoint files.
//!
//! ```text
//! magic        8 bytes  "NKSCORE\0"
//! version      u32
//! features     u32 count, then one u8 code each
//! layers       u32 count, then per layer:
//!                in u32, out u32, kernel u32, dilation u32,
//!                activation u8, residual u8
//! head         u8
//! eps          f64
//! scale        f64
//! params       u64 count, then f64 each
//! epoch        u32
//! seed         u64
//! config hash  32 bytes
//! losses       u64 count, then f64 each
//! ```

use std::path::Path;

use crate::error::{Error, Result};

use super::arch::{Activation, Architecture, ConvSpec, Head, InputFeature};
use super::net::ScoreModel;

pub const MAGIC: &[u8; 8] = b"NKSCORE\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ScoreModel,
    /// Epochs completed.
    pub epoch: usize,
    pub seed: u64,
    /// SHA-256 of the training configuration.
    pub config_hash: [u8; 32],
    /// Loss after every optimizer step.
    pub losses: Vec<f64>,
}

fn u32_of(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("{what} {n} does not fit the checkpoint format")))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let arch = self.model.arch();
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&u32_of(arch.features.len(), "feature count")?.to_le_bytes());
        b.extend(arch.features.iter().map(|f| f.code()));
        b.extend_from_slice(&u32_of(arch.layers.len(), "layer count")?.to_le_bytes());
        for l in &arch.layers {
            for v in [l.in_channels, l.out_channels, l.kernel, l.dilation] {
                b.extend_from_slice(&u32_of(v, "layer size")?.to_le_bytes());
            }
            b.push(l.activation.code());
            b.push(l.residual as u8);
        }
        b.push(arch.head.code());
        b.extend_from_slice(&arch.eps.to_le_bytes());
        b.extend_from_slice(&self.model.scale().to_le_bytes());
        b.extend_from_slice(&(self.model.params().len() as u64).to_le_bytes());
        for p in self.model.params() {
            b.extend_from_slice(&p.to_le_bytes());
        }
        b.extend_from_slice(&u32_of(self.epoch, "epoch")?.to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&self.config_hash);
        b.extend_from_slice(&(self.losses.len() as u64).to_le_bytes());
        for l in &self.losses {
            b.extend_from_slice(&l.to_le_bytes());
        }
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a score checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: VERSION,
            });
        }
        let nf = r.count(1)?;
        let features = (0..nf)
            .map(|_| InputFeature::from_code(r.u8()?).ok_or_else(|| Error::Format("unknown input feature".into())))
            .collect::<Result<Vec<_>>>()?;
        let nl = r.count(18)?;
        let mut layers = Vec::with_capacity(nl);
        for _ in 0..nl {
            let (in_channels, out_channels, kernel, dilation) =
                (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
            let activation = Activation::from_code(r.u8()?).ok_or_else(|| Error::Format("unknown activation".into()))?;
            let residual = match r.u8()? {
                0 => false,
                1 => true,
                _ => return Err(Error::Format("bad residual flag".into())),
            };
            layers.push(ConvSpec {
                in_channels,
                out_channels,
                kernel,
                dilation,
                activation,
                residual,
            });
        }
        let head = Head::from_code(r.u8()?).ok_or_else(|| Error::Format("unknown head".into()))?;
        let eps = r.f64()?;
        let scale = r.f64()?;
        let arch = Architecture {
            features,
            layers,
            head,
            eps,
        };
        arch.validate().map_err(|e| Error::Format(e.to_string()))?;
        let np = r.count64(8)?;
        if np != arch.param_count() {
            return Err(Error::Format(format!("{np} parameters stored, architecture needs {}", arch.param_count())));
        }
        let params = (0..np).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let model = ScoreModel::new(arch, params, scale).map_err(|e| Error::Format(e.to_string()))?;
        let epoch = r.u32()? as usize;
        let seed = r.u64()?;
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let nloss = r.count64(8)?;
        let losses = (0..nloss).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.at != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        Ok(Self {
            model,
            epoch,
            seed,
            config_hash,
            losses,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("checkpoint truncated at byte {} (needed {n} more)", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// A u32 element count, checked against the bytes left.
    fn count(&mut self, elem: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        self.check_fits(n, elem)
    }

    fn count64(&mut self, elem: usize) -> Result<usize> {
        let n = usize::try_from(self.u64()?).map_err(|_| Error::Format("count overflows".into()))?;
        self.check_fits(n, elem)
    }

    fn check_fits(&self, n: usize, elem: usize) -> Result<usize> {
        match n.checked_mul(elem) {
            Some(len) if len <= self.bytes.len() - self.at => Ok(n),
            _ => Err(Error::Format(format!("count {n} exceeds the remaining checkpoint bytes"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::EnvelopeImage;

    fn sample_checkpoint() -> Checkpoint {
        let model = ScoreModel::init(Architecture::compact(4, &[1, 2]), 0.73, 11).unwrap();
        let mut params = model.params().to_vec();
        params.iter_mut().enumerate().for_each(|(i, p)| *p += (i as f64 * 0.013).sin() * 1e-3);
        Checkpoint {
            model: ScoreModel::new(model.arch().clone(), params, 0.73).unwrap(),
            epoch: 7,
            seed: 99,
            config_hash: [0xab; 32],
            losses: vec![1.2, 1.1, 1.05],
        }
    }

    #[test]
    fn byte_exact_round_trip() {
        let ck = sample_checkpoint();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let img = EnvelopeImage::new(9, 9, (0..81).map(|i| 0.1 + i as f64 * 0.02).collect()).unwrap();
        assert_eq!(ck.model.forward(&img).unwrap(), back.model.forward(&img).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = sample_checkpoint();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert!(matches!(Checkpoint::load(&dir.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = sample_checkpoint().to_bytes().unwrap();
        for cut in [0, 5, 11, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Format(_))));
    }

    #[test]
    fn version_bump_is_rejected() {
        let mut bytes = sample_checkpoint().to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        match Checkpoint::from_bytes(&bytes) {
            Err(Error::UnsupportedVersion { found: 2, expected: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corrupt_fields_are_format_errors() {
        let mut bytes = sample_checkpoint().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
        let mut bytes = sample_checkpoint().to_bytes().unwrap();
        // first feature code
        bytes[16] = 200;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }
}
