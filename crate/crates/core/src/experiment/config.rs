//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::{BuiltinPattern, FilterKind};
use crate::score::{Bandwidth, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory. Not part of the configuration hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub estimators: EstimatorConfig,
    pub score: ScoreConfig,
    pub train: TrainSection,
    pub evaluate: EvaluateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomSource {
    Builtin,
    Directory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub source: PhantomSource,
    pub pattern: BuiltinPattern,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Directory of 8/16-bit binary PGM files (source = "directory").
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub omega: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            source: PhantomSource::Builtin,
            pattern: BuiltinPattern::TwoRegion,
            count: 4,
            width: 64,
            height: 64,
            directory: None,
            omega: 1.0,
        }
    }
}

/// Window sides per classical estimator; an empty list disables it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub moment: Vec<usize>,
    pub mle: Vec<usize>,
    pub mle_exact: Vec<usize>,
    /// Windows compounded into one map; needs at least two.
    pub wmc: Vec<usize>,
    /// Run the score-based pixel estimator.
    pub score: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            moment: vec![9],
            mle: vec![],
            mle_exact: vec![9],
            wmc: vec![9, 11, 13],
            score: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    /// Exact score from the ground-truth phantom.
    Analytic,
    /// Kernel-density score of each image's amplitude histogram.
    Kernel,
    /// Model trained by the `train` stage into the output directory.
    Trained,
    /// Model loaded from `checkpoint`.
    Checkpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaModeConfig {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterConfig {
    None,
    Median,
    Average,
}

impl FilterConfig {
    pub fn kind(self) -> Option<FilterKind> {
        match self {
            FilterConfig::None => None,
            FilterConfig::Median => Some(FilterKind::Median),
            FilterConfig::Average => Some(FilterKind::Average),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub source: ScoreSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub omega_mode: OmegaModeConfig,
    pub omega_window: usize,
    pub filter: FilterConfig,
    pub filter_side: usize,
    pub bandwidth: Bandwidth,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            source: ScoreSource::Analytic,
            checkpoint: None,
            omega_mode: OmegaModeConfig::Global,
            omega_window: 9,
            filter: FilterConfig::Median,
            filter_side: 7,
            bandwidth: Bandwidth::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainData {
    /// Fresh phantoms from seeds disjoint from the evaluation set (builtin
    /// phantoms only).
    HeldOut,
    /// The simulated evaluation envelopes themselves (no ground truth used).
    Envelopes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub data: TrainData,
    /// Number of held-out training images.
    pub images: usize,
    #[serde(flatten)]
    pub model: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            data: TrainData::HeldOut,
            images: 100,
            model: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub psnr_max: f64,
    /// Also write every map as CSV next to its PFM.
    pub csv: bool,
    /// CSV of `subject,reference` rows (reference = fat fraction in %).
    /// When set, a cohort report is produced.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cohort_labels: Option<PathBuf>,
    /// Map label whose valid-pixel mean is the cohort feature.
    pub cohort_estimator: String,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            psnr_max: crate::metrics::DEFAULT_PSNR_MAX,
            csv: false,
            cohort_labels: None,
            cohort_estimator: "score".into(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output: None,
            seed: 0,
            phantom: PhantomConfig::default(),
            estimators: EstimatorConfig::default(),
            score: ScoreConfig::default(),
            train: TrainSection::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

fn check_sides(name: &str, sides: &[usize]) -> Result<()> {
    match sides.iter().find(|s| **s < 3 || **s % 2 == 0) {
        Some(s) => Err(Error::Config(format!("{name}: window side {s} must be odd and >= 3"))),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // serde ignores unknown keys next to a flattened struct
        if let Some(train) = raw.get("train").and_then(|v| v.as_table()) {
            let known = toml::Table::try_from(TrainSection::default()).expect("serializes");
            if let Some(k) = train.keys().find(|k| !known.contains_key(*k)) {
                return Err(Error::Config(format!("unknown key `{k}` in [train]")));
            }
        }
        let cfg: Self = raw.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Canonical TOML without the output directory.
    pub fn canonical_toml(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        toml::to_string(&c).expect("configuration serializes")
    }

    /// SHA-256 of [`Self::canonical_toml`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(self.hash_bytes())
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_toml().as_bytes()).into()
    }

    /// Hash of what determines a trained model: seed, phantoms and training
    /// settings.
    pub fn train_hash(&self) -> [u8; 32] {
        let key = serde_json::to_string(&(self.seed, &self.phantom, &self.train)).expect("serializes");
        Sha256::digest(key.as_bytes()).into()
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory (set `output` or pass --output)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.phantom;
        if !(p.omega > 0.0 && p.omega.is_finite()) {
            return Err(Error::Config(format!("phantom.omega must be > 0, got {}", p.omega)));
        }
        match p.source {
            PhantomSource::Builtin if p.count == 0 || p.width < 2 || p.height < 2 => {
                return Err(Error::Config("builtin phantoms need count >= 1 and size >= 2x2".into()))
            }
            PhantomSource::Directory if p.directory.is_none() => {
                return Err(Error::Config("phantom.source = \"directory\" needs phantom.directory".into()))
            }
            _ => {}
        }
        let e = &self.estimators;
        check_sides("estimators.moment", &e.moment)?;
        check_sides("estimators.mle", &e.mle)?;
        check_sides("estimators.mle_exact", &e.mle_exact)?;
        check_sides("estimators.wmc", &e.wmc)?;
        if e.wmc.len() == 1 {
            return Err(Error::Config("estimators.wmc needs at least two windows".into()));
        }
        let s = &self.score;
        if e.score && s.source == ScoreSource::Checkpoint && s.checkpoint.is_none() {
            return Err(Error::Config("score.source = \"checkpoint\" needs score.checkpoint".into()));
        }
        if s.omega_mode == OmegaModeConfig::Local && (s.omega_window == 0 || s.omega_window % 2 == 0) {
            return Err(Error::Config("score.omega_window must be odd".into()));
        }
        if s.filter != FilterConfig::None {
            check_sides("score.filter_side", &[s.filter_side])?;
        }
        if self.train.data == TrainData::HeldOut && p.source == PhantomSource::Directory {
            return Err(Error::Config("held-out training data needs builtin phantoms; use train.data = \"envelopes\"".into()));
        }
        if self.train.data == TrainData::HeldOut && self.train.images == 0 {
            return Err(Error::Config("train.images must be >= 1".into()));
        }
        if !(self.evaluate.psnr_max > 0.0) {
            return Err(Error::Config("evaluate.psnr_max must be > 0".into()));
        }
        self.train.model.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.canonical_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 7\n[phantom]\npattern = \"checkerboard\"\ncount = 2\n[estimators]\nmoment = [7, 9]\n[train]\nepochs = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.phantom.pattern, BuiltinPattern::Checkerboard);
        assert_eq!(cfg.estimators.moment, vec![7, 9]);
        assert_eq!(cfg.train.model.epochs, 3);
        assert_eq!(cfg.train.model.weight_decay, 0.01);
    }

    #[test]
    fn output_does_not_change_the_hash() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output = Some("/tmp/elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        for text in [
            "[estimators]\nmoment = [8]",
            "[estimators]\nwmc = [9]",
            "[phantom]\nomega = 0.0",
            "[phantom]\nsource = \"directory\"",
            "[score]\nsource = \"checkpoint\"",
            "[train]\nepochs = 0",
            "unknown_key = 1",
            "[train]\nepoch = 3",
            "[phantom]\npattern = \"spiral\"",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }
}
