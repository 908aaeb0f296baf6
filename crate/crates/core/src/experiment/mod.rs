//! Reproducible experiment stages: simulate, train, estimate, evaluate and
//! the full `compare` pipeline. Every stage rewrites `manifest.json` with the
//! SHA-256 of each file in the output directory; wall-clock timings go to
//! `timings.json`, which the manifest leaves out.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, OmegaField, ParamMap, ScoreField};
use crate::imaging::{self, OmegaMode};
use crate::io::{self, FileMeta, RasterKind};
use crate::metrics::{self, CohortRecord, Comparison};
use crate::par;
use crate::score::{self, Checkpoint, EpochReport, ScoreModel};
use crate::window::{self, ClampRange, WindowEstimator, WindowSpec};

pub use config::{
    EstimatorConfig, EvaluateConfig, ExperimentConfig, FilterConfig, OmegaModeConfig, PhantomConfig, PhantomSource,
    ScoreConfig, ScoreSource, TrainData, TrainSection,
};

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";
pub const CHECKPOINT: &str = "model/score.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit: String,
    pub config_hash: String,
    /// Relative path → SHA-256 (hex).
    pub files: BTreeMap<String, String>,
}

/// What a stage did, for the command-line report.
#[derive(Debug, Clone, Default)]
pub struct StageReport {
    pub lines: Vec<String>,
}

impl StageReport {
    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

/// splitmix64 of the run seed, a stage tag and an index.
fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TAG_PHANTOM: u64 = 1;
const TAG_NOISE: u64 = 2;
const TAG_TRAIN_PHANTOM: u64 = 3;
const TAG_TRAIN_NOISE: u64 = 4;

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            root: cfg.output_dir()?.to_path_buf(),
        })
    }

    fn phantom(&self, id: &str) -> PathBuf {
        self.root.join("phantoms").join(format!("{id}.pfm"))
    }

    fn envelope(&self, id: &str) -> PathBuf {
        self.root.join("envelopes").join(format!("{id}.pfm"))
    }

    fn score(&self, id: &str) -> PathBuf {
        self.root.join("scores").join(format!("{id}.pfm"))
    }

    fn map(&self, id: &str, label: &str) -> PathBuf {
        self.root.join("maps").join(id).join(format!("{label}.pfm"))
    }

    fn checkpoint(&self) -> PathBuf {
        self.root.join(CHECKPOINT)
    }

    fn ensure(&self, sub: &str) -> Result<PathBuf> {
        let dir = self.root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn meta(cfg: &ExperimentConfig, kind: RasterKind, source: &str) -> FileMeta {
    let mut m = FileMeta::new(kind);
    m.config_hash = Some(cfg.hash());
    m.source = Some(source.to_string());
    m
}

/// Ground-truth phantoms of the evaluation set, by id.
fn phantoms(cfg: &ExperimentConfig) -> Result<Vec<(String, ParamMap)>> {
    let p = &cfg.phantom;
    match p.source {
        PhantomSource::Builtin => (0..p.count)
            .map(|i| {
                let seed = derive_seed(cfg.seed, TAG_PHANTOM, i as u64);
                let map = imaging::builtin_phantom(p.pattern, p.width, p.height, seed)?;
                Ok((format!("img{i:03}"), map))
            })
            .collect(),
        PhantomSource::Directory => {
            let dir = p.directory.as_deref().expect("validated");
            if !dir.is_dir() {
                return Err(Error::Config(format!("phantom directory {} does not exist", dir.display())));
            }
            let files = io::list_pgm(dir)?;
            if files.is_empty() {
                return Err(Error::Config(format!("no .pgm files in {}", dir.display())));
            }
            files
                .iter()
                .map(|f| {
                    let g = io::read_pgm(f)?;
                    let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    Ok((id, imaging::phantom_from_gray(g.width, g.height, &g.levels)?))
                })
                .collect()
        }
    }
}

/// Ids of the simulated envelopes present in the output directory.
fn envelope_ids(layout: &Layout) -> Result<Vec<String>> {
    let dir = layout.root.join("envelopes");
    if !dir.is_dir() {
        return Err(Error::MissingArtifacts(vec![dir]));
    }
    let mut ids: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pfm"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(Error::MissingArtifacts(vec![dir]));
    }
    Ok(ids)
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<StageReport> {
    let layout = Layout::new(cfg)?;
    let started = Instant::now();
    layout.ensure("phantoms")?;
    layout.ensure("envelopes")?;
    let set = phantoms(cfg)?;
    let envelopes = par::map_range(set.len(), |i| {
        imaging::synthesize_envelope(&set[i].1, cfg.phantom.omega, derive_seed(cfg.seed, TAG_NOISE, i as u64))
    });
    let mut report = StageReport::default();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for ((id, gt), env) in set.iter().zip(envelopes) {
        let env = env?;
        io::write_map(&layout.phantom(id), gt, &meta(cfg, RasterKind::ParamMap, id))?;
        io::write_envelope(&layout.envelope(id), &env, &meta(cfg, RasterKind::Envelope, id))?;
        for v in gt.values() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    report.say(format!("simulated {} phantom/envelope pairs (m range {lo:.3}..{hi:.3}, Ω = {})", set.len(), cfg.phantom.omega));
    finish(cfg, &layout, "simulate", started)?;
    Ok(report)
}

/// Envelopes the score model is trained on.
fn training_set(cfg: &ExperimentConfig, layout: &Layout) -> Result<Vec<EnvelopeImage>> {
    match cfg.train.data {
        TrainData::Envelopes => envelope_ids(layout)?
            .iter()
            .map(|id| io::read_envelope(&layout.envelope(id)))
            .collect(),
        TrainData::HeldOut => {
            let p = &cfg.phantom;
            par::map_range(cfg.train.images, |i| {
                let gt = imaging::builtin_phantom(p.pattern, p.width, p.height, derive_seed(cfg.seed, TAG_TRAIN_PHANTOM, i as u64))?;
                imaging::synthesize_envelope(&gt, p.omega, derive_seed(cfg.seed, TAG_TRAIN_NOISE, i as u64))
            })
            .into_iter()
            .collect()
        }
    }
}

/// Train the score model into `model/score.ckpt`. An existing checkpoint is
/// resumed when it was produced by the same training configuration and
/// refused otherwise.
pub fn cmd_train(cfg: &ExperimentConfig, observe: &mut dyn FnMut(&EpochReport)) -> Result<StageReport> {
    let layout = Layout::new(cfg)?;
    let started = Instant::now();
    let hash = cfg.train_hash();
    let path = layout.checkpoint();
    let mut report = StageReport::default();
    let mut losses = Vec::new();
    let resume = if path.exists() {
        let ck = Checkpoint::load(&path)?;
        if ck.config_hash != hash {
            return Err(Error::Config(format!(
                "{} was trained with a different configuration (hash {}); refusing to resume",
                path.display(),
                hex::encode(ck.config_hash)
            )));
        }
        if ck.epoch >= cfg.train.model.epochs {
            report.say(format!("checkpoint already complete ({} epochs)", ck.epoch));
            finish(cfg, &layout, "train", started)?;
            return Ok(report);
        }
        report.say(format!("resuming from epoch {}", ck.epoch));
        losses = ck.losses;
        Some((ck.model, ck.epoch))
    } else {
        None
    };
    let data = training_set(cfg, &layout)?;
    let outcome = score::train_with(&data, &cfg.train.model, resume, observe)?;
    losses.extend_from_slice(&outcome.history.step_loss);
    let ck = Checkpoint {
        model: outcome.model,
        epoch: outcome.epochs_done,
        seed: cfg.train.model.seed,
        config_hash: hash,
        losses,
    };
    layout.ensure("model")?;
    ck.save(&path)?;
    let mut csv = format!("# config_hash={}\nstep,loss\n", cfg.hash());
    for (i, l) in ck.losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write_text(&layout.root.join("model/loss.csv"), &csv)?;
    report.say(format!(
        "trained {} epochs on {} images ({} steps), final loss {:.6}",
        ck.epoch,
        data.len(),
        ck.losses.len(),
        ck.losses.last().copied().unwrap_or(f64::NAN)
    ));
    finish(cfg, &layout, "train", started)?;
    Ok(report)
}

/// One configured map: file label and how to compute it.
#[derive(Debug, Clone)]
enum Method {
    Window(WindowEstimator, usize),
    Compound(Vec<usize>),
    Score,
}

fn methods(e: &EstimatorConfig) -> Vec<(String, Method)> {
    let mut out = Vec::new();
    for (est, sides) in [
        (WindowEstimator::Moment, &e.moment),
        (WindowEstimator::MleTaylor, &e.mle),
        (WindowEstimator::MleExact, &e.mle_exact),
    ] {
        for &s in sides {
            out.push((format!("{}-{s}", est.label()), Method::Window(est, s)));
        }
    }
    if e.wmc.len() >= 2 {
        let tag: Vec<String> = e.wmc.iter().map(|s| s.to_string()).collect();
        out.push((format!("wmc-{}", tag.join("-")), Method::Compound(e.wmc.clone())));
    }
    if e.score {
        out.push((imaging::estimator::METHOD_LABEL.to_string(), Method::Score));
    }
    out
}

/// Labels of every map `estimate` writes for this configuration.
pub fn map_labels(cfg: &ExperimentConfig) -> Vec<String> {
    methods(&cfg.estimators).into_iter().map(|(l, _)| l).collect()
}

enum ScoreProvider {
    Analytic,
    Kernel(score::Bandwidth),
    Model(Box<ScoreModel>),
}

fn score_provider(cfg: &ExperimentConfig, layout: &Layout) -> Result<Option<ScoreProvider>> {
    if !cfg.estimators.score {
        return Ok(None);
    }
    let load = |path: &Path, hint: &str| -> Result<ScoreProvider> {
        if !path.exists() {
            return Err(Error::Config(format!("score checkpoint {} not found{hint}", path.display())));
        }
        Ok(ScoreProvider::Model(Box::new(Checkpoint::load(path)?.model)))
    };
    Ok(Some(match cfg.score.source {
        ScoreSource::Analytic => ScoreProvider::Analytic,
        ScoreSource::Kernel => ScoreProvider::Kernel(cfg.score.bandwidth),
        ScoreSource::Trained => load(&layout.checkpoint(), " (run `train` first)")?,
        ScoreSource::Checkpoint => load(cfg.score.checkpoint.as_deref().expect("validated"), "")?,
    }))
}

fn score_field(provider: &ScoreProvider, img: &EnvelopeImage, gt: Option<&ParamMap>, omega: &OmegaField) -> Result<ScoreField> {
    match provider {
        // exact score under Nakagami(m(x), Ω̂(x))
        ScoreProvider::Analytic => imaging::analytic_score_field(img, gt.expect("loaded for analytic scores"), omega),
        ScoreProvider::Kernel(bw) => {
            let floor = imaging::estimator::AMPLITUDE_FLOOR * img.max();
            let r: Vec<f64> = img.data().iter().map(|v| v.max(floor)).collect();
            let s = score::kernel_score(&r, &r, *bw)?;
            ScoreField::new(img.width(), img.height(), s)
        }
        ScoreProvider::Model(m) => m.forward(img),
    }
}

fn run_method(
    cfg: &ExperimentConfig,
    method: &Method,
    img: &EnvelopeImage,
    score: Option<(&ScoreField, &OmegaField)>,
) -> Result<ParamMap> {
    let clamp = ClampRange::default();
    match method {
        Method::Window(est, side) => window::sliding_map(img, &WindowSpec::dense(*side)?, *est, clamp),
        Method::Compound(sides) => {
            let specs = sides.iter().map(|s| WindowSpec::dense(*s)).collect::<Result<Vec<_>>>()?;
            window::wmc_map(img, &specs, clamp)
        }
        Method::Score => {
            let (s, omega) = score.expect("score field computed");
            let raw = imaging::score_map(img, s, omega, clamp)?;
            match cfg.score.filter.kind() {
                Some(kind) => imaging::low_pass(&raw, kind, cfg.score.filter_side),
                None => Ok(raw),
            }
        }
    }
}

pub fn cmd_estimate(cfg: &ExperimentConfig) -> Result<StageReport> {
    let layout = Layout::new(cfg)?;
    let started = Instant::now();
    let ids = envelope_ids(&layout)?;
    let provider = score_provider(cfg, &layout)?;
    let needs_gt = matches!(provider, Some(ScoreProvider::Analytic));
    if needs_gt {
        let missing: Vec<PathBuf> = ids.iter().map(|id| layout.phantom(id)).filter(|p| !p.exists()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingArtifacts(missing));
        }
    }
    let methods = methods(&cfg.estimators);
    let omega_mode = match cfg.score.omega_mode {
        OmegaModeConfig::Global => OmegaMode::Global,
        OmegaModeConfig::Local => OmegaMode::Local(cfg.score.omega_window),
    };
    let mut report = StageReport::default();
    let mut written = 0;
    for id in &ids {
        let img = io::read_envelope(&layout.envelope(id))?;
        let score = match &provider {
            Some(p) => {
                let gt = if needs_gt { Some(io::read_map(&layout.phantom(id))?) } else { None };
                let omega = imaging::estimate_omega(&img, omega_mode)?;
                let s = score_field(p, &img, gt.as_ref(), &omega)?;
                Some((s, omega))
            }
            None => None,
        };
        let maps = par::map_slice(&methods, |(_, m)| run_method(cfg, m, &img, score.as_ref().map(|(s, o)| (s, o))));
        if let Some((s, _)) = &score {
            layout.ensure("scores")?;
            io::write_score(&layout.score(id), s, &meta(cfg, RasterKind::Score, id))?;
        }
        layout.ensure(&format!("maps/{id}"))?;
        for ((label, _), map) in methods.iter().zip(maps) {
            let map = map?;
            let path = layout.map(id, label);
            io::write_map(&path, &map, &meta(cfg, RasterKind::ParamMap, id))?;
            if cfg.evaluate.csv {
                write_text(&path.with_extension("csv"), &io::map_csv(&map))?;
            }
            written += 1;
        }
    }
    report.say(format!("wrote {written} maps for {} images ({} methods)", ids.len(), methods.len()));
    finish(cfg, &layout, "estimate", started)?;
    Ok(report)
}

/// Per-method summary row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub coverage: f64,
    pub images: usize,
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Read `subject,reference` rows; `#` lines and a `subject,...` header are
/// skipped.
fn read_labels(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("subject") {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(s), Some(v)) = (parts.next(), parts.next()) else {
            return Err(Error::Format(format!("{}:{}: expected subject,reference", path.display(), n + 1)));
        };
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("{}:{}: bad reference {v:?}", path.display(), n + 1)))?;
        out.push((s.trim().to_string(), v));
    }
    Ok(out)
}

pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<(StageReport, Vec<TableRow>)> {
    let layout = Layout::new(cfg)?;
    let started = Instant::now();
    let ids = envelope_ids(&layout)?;
    let labels = map_labels(cfg);
    let mut missing = Vec::new();
    for id in &ids {
        if !layout.phantom(id).exists() {
            missing.push(layout.phantom(id));
        }
        for l in &labels {
            if !layout.map(id, l).exists() {
                missing.push(layout.map(id, l));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let max = cfg.evaluate.psnr_max;
    let mut per_image = format!("# config_hash={}\n# psnr_max={max}\nimage,method,psnr,rmse,coverage\n", cfg.hash());
    let mut scores: BTreeMap<&str, Vec<metrics::MapScore>> = BTreeMap::new();
    let mut features: BTreeMap<String, f64> = BTreeMap::new();
    for id in &ids {
        let gt = io::read_map(&layout.phantom(id))?;
        for l in &labels {
            let map = io::read_map(&layout.map(id, l))?;
            let s = metrics::compare_maps(&map, &gt, max)?;
            per_image.push_str(&format!("{id},{l},{:.6},{:.6},{:.6}\n", s.psnr, s.rmse, s.coverage));
            scores.entry(l.as_str()).or_default().push(s);
            if *l == cfg.evaluate.cohort_estimator {
                features.insert(id.clone(), map.valid_mean());
            }
        }
    }
    let mut rows = Vec::new();
    for l in &labels {
        let s = &scores[l.as_str()];
        let (pm, ps) = mean_std(&s.iter().map(|v| v.psnr).collect::<Vec<_>>());
        let (rm, rs) = mean_std(&s.iter().map(|v| v.rmse).collect::<Vec<_>>());
        let (cov, _) = mean_std(&s.iter().map(|v| v.coverage).collect::<Vec<_>>());
        rows.push(TableRow {
            method: l.clone(),
            psnr_mean: pm,
            psnr_std: ps,
            rmse_mean: rm,
            rmse_std: rs,
            coverage: cov,
            images: s.len(),
        });
    }
    let mut table_csv = format!("# config_hash={}\nmethod,psnr_mean,psnr_std,rmse_mean,rmse_std,coverage,images\n", cfg.hash());
    let mut table_txt = format!("{:<24} {:>16} {:>16} {:>9}\n", "Method", "PSNR (dB)", "RMSE", "coverage");
    for r in &rows {
        table_csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.method, r.psnr_mean, r.psnr_std, r.rmse_mean, r.rmse_std, r.coverage, r.images
        ));
        table_txt.push_str(&format!(
            "{:<24} {:>8.2} ± {:<5.2} {:>7.4} ± {:<6.4} {:>9.3}\n",
            r.method, r.psnr_mean, r.psnr_std, r.rmse_mean, r.rmse_std, r.coverage
        ));
    }
    let eval_dir = layout.ensure("evaluation")?;
    write_text(&eval_dir.join("metrics.csv"), &per_image)?;
    write_text(&eval_dir.join("table.csv"), &table_csv)?;
    write_text(&eval_dir.join("table.txt"), &table_txt)?;
    let mut report = StageReport::default();
    report.lines.extend(table_txt.lines().map(str::to_string));

    if let Some(path) = &cfg.evaluate.cohort_labels {
        if !path.exists() {
            return Err(Error::Config(format!("cohort labels {} not found", path.display())));
        }
        let records: Vec<CohortRecord> = read_labels(path)?
            .into_iter()
            .filter_map(|(subject, reference)| {
                features.get(&subject).map(|f| CohortRecord::new(subject.clone(), *f, reference))
            })
            .collect();
        if records.is_empty() {
            return Err(Error::Config(format!(
                "no labelled subject matches an image with a `{}` map",
                cfg.evaluate.cohort_estimator
            )));
        }
        let cohort = metrics::cohort_report(&records, &Comparison::ALL)?;
        write_text(&eval_dir.join("cohort_roc.csv"), &cohort.roc_csv())?;
        write_text(&eval_dir.join("cohort_box.csv"), &cohort.box_csv())?;
        write_text(&eval_dir.join("cohort_summary.txt"), &cohort.summary_text())?;
        report.say(format!("cohort report over {} subjects", records.len()));
    }
    finish(cfg, &layout, "evaluate", started)?;
    Ok((report, rows))
}

/// simulate → train (when the score source is `trained`) → estimate →
/// evaluate.
pub fn cmd_compare(cfg: &ExperimentConfig, observe: &mut dyn FnMut(&EpochReport)) -> Result<(StageReport, Vec<TableRow>)> {
    let mut report = cmd_simulate(cfg)?;
    if cfg.estimators.score && cfg.score.source == ScoreSource::Trained {
        report.lines.extend(cmd_train(cfg, observe)?.lines);
    }
    report.lines.extend(cmd_estimate(cfg)?.lines);
    let (eval, rows) = cmd_evaluate(cfg)?;
    report.lines.extend(eval.lines);
    Ok((report, rows))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_path_buf());
        }
    }
    Ok(())
}

/// Checksums of every file under `root` except the manifest and timings.
pub fn build_manifest(cfg: &ExperimentConfig, root: &Path) -> Result<RunManifest> {
    let mut rels = Vec::new();
    collect_files(root, root, &mut rels)?;
    let mut files = BTreeMap::new();
    for rel in rels {
        let key = rel.to_string_lossy().replace('\\', "/");
        if key == MANIFEST || key == TIMINGS {
            continue;
        }
        files.insert(key, sha256_file(&root.join(&rel))?);
    }
    Ok(RunManifest {
        toolkit: io::producer(),
        config_hash: cfg.hash(),
        files,
    })
}

fn finish(cfg: &ExperimentConfig, layout: &Layout, stage: &str, started: Instant) -> Result<()> {
    write_text(&layout.root.join("config.toml"), &cfg.canonical_toml())?;
    let timings_path = layout.root.join(TIMINGS);
    let mut timings: BTreeMap<String, f64> = fs::read(&timings_path)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default();
    timings.insert(stage.to_string(), started.elapsed().as_secs_f64());
    write_text(&timings_path, &serde_json::to_string_pretty(&timings).expect("serializes"))?;
    let manifest = build_manifest(cfg, &layout.root)?;
    write_text(
        &layout.root.join(MANIFEST),
        &(serde_json::to_string_pretty(&manifest).expect("serializes") + "\n"),
    )
}
