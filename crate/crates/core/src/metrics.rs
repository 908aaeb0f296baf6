//! Evaluation statistics: map fidelity (RMSE, PSNR), Pearson correlation,
//! Welch's unequal-variance t-test, ROC analysis with operating points, and
//! the staged cohort report built from them.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::distribution::seeded_rng;
use crate::error::{Error, Result};
use crate::image::ParamMap;

/// Default peak value for PSNR on m-maps: the top of the phantom m range.
pub const DEFAULT_PSNR_MAX: f64 = 2.0;

fn masked_mse(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if let Some(m) = mask {
        if m.len() != a.len() {
            return Err(Error::InvalidArgument("mask length mismatch".into()));
        }
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..a.len() {
        if mask.is_none_or(|m| m[i]) {
            let d = a[i] - b[i];
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("mask selects no pixels".into()));
    }
    Ok(sum / n as f64)
}

/// Root-mean-square difference over the pixels selected by `mask`.
pub fn rmse(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    masked_mse(a, b, mask).map(f64::sqrt)
}

/// 10·log10(max² / MSE); `+∞` when the inputs agree exactly.
pub fn psnr(a: &[f64], b: &[f64], mask: Option<&[bool]>, max_value: f64) -> Result<f64> {
    if !(max_value > 0.0) {
        return Err(Error::InvalidArgument(format!("PSNR peak must be > 0, got {max_value}")));
    }
    let mse = masked_mse(a, b, mask)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_value * max_value / mse).log10())
}

/// RMSE and PSNR of an estimated map against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapScore {
    pub rmse: f64,
    pub psnr: f64,
    /// Fraction of pixels that entered the comparison.
    pub coverage: f64,
}

/// Compare `estimate` against `truth` over pixels valid in both.
pub fn compare_maps(estimate: &ParamMap, truth: &ParamMap, max_value: f64) -> Result<MapScore> {
    if estimate.dims() != truth.dims() {
        return Err(Error::InvalidArgument("estimate and truth dimensions differ".into()));
    }
    let mask: Vec<bool> = estimate.valid().iter().zip(truth.valid()).map(|(a, b)| *a && *b).collect();
    let coverage = mask.iter().filter(|v| **v).count() as f64 / mask.len() as f64;
    let mse = masked_mse(estimate.values(), truth.values(), Some(&mask))?;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_value * max_value / mse).log10()
    };
    Ok(MapScore {
        rmse: mse.sqrt(),
        psnr,
        coverage,
    })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn two_sided_t(t: f64, df: f64) -> Result<f64> {
    if t.is_infinite() {
        return Ok(0.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(format!("t distribution: {e}")))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub t: f64,
    /// Two-sided p-value from the t transform with n − 2 degrees of freedom.
    pub p_value: f64,
}

/// Sample Pearson correlation with its two-sided significance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("pearson inputs differ in length".into()));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument("pearson needs at least 3 pairs".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance input".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = n - 2.0;
    let t = if r.abs() == 1.0 {
        r.signum() * f64::INFINITY
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    Ok(Correlation {
        r,
        t,
        p_value: two_sided_t(t, df)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Welch's unequal-variance two-sample t-test (two-sided).
pub fn welch_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("each group needs at least 2 values".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("t-test inputs must be finite".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Err(Error::InvalidArgument("both groups have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(TTest {
        t,
        df,
        p_value: two_sided_t(t, df)?,
    })
}

/// Student's pooled-variance two-sample t-test, offered alongside Welch.
pub fn pooled_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("each group needs at least 2 values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    if pooled == 0.0 {
        return Err(Error::InvalidArgument("both groups have zero variance".into()));
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTest {
        t,
        df,
        p_value: two_sided_t(t, df)?,
    })
}

/// Conventional significance markers: * < 0.05, ** < 0.01, *** < 0.001,
/// **** < 0.0001, otherwise "ns".
pub fn significance_stars(p: f64) -> &'static str {
    match p {
        p if p < 1e-4 => "****",
        p if p < 1e-3 => "***",
        p if p < 1e-2 => "**",
        p if p < 5e-2 => "*",
        _ => "ns",
    }
}

/// Area under the ROC curve by the Mann–Whitney rank statistic; tied
/// positive/negative pairs count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_roc_input(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie block i..=j shares the midrank
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|l| **l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}

fn check_roc_input(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::InvalidArgument("ROC analysis needs both classes".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatingRule {
    /// Threshold maximizing F1.
    OptimalF1,
    /// Smallest threshold with specificity ≥ 0.90.
    Specificity90,
    /// Largest threshold with sensitivity ≥ 0.90.
    Sensitivity90,
}

impl OperatingRule {
    pub const ALL: [OperatingRule; 3] = [
        OperatingRule::OptimalF1,
        OperatingRule::Specificity90,
        OperatingRule::Sensitivity90,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            OperatingRule::OptimalF1 => "optimal-f1",
            OperatingRule::Specificity90 => "spec-90",
            OperatingRule::Sensitivity90 => "sens-90",
        }
    }
}

/// Confusion-derived rates at one threshold (score ≥ threshold ⇒ positive).
/// A ratio with an empty denominator is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub rule: OperatingRule,
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub ppv: f64,
    pub npv: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auroc: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    pub points: Vec<OperatingPoint>,
    /// Empirical curve as (threshold, false-positive rate, true-positive rate),
    /// thresholds descending from +∞.
    pub curve: Vec<(f64, f64, f64)>,
}

impl RocSummary {
    pub fn point(&self, rule: OperatingRule) -> &OperatingPoint {
        self.points.iter().find(|p| p.rule == rule).expect("all rules are evaluated")
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy)]
struct Confusion {
    threshold: f64,
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

impl Confusion {
    fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    fn point(&self, rule: OperatingRule) -> OperatingPoint {
        OperatingPoint {
            rule,
            threshold: self.threshold,
            sensitivity: self.sensitivity(),
            specificity: self.specificity(),
            ppv: ratio(self.tp, self.tp + self.fp),
            npv: ratio(self.tn, self.tn + self.fn_),
            f1: self.f1(),
        }
    }
}

/// ROC analysis with higher scores indicating the positive class.
pub fn roc_analysis(scores: &[f64], labels: &[bool]) -> Result<RocSummary> {
    check_roc_input(scores, labels)?;
    let auroc = auroc(scores, labels)?;
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    // candidate thresholds: +∞ (nothing positive) then each distinct score
    let mut table = vec![Confusion {
        threshold: f64::INFINITY,
        tp: 0,
        fp: 0,
        tn: n_neg,
        fn_: n_pos,
    }];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        table.push(Confusion {
            threshold: t,
            tp,
            fp,
            tn: n_neg - fp,
            fn_: n_pos - tp,
        });
    }

    let best_f1 = table
        .iter()
        .fold(None::<&Confusion>, |best, c| match best {
            Some(b) if b.f1() >= c.f1() => Some(b),
            _ => Some(c),
        })
        .expect("table is non-empty");
    // specificity falls as the threshold drops: keep the last one still ≥ 0.90
    let spec90 = table
        .iter()
        .take_while(|c| c.specificity() >= 0.9)
        .last()
        .expect("the +∞ threshold has specificity 1");
    let sens90 = table
        .iter()
        .find(|c| c.sensitivity() >= 0.9)
        .expect("the lowest threshold has sensitivity 1");

    Ok(RocSummary {
        auroc,
        n_positive: n_pos,
        n_negative: n_neg,
        points: vec![
            best_f1.point(OperatingRule::OptimalF1),
            spec90.point(OperatingRule::Specificity90),
            sens90.point(OperatingRule::Sensitivity90),
        ],
        curve: table
            .iter()
            .map(|c| (c.threshold, 1.0 - c.specificity(), c.sensitivity()))
            .collect(),
    })
}

/// Linear-interpolation quantile (numpy's default) of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box-plot statistics; whiskers reach the most extreme data within
/// 1.5 IQR of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("box statistics of an empty group".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    Ok(BoxStats {
        n: s.len(),
        min: s[0],
        q1,
        median,
        q3,
        max: s[s.len() - 1],
        lower_whisker: *s.iter().find(|v| **v >= lo_fence).unwrap_or(&s[0]),
        upper_whisker: *s.iter().rev().find(|v| **v <= hi_fence).unwrap_or(&s[s.len() - 1]),
    })
}

/// Steatosis stage from a fat-fraction percentage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Normal,
    Mild,
    Severe,
}

impl Stage {
    pub fn from_fat_fraction(percent: f64) -> Stage {
        if percent < 5.0 {
            Stage::Normal
        } else if percent < 15.0 {
            Stage::Mild
        } else {
            Stage::Severe
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Stage::Normal => "normal",
            Stage::Mild => "mild",
            Stage::Severe => "severe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub subject: String,
    /// Scalar image feature, e.g. the median m̂ over the liver ROI.
    pub feature: f64,
    /// Reference fat fraction in percent.
    pub reference: f64,
}

impl CohortRecord {
    pub fn new(subject: impl Into<String>, feature: f64, reference: f64) -> Self {
        Self {
            subject: subject.into(),
            feature,
            reference,
        }
    }

    pub fn stage(&self) -> Stage {
        Stage::from_fat_fraction(self.reference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    NormalVsMild,
    MildVsSevere,
    NormalVsSevere,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [
        Comparison::NormalVsMild,
        Comparison::MildVsSevere,
        Comparison::NormalVsSevere,
    ];

    /// (negative stage, positive stage)
    pub fn stages(&self) -> (Stage, Stage) {
        match self {
            Comparison::NormalVsMild => (Stage::Normal, Stage::Mild),
            Comparison::MildVsSevere => (Stage::Mild, Stage::Severe),
            Comparison::NormalVsSevere => (Stage::Normal, Stage::Severe),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Comparison::NormalVsMild => "normal-vs-mild",
            Comparison::MildVsSevere => "mild-vs-severe",
            Comparison::NormalVsSevere => "normal-vs-severe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComparisonOutcome {
    Evaluated { roc: RocSummary, welch: Option<TTest> },
    /// One of the two stages has no subjects.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub correlation: Option<Correlation>,
    pub boxes: Vec<(Stage, Option<BoxStats>)>,
    pub comparisons: Vec<(Comparison, ComparisonOutcome)>,
}

pub fn cohort_report(records: &[CohortRecord], comparisons: &[Comparison]) -> Result<CohortReport> {
    let group = |s: Stage| -> Vec<f64> { records.iter().filter(|r| r.stage() == s).map(|r| r.feature).collect() };
    let features: Vec<f64> = records.iter().map(|r| r.feature).collect();
    let references: Vec<f64> = records.iter().map(|r| r.reference).collect();
    let correlation = pearson(&features, &references).ok();

    let boxes = [Stage::Normal, Stage::Mild, Stage::Severe]
        .into_iter()
        .map(|s| (s, box_stats(&group(s)).ok()))
        .collect();

    let mut out = Vec::new();
    for &cmp in comparisons {
        let (neg, pos) = cmp.stages();
        let (gn, gp) = (group(neg), group(pos));
        if gn.is_empty() || gp.is_empty() {
            out.push((cmp, ComparisonOutcome::Empty));
            continue;
        }
        let scores: Vec<f64> = gn.iter().chain(&gp).copied().collect();
        let labels: Vec<bool> = gn.iter().map(|_| false).chain(gp.iter().map(|_| true)).collect();
        let roc = roc_analysis(&scores, &labels)?;
        let welch = welch_test(&gn, &gp).ok();
        out.push((cmp, ComparisonOutcome::Evaluated { roc, welch }));
    }
    Ok(CohortReport {
        correlation,
        boxes,
        comparisons: out,
    })
}

impl CohortReport {
    /// One row per comparison and operating point.
    pub fn roc_csv(&self) -> String {
        let mut s = String::from("comparison,auroc,rule,threshold,sensitivity,specificity,ppv,npv,f1,welch_t,welch_p,stars\n");
        for (cmp, outcome) in &self.comparisons {
            match outcome {
                ComparisonOutcome::Empty => {
                    let _ = writeln!(s, "{},empty,,,,,,,,,,", cmp.label());
                }
                ComparisonOutcome::Evaluated { roc, welch } => {
                    for p in &roc.points {
                        let (t, pv, stars) = match welch {
                            Some(w) => (format!("{:.6}", w.t), format!("{:.6e}", w.p_value), significance_stars(w.p_value)),
                            None => (String::new(), String::new(), ""),
                        };
                        let _ = writeln!(
                            s,
                            "{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
                            cmp.label(),
                            roc.auroc,
                            p.rule.label(),
                            p.threshold,
                            p.sensitivity,
                            p.specificity,
                            p.ppv,
                            p.npv,
                            p.f1,
                            t,
                            pv,
                            stars
                        );
                    }
                }
            }
        }
        s
    }

    pub fn box_csv(&self) -> String {
        let mut s = String::from("stage,n,min,lower_whisker,q1,median,q3,upper_whisker,max\n");
        for (stage, b) in &self.boxes {
            match b {
                Some(b) => {
                    let _ = writeln!(
                        s,
                        "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                        stage.label(),
                        b.n,
                        b.min,
                        b.lower_whisker,
                        b.q1,
                        b.median,
                        b.q3,
                        b.upper_whisker,
                        b.max
                    );
                }
                None => {
                    let _ = writeln!(s, "{},0,,,,,,,", stage.label());
                }
            }
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        if let Some(c) = &self.correlation {
            let _ = writeln!(s, "pearson r = {:.4} (p = {:.3e} {})", c.r, c.p_value, significance_stars(c.p_value));
        }
        for (cmp, outcome) in &self.comparisons {
            match outcome {
                ComparisonOutcome::Empty => {
                    let _ = writeln!(s, "{}: empty comparison", cmp.label());
                }
                ComparisonOutcome::Evaluated { roc, welch } => {
                    let _ = write!(s, "{}: AUROC {:.3}", cmp.label(), roc.auroc);
                    if let Some(w) = welch {
                        let _ = write!(s, ", Welch p = {:.3e} {}", w.p_value, significance_stars(w.p_value));
                    }
                    s.push('\n');
                    for p in &roc.points {
                        let _ = writeln!(
                            s,
                            "  {:<10} thr {:.4}  sens {:.2}  spec {:.2}  ppv {:.2}  npv {:.2}  f1 {:.2}",
                            p.rule.label(),
                            p.threshold,
                            p.sensitivity,
                            p.specificity,
                            p.ppv,
                            p.npv,
                            p.f1
                        );
                    }
                }
            }
        }
        s
    }
}

/// How a synthetic cohort's feature relates to its reference value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CohortFeature {
    /// feature = reference
    Identity,
    /// feature independent of reference
    Independent,
    /// feature = intercept + slope·reference + N(0, noise²)
    Linear { intercept: f64, slope: f64, noise: f64 },
}

/// Synthetic cohort with stage proportions near 50/38/12 % and fat fractions
/// uniform within each stage.
pub fn synthetic_cohort(n: usize, feature: CohortFeature, seed: u64) -> Vec<CohortRecord> {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|i| {
            let u: f64 = rng.random();
            let reference = if u < 0.5 {
                rng.random_range(0.0..5.0)
            } else if u < 0.88 {
                rng.random_range(5.0..15.0)
            } else {
                rng.random_range(15.0..35.0)
            };
            let z: f64 = rng.sample(StandardNormal);
            let f = match feature {
                CohortFeature::Identity => reference,
                CohortFeature::Independent => 1.0 + 0.3 * z,
                CohortFeature::Linear { intercept, slope, noise } => intercept + slope * reference + noise * z,
            };
            CohortRecord::new(format!("S{i:04}"), f, reference)
        })
        .collect()
}
