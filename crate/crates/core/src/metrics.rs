//! Group, intersectional, and individual fairness metrics plus detection
//! utility metrics over a detector's prediction set.
//!
//! Group metrics take one optional group index per record; records without a
//! group (missing annotation) are left out of that metric but still count
//! towards utility.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::manifest::{group_index, Attribute, GroupingSpec, Manifest, ToneBuckets};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("prediction file is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: score `{value}` is not a number in [0, 1]")]
    BadScore { line: usize, value: String },
    #[error("line {line}: duplicate sample_id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("prediction for `{0}` has no manifest record")]
    UnknownSampleId(String),
    #[error("no conditioning cell has a nonzero denominator")]
    NoValidCells,
    #[error("individual fairness needs representation vectors")]
    MissingRepresentations,
    #[error("{0}")]
    LengthMismatch(String),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Detector outputs joined with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub ids: Vec<String>,
    /// Fake probability per sample.
    pub scores: Vec<f64>,
    /// True label, 1 = fake.
    pub labels: Vec<u8>,
    pub threshold: f64,
    /// Optional representation per sample for individual fairness.
    pub reps: Option<Vec<Vec<f64>>>,
}

impl PredictionSet {
    pub fn new(ids: Vec<String>, scores: Vec<f64>, labels: Vec<u8>, threshold: f64) -> Result<Self, MetricsError> {
        if ids.len() != scores.len() || ids.len() != labels.len() {
            return Err(MetricsError::LengthMismatch(format!(
                "{} ids, {} scores, {} labels",
                ids.len(),
                scores.len(),
                labels.len()
            )));
        }
        Ok(Self {
            ids,
            scores,
            labels,
            threshold,
            reps: None,
        })
    }

    /// Unnamed records, handy for tests and synthetic data.
    pub fn from_scores(scores: Vec<f64>, labels: Vec<u8>, threshold: f64) -> Self {
        let ids = (0..scores.len()).map(|i| i.to_string()).collect();
        Self::new(ids, scores, labels, threshold).expect("equal lengths")
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `Ŷ = [score >= threshold]`.
    pub fn predicted(&self) -> Vec<u8> {
        self.scores.iter().map(|&s| u8::from(s >= self.threshold)).collect()
    }

    pub fn select(&self, idx: &[usize]) -> PredictionSet {
        PredictionSet {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            threshold: self.threshold,
            reps: self.reps.as_ref().map(|r| idx.iter().map(|&i| r[i].clone()).collect()),
        }
    }
}

/// Reads a delimiter-separated `sample_id,score` file (tab for `.tsv`).
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>, MetricsError> {
    let path = path.as_ref();
    let delim = if path.extension().is_some_and(|e| e == "tsv") { b'\t' } else { b',' };
    parse_predictions(&std::fs::read_to_string(path)?, delim)
}

pub fn parse_predictions(text: &str, delimiter: u8) -> Result<Vec<(String, f64)>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let col = |name: &'static str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or(MetricsError::MissingColumn(name))
    };
    let (id_col, score_col) = (col("sample_id")?, col("score")?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let id = row.get(id_col).unwrap_or("").to_string();
        let raw = row.get(score_col).unwrap_or("");
        let score: f64 = raw
            .parse()
            .ok()
            .filter(|s: &f64| (0.0..=1.0).contains(s))
            .ok_or_else(|| MetricsError::BadScore {
                line,
                value: raw.to_string(),
            })?;
        if !seen.insert(id.clone()) {
            return Err(MetricsError::DuplicateId { line, id });
        }
        out.push((id, score));
    }
    Ok(out)
}

pub fn write_predictions(preds: &[(String, f64)], path: impl AsRef<Path>) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "score"])?;
    for (id, s) in preds {
        w.write_record([id.as_str(), &format!("{s}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Joins predictions with manifest labels by sample id, keeping the
/// prediction file order.
pub fn join_predictions(
    preds: &[(String, f64)],
    manifest: &Manifest,
    threshold: f64,
) -> Result<(PredictionSet, Vec<usize>), MetricsError> {
    let index = manifest.index_of();
    let mut rows = Vec::with_capacity(preds.len());
    for (id, _) in preds {
        rows.push(*index.get(id.as_str()).ok_or_else(|| MetricsError::UnknownSampleId(id.clone()))?);
    }
    let set = PredictionSet::new(
        preds.iter().map(|(id, _)| id.clone()).collect(),
        preds.iter().map(|(_, s)| *s).collect(),
        rows.iter().map(|&r| manifest.records[r].target).collect(),
        threshold,
    )?;
    Ok((set, rows))
}

// ---------------------------------------------------------------------------
// Group fairness
// ---------------------------------------------------------------------------

/// A metric value and the conditioning cells that had to be skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub skipped: Vec<String>,
}

/// Per-group counts `n[g][y][ŷ]`.
struct Confusion {
    n: Vec<[[usize; 2]; 2]>,
}

impl Confusion {
    fn build(p: &PredictionSet, groups: &[Option<usize>]) -> Result<Self, MetricsError> {
        if groups.len() != p.len() {
            return Err(MetricsError::LengthMismatch(format!(
                "{} group entries for {} predictions",
                groups.len(),
                p.len()
            )));
        }
        let k = groups.iter().flatten().map(|&g| g + 1).max().unwrap_or(0);
        let mut n = vec![[[0; 2]; 2]; k];
        for ((g, &y), yh) in groups.iter().zip(&p.labels).zip(p.predicted()) {
            if let Some(g) = *g {
                n[g][y as usize][yh as usize] += 1;
            }
        }
        Ok(Self { n })
    }

    fn size(&self, g: usize) -> usize {
        self.n[g].iter().flatten().sum()
    }

    fn present(&self) -> Vec<usize> {
        (0..self.n.len()).filter(|&g| self.size(g) > 0).collect()
    }
}

fn spread(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (lo <= hi).then(|| hi - lo)
}

/// Equal odds: summed absolute gap between each group's TPR/FPR and the
/// population's, over groups and both true labels.
pub fn f_eo(p: &PredictionSet, groups: &[Option<usize>]) -> Result<Measured, MetricsError> {
    let c = Confusion::build(p, groups)?;
    let mut skipped = Vec::new();
    let mut total = 0.0;
    let mut cells = 0;
    for q in 0..2 {
        let pos: usize = c.n.iter().map(|g| g[q][1]).sum();
        let all: usize = c.n.iter().map(|g| g[q][0] + g[q][1]).sum();
        if all == 0 {
            skipped.push(format!("Y={q}: no records"));
            continue;
        }
        let overall = pos as f64 / all as f64;
        for g in c.present() {
            let den = c.n[g][q][0] + c.n[g][q][1];
            if den == 0 {
                skipped.push(format!("group {g}, Y={q}: no records"));
                continue;
            }
            total += (c.n[g][q][1] as f64 / den as f64 - overall).abs();
            cells += 1;
        }
    }
    if cells == 0 {
        return Err(MetricsError::NoValidCells);
    }
    Ok(Measured { value: total, skipped })
}

/// Overall accuracy equality: largest accuracy gap between groups.
pub fn f_oae(p: &PredictionSet, groups: &[Option<usize>]) -> Result<Measured, MetricsError> {
    let c = Confusion::build(p, groups)?;
    let accs = c.present().into_iter().map(|g| {
        let right = c.n[g][0][0] + c.n[g][1][1];
        right as f64 / c.size(g) as f64
    });
    spread(accs)
        .map(|value| Measured { value, skipped: vec![] })
        .ok_or(MetricsError::NoValidCells)
}

/// Demographic parity: largest gap in predicted-class rate between groups.
pub fn f_dp(p: &PredictionSet, groups: &[Option<usize>]) -> Result<Measured, MetricsError> {
    let c = Confusion::build(p, groups)?;
    let present = c.present();
    let mut best: Option<f64> = None;
    for q in 0..2 {
        let rates = present.iter().map(|&g| {
            let hits = c.n[g][0][q] + c.n[g][1][q];
            hits as f64 / c.size(g) as f64
        });
        if let Some(s) = spread(rates) {
            best = Some(best.map_or(s, |b| b.max(s)));
        }
    }
    best.map(|value| Measured { value, skipped: vec![] })
        .ok_or(MetricsError::NoValidCells)
}

/// Max equalized odds: largest between-group gap in
/// `P(Ŷ = q̂ | Y = y, group)` over the four `(q̂, y)` cells.
pub fn f_meo(p: &PredictionSet, groups: &[Option<usize>]) -> Result<Measured, MetricsError> {
    let c = Confusion::build(p, groups)?;
    let present = c.present();
    let mut skipped = Vec::new();
    let mut best: Option<f64> = None;
    for y in 0..2 {
        let valid: Vec<usize> = present
            .iter()
            .copied()
            .filter(|&g| {
                let ok = c.n[g][y][0] + c.n[g][y][1] > 0;
                if !ok {
                    skipped.push(format!("group {g}, Y={y}: no records"));
                }
                ok
            })
            .collect();
        for qh in 0..2 {
            let rates = valid
                .iter()
                .map(|&g| c.n[g][y][qh] as f64 / (c.n[g][y][0] + c.n[g][y][1]) as f64);
            if let Some(s) = spread(rates) {
                best = Some(best.map_or(s, |b| b.max(s)));
            }
        }
    }
    best.map(|value| Measured { value, skipped })
        .ok_or(MetricsError::NoValidCells)
}

// ---------------------------------------------------------------------------
// Individual fairness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndFairnessConfig {
    /// Lipschitz scale between representation distance and score distance.
    pub delta: f64,
    /// Largest number of pairs evaluated; beyond it pairs are sampled.
    pub pair_budget: usize,
    pub seed: u64,
}

impl Default for IndFairnessConfig {
    fn default() -> Self {
        Self {
            delta: 0.08,
            pair_budget: 200_000,
            seed: 0,
        }
    }
}

fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// Mean hinge `[|s_j - s_l| - delta * |x_j - x_l|]_+` over record pairs,
/// with representations L2-normalized first. Exact over all pairs when they
/// fit in the budget, else over `pair_budget` uniformly sampled pairs.
pub fn f_ind(p: &PredictionSet, cfg: &IndFairnessConfig) -> Result<f64, MetricsError> {
    if !(cfg.delta > 0.0) || cfg.pair_budget == 0 {
        return Err(MetricsError::Config("delta must be > 0 and pair_budget >= 1".into()));
    }
    let reps = p.reps.as_ref().ok_or(MetricsError::MissingRepresentations)?;
    if reps.len() != p.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "{} representations for {} predictions",
            reps.len(),
            p.len()
        )));
    }
    let n = p.len();
    if n < 2 {
        return Ok(0.0);
    }
    let z: Vec<Vec<f64>> = reps.iter().map(|r| l2_normalized(r)).collect();
    let hinge = |j: usize, l: usize| {
        let dist = z[j].iter().zip(&z[l]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        ((p.scores[j] - p.scores[l]).abs() - cfg.delta * dist).max(0.0)
    };
    let pairs = n * (n - 1) / 2;
    if pairs <= cfg.pair_budget {
        let mut total = 0.0;
        for j in 0..n - 1 {
            for l in j + 1..n {
                total += hinge(j, l);
            }
        }
        Ok(total / pairs as f64)
    } else {
        let mut rng = SplitMix64::new(cfg.seed);
        let mut total = 0.0;
        for _ in 0..cfg.pair_budget {
            let j = rng.below(n as u64) as usize;
            let mut l = rng.below(n as u64 - 1) as usize;
            if l >= j {
                l += 1;
            }
            total += hinge(j, l);
        }
        Ok(total / cfg.pair_budget as f64)
    }
}

// ---------------------------------------------------------------------------
// Utility
// ---------------------------------------------------------------------------

/// Detection utility. Ranking metrics are `None` when only one class is
/// present; `fpr` is `None` without real samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Utility {
    pub auc: Option<f64>,
    pub acc: Option<f64>,
    pub ap: Option<f64>,
    pub eer: Option<f64>,
    pub eer_threshold: Option<f64>,
    pub fpr: Option<f64>,
}

/// Distinct scores in descending order with `(positives, negatives)` at each.
fn tie_groups(scores: &[f64], labels: &[u8]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for i in order {
        let (s, y) = (scores[i], labels[i]);
        match out.last_mut() {
            Some(last) if last.0 == s => {
                if y == 1 { last.1 += 1 } else { last.2 += 1 }
            }
            _ => out.push((s, usize::from(y == 1), usize::from(y != 1))),
        }
    }
    out
}

/// Mann-Whitney AUC with half credit for ties.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let groups = tie_groups(scores, labels);
    let pos: usize = groups.iter().map(|g| g.1).sum();
    let neg: usize = groups.iter().map(|g| g.2).sum();
    if pos == 0 || neg == 0 {
        return None;
    }
    // walk from the lowest score up, counting negatives already passed
    let mut below = 0usize;
    let mut twice = 0u128;
    for &(_, p, n) in groups.iter().rev() {
        twice += (p as u128) * (2 * below as u128 + n as u128);
        below += n;
    }
    Some(twice as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Average precision: precision at each distinct threshold weighted by the
/// recall gained there.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let groups = tie_groups(scores, labels);
    let pos: usize = groups.iter().map(|g| g.1).sum();
    if pos == 0 || pos == labels.len() {
        return None;
    }
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    for &(_, p, n) in &groups {
        tp += p;
        fp += n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Some(ap)
}

/// Equal error rate and an operating threshold.
///
/// The rate is where FPR and FNR meet on the ROC polyline. The threshold is
/// the distinct score, among the two vertices bracketing that crossing,
/// whose `score >= t` operating point has the smaller `|FPR - FNR|`.
pub fn eer(scores: &[f64], labels: &[u8]) -> Option<(f64, f64)> {
    let groups = tie_groups(scores, labels);
    let pos: usize = groups.iter().map(|g| g.1).sum();
    let neg: usize = groups.iter().map(|g| g.2).sum();
    if pos == 0 || neg == 0 {
        return None;
    }
    // vertex k: everything with score >= groups[k-1].0 flagged; k = 0 flags nothing
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev = (0.0, 1.0, f64::INFINITY); // (fpr, fnr, threshold)
    for &(s, p, n) in &groups {
        tp += p;
        fp += n;
        let fpr = fp as f64 / neg as f64;
        let fnr = 1.0 - tp as f64 / pos as f64;
        if fpr >= fnr {
            let (d0, d1) = (prev.1 - prev.0, fpr - fnr);
            let t = d0 / (d0 + d1);
            let rate = prev.0 + t * (fpr - prev.0);
            let threshold = if prev.2.is_finite() && d0 < d1 { prev.2 } else { s };
            return Some((rate, threshold));
        }
        prev = (fpr, fnr, s);
    }
    unreachable!("the last vertex flags everything, so fpr = 1 >= fnr = 0")
}

/// FPR and FNR of the `score >= t` rule.
pub fn rates_at(scores: &[f64], labels: &[u8], t: f64) -> (f64, f64) {
    let (mut fp, mut neg, mut fnn, mut pos) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        if y == 1 {
            pos += 1;
            if s < t {
                fnn += 1;
            }
        } else {
            neg += 1;
            if s >= t {
                fp += 1;
            }
        }
    }
    (fp as f64 / neg.max(1) as f64, fnn as f64 / pos.max(1) as f64)
}

pub fn utility(p: &PredictionSet) -> Utility {
    if p.is_empty() {
        return Utility::default();
    }
    let yh = p.predicted();
    let right = yh.iter().zip(&p.labels).filter(|(a, b)| a == b).count();
    let neg = p.labels.iter().filter(|&&y| y == 0).count();
    let fp = yh.iter().zip(&p.labels).filter(|&(&a, &b)| a == 1 && b == 0).count();
    let e = eer(&p.scores, &p.labels);
    Utility {
        auc: auc(&p.scores, &p.labels),
        acc: Some(right as f64 / p.len() as f64),
        ap: average_precision(&p.scores, &p.labels),
        eer: e.map(|e| e.0),
        eer_threshold: e.map(|e| e.1),
        fpr: (neg > 0).then(|| fp as f64 / neg as f64),
    }
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupFairness {
    pub f_meo: Option<f64>,
    pub f_dp: Option<f64>,
    pub f_oae: Option<f64>,
    pub f_eo: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupUtility {
    pub n: usize,
    #[serde(flatten)]
    pub utility: Utility,
}

/// Metrics over one slice of the prediction set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricBlock {
    pub n: usize,
    pub utility: Utility,
    /// Attribute name to group fairness.
    pub fairness: BTreeMap<String, GroupFairness>,
    pub f_ind: Option<f64>,
    /// Attribute name to group label to utility within that group.
    pub subgroups: BTreeMap<String, BTreeMap<String, SubgroupUtility>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FairnessReport {
    pub threshold: f64,
    pub overall: MetricBlock,
    /// Subset name to metrics on that subset. Subsets holding only fakes
    /// are evaluated together with every real record.
    pub subsets: BTreeMap<String, MetricBlock>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    #[default]
    Fixed,
    /// Use the overall equal-error-rate threshold.
    Eer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub attributes: Vec<Attribute>,
    pub buckets: ToneBuckets,
    pub per_subset: bool,
    pub individual: IndFairnessConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            threshold_mode: ThresholdMode::Fixed,
            attributes: vec![
                Attribute::ToneBucket3,
                Attribute::Gender,
                Attribute::Age,
                Attribute::Intersection,
            ],
            buckets: ToneBuckets::default(),
            per_subset: true,
            individual: IndFairnessConfig::default(),
        }
    }
}

fn block(
    p: &PredictionSet,
    rows: &[usize],
    manifest: &Manifest,
    cfg: &EvalConfig,
    scope: &str,
) -> (MetricBlock, Vec<String>) {
    let mut warnings = Vec::new();
    let mut out = MetricBlock {
        n: p.len(),
        utility: utility(p),
        ..Default::default()
    };
    if out.utility.auc.is_none() && !p.is_empty() {
        warnings.push(format!("{scope}: single class, ranking metrics undefined"));
    }
    for &attr in &cfg.attributes {
        let spec = GroupingSpec {
            attribute: attr,
            buckets: cfg.buckets,
        };
        let groups: Vec<Option<usize>> = rows
            .iter()
            .map(|&r| group_index(&manifest.records[r], &spec))
            .collect();
        let missing = groups.iter().filter(|g| g.is_none()).count();
        if missing > 0 {
            warnings.push(format!(
                "{scope}/{}: {missing} records without annotation excluded",
                attr.name()
            ));
        }
        let mut fair = GroupFairness::default();
        let mut note = |name: &str, r: Result<Measured, MetricsError>| match r {
            Ok(m) => {
                for s in m.skipped {
                    warnings.push(format!("{scope}/{}/{name}: skipped {s}", attr.name()));
                }
                Some(m.value)
            }
            Err(e) => {
                warnings.push(format!("{scope}/{}/{name}: {e}", attr.name()));
                None
            }
        };
        fair.f_meo = note("F_MEO", f_meo(p, &groups));
        fair.f_dp = note("F_DP", f_dp(p, &groups));
        fair.f_oae = note("F_OAE", f_oae(p, &groups));
        fair.f_eo = note("F_EO", f_eo(p, &groups));
        out.fairness.insert(attr.name().to_string(), fair);

        let mut per_group = BTreeMap::new();
        for (gi, label) in spec.groups().iter().enumerate() {
            let idx: Vec<usize> = (0..p.len()).filter(|&i| groups[i] == Some(gi)).collect();
            if idx.is_empty() {
                continue;
            }
            let sub = p.select(&idx);
            per_group.insert(
                label.to_string(),
                SubgroupUtility {
                    n: idx.len(),
                    utility: utility(&sub),
                },
            );
        }
        out.subgroups.insert(attr.name().to_string(), per_group);
    }
    match f_ind(p, &cfg.individual) {
        Ok(v) => out.f_ind = Some(v),
        Err(MetricsError::MissingRepresentations) => {}
        Err(e) => warnings.push(format!("{scope}/F_IND: {e}")),
    }
    (out, warnings)
}

/// Full report: overall block plus one block per subset. Predictions are
/// joined to the manifest by sample id; `features`, when given, supplies the
/// representations for individual fairness.
pub fn evaluate(
    preds: &[(String, f64)],
    manifest: &Manifest,
    features: Option<&FeatureMatrix>,
    cfg: &EvalConfig,
) -> Result<FairnessReport, MetricsError> {
    let (mut set, rows) = join_predictions(preds, manifest, cfg.threshold)?;
    let mut warnings = Vec::new();
    if cfg.threshold_mode == ThresholdMode::Eer {
        match eer(&set.scores, &set.labels) {
            Some((_, t)) => set.threshold = t,
            None => warnings.push("overall: single class, keeping fixed threshold".to_string()),
        }
    }
    if let Some(fm) = features {
        let index = fm.index();
        let mut reps = Vec::with_capacity(set.len());
        for id in &set.ids {
            match index.get(id.as_str()) {
                Some(&i) => reps.push(fm.row(i).iter().map(|&v| v as f64).collect()),
                None => {
                    warnings.push(format!("F_IND: no feature row for `{id}`, individual fairness skipped"));
                    reps.clear();
                    break;
                }
            }
        }
        if reps.len() == set.len() {
            set.reps = Some(reps);
        }
    }

    let mut scopes: Vec<(String, Vec<usize>)> = vec![("overall".to_string(), (0..set.len()).collect())];
    if cfg.per_subset {
        let mut by_subset: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, &r) in rows.iter().enumerate() {
            by_subset.entry(manifest.records[r].subset.as_str()).or_default().push(i);
        }
        let reals: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == 0).collect();
        for (name, mut idx) in by_subset {
            if idx.iter().all(|&i| set.labels[i] == 1) {
                idx.extend(&reals);
                idx.sort_unstable();
            }
            scopes.push((name.to_string(), idx));
        }
    }

    let blocks: Vec<(MetricBlock, Vec<String>)> = scopes
        .par_iter()
        .map(|(name, idx)| {
            let sub = set.select(idx);
            let sub_rows: Vec<usize> = idx.iter().map(|&i| rows[i]).collect();
            block(&sub, &sub_rows, manifest, cfg, name)
        })
        .collect();

    let mut names = scopes.into_iter().map(|(name, _)| name);
    let mut blocks = blocks.into_iter();
    names.next();
    let (overall, w) = blocks.next().expect("overall scope is always present");
    warnings.extend(w);
    let mut report = FairnessReport {
        threshold: set.threshold,
        overall,
        ..Default::default()
    };
    for (name, (b, w)) in names.zip(blocks) {
        warnings.extend(w);
        report.subsets.insert(name, b);
    }
    report.warnings = warnings;
    Ok(report)
}

/// Group index per record of `manifest` for `attr`, as used by the metric
/// functions.
pub fn groups_for(manifest: &Manifest, spec: &GroupingSpec) -> Vec<Option<usize>> {
    manifest.records.iter().map(|r| group_index(r, spec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[u8]) -> PredictionSet {
        PredictionSet::from_scores(scores.to_vec(), labels.to_vec(), 0.5)
    }

    #[test]
    fn f_eo_two_group_example() {
        // g0: TPR 1, FPR 0; g1: TPR 0.5, FPR 0.5; two positives and two
        // negatives per group
        let p = set(
            &[0.9, 0.9, 0.1, 0.1, 0.9, 0.1, 0.9, 0.1],
            &[1, 1, 0, 0, 1, 1, 0, 0],
        );
        let g: Vec<_> = [0, 0, 0, 0, 1, 1, 1, 1].iter().map(|&g| Some(g)).collect();
        let m = f_eo(&p, &g).unwrap();
        assert!((m.value - 1.0).abs() < 1e-15);
        assert!((f_meo(&p, &g).unwrap().value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn f_oae_example() {
        // accuracies 0.9, 0.8, 0.95 from groups of 20
        let mut labels = Vec::new();
        let mut scores = Vec::new();
        let mut groups = Vec::new();
        for (g, wrong) in [(0, 2), (1, 4), (2, 1)] {
            for i in 0..20 {
                labels.push(1);
                scores.push(if i < wrong { 0.1 } else { 0.9 });
                groups.push(Some(g));
            }
        }
        let m = f_oae(&set(&scores, &labels), &groups).unwrap();
        assert!((m.value - 0.15).abs() < 1e-12);
        let swapped: Vec<_> = groups.iter().map(|g| g.map(|g| 2 - g)).collect();
        assert_eq!(f_oae(&set(&scores, &labels), &swapped).unwrap().value, m.value);
        let one = vec![Some(0); labels.len()];
        assert_eq!(f_oae(&set(&scores, &labels), &one).unwrap().value, 0.0);
    }

    #[test]
    fn f_dp_example() {
        let p = set(&[0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.1, 0.1], &[1; 8]);
        let g: Vec<_> = [0, 0, 0, 0, 1, 1, 1, 1].iter().map(|&g| Some(g)).collect();
        assert!((f_dp(&p, &g).unwrap().value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn no_groups_is_an_error() {
        let p = set(&[0.2], &[0]);
        assert!(matches!(f_eo(&p, &[None]), Err(MetricsError::NoValidCells)));
        assert!(matches!(f_dp(&p, &[None]), Err(MetricsError::NoValidCells)));
    }

    #[test]
    fn f_ind_cases() {
        let mut p = set(&[0.3, 0.3, 0.3], &[0, 1, 0]);
        p.reps = Some(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(f_ind(&p, &IndFairnessConfig::default()).unwrap(), 0.0);
        p.scores = vec![0.9, 0.1, 0.5];
        let huge = IndFairnessConfig { delta: 1e6, ..Default::default() };
        assert_eq!(f_ind(&p, &huge).unwrap(), 0.0);
        // normalized reps: (1,0), (0,1), (s,s) with s = 1/sqrt(2)
        let s = 0.5f64.sqrt();
        let d01 = 2f64.sqrt();
        let d02 = ((1.0 - s) * (1.0 - s) + s * s).sqrt();
        let expect = ((0.8 - 0.08 * d01).max(0.0) + (0.4 - 0.08 * d02).max(0.0) + (0.4 - 0.08 * d02).max(0.0)) / 3.0;
        assert!((f_ind(&p, &IndFairnessConfig::default()).unwrap() - expect).abs() < 1e-12);
        p.reps = None;
        assert!(matches!(f_ind(&p, &IndFairnessConfig::default()), Err(MetricsError::MissingRepresentations)));
    }

    #[test]
    fn utility_edges() {
        let u = utility(&set(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]));
        assert_eq!((u.auc, u.eer, u.acc, u.fpr, u.ap), (Some(1.0), Some(0.0), Some(1.0), Some(0.0), Some(1.0)));
        let u = utility(&set(&[0.5; 4], &[1, 0, 1, 0]));
        assert_eq!(u.auc, Some(0.5));
        let u = utility(&set(&[0.7, 0.2], &[1, 1]));
        assert_eq!((u.auc, u.ap, u.eer, u.fpr), (None, None, None, None));
        assert_eq!(u.acc, Some(0.5));
    }

    #[test]
    fn eer_on_a_small_ranking() {
        // descending: P N P N; vertices (fpr, fnr): (0,1) (0,.5) (.5,.5)
        let (rate, t) = eer(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0]).unwrap();
        assert!((rate - 0.5).abs() < 1e-15);
        let (fpr, fnr) = rates_at(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0], t);
        assert_eq!(fpr, fnr);
    }

    #[test]
    fn predictions_parse() {
        let p = parse_predictions("sample_id,score\na,0.25\nb,1\n", b',').unwrap();
        assert_eq!(p, vec![("a".to_string(), 0.25), ("b".to_string(), 1.0)]);
        assert!(matches!(parse_predictions("sample_id,score\na,1.5\n", b','), Err(MetricsError::BadScore { line: 2, .. })));
        assert!(matches!(parse_predictions("id,score\n", b','), Err(MetricsError::MissingColumn("sample_id"))));
        assert!(matches!(
            parse_predictions("sample_id,score\na,0.1\na,0.2\n", b','),
            Err(MetricsError::DuplicateId { line: 3, .. })
        ));
    }
}
