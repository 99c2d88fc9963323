//! Annotator objective, training loop, inference, and the FAM1 model file.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::fairness::{fairness_loss, normalize_rows, normalize_rows_backward};
use super::loss::{vs_loss, ClassStats};
use super::mlp::{argmax, backward, forward, softmax_rows, MlpParams};
use super::optim::{cosine_lr, sam_step, Adam, SamBall};
use super::sinkhorn::SinkhornConfig;
use super::AnnotatorError;
use crate::features::FeatureMatrix;
use crate::manifest::{Age, Gender};
use crate::rng::SplitMix64;

/// What an annotator predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Gender,
    Age,
}

impl Task {
    pub fn vocab(self) -> Vec<String> {
        match self {
            Task::Gender => Gender::ALL.iter().map(|g| g.to_string()).collect(),
            Task::Age => Age::ALL.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gender" => Ok(Task::Gender),
            "age" => Ok(Task::Age),
            _ => Err(format!("unknown task `{s}` (gender|age)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the fairness term.
    pub lambda: f64,
    /// Entropic regularization of the fairness term.
    pub alpha: f64,
    pub kappa: f64,
    pub rho: f64,
    /// Per-class loss weights; all ones when absent.
    pub class_weights: Option<Vec<f64>>,
    /// Perturbation magnitude of the sharpness-aware step.
    pub beta_sam: f64,
    pub sam_ball: SamBall,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub sinkhorn_max_iter: usize,
    pub sinkhorn_tol: f64,
    pub sinkhorn_eps_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 1e-4,
            kappa: 0.2,
            rho: 1.0,
            class_weights: None,
            beta_sam: 0.05,
            sam_ball: SamBall::L2,
            lr: 1e-3,
            batch_size: 64,
            epochs: 32,
            hidden: vec![512, 256, 128],
            sinkhorn_max_iter: 200,
            sinkhorn_tol: 1e-6,
            sinkhorn_eps_decay: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AnnotatorError> {
        let bad = |m: &str| Err(AnnotatorError::Config(m.to_string()));
        if !(self.alpha > 0.0) {
            return bad("alpha must be > 0");
        }
        if !(self.beta_sam >= 0.0) {
            return bad("beta_sam must be >= 0");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be nonempty and positive");
        }
        Ok(())
    }

    pub fn sinkhorn(&self) -> SinkhornConfig {
        SinkhornConfig {
            alpha: self.alpha,
            max_iter: self.sinkhorn_max_iter,
            tol: self.sinkhorn_tol,
            eps_decay: self.sinkhorn_eps_decay,
            trace: false,
        }
    }

    pub fn dims(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(&self.hidden);
        d.push(classes);
        d
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: f64,
    pub imbalance: f64,
    pub fairness: f64,
    pub grad: Vec<f64>,
}

/// `vs_loss + lambda * fairness_loss` and its gradient with respect to all
/// parameters. The fairness term sees L2-normalized features; `attrs` may be
/// empty to switch it off.
pub fn loss_and_grad(
    params: &MlpParams,
    x: ArrayView2<f64>,
    labels: &[usize],
    attrs: &[usize],
    stats: &ClassStats,
    cfg: &TrainConfig,
) -> Result<LossOutput, AnnotatorError> {
    let cache = forward(params, x)?;
    let (imbalance, d_logits) = vs_loss(cache.logits.view(), labels, stats)?;
    let mut fairness = 0.0;
    let mut d_features = None;
    if cfg.lambda > 0.0 && !attrs.is_empty() {
        if attrs.len() != x.nrows() {
            return Err(AnnotatorError::ShapeMismatch(format!(
                "{} attribute values for {} rows",
                attrs.len(),
                x.nrows()
            )));
        }
        let feats = cache.features();
        let (z, scale) = normalize_rows(feats.view());
        let fl = fairness_loss(z.view(), attrs, &cfg.sinkhorn());
        fairness = fl.value;
        let dz = fl.grad * cfg.lambda;
        d_features = Some(normalize_rows_backward(feats.view(), &scale, dz.view()));
    }
    let grad = backward(params, &cache, d_logits.view(), d_features.as_ref().map(|d| d.view()));
    Ok(LossOutput {
        total: imbalance + cfg.lambda * fairness,
        imbalance,
        fairness,
        grad,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorModel {
    pub params: MlpParams,
    pub vocab: Vec<String>,
    pub config: TrainConfig,
    pub stats: ClassStats,
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
}

impl AnnotatorModel {
    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }
}

/// Trains an annotator on `x` (one row per sample). `attrs` holds the
/// sensitive-attribute value of each row for the fairness term, or is empty.
pub fn train(
    x: ArrayView2<f64>,
    labels: &[usize],
    attrs: &[usize],
    vocab: Vec<String>,
    cfg: &TrainConfig,
) -> Result<AnnotatorModel, AnnotatorError> {
    cfg.validate()?;
    let n = x.nrows();
    if labels.len() != n || (!attrs.is_empty() && attrs.len() != n) {
        return Err(AnnotatorError::ShapeMismatch(format!(
            "{n} rows, {} labels, {} attribute values",
            labels.len(),
            attrs.len()
        )));
    }
    let classes = vocab.len();
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(AnnotatorError::ShapeMismatch(format!("label {l} outside vocabulary of {classes}")));
    }
    let stats = ClassStats {
        weight: cfg.class_weights.clone().unwrap_or_else(|| vec![1.0; classes]),
        ..ClassStats::from_labels(labels, classes, cfg.kappa, cfg.rho)
    };
    if stats.weight.len() != classes {
        return Err(AnnotatorError::Config(format!(
            "{} class weights for {classes} classes",
            stats.weight.len()
        )));
    }
    let mut params = MlpParams::init(&cfg.dims(x.ncols(), classes), cfg.seed);
    let mut adam = Adam::new(params.values.len());
    let mut rng = SplitMix64::new(cfg.seed ^ 0x5eed_0f_ba7c4);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let ab: Vec<usize> = if attrs.is_empty() {
                Vec::new()
            } else {
                batch.iter().map(|&i| attrs[i]).collect()
            };
            let dims = params.dims.clone();
            let out = sam_step(&mut params.values, cfg.beta_sam, cfg.sam_ball, &mut adam, lr, |theta: &[f64]| {
                let p = MlpParams {
                    dims: dims.clone(),
                    values: theta.to_vec(),
                };
                let o = loss_and_grad(&p, xb.view(), &yb, &ab, &stats, cfg)?;
                Ok::<_, AnnotatorError>((o.total, o.grad))
            })?;
            epoch_loss += out.loss * batch.len() as f64;
        }
        loss_trace.push(epoch_loss / n.max(1) as f64);
        if !params.is_finite() {
            return Err(AnnotatorError::Diverged(epoch));
        }
    }
    Ok(AnnotatorModel {
        params,
        vocab,
        config: cfg.clone(),
        stats,
        loss_trace,
    })
}

/// Features as an f64 matrix, one row per id.
pub fn feature_rows(fm: &FeatureMatrix) -> Array2<f64> {
    Array2::from_shape_fn((fm.n(), fm.d), |(i, j)| fm.data[i * fm.d + j] as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

/// Plain softmax over the head logits (no logit adjustment); ties go to the
/// lowest class index.
pub fn predict_rows(model: &AnnotatorModel, x: ArrayView2<f64>) -> Result<Vec<Prediction>, AnnotatorError> {
    if x.ncols() != model.input_dim() {
        return Err(AnnotatorError::DimensionMismatch {
            expected: model.input_dim(),
            found: x.ncols(),
        });
    }
    let cache = forward(&model.params, x)?;
    let probs = softmax_rows(cache.logits.view());
    Ok(cache
        .logits
        .rows()
        .into_iter()
        .zip(probs.rows())
        .map(|(l, p)| Prediction {
            class: argmax(l),
            probs: p.to_vec(),
        })
        .collect())
}

pub fn predict(model: &AnnotatorModel, features: &FeatureMatrix) -> Result<Vec<Prediction>, AnnotatorError> {
    if features.d != model.input_dim() {
        return Err(AnnotatorError::DimensionMismatch {
            expected: model.input_dim(),
            found: features.d,
        });
    }
    predict_rows(model, feature_rows(features).view())
}

// ---------------------------------------------------------------------------
// FAM1 model file:
//   b"FAM1" | u32 version | u32 header_len | header JSON | u64 count | count x f64
// All integers and floats little-endian. The header carries config, vocab,
// class statistics, layer widths, and the loss trace.
// ---------------------------------------------------------------------------

pub const MODEL_MAGIC: &[u8; 4] = b"FAM1";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    dims: Vec<usize>,
    vocab: Vec<String>,
    config: TrainConfig,
    stats: ClassStats,
    loss_trace: Vec<f64>,
}

pub fn encode_model(model: &AnnotatorModel) -> Vec<u8> {
    let header = ModelHeader {
        dims: model.params.dims.clone(),
        vocab: model.vocab.clone(),
        config: model.config.clone(),
        stats: model.stats.clone(),
        loss_trace: model.loss_trace.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(24 + json.len() + 8 * model.params.values.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params.values.len() as u64).to_le_bytes());
    for v in &model.params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<AnnotatorModel, AnnotatorError> {
    let corrupt = |m: &str| AnnotatorError::ModelFile(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: ModelHeader =
        serde_json::from_slice(body).map_err(|e| corrupt(&format!("header: {e}")))?;
    let rest = &bytes[12 + hlen..];
    if rest.len() < 8 {
        return Err(corrupt("truncated parameter count"));
    }
    let count = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
    let data = &rest[8..];
    if data.len() != count * 8 {
        return Err(corrupt("parameter block length mismatch"));
    }
    let params = MlpParams {
        dims: header.dims,
        values: data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if params.values.len() != MlpParams::zeros(&params.dims).values.len() {
        return Err(corrupt("parameter count does not match layer widths"));
    }
    if params.classes() != header.vocab.len() {
        return Err(corrupt("vocabulary size does not match head width"));
    }
    Ok(AnnotatorModel {
        params,
        vocab: header.vocab,
        config: header.config,
        stats: header.stats,
        loss_trace: header.loss_trace,
    })
}

pub fn save_model(model: &AnnotatorModel, path: impl AsRef<Path>) -> Result<(), AnnotatorError> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AnnotatorModel, AnnotatorError> {
    decode_model(&std::fs::read(path)?)
}
