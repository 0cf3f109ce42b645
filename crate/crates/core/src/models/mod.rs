//! Predictors under test: L1-regularised linear classifiers and a small
//! convolutional net with switchable ReLU backward rules.

mod checkpoint;
mod convnet;
mod linear;
mod train;

use sha2::{Digest, Sha256};

pub use checkpoint::{load_checkpoint, save_checkpoint, save_checkpoint_with_header, AnyModel, CHECKPOINT_SCHEMA_VERSION};
pub use convnet::{ConvNet, ForwardTape, Layer, Shape};
pub use linear::LinearModel;
pub use train::{
    soft_threshold, train_convnet, train_sparse_linear, ConvTrainConfig, TrainConfig, TrainReport,
};

use crate::dataio::LabeledDataset;
use crate::error::Result;
use crate::numeric::ImageGrid;

/// How a ReLU passes the backward signal `g` given its pre-activation `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReluRule {
    /// `g * 1[z > 0]`
    #[default]
    Standard,
    /// `g * 1[g > 0]`
    Deconvnet,
    /// `g * 1[z > 0] * 1[g > 0]`
    Guided,
}

impl ReluRule {
    #[inline]
    pub fn pass(self, z: f64, g: f64) -> f64 {
        let open = match self {
            ReluRule::Standard => z > 0.0,
            ReluRule::Deconvnet => g > 0.0,
            ReluRule::Guided => z > 0.0 && g > 0.0,
        };
        if open {
            g
        } else {
            0.0
        }
    }
}

pub trait Classifier {
    fn input_shape(&self) -> (usize, usize);

    fn class_count(&self) -> usize;

    /// Pre-activation class scores.
    fn logits(&self, x: &ImageGrid) -> Result<Vec<f64>>;

    /// Gradient of `upstream . logits(x)` with respect to `x`, standard rule.
    fn input_gradient(&self, x: &ImageGrid, upstream: &[f64]) -> Result<ImageGrid>;

    /// Short hex digest of the parameters.
    fn fingerprint(&self) -> String;

    fn predict(&self, x: &ImageGrid) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

/// Lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn predictions<M: Classifier + ?Sized>(model: &M, data: &LabeledDataset) -> Result<Vec<usize>> {
    data.images.iter().map(|x| model.predict(x)).collect()
}

pub fn accuracy<M: Classifier + ?Sized>(model: &M, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let preds = predictions(model, data)?;
    let hits = preds.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Cross-entropy of `logits` against `label`, and its gradient on the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (lse - logits[label], grad)
}

pub(crate) fn digest(parts: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        for v in *p {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}
