use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, Classifier, ConvNet, LinearModel, ReluRule};
use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::numeric::SeededStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L1 penalty on the weights (the bias is not penalised).
    pub l1_strength: f64,
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l1_strength: 2e-3,
            step_size: 0.1,
            epochs: 30,
            batch_size: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.l1_strength >= 0.0) {
            return Err(Error::invalid("l1_strength", "must be >= 0"));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::invalid("step_size", "must be > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean data loss over the last epoch (plus the L1 term for linear models).
    pub final_objective: f64,
    pub train_accuracy: f64,
    pub nonzero_weights: usize,
    pub epochs: usize,
}

/// `sign(w) * max(|w| - threshold, 0)`
#[inline]
pub fn soft_threshold(w: f64, threshold: f64) -> f64 {
    if w > threshold {
        w - threshold
    } else if w < -threshold {
        w + threshold
    } else {
        0.0
    }
}

fn check_data(data: &LabeledDataset) -> Result<(usize, usize)> {
    let first = data
        .images
        .first()
        .ok_or_else(|| Error::invalid("dataset", "empty training set"))?;
    Ok((first.height(), first.width()))
}

/// Multinomial logistic regression with an L1 penalty, fitted by proximal
/// stochastic gradient: a minibatch gradient step on the mean cross-entropy,
/// then soft-thresholding of the weights by `step * l1_strength`.
pub fn train_sparse_linear(data: &LabeledDataset, cfg: &TrainConfig) -> Result<(LinearModel, TrainReport)> {
    cfg.validate()?;
    let (h, w) = check_data(data)?;
    let classes = 10;
    let d = h * w;
    let mut model = LinearModel::zeros(h, w, classes);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = SeededStream::new(cfg.seed).rng();
    let threshold = cfg.step_size * cfg.l1_strength;
    let mut grad_w = vec![0.0; d * classes];
    let mut grad_b = vec![0.0; classes];
    let mut epoch_loss = 0.0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for &s in batch {
                let x = data.images[s].values();
                let z = model.logits_unchecked(x);
                let (loss, dz) = cross_entropy(&z, data.labels[s]);
                epoch_loss += loss;
                for (i, dzi) in dz.iter().enumerate() {
                    grad_b[i] += dzi;
                    for (g, v) in grad_w[i * d..(i + 1) * d].iter_mut().zip(x) {
                        *g += dzi * v;
                    }
                }
            }
            let scale = cfg.step_size / batch.len() as f64;
            for (wv, g) in model.weights_mut().iter_mut().zip(&grad_w) {
                *wv = soft_threshold(*wv - scale * g, threshold);
            }
            for (b, g) in model.bias_mut().iter_mut().zip(&grad_b) {
                *b -= scale * g;
            }
        }
        epoch_loss /= data.len() as f64;
        if !epoch_loss.is_finite() || !model.weights().iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
    }

    let l1: f64 = model.weights().iter().map(|v| v.abs()).sum();
    let correct = data
        .images
        .iter()
        .zip(&data.labels)
        .filter(|(x, l)| super::argmax(&model.logits_unchecked(x.values())) == **l)
        .count();
    let report = TrainReport {
        final_objective: epoch_loss + cfg.l1_strength * l1,
        train_accuracy: correct as f64 / data.len() as f64,
        nonzero_weights: model.nonzero_weights(),
        epochs: cfg.epochs,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvTrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ConvTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 1,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Minibatch SGD with momentum from `init_untrained(cfg.seed)`.
pub fn train_convnet(data: &LabeledDataset, cfg: &ConvTrainConfig) -> Result<(ConvNet, TrainReport)> {
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("learning_rate", "must be > 0"));
    }
    if !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::invalid("momentum", "must lie in [0, 1)"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("epochs", "epochs and batch size must be >= 1"));
    }
    check_data(data)?;
    let mut net = ConvNet::init_untrained(cfg.seed);
    let mut velocity = net.zero_grads();
    let mut grads = net.zero_grads();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = SeededStream::new(cfg.seed).split(1).rng();
    let mut epoch_loss = 0.0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            for &s in batch {
                let tape = net.forward(&data.images[s])?;
                let (loss, dz) = cross_entropy(tape.logits(), data.labels[s]);
                epoch_loss += loss;
                net.backward(&tape, &dz, ReluRule::Standard, Some(&mut grads), None)?;
            }
            let inv = 1.0 / batch.len() as f64;
            for (v, g) in velocity.iter_mut().zip(&grads) {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi = cfg.momentum * *vi + gi * inv;
                }
            }
            net.apply_update(&velocity, -cfg.learning_rate);
        }
        epoch_loss /= data.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
    }

    let correct = data
        .images
        .iter()
        .zip(&data.labels)
        .map(|(x, l)| net.logits(x).map(|z| super::argmax(&z) == *l))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|ok| *ok)
        .count();
    let report = TrainReport {
        final_objective: epoch_loss,
        train_accuracy: correct as f64 / data.len() as f64,
        nonzero_weights: net.param_count(),
        epochs: cfg.epochs,
    };
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Split;
    use crate::numeric::ImageGrid;

    fn toy_separable() -> LabeledDataset {
        let a = ImageGrid::new(1, 2, vec![1.0, 0.0], (0.0, 1.0)).unwrap();
        let b = ImageGrid::new(1, 2, vec![0.0, 1.0], (0.0, 1.0)).unwrap();
        LabeledDataset::new(vec![a, b], vec![3, 7], Split::Train).unwrap()
    }

    #[test]
    fn soft_threshold_shrinks() {
        assert_eq!(soft_threshold(0.5, 0.2), 0.3);
        assert_eq!(soft_threshold(-0.5, 0.2), -0.3);
        assert_eq!(soft_threshold(0.1, 0.2), 0.0);
        // already-zeroed values stay put
        assert_eq!(soft_threshold(soft_threshold(0.1, 0.2), 0.2), 0.0);
    }

    #[test]
    fn separable_without_penalty() {
        let cfg = TrainConfig {
            l1_strength: 0.0,
            step_size: 0.5,
            epochs: 50,
            batch_size: 2,
            seed: 1,
        };
        let (_, report) = train_sparse_linear(&toy_separable(), &cfg).unwrap();
        assert_eq!(report.train_accuracy, 1.0);
    }

    #[test]
    fn huge_penalty_zeroes_weights() {
        let cfg = TrainConfig {
            l1_strength: 1e6,
            step_size: 0.1,
            epochs: 5,
            batch_size: 2,
            seed: 1,
        };
        let data = toy_separable();
        let (m, report) = train_sparse_linear(&data, &cfg).unwrap();
        assert_eq!(report.nonzero_weights, 0);
        let expected = super::super::argmax(m.bias());
        for x in &data.images {
            assert_eq!(m.predict(x).unwrap(), expected);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let a = train_sparse_linear(&toy_separable(), &cfg).unwrap().0;
        let b = train_sparse_linear(&toy_separable(), &cfg).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            l1_strength: 0.0,
            step_size: 1e308,
            epochs: 3,
            batch_size: 1,
            seed: 0,
        };
        let x = ImageGrid::new(1, 2, vec![1e10, -1e10], (-1e10, 1e10)).unwrap();
        let data = LabeledDataset::new(vec![x.clone(), x], vec![0, 1], Split::Train).unwrap();
        assert!(matches!(
            train_sparse_linear(&data, &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn rejects_empty_dataset() {
        let data = LabeledDataset::new(vec![], vec![], Split::Train).unwrap();
        assert!(train_sparse_linear(&data, &TrainConfig::default()).is_err());
    }
}
