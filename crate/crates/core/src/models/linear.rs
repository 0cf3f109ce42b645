use serde::{Deserialize, Serialize};

use super::{digest, Classifier};
use crate::error::{Error, Result};
use crate::numeric::ImageGrid;

/// `logits(x) = W^T x + b`. Weights are stored class-major: column `i` of `W`
/// is the contiguous slice `weights[i * d..(i + 1) * d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    height: usize,
    width: usize,
    classes: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearModel {
    pub fn new(height: usize, width: usize, columns: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let d = height * width;
        if columns.len() != bias.len() {
            return Err(Error::dims(format!("{} bias terms", columns.len()), bias.len()));
        }
        if let Some(bad) = columns.iter().find(|c| c.len() != d) {
            return Err(Error::dims(format!("columns of length {d}"), bad.len()));
        }
        Ok(Self {
            height,
            width,
            classes: bias.len(),
            weights: columns.concat(),
            bias,
        })
    }

    pub fn zeros(height: usize, width: usize, classes: usize) -> Self {
        Self {
            height,
            width,
            classes,
            weights: vec![0.0; height * width * classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn column(&self, class: usize) -> &[f64] {
        let d = self.dim();
        &self.weights[class * d..(class + 1) * d]
    }

    pub fn column_mut(&mut self, class: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.weights[class * d..(class + 1) * d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    pub(crate) fn check_input(&self, x: &ImageGrid) -> Result<()> {
        if x.height() != self.height || x.width() != self.width {
            return Err(Error::dims(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", x.height(), x.width()),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.classes {
            return Err(Error::ClassOutOfRange {
                class,
                classes: self.classes,
            });
        }
        Ok(())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.weights.len() != self.dim() * self.classes || self.bias.len() != self.classes {
            return Err(Error::Checkpoint(format!(
                "linear model expects {} weights and {} biases, found {} and {}",
                self.dim() * self.classes,
                self.classes,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|i| {
                self.column(i)
                    .iter()
                    .zip(x)
                    .fold(self.bias[i], |acc, (w, v)| acc + w * v)
            })
            .collect()
    }
}

impl Classifier for LinearModel {
    fn input_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn class_count(&self) -> usize {
        self.classes
    }

    fn logits(&self, x: &ImageGrid) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.logits_unchecked(x.values()))
    }

    fn input_gradient(&self, x: &ImageGrid, upstream: &[f64]) -> Result<ImageGrid> {
        self.check_input(x)?;
        if upstream.len() != self.classes {
            return Err(Error::dims(self.classes, upstream.len()));
        }
        let mut g = vec![0.0; self.dim()];
        for (i, u) in upstream.iter().enumerate() {
            if *u != 0.0 {
                for (gj, w) in g.iter_mut().zip(self.column(i)) {
                    *gj += u * w;
                }
            }
        }
        let mut out = x.with_values(g)?;
        out.set_domain((f64::NEG_INFINITY, f64::INFINITY));
        Ok(out)
    }

    fn fingerprint(&self) -> String {
        digest(&[&self.weights, &self.bias])
    }
}
