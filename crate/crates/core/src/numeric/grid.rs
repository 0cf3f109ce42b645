use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major single-channel pixel array with the value range it is meant to
/// live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
    domain: (f64, f64),
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>, domain: (f64, f64)) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::dims(
                format!("{height}x{width} = {} values", height * width),
                values.len(),
            ));
        }
        if !(domain.0 <= domain.1) {
            return Err(Error::invalid("domain", format!("{domain:?} is not an interval")));
        }
        Ok(Self {
            height,
            width,
            values,
            domain,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64, domain: (f64, f64)) -> Self {
        Self {
            height,
            width,
            values: vec![value; height * width],
            domain,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0, (f64::NEG_INFINITY, f64::INFINITY))
    }

    /// Same shape and domain as `self`, different values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.height, self.width, values, self.domain)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn set_domain(&mut self, domain: (f64, f64)) {
        self.domain = domain;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// True when every value lies inside the domain.
    pub fn is_valid_input(&self) -> bool {
        let (lo, hi) = self.domain;
        self.values.iter().all(|v| *v >= lo && *v <= hi)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Index of the largest value; ties go to the lowest row-major index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &ImageGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            values: self.values.iter().map(|v| f(*v)).collect(),
            ..self.clone()
        }
    }

    pub fn zip_map(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> Result<ImageGrid> {
        if !self.same_shape(other) {
            return Err(Error::dims(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(ImageGrid {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
            ..self.clone()
        })
    }

    /// Bit-level equality of the values, shape included.
    pub fn bitwise_eq(&self, other: &ImageGrid) -> bool {
        self.same_shape(other)
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
