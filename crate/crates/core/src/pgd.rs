//! Projected sign-gradient steps on the cross-entropy, in the usual attack
//! direction or reversed ("enhancement") so an arbitrary model is pushed
//! towards the true label inside an l-infinity ball.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::{grad_cam, gradient};
use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{argmax, cross_entropy, Classifier, ConvNet};
use crate::numeric::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Ascend the loss.
    Attack,
    /// Descend the loss.
    Enhance,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Attack => "attack",
            Direction::Enhance => "enhance",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attack" => Ok(Direction::Attack),
            "enhance" => Ok(Direction::Enhance),
            other => Err(Error::invalid("direction", format!("`{other}` (expected attack|enhance)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub epsilon: f64,
    pub step: f64,
    pub steps: usize,
    pub direction: Direction,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.3,
            step: 0.03,
            steps: 30,
            direction: Direction::Enhance,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon", "must be a finite value >= 0"));
        }
        if !(self.step > 0.0) {
            return Err(Error::invalid("step", "must be > 0"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be >= 1"));
        }
        Ok(())
    }
}

/// Evaluates the wrapped model on `x + offset`, so perturbations can be
/// computed in raw pixel space for a model trained on shifted inputs.
#[derive(Debug, Clone, Copy)]
pub struct Offset<'a, M: ?Sized> {
    pub inner: &'a M,
    pub offset: f64,
}

impl<M: Classifier + ?Sized> Offset<'_, M> {
    fn shifted(&self, x: &ImageGrid) -> ImageGrid {
        crate::dataio::preprocess(x, self.offset)
    }
}

impl<M: Classifier + ?Sized> Classifier for Offset<'_, M> {
    fn input_shape(&self) -> (usize, usize) {
        self.inner.input_shape()
    }

    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    fn logits(&self, x: &ImageGrid) -> Result<Vec<f64>> {
        self.inner.logits(&self.shifted(x))
    }

    fn input_gradient(&self, x: &ImageGrid, upstream: &[f64]) -> Result<ImageGrid> {
        self.inner.input_gradient(&self.shifted(x), upstream)
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clamp to `[origin - eps, origin + eps]`, then to the grid's domain.
pub fn project(candidate: &mut ImageGrid, origin: &ImageGrid, epsilon: f64) {
    let (lo, hi) = origin.domain();
    for (v, o) in candidate.values_mut().iter_mut().zip(origin.values()) {
        *v = v.clamp(o - epsilon, o + epsilon).clamp(lo, hi);
    }
}

pub fn cross_entropy_at<M: Classifier + ?Sized>(model: &M, x: &ImageGrid, label: usize) -> Result<f64> {
    Ok(cross_entropy(&model.logits(x)?, label).0)
}

/// `x <- project(x +- step * sign(grad_x CE))`, `steps` times, starting at `x`.
pub fn pgd_perturb<M: Classifier + ?Sized>(model: &M, x: &ImageGrid, label: usize, cfg: &PgdConfig) -> Result<ImageGrid> {
    cfg.validate()?;
    let classes = model.class_count();
    if label >= classes {
        return Err(Error::ClassOutOfRange { class: label, classes });
    }
    if !x.is_valid_input() {
        return Err(Error::invalid("x", "input lies outside its domain"));
    }
    let dir = match cfg.direction {
        Direction::Attack => 1.0,
        Direction::Enhance => -1.0,
    };
    let mut cur = x.clone();
    for _ in 0..cfg.steps {
        let z = model.logits(&cur)?;
        let (loss, dz) = cross_entropy(&z, label);
        if !loss.is_finite() {
            return Err(Error::invalid("loss", format!("non-finite cross-entropy {loss}")));
        }
        let g = model.input_gradient(&cur, &dz)?;
        for (v, gv) in cur.values_mut().iter_mut().zip(g.values()) {
            *v += dir * cfg.step * sign(*gv);
        }
        project(&mut cur, x, cfg.epsilon);
    }
    Ok(cur)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementReport {
    pub schema_version: u32,
    pub samples: usize,
    pub config: PgdConfig,
    pub offset: f64,
    pub raw_accuracy: f64,
    pub perturbed_accuracy: f64,
    pub max_linf: f64,
    /// Fraction of samples whose loss did not increase (enhance) or did not
    /// decrease (attack).
    pub loss_moved_fraction: f64,
    /// Mean Spearman correlation between raw and perturbed maps.
    pub spearman_gradient: f64,
    pub spearman_grad_cam: f64,
}

/// Perturbs every raw image (values in `[0, 1]`) of `data` against the true
/// label; the net always sees `image + offset`.
pub fn enhancement_experiment(
    net: &ConvNet,
    data: &LabeledDataset,
    offset: f64,
    cfg: &PgdConfig,
) -> Result<(EnhancementReport, Vec<ImageGrid>)> {
    cfg.validate()?;
    let model = Offset { inner: net, offset };
    let mut enhanced = Vec::with_capacity(data.len());
    let (mut raw_hits, mut new_hits, mut moved) = (0usize, 0usize, 0usize);
    let mut max_linf: f64 = 0.0;
    let (mut rho_grad, mut rho_cam) = (0.0, 0.0);
    for (x, &label) in data.images.iter().zip(&data.labels) {
        let out = pgd_perturb(&model, x, label, cfg)?;
        let (z0, z1) = (model.logits(x)?, model.logits(&out)?);
        raw_hits += usize::from(argmax(&z0) == label);
        new_hits += usize::from(argmax(&z1) == label);
        let (l0, l1) = (cross_entropy(&z0, label).0, cross_entropy(&z1, label).0);
        moved += usize::from(match cfg.direction {
            Direction::Enhance => l1 <= l0,
            Direction::Attack => l1 >= l0,
        });
        max_linf = max_linf.max(out.max_abs_diff(x));

        let (sx, so) = (model.shifted(x), model.shifted(&out));
        rho_grad += spearman(
            gradient(net, &sx, label)?.values.values(),
            gradient(net, &so, label)?.values.values(),
        );
        rho_cam += spearman(
            grad_cam(net, &sx, label)?.values.values(),
            grad_cam(net, &so, label)?.values.values(),
        );
        enhanced.push(out);
    }
    let n = data.len().max(1) as f64;
    let report = EnhancementReport {
        schema_version: 1,
        samples: data.len(),
        config: *cfg,
        offset,
        raw_accuracy: raw_hits as f64 / n,
        perturbed_accuracy: new_hits as f64 / n,
        max_linf,
        loss_moved_fraction: moved as f64 / n,
        spearman_gradient: rho_grad / n,
        spearman_grad_cam: rho_cam / n,
    };
    Ok((report, enhanced))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Pearson correlation of average ranks; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Split;
    use crate::models::LinearModel;
    use proptest::prelude::*;

    fn lin() -> LinearModel {
        LinearModel::new(
            2,
            2,
            vec![vec![1.0, -2.0, 0.5, 0.0], vec![-1.0, 1.0, 2.0, -0.5], vec![0.0, 0.3, -0.2, 1.0]],
            vec![0.1, 0.0, -0.1],
        )
        .unwrap()
    }

    fn x0() -> ImageGrid {
        ImageGrid::new(2, 2, vec![0.4, 0.5, 0.6, 0.45], (0.0, 1.0)).unwrap()
    }

    #[test]
    fn zero_gradient_is_stationary() {
        let m = LinearModel::zeros(2, 2, 3);
        let cfg = PgdConfig {
            steps: 1,
            ..PgdConfig::default()
        };
        let out = pgd_perturb(&m, &x0(), 1, &cfg).unwrap();
        assert!(out.bitwise_eq(&x0()));
    }

    #[test]
    fn zero_budget_returns_input() {
        let cfg = PgdConfig {
            epsilon: 0.0,
            ..PgdConfig::default()
        };
        assert!(pgd_perturb(&lin(), &x0(), 2, &cfg).unwrap().bitwise_eq(&x0()));
    }

    #[test]
    fn one_step_attack_and_enhance_mirror() {
        let base = PgdConfig {
            epsilon: 0.3,
            step: 0.03,
            steps: 1,
            direction: Direction::Attack,
        };
        let x = x0();
        let attack = pgd_perturb(&lin(), &x, 0, &base).unwrap();
        let enhance = pgd_perturb(
            &lin(),
            &x,
            0,
            &PgdConfig {
                direction: Direction::Enhance,
                ..base
            },
        )
        .unwrap();
        let mut mirrored = x.zip_map(&attack, |a, b| 2.0 * a - b).unwrap();
        project(&mut mirrored, &x, base.epsilon);
        assert!(mirrored.max_abs_diff(&enhance) < 1e-12);
        assert!(attack.max_abs_diff(&x) > 0.0);
    }

    #[test]
    fn enhance_lowers_loss_on_linear_model() {
        let cfg = PgdConfig::default();
        let out = pgd_perturb(&lin(), &x0(), 2, &cfg).unwrap();
        assert!(cross_entropy_at(&lin(), &out, 2).unwrap() < cross_entropy_at(&lin(), &x0(), 2).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let bad = PgdConfig {
            steps: 0,
            ..PgdConfig::default()
        };
        assert!(pgd_perturb(&lin(), &x0(), 0, &bad).is_err());
        assert!(pgd_perturb(&lin(), &x0(), 3, &PgdConfig::default()).is_err());
    }

    #[test]
    fn projection_is_idempotent_on_feasible_points() {
        let x = x0();
        let mut y = x.map(|v| v + 0.1);
        project(&mut y, &x, 0.2);
        let before = y.clone();
        project(&mut y, &x, 0.2);
        assert!(y.bitwise_eq(&before));
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[0.0, 2.0]), 0.0);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn experiment_with_empty_budget_keeps_accuracy() {
        let net = ConvNet::init_untrained(1);
        let imgs = (0..3)
            .map(|i| ImageGrid::filled(28, 28, 0.2 * i as f64, (0.0, 1.0)))
            .collect();
        let data = LabeledDataset::new(imgs, vec![1, 2, 3], Split::Test).unwrap();
        let cfg = PgdConfig {
            epsilon: 0.0,
            steps: 2,
            ..PgdConfig::default()
        };
        let (r, out) = enhancement_experiment(&net, &data, 0.1, &cfg).unwrap();
        assert_eq!(r.raw_accuracy, r.perturbed_accuracy);
        assert_eq!(r.max_linf, 0.0);
        assert!(out.iter().zip(&data.images).all(|(a, b)| a.bitwise_eq(b)));
    }

    proptest! {
        #[test]
        fn stays_inside_ball_and_domain(seed in 0u64..500, eps in 0.0f64..0.5, steps in 1usize..6) {
            let mut rng = crate::numeric::SeededStream::new(seed).rng();
            use rand::Rng;
            let x = ImageGrid::new(2, 2, (0..4).map(|_| rng.random::<f64>()).collect(), (0.0, 1.0)).unwrap();
            let cfg = PgdConfig { epsilon: eps, step: 0.07, steps, direction: Direction::Attack };
            let out = pgd_perturb(&lin(), &x, (seed % 3) as usize, &cfg).unwrap();
            prop_assert!(out.max_abs_diff(&x) <= eps + 1e-12);
            prop_assert!(out.is_valid_input());
        }
    }
}
