//! Constructions that make the evaluated metrics misbehave on models whose
//! true mechanism is known exactly.

use serde::{Deserialize, Serialize};

use crate::attribution::hadamard;
use crate::dataio::{BoundingBox, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::attribution::{random_attribution, weight_only, AttributionMap};
use crate::metrics::{pixel_flipping, pointing_game, Baseline, FlippingCurve};
use crate::models::{argmax, predictions, Classifier, LinearModel};
use crate::numeric::{ImageGrid, SeededStream};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Row-major index of the manipulated pixel (top-left corner).
pub const CORNER_INDEX: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationReport {
    pub schema_version: u32,
    pub delta: f64,
    pub corner_index: usize,
    pub corner_value: f64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub pg_ratio_before: f64,
    pub pg_ratio_after: f64,
    pub nonzeros_added: usize,
    pub predictions_identical: bool,
}

fn hadamard_pointing(model: &LinearModel, data: &LabeledDataset, boxes: &[BoundingBox]) -> Result<f64> {
    let maps = data
        .images
        .iter()
        .zip(&data.labels)
        .map(|(x, l)| hadamard(model, x, *l))
        .collect::<Result<Vec<_>>>()?;
    Ok(pointing_game(&maps, boxes, 0.0)?.ratio)
}

/// Adds the same increment to the corner weight of every class so the corner
/// carries the largest Hadamard attribution for every class and sample in
/// `data`, while every logit moves by the same amount.
///
/// `data` must be preprocessed so the corner holds one positive constant.
/// Pointing Game ratios use Hadamard maps for the true label, zero tolerance.
pub fn manipulate_corner(
    model: &LinearModel,
    data: &LabeledDataset,
    boxes: &[BoundingBox],
    margin: f64,
) -> Result<(LinearModel, ManipulationReport)> {
    if !(margin > 0.0) {
        return Err(Error::invalid("margin", "must be > 0"));
    }
    let first = data
        .images
        .first()
        .ok_or_else(|| Error::invalid("dataset", "empty"))?;
    let corner_value = first.values()[CORNER_INDEX];
    if let Some(i) = data
        .images
        .iter()
        .position(|x| x.values()[CORNER_INDEX].to_bits() != corner_value.to_bits())
    {
        return Err(Error::invalid(
            "dataset",
            format!("corner value differs at sample {i}; a uniform logit shift needs a constant corner"),
        ));
    }
    if !(corner_value > 0.0) {
        return Err(Error::invalid(
            "dataset",
            format!("corner value {corner_value} must be positive (apply the background offset)"),
        ));
    }

    let classes = model.class_count();
    let mut max_other = f64::NEG_INFINITY;
    for x in &data.images {
        model.check_input(x)?;
        for c in 0..classes {
            for (j, (w, v)) in model.column(c).iter().zip(x.values()).enumerate() {
                if j != CORNER_INDEX {
                    max_other = max_other.max(w * v);
                }
            }
        }
    }
    let min_corner = (0..classes)
        .map(|c| model.column(c)[CORNER_INDEX])
        .fold(f64::INFINITY, f64::min);
    // lands every corner attribution at >= max_other + 2 * margin
    let delta = (max_other + 2.0 * margin) / corner_value - min_corner;

    let mut manipulated = model.clone();
    let mut nonzeros_added = 0;
    for c in 0..classes {
        let w = &mut manipulated.column_mut(c)[CORNER_INDEX];
        let was_zero = *w == 0.0;
        *w += delta;
        if was_zero && *w != 0.0 {
            nonzeros_added += 1;
        }
    }

    let before = predictions(model, data)?;
    let after = predictions(&manipulated, data)?;
    let acc = |p: &[usize]| {
        p.iter().zip(&data.labels).filter(|(a, b)| a == b).count() as f64 / data.len() as f64
    };
    let report = ManipulationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        delta,
        corner_index: CORNER_INDEX,
        corner_value,
        accuracy_before: acc(&before),
        accuracy_after: acc(&after),
        pg_ratio_before: hadamard_pointing(model, data, boxes)?,
        pg_ratio_after: hadamard_pointing(&manipulated, data, boxes)?,
        nonzeros_added,
        predictions_identical: before == after,
    };
    Ok((manipulated, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleVerdict {
    pub schema_version: u32,
    pub input: Vec<f64>,
    /// Columns of `W`, one per class.
    pub weights: Vec<Vec<f64>>,
    pub unmasked_logits: Vec<f64>,
    /// Hadamard map for the predicted class.
    pub attribution: Vec<f64>,
    pub top_feature: usize,
    pub mask_top_logits: Vec<f64>,
    pub mask_other_logits: Vec<f64>,
    pub mask_all_logits: Vec<f64>,
    pub prediction_unmasked: usize,
    pub prediction_mask_top: usize,
    pub prediction_mask_other: usize,
    /// Masking the most important feature kept the prediction, masking the
    /// less important one changed it.
    pub verdict: bool,
}

/// Two-feature, three-class linear model where accuracy rewards masking the
/// less relevant feature.
pub fn accuracy_counterexample() -> Result<CounterexampleVerdict> {
    let columns = vec![vec![2.0, 1.0], vec![6f64.sqrt(), 0.0], vec![5f64.sqrt(), 0.0]];
    let model = LinearModel::new(1, 2, columns.clone(), vec![0.0; 3])?;
    let x = ImageGrid::new(1, 2, vec![1.0, 1.0], (0.0, 1.0))?;
    let logits = model.logits(&x)?;
    let predicted = argmax(&logits);
    let map = hadamard(&model, &x, predicted)?;
    let top = map.argmax();
    let other = 1 - top;
    let masked = |idx: &[usize]| -> Result<Vec<f64>> {
        let mut v = x.clone();
        for i in idx {
            v.values_mut()[*i] = 0.0;
        }
        model.logits(&v)
    };
    let mask_top = masked(&[top])?;
    let mask_other = masked(&[other])?;
    let mask_all = masked(&[0, 1])?;
    let (p_top, p_other) = (argmax(&mask_top), argmax(&mask_other));
    Ok(CounterexampleVerdict {
        schema_version: REPORT_SCHEMA_VERSION,
        input: x.values().to_vec(),
        weights: columns,
        unmasked_logits: logits,
        attribution: map.values.values().to_vec(),
        top_feature: top,
        mask_top_logits: mask_top,
        mask_other_logits: mask_other,
        mask_all_logits: mask_all,
        prediction_unmasked: predicted,
        prediction_mask_top: p_top,
        prediction_mask_other: p_other,
        verdict: p_top == predicted && p_other != predicted,
    })
}

/// Single-output linear model whose largest weight sits on a nearly dark
/// pixel: ordering by weight masks that pixel first and barely moves the
/// score, while most random orders remove far more.
pub fn goals_flaw_instance() -> Result<(LinearModel, LabeledDataset)> {
    let model = LinearModel::new(1, 4, vec![vec![10.0, 1.0, 1.0, 1.0]], vec![0.0])?;
    let x = ImageGrid::new(1, 4, vec![0.01, 1.0, 1.0, 1.0], (0.0, 1.0))?;
    let data = LabeledDataset::new(vec![x], vec![0], Split::Test)?;
    Ok((model, data))
}

/// First `(schedule index, other curve)` where `curve` scores above some
/// curve in `others` by more than `tol`.
pub fn first_minorization_violation(curve: &FlippingCurve, others: &[FlippingCurve], tol: f64) -> Option<(usize, usize)> {
    for (j, other) in others.iter().enumerate() {
        for (i, (a, b)) in curve.scores.iter().zip(&other.scores).enumerate() {
            if *a > b + tol {
                return Some((i, j));
            }
        }
    }
    None
}

/// Random-order flipping curves; order `r` reads `stream.split(r).split(sample)`.
pub fn random_order_curves<M: Classifier + ?Sized>(
    model: &M,
    data: &LabeledDataset,
    schedule: &[usize],
    baseline: Baseline,
    orders: usize,
    stream: SeededStream,
) -> Result<Vec<FlippingCurve>> {
    (0..orders)
        .map(|r| {
            let maps = data
                .images
                .iter()
                .zip(&data.labels)
                .enumerate()
                .map(|(s, (x, l))| {
                    let mut m = random_attribution(x, stream.split(r as u64).split(s as u64))?;
                    m.target = *l;
                    Ok(m)
                })
                .collect::<Result<Vec<AttributionMap>>>()?;
            let mut c = pixel_flipping(model, data, &maps, schedule, baseline, stream.split(r as u64))?;
            c.ordering_id = format!("random#{r}");
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalsFlawReport {
    pub schema_version: u32,
    pub schedule: Vec<usize>,
    pub hadamard_scores: Vec<f64>,
    pub weight_only_scores: Vec<f64>,
    pub random_orders: usize,
    pub hadamard_minorizes: bool,
    pub weight_only_minorizes: bool,
    /// Masked count at the first point where a random order beats the
    /// weight ordering.
    pub weight_only_violation_k: Option<usize>,
}

/// Flipping curves (zeros baseline) of the weight-only and Hadamard orders on
/// [`goals_flaw_instance`] against `orders` random orders.
pub fn goals_flaw_check(orders: usize, stream: SeededStream) -> Result<GoalsFlawReport> {
    let (model, data) = goals_flaw_instance()?;
    let schedule: Vec<usize> = (0..=model.dim()).collect();
    let x = &data.images[0];
    let had = pixel_flipping(&model, &data, &[hadamard(&model, x, 0)?], &schedule, Baseline::Zeros, stream)?;
    let wo = pixel_flipping(&model, &data, &[weight_only(&model, x, 0)?], &schedule, Baseline::Zeros, stream)?;
    let random = random_order_curves(&model, &data, &schedule, Baseline::Zeros, orders, stream)?;
    let violation = first_minorization_violation(&wo, &random, 1e-10);
    Ok(GoalsFlawReport {
        schema_version: REPORT_SCHEMA_VERSION,
        hadamard_scores: had.scores.clone(),
        weight_only_scores: wo.scores.clone(),
        random_orders: orders,
        hadamard_minorizes: first_minorization_violation(&had, &random, 1e-10).is_none(),
        weight_only_minorizes: violation.is_none(),
        weight_only_violation_k: violation.map(|(i, _)| schedule[i]),
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appendix_counterexample() {
        let v = accuracy_counterexample().unwrap();
        let expect = [3.0, 6f64.sqrt(), 5f64.sqrt()];
        for (a, b) in v.unmasked_logits.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(v.attribution, vec![2.0, 1.0]);
        assert_eq!(v.top_feature, 0);
        for (a, b) in v.mask_top_logits.iter().zip([1.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in v.mask_other_logits.iter().zip([2.0, 6f64.sqrt(), 5f64.sqrt()]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(v.prediction_mask_top, 0);
        assert_eq!(v.prediction_mask_other, 1);
        assert!(v.verdict);
    }

    fn toy_data(corner: f64) -> (LinearModel, LabeledDataset, Vec<BoundingBox>) {
        let mut m = LinearModel::zeros(3, 3, 2);
        m.column_mut(0).copy_from_slice(&[0.0, 0.1, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        m.column_mut(1).copy_from_slice(&[0.3, 0.0, 0.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0]);
        let a = ImageGrid::new(3, 3, vec![corner, 0.1, 0.1, 0.1, 1.0, 0.2, 0.1, 0.1, 0.1], (0.1, 1.1)).unwrap();
        let b = ImageGrid::new(3, 3, vec![corner, 0.1, 0.1, 0.1, 0.2, 1.0, 0.1, 0.1, 0.1], (0.1, 1.1)).unwrap();
        let data = LabeledDataset::new(vec![a, b], vec![0, 1], Split::Test).unwrap();
        let bx = BoundingBox {
            row_min: 1,
            row_max: 1,
            col_min: 1,
            col_max: 2,
        };
        (m, data, vec![bx, bx])
    }

    #[test]
    fn manipulation_shifts_logits_uniformly() {
        let (m, data, boxes) = toy_data(0.1);
        let (after, report) = manipulate_corner(&m, &data, &boxes, 1.0).unwrap();
        assert!(report.predictions_identical);
        assert_eq!(report.accuracy_before, report.accuracy_after);
        assert_eq!(report.pg_ratio_before, 1.0);
        assert_eq!(report.pg_ratio_after, 0.0);
        assert_eq!(report.nonzeros_added, 1);
        let shift = report.delta * report.corner_value;
        for x in &data.images {
            let z0 = m.logits(x).unwrap();
            let z1 = after.logits(x).unwrap();
            for (a, b) in z0.iter().zip(&z1) {
                assert!((b - a - shift).abs() < 1e-12);
            }
            for c in 0..2 {
                let map = hadamard(&after, x, c).unwrap();
                assert_eq!(map.argmax(), CORNER_INDEX);
            }
        }
    }

    #[test]
    fn weight_order_is_not_optimal() {
        let r = goals_flaw_check(100, SeededStream::new(3)).unwrap();
        assert!(r.hadamard_minorizes);
        assert!(!r.weight_only_minorizes);
        assert_eq!(r.weight_only_violation_k, Some(1));
        // removing the dim pixel first barely moves the score
        assert!((r.weight_only_scores[1] - 3.0).abs() < 1e-12);
        assert!((r.hadamard_scores[1] - 2.1).abs() < 1e-12);
    }

    #[test]
    fn non_constant_corner_rejected() {
        let (m, mut data, boxes) = toy_data(0.1);
        data.images[1].values_mut()[0] = 0.2;
        assert!(manipulate_corner(&m, &data, &boxes, 1.0).is_err());
        let (m, data, boxes) = toy_data(0.0);
        assert!(manipulate_corner(&m, &data, &boxes, 1.0).is_err());
    }
}
