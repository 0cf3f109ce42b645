use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::AttributionMap;
use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{argmax, Classifier};
use crate::numeric::{ImageGrid, SeededStream};

const NOISE_STREAM: u64 = 0x006e_6f69_7365;
const SELECT_STREAM: u64 = 0x7365_6c65_6374;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Zeros,
    /// I.i.d. uniform over the input's domain.
    UniformRandom,
}

impl Baseline {
    pub fn id(self) -> &'static str {
        match self {
            Baseline::Zeros => "zeros",
            Baseline::UniformRandom => "uniform_random",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeros" => Ok(Baseline::Zeros),
            "uniform_random" | "uniform-random" | "random" => Ok(Baseline::UniformRandom),
            other => Err(Error::invalid("baseline", format!("unknown baseline `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpec {
    indices: Vec<usize>,
    pub baseline: Baseline,
}

impl MaskSpec {
    pub fn new(indices: Vec<usize>, baseline: Baseline) -> Result<Self> {
        let mut seen = HashSet::with_capacity(indices.len());
        if let Some(dup) = indices.iter().find(|i| !seen.insert(**i)) {
            return Err(Error::invalid("indices", format!("pixel {dup} listed twice")));
        }
        Ok(Self { indices, baseline })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Top `k` pixels of `map` in descending order.
pub fn top_k_mask(map: &AttributionMap, k: usize, baseline: Baseline) -> Result<MaskSpec> {
    if k > map.values.len() {
        return Err(Error::invalid("k", format!("{k} exceeds {} pixels", map.values.len())));
    }
    let mut ranking = map.ranking();
    ranking.truncate(k);
    Ok(MaskSpec {
        indices: ranking,
        baseline,
    })
}

/// Replaces the listed pixels by the baseline. For the random baseline a full
/// noise grid is drawn from `stream` in row-major order, so the result depends
/// only on the set of indices, not their order.
pub fn apply_mask(x: &ImageGrid, spec: &MaskSpec, stream: SeededStream) -> Result<ImageGrid> {
    if let Some(bad) = spec.indices.iter().find(|i| **i >= x.len()) {
        return Err(Error::invalid("indices", format!("pixel {bad} outside {} pixels", x.len())));
    }
    let mut out = x.clone();
    match spec.baseline {
        Baseline::Zeros => {
            for &i in &spec.indices {
                out.values_mut()[i] = 0.0;
            }
        }
        Baseline::UniformRandom => {
            let (lo, hi) = x.domain();
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::invalid("baseline", "random baseline needs a bounded domain"));
            }
            let mut rng = stream.rng();
            let noise: Vec<f64> = (0..x.len())
                .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
                .collect();
            for &i in &spec.indices {
                out.values_mut()[i] = noise[i];
            }
        }
    }
    Ok(out)
}

/// Fraction of masked pixels with no 4-connected masked neighbour; 0 for an
/// empty mask.
pub fn isolation_score(spec: &MaskSpec, height: usize, width: usize) -> f64 {
    if spec.indices.is_empty() {
        return 0.0;
    }
    let mut masked = vec![false; height * width];
    for &i in &spec.indices {
        masked[i] = true;
    }
    let isolated = spec
        .indices
        .iter()
        .filter(|&&i| {
            let (r, c) = (i / width, i % width);
            let up = r > 0 && masked[i - width];
            let down = r + 1 < height && masked[i + width];
            let left = c > 0 && masked[i - 1];
            let right = c + 1 < width && masked[i + 1];
            !(up || down || left || right)
        })
        .count();
    isolated as f64 / spec.indices.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlippingCurve {
    pub ordering_id: String,
    pub baseline: Baseline,
    pub schedule: Vec<usize>,
    /// Mean target logit after masking `schedule[i]` pixels.
    pub scores: Vec<f64>,
    /// Fraction still classified as the label.
    pub accuracies: Vec<f64>,
    /// Mean isolation score of the masks.
    pub isolation: Vec<f64>,
    /// `sample_scores[s][i]`: target logit of sample `s` at `schedule[i]`.
    #[serde(skip)]
    pub sample_scores: Vec<Vec<f64>>,
}

fn check_schedule(schedule: &[usize], limit: usize, what: &'static str) -> Result<()> {
    if schedule.first() != Some(&0) {
        return Err(Error::invalid("schedule", "must start at 0"));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("schedule", "must be strictly increasing"));
    }
    if let Some(last) = schedule.last().filter(|l| **l > limit) {
        return Err(Error::invalid(what, format!("schedule entry {last} exceeds {limit}")));
    }
    Ok(())
}

fn noise_stream(stream: SeededStream, sample: usize, k: usize) -> SeededStream {
    stream.split(NOISE_STREAM).split(sample as u64).split(k as u64)
}

struct Accumulator {
    scores: Vec<f64>,
    correct: Vec<usize>,
    isolation: Vec<f64>,
    sample_scores: Vec<Vec<f64>>,
}

impl Accumulator {
    fn new(points: usize, samples: usize) -> Self {
        Self {
            scores: vec![0.0; points],
            correct: vec![0; points],
            isolation: vec![0.0; points],
            sample_scores: Vec::with_capacity(samples),
        }
    }

    fn finish(self, ordering_id: String, baseline: Baseline, schedule: &[usize]) -> FlippingCurve {
        let n = self.sample_scores.len().max(1) as f64;
        FlippingCurve {
            ordering_id,
            baseline,
            schedule: schedule.to_vec(),
            scores: self.scores.iter().map(|s| s / n).collect(),
            accuracies: self.correct.iter().map(|c| *c as f64 / n).collect(),
            isolation: self.isolation.iter().map(|s| s / n).collect(),
            sample_scores: self.sample_scores,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate_masks<M, F>(
    model: &M,
    data: &LabeledDataset,
    maps: &[AttributionMap],
    schedule: &[usize],
    baseline: Baseline,
    stream: SeededStream,
    mut select: F,
) -> Result<Accumulator>
where
    M: Classifier + ?Sized,
    F: FnMut(usize, &AttributionMap, usize, usize) -> Vec<usize>,
{
    if maps.len() != data.len() {
        return Err(Error::dims(format!("{} maps", data.len()), format!("{} maps", maps.len())));
    }
    let mut acc = Accumulator::new(schedule.len(), data.len());
    for (s, ((x, label), map)) in data.images.iter().zip(&data.labels).zip(maps).enumerate() {
        if !map.values.same_shape(x) {
            return Err(Error::dims(
                format!("{}x{} map", x.height(), x.width()),
                format!("{}x{}", map.values.height(), map.values.width()),
            ));
        }
        let mut row = Vec::with_capacity(schedule.len());
        for (i, &k) in schedule.iter().enumerate() {
            let spec = MaskSpec {
                indices: select(s, map, i, k),
                baseline,
            };
            let masked = apply_mask(x, &spec, noise_stream(stream, s, k))?;
            let z = model.logits(&masked)?;
            let score = z[map.target];
            acc.scores[i] += score;
            if argmax(&z) == *label {
                acc.correct[i] += 1;
            }
            acc.isolation[i] += isolation_score(&spec, x.height(), x.width());
            row.push(score);
        }
        acc.sample_scores.push(row);
    }
    Ok(acc)
}

/// Masks the top-`k` pixels of each sample's map for every `k` in `schedule`
/// (re-masking from the original image each time) and records the mean
/// target logit and the accuracy.
pub fn pixel_flipping<M: Classifier + ?Sized>(
    model: &M,
    data: &LabeledDataset,
    maps: &[AttributionMap],
    schedule: &[usize],
    baseline: Baseline,
    stream: SeededStream,
) -> Result<FlippingCurve> {
    let d = data.images.first().map_or(0, ImageGrid::len);
    check_schedule(schedule, d, "schedule")?;
    let ordering = maps.first().map_or_else(|| "none".to_string(), |m| m.method.to_string());
    let mut rankings: Vec<Option<Vec<usize>>> = vec![None; maps.len()];
    let acc = evaluate_masks(model, data, maps, schedule, baseline, stream, |s, map, _, k| {
        let r = rankings[s].get_or_insert_with(|| map.ranking());
        r[..k].to_vec()
    })?;
    Ok(acc.finish(ordering, baseline, schedule))
}

/// For each `n` in `schedule`, masks `n` pixels drawn uniformly without
/// replacement from the top-`n_ref` pixels of the reference map.
#[allow(clippy::too_many_arguments)]
pub fn reference_pixel_flipping<M: Classifier + ?Sized>(
    model: &M,
    data: &LabeledDataset,
    reference_maps: &[AttributionMap],
    n_ref: usize,
    schedule: &[usize],
    baseline: Baseline,
    stream: SeededStream,
) -> Result<FlippingCurve> {
    let d = data.images.first().map_or(0, ImageGrid::len);
    if n_ref > d {
        return Err(Error::invalid("n_ref", format!("{n_ref} exceeds {d} pixels")));
    }
    check_schedule(schedule, n_ref, "n")?;
    let ordering = format!(
        "reference({},{n_ref})",
        reference_maps.first().map_or("none", |m| m.method.id())
    );
    let mut tops: Vec<Option<Vec<usize>>> = vec![None; reference_maps.len()];
    let acc = evaluate_masks(model, data, reference_maps, schedule, baseline, stream, |s, map, _, n| {
        let top = tops[s].get_or_insert_with(|| {
            let mut r = map.ranking();
            r.truncate(n_ref);
            r
        });
        let mut rng = stream.split(SELECT_STREAM).split(s as u64).split(n as u64).rng();
        rand::seq::index::sample(&mut rng, n_ref, n)
            .into_iter()
            .map(|j| top[j])
            .collect()
    })?;
    Ok(acc.finish(ordering, baseline, schedule))
}

/// `ordering_id,baseline_id,k,mean_score,accuracy,isolation_score`
pub fn write_curves_csv<W: Write>(mut out: W, curves: &[FlippingCurve]) -> std::io::Result<()> {
    writeln!(out, "ordering_id,baseline_id,k,mean_score,accuracy,isolation_score")?;
    for c in curves {
        for i in 0..c.schedule.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                c.ordering_id, c.baseline, c.schedule[i], c.scores[i], c.accuracies[i], c.isolation[i]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{hadamard, random_attribution};
    use crate::dataio::Split;
    use crate::models::LinearModel;

    fn grid(vals: &[f64]) -> ImageGrid {
        ImageGrid::new(1, vals.len(), vals.to_vec(), (0.1, 1.1)).unwrap()
    }

    #[test]
    fn empty_mask_is_identity() {
        let x = grid(&[0.1, 0.5, 0.9]);
        let spec = MaskSpec::new(vec![], Baseline::UniformRandom).unwrap();
        assert!(apply_mask(&x, &spec, SeededStream::new(1)).unwrap().bitwise_eq(&x));
    }

    #[test]
    fn full_zero_mask() {
        let x = grid(&[0.1, 0.5, 0.9]);
        let spec = MaskSpec::new(vec![2, 0, 1], Baseline::Zeros).unwrap();
        let out = apply_mask(&x, &spec, SeededStream::new(1)).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_index_zero_mask() {
        let x = grid(&[0.1, 0.1, 0.1, 0.1]);
        let spec = MaskSpec::new(vec![0], Baseline::Zeros).unwrap();
        let out = apply_mask(&x, &spec, SeededStream::new(1)).unwrap();
        assert_eq!(out.values(), &[0.0, 0.1, 0.1, 0.1]);
    }

    #[test]
    fn random_baseline_stays_in_domain_and_only_touches_mask() {
        let x = grid(&[0.3; 50]);
        let idx: Vec<usize> = (0..50).step_by(3).collect();
        let spec = MaskSpec::new(idx.clone(), Baseline::UniformRandom).unwrap();
        let out = apply_mask(&x, &spec, SeededStream::new(4)).unwrap();
        for j in 0..50 {
            if idx.contains(&j) {
                assert!((0.1..1.1).contains(&out.values()[j]));
            } else {
                assert_eq!(out.values()[j].to_bits(), x.values()[j].to_bits());
            }
        }
    }

    #[test]
    fn duplicates_rejected() {
        assert!(MaskSpec::new(vec![1, 1], Baseline::Zeros).is_err());
    }

    #[test]
    fn isolation_examples() {
        let one = MaskSpec::new(vec![12], Baseline::Zeros).unwrap();
        assert_eq!(isolation_score(&one, 5, 5), 1.0);
        let block = MaskSpec::new(vec![0, 1, 2, 5, 6, 7, 10, 11, 12], Baseline::Zeros).unwrap();
        assert_eq!(isolation_score(&block, 5, 5), 0.0);
        let diag = MaskSpec::new(vec![0, 6], Baseline::Zeros).unwrap();
        assert_eq!(isolation_score(&diag, 5, 5), 1.0);
        // wrap-around across rows is not adjacency
        let wrap = MaskSpec::new(vec![4, 5], Baseline::Zeros).unwrap();
        assert_eq!(isolation_score(&wrap, 5, 5), 1.0);
    }

    fn tiny_problem() -> (LinearModel, LabeledDataset) {
        let m = LinearModel::new(1, 4, vec![vec![1.0, -2.0, 3.0, 0.5]], vec![0.25]).unwrap();
        let data = LabeledDataset::new(vec![grid(&[0.5, 0.2, 0.9, 1.0])], vec![0], Split::Test).unwrap();
        (m, data)
    }

    #[test]
    fn hadamard_zeros_curve_is_prefix_sum() {
        let (m, data) = tiny_problem();
        let maps = vec![hadamard(&m, &data.images[0], 0).unwrap()];
        let curve = pixel_flipping(&m, &data, &maps, &[0, 1, 2, 3, 4], Baseline::Zeros, SeededStream::new(0)).unwrap();
        let z = m.logits(&data.images[0]).unwrap()[0];
        let mut attr = maps[0].values.values().to_vec();
        attr.sort_by(|a, b| b.total_cmp(a));
        let mut expect = z;
        for (i, k) in [0usize, 1, 2, 3, 4].iter().enumerate() {
            if *k > 0 {
                expect -= attr[k - 1];
            }
            assert!((curve.scores[i] - expect).abs() < 1e-12);
        }
        assert_eq!(curve.scores[0], z);
    }

    #[test]
    fn schedule_validation() {
        let (m, data) = tiny_problem();
        let maps = vec![hadamard(&m, &data.images[0], 0).unwrap()];
        let s = SeededStream::new(0);
        assert!(pixel_flipping(&m, &data, &maps, &[0, 5], Baseline::Zeros, s).is_err());
        assert!(pixel_flipping(&m, &data, &maps, &[0, 2, 2], Baseline::Zeros, s).is_err());
        assert!(pixel_flipping(&m, &data, &maps, &[1, 2], Baseline::Zeros, s).is_err());
        assert!(reference_pixel_flipping(&m, &data, &maps, 2, &[0, 3], Baseline::Zeros, s).is_err());
        assert!(reference_pixel_flipping(&m, &data, &maps, 5, &[0, 1], Baseline::Zeros, s).is_err());
    }

    #[test]
    fn reference_with_tight_budget_matches_attribution_masking() {
        let (m, data) = tiny_problem();
        let maps = vec![random_attribution(&data.images[0], SeededStream::new(3)).unwrap()];
        for baseline in [Baseline::Zeros, Baseline::UniformRandom] {
            let s = SeededStream::new(8);
            let plain = pixel_flipping(&m, &data, &maps, &[0, 1, 2, 3], baseline, s).unwrap();
            for n in [1usize, 2, 3] {
                let r = reference_pixel_flipping(&m, &data, &maps, n, &[0, n], baseline, s).unwrap();
                assert_eq!(r.scores[1].to_bits(), plain.scores[n].to_bits());
            }
        }
    }

    #[test]
    fn csv_rows() {
        let (m, data) = tiny_problem();
        let maps = vec![hadamard(&m, &data.images[0], 0).unwrap()];
        let c = pixel_flipping(&m, &data, &maps, &[0, 2], Baseline::Zeros, SeededStream::new(0)).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &[c]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 3);
        assert!(s.lines().nth(1).unwrap().starts_with("hadamard,zeros,0,"));
    }
}
