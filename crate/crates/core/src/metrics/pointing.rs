use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionMap;
use crate::dataio::BoundingBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingGameResult {
    pub hits: usize,
    pub total: usize,
    pub ratio: f64,
    pub tolerance: f64,
    /// Per-sample hit flags, in input order.
    pub per_sample: Vec<bool>,
}

/// A sample scores a hit when its most important pixel lies within Euclidean
/// distance `tolerance` of the strict box interior. With zero tolerance this
/// is interior membership.
pub fn pointing_game(maps: &[AttributionMap], boxes: &[BoundingBox], tolerance: f64) -> Result<PointingGameResult> {
    if maps.len() != boxes.len() {
        return Err(Error::dims(format!("{} boxes", maps.len()), format!("{} boxes", boxes.len())));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::invalid("tolerance", "must be >= 0"));
    }
    let per_sample: Vec<bool> = maps
        .iter()
        .zip(boxes)
        .map(|(m, b)| {
            let (r, c) = m.values.coords(m.argmax());
            b.distance(r, c) <= tolerance
        })
        .collect();
    let hits = per_sample.iter().filter(|h| **h).count();
    let total = maps.len();
    Ok(PointingGameResult {
        hits,
        total,
        ratio: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        tolerance,
        per_sample,
    })
}

/// `label,method,tolerance,hits,total,ratio`
pub fn write_pointing_csv<W: Write>(mut out: W, rows: &[(String, String, &PointingGameResult)]) -> std::io::Result<()> {
    writeln!(out, "label,method,tolerance,hits,total,ratio")?;
    for (label, method, r) in rows {
        writeln!(out, "{label},{method},{},{},{},{}", r.tolerance, r.hits, r.total, r.ratio)?;
    }
    Ok(())
}
