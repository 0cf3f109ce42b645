use std::io::Write;

use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::numeric::ImageGrid;

/// Tight rectangle around the positive pixels of a raw image. The fields are
/// the inclusive bounds of the strict interior; the drawn edges sit one pixel
/// further out (see [`BoundingBox::edges`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl BoundingBox {
    /// `(top, bottom, left, right)` edge lines, clamped to the image border.
    pub fn edges(&self, height: usize, width: usize) -> (usize, usize, usize, usize) {
        (
            self.row_min.saturating_sub(1),
            (self.row_max + 1).min(height - 1),
            self.col_min.saturating_sub(1),
            (self.col_max + 1).min(width - 1),
        )
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_min..=self.row_max).contains(&row) && (self.col_min..=self.col_max).contains(&col)
    }

    /// Euclidean distance from a pixel to the nearest interior pixel.
    pub fn distance(&self, row: usize, col: usize) -> f64 {
        let gap = |v: usize, lo: usize, hi: usize| {
            if v < lo {
                (lo - v) as f64
            } else if v > hi {
                (v - hi) as f64
            } else {
                0.0
            }
        };
        gap(row, self.row_min, self.row_max).hypot(gap(col, self.col_min, self.col_max))
    }
}

/// Box around all strictly positive pixels of `raw` (values on the `[0, 1]`
/// scale, before any offset).
pub fn annotate_bbox(raw: &ImageGrid) -> Result<BoundingBox> {
    let mut bbox: Option<BoundingBox> = None;
    for (i, v) in raw.values().iter().enumerate() {
        if *v > 0.0 {
            let (r, c) = raw.coords(i);
            bbox = Some(match bbox {
                None => BoundingBox {
                    row_min: r,
                    row_max: r,
                    col_min: c,
                    col_max: c,
                },
                Some(b) => BoundingBox {
                    row_min: b.row_min.min(r),
                    row_max: b.row_max.max(r),
                    col_min: b.col_min.min(c),
                    col_max: b.col_max.max(c),
                },
            });
        }
    }
    bbox.ok_or_else(|| Error::Annotation("image has no positive pixel".into()))
}

pub fn annotate_dataset(raw: &LabeledDataset) -> Result<Vec<BoundingBox>> {
    raw.images
        .iter()
        .enumerate()
        .map(|(i, g)| {
            annotate_bbox(g).map_err(|_| Error::Annotation(format!("sample {i} has no positive pixel")))
        })
        .collect()
}

/// `sample_index,row_min,row_max,col_min,col_max` rows.
pub fn write_boxes_csv<W: Write>(mut out: W, boxes: &[BoundingBox]) -> std::io::Result<()> {
    writeln!(out, "sample_index,row_min,row_max,col_min,col_max")?;
    for (i, b) in boxes.iter().enumerate() {
        writeln!(out, "{i},{},{},{},{}", b.row_min, b.row_max, b.col_min, b.col_max)?;
    }
    Ok(())
}
