use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use super::idx::{parse_idx, IdxPayload};
use crate::error::{Error, Result};
use crate::numeric::ImageGrid;

pub const MNIST_SIDE: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<ImageGrid>,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(images: Vec<ImageGrid>, labels: Vec<usize>, split: Split) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::dims(
                format!("{} labels", images.len()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= 10) {
            return Err(Error::ClassOutOfRange {
                class: *bad,
                classes: 10,
            });
        }
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// First `n` samples (or all of them when `n` exceeds the size).
    pub fn head(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        LabeledDataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }
}

/// Shifts every pixel by `offset`; the domain becomes `[offset, 1 + offset]`.
pub fn preprocess(raw: &ImageGrid, offset: f64) -> ImageGrid {
    let mut out = raw.map(|v| v + offset);
    out.set_domain((offset, 1.0 + offset));
    out
}

pub fn preprocess_dataset(raw: &LabeledDataset, offset: f64) -> LabeledDataset {
    LabeledDataset {
        images: raw.images.iter().map(|g| preprocess(g, offset)).collect(),
        labels: raw.labels.clone(),
        split: raw.split,
    }
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    // both the canonical dash form and the common dotted variant
    let dotted = stem.replacen("-idx", ".idx", 1);
    for name in [stem, dotted.as_str()] {
        for ext in ["", ".gz"] {
            let p = dir.join(format!("{name}{ext}"));
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(Error::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found (also tried .gz)"),
    ))
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Loads one split from the standard four-file MNIST layout.
pub fn load_mnist(dir: impl AsRef<Path>, split: Split) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let img_path = find_file(dir, &format!("{}-images-idx3-ubyte", split.prefix()))?;
    let lbl_path = find_file(dir, &format!("{}-labels-idx1-ubyte", split.prefix()))?;
    let images = match parse_idx(&read_maybe_gz(&img_path)?)? {
        IdxPayload::Images(v) => v,
        IdxPayload::Labels(_) => {
            return Err(Error::Parse {
                offset: 0,
                message: format!("{} holds labels, expected images", img_path.display()),
            })
        }
    };
    let labels = match parse_idx(&read_maybe_gz(&lbl_path)?)? {
        IdxPayload::Labels(v) => v.into_iter().map(usize::from).collect(),
        IdxPayload::Images(_) => {
            return Err(Error::Parse {
                offset: 0,
                message: format!("{} holds images, expected labels", lbl_path.display()),
            })
        }
    };
    LabeledDataset::new(images, labels, split)
}
