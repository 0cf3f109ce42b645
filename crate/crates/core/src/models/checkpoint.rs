use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, ConvNet, LinearModel};
use crate::error::{Error, Result};
use crate::numeric::ImageGrid;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnyModel {
    Linear(LinearModel),
    Conv(ConvNet),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Linear(_) => "linear",
            AnyModel::Conv(_) => "conv",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AnyModel::Linear(m) => m.validate(),
            AnyModel::Conv(m) => m.validate().map(|_| ()),
        }
    }
}

impl Classifier for AnyModel {
    fn input_shape(&self) -> (usize, usize) {
        match self {
            AnyModel::Linear(m) => m.input_shape(),
            AnyModel::Conv(m) => m.input_shape(),
        }
    }

    fn class_count(&self) -> usize {
        match self {
            AnyModel::Linear(m) => m.class_count(),
            AnyModel::Conv(m) => m.class_count(),
        }
    }

    fn logits(&self, x: &ImageGrid) -> Result<Vec<f64>> {
        match self {
            AnyModel::Linear(m) => m.logits(x),
            AnyModel::Conv(m) => m.logits(x),
        }
    }

    fn input_gradient(&self, x: &ImageGrid, upstream: &[f64]) -> Result<ImageGrid> {
        match self {
            AnyModel::Linear(m) => m.input_gradient(x, upstream),
            AnyModel::Conv(m) => m.input_gradient(x, upstream),
        }
    }

    fn fingerprint(&self) -> String {
        match self {
            AnyModel::Linear(m) => m.fingerprint(),
            AnyModel::Conv(m) => m.fingerprint(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    header: Option<String>,
    schema_version: u32,
    model: AnyModel,
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &AnyModel) -> Result<()> {
    save_checkpoint_with_header(path, model, None)
}

/// Like [`save_checkpoint`], with a free-form `header` field written first.
pub fn save_checkpoint_with_header(path: impl AsRef<Path>, model: &AnyModel, header: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string(&CheckpointFile {
        header: header.map(str::to_string),
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        model: model.clone(),
    })?;
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<AnyModel> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile =
        serde_json::from_str(&body).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::Checkpoint(format!(
            "schema version {} (expected {CHECKPOINT_SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    file.model.validate()?;
    Ok(file.model)
}
