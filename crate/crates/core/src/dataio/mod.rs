//! MNIST loading, the background-offset preprocessing step and automatic
//! bounding-box annotation.

mod annotate;
mod idx;
mod mnist;

pub use annotate::{annotate_bbox, annotate_dataset, write_boxes_csv, BoundingBox};
pub use idx::{parse_idx, serialize_idx, IdxPayload, IMAGE_MAGIC, LABEL_MAGIC};
pub use mnist::{load_mnist, preprocess, preprocess_dataset, LabeledDataset, Split, MNIST_SIDE};
