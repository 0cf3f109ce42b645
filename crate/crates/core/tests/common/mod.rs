#![allow(dead_code)]

use std::path::PathBuf;

use attrstress::dataio::{load_mnist, LabeledDataset, Split};

/// `$ATTRSTRESS_MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    if let Some(d) = std::env::var_os("ATTRSTRESS_MNIST_DIR") {
        return PathBuf::from(d);
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn mnist(split: Split) -> LabeledDataset {
    let dir = mnist_dir();
    load_mnist(&dir, split).unwrap_or_else(|e| {
        panic!(
            "MNIST not available in {} ({e}); run scripts/fetch_mnist.sh or set ATTRSTRESS_MNIST_DIR",
            dir.display()
        )
    })
}
