mod common;

use attrstress::dataio::{annotate_dataset, preprocess_dataset, Split, MNIST_SIDE};
use attrstress::models::{
    accuracy, load_checkpoint, save_checkpoint, train_sparse_linear, AnyModel, Classifier, TrainConfig,
};

#[test]
fn mnist_shapes() {
    let train = common::mnist(Split::Train);
    let test = common::mnist(Split::Test);
    assert_eq!((train.len(), test.len()), (60_000, 10_000));
    for d in [&train, &test] {
        assert!(d.labels.iter().all(|l| *l < 10));
        assert!(d.images.iter().all(|x| x.height() == MNIST_SIDE && x.width() == MNIST_SIDE));
        assert!(d.images.iter().all(|x| x.values().iter().all(|v| (0.0..=1.0).contains(v))));
    }
}

#[test]
fn boxes_cover_every_ink_pixel() {
    let raw = common::mnist(Split::Test).head(2000);
    let boxes = annotate_dataset(&raw).unwrap();
    for (x, b) in raw.images.iter().zip(&boxes) {
        for (i, v) in x.values().iter().enumerate() {
            let (r, c) = x.coords(i);
            assert!(*v <= 0.0 || b.contains(r, c), "pixel ({r}, {c}) outside {b:?}");
        }
    }
}

#[test]
fn short_sparse_fit_round_trips() {
    let train = preprocess_dataset(&common::mnist(Split::Train).head(3000), 0.1);
    let test = preprocess_dataset(&common::mnist(Split::Test).head(1000), 0.1);
    let cfg = TrainConfig {
        l1_strength: 1e-3,
        epochs: 3,
        ..TrainConfig::default()
    };
    let (model, report) = train_sparse_linear(&train, &cfg).unwrap();
    let acc = accuracy(&model, &test).unwrap();
    assert!(acc > 0.75, "test accuracy {acc}");
    assert!(report.nonzero_weights < model.dim() * 10);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_checkpoint(&path, &AnyModel::Linear(model.clone())).unwrap();
    let AnyModel::Linear(back) = load_checkpoint(&path).unwrap() else {
        panic!("wrong kind");
    };
    for x in test.images.iter().take(50) {
        assert_eq!(model.logits(x).unwrap(), back.logits(x).unwrap());
    }
}
