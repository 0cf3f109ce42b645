use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use serde::Serialize;

use super::{assert_that, CliError, Cli, Command, GlobalArgs, Output};
use crate::attribution::{attribute, write_map_csv, write_map_pgm, AttributionMap, Method};
use crate::counterexamples::{
    accuracy_counterexample, goals_flaw_check, manipulate_corner, random_order_curves,
};
use crate::dataio::{
    annotate_dataset, load_mnist, preprocess_dataset, serialize_idx, write_boxes_csv, IdxPayload, LabeledDataset,
    Split,
};
use crate::error::{Error, Result};
use crate::metrics::{
    default_schedule, pixel_flipping, pointing_game, reference_pixel_flipping, write_curves_csv,
    write_pointing_csv, Baseline, FlippingCurve,
};
use crate::models::{
    accuracy, load_checkpoint, save_checkpoint_with_header, train_convnet, train_sparse_linear, AnyModel,
    Classifier, ConvNet, ConvTrainConfig, TrainConfig,
};
use crate::numeric::SeededStream;
use crate::pgd::{enhancement_experiment, Direction, PgdConfig};
use crate::proposition::{expected_dice_exhaustive, expected_dice_monte_carlo, write_dice_csv, Ratio};

type CliResult<T> = std::result::Result<T, CliError>;

const MAPS_STREAM: u64 = 1;
const FLIP_STREAM: u64 = 2;
const RANDOM_ORDERS_STREAM: u64 = 3;
const DICE_STREAM: u64 = 4;

pub(super) fn dispatch(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    let name = cli.command.name();
    match &cli.command {
        Command::TrainSparse(a) => train_sparse(g, name, a),
        Command::TrainConvnet(a) => train_conv(g, name, a),
        Command::Annotate(a) => annotate(g, name, a),
        Command::PointingGame(a) => pointing(g, name, a),
        Command::Manipulate(a) => manipulate(g, name, a),
        Command::Flipping(a) => flipping(g, name, a),
        Command::ReferenceFlipping(a) => reference_flipping(g, name, a),
        Command::Pgd(a) => pgd(g, name, a),
        Command::Prop1(a) => prop1(g, name, a),
        Command::Counterexample(a) => counterexample(g, name, a),
        Command::Explain(a) => explain(g, name, a),
    }
}

#[derive(Serialize)]
struct Flags<'a, A: Serialize> {
    #[serde(flatten)]
    global: &'a GlobalArgs,
    #[serde(flatten)]
    command: &'a A,
}

fn output<A: Serialize>(g: &GlobalArgs, name: &str, args: &A) -> CliResult<Output> {
    let data_dir = g.data_dir();
    let mut global = g.clone();
    global.data_dir = Some(data_dir);
    Output::new(&g.out_dir, name, g.seed, &Flags { global: &global, command: args })
}

fn load_raw(g: &GlobalArgs, split: Split, limit: Option<usize>) -> Result<LabeledDataset> {
    let data = load_mnist(g.data_dir(), split)?;
    Ok(match limit {
        Some(n) => data.head(n),
        None => data,
    })
}

/// `untrained`, `untrained:<seed>` or a checkpoint path.
fn load_model(spec: &str, seed: u64) -> Result<AnyModel> {
    if spec == "untrained" {
        return Ok(AnyModel::Conv(ConvNet::init_untrained(seed)));
    }
    if let Some(s) = spec.strip_prefix("untrained:") {
        let s = s
            .parse()
            .map_err(|_| Error::invalid("model", format!("bad seed in `{spec}`")))?;
        return Ok(AnyModel::Conv(ConvNet::init_untrained(s)));
    }
    load_checkpoint(spec)
}

fn default_methods(model: &AnyModel) -> Vec<Method> {
    match model {
        AnyModel::Linear(_) => vec![
            Method::Hadamard,
            Method::WeightOnly,
            Method::Gradient,
            Method::InputXGradient,
            Method::Random,
            Method::EdgeDetector,
        ],
        AnyModel::Conv(_) => vec![
            Method::Gradient,
            Method::InputXGradient,
            Method::GuidedBp,
            Method::Deconvnet,
            Method::GradCam,
            Method::Random,
            Method::EdgeDetector,
        ],
    }
}

/// Maps for the true label of every sample; random maps for sample `s` read
/// `stream.split(s)`.
fn label_maps(method: Method, model: &AnyModel, data: &LabeledDataset, stream: SeededStream) -> Result<Vec<AttributionMap>> {
    data.images
        .iter()
        .zip(&data.labels)
        .enumerate()
        .map(|(s, (x, l))| attribute(method, model, x, *l, stream.split(s as u64)))
        .collect()
}

fn schedule_for(explicit: &[usize], step: usize, max: usize) -> Vec<usize> {
    if explicit.is_empty() {
        let mut s = default_schedule(max, step);
        if s.last() != Some(&max) {
            s.push(max);
        }
        s
    } else {
        explicit.to_vec()
    }
}

fn pixels(data: &LabeledDataset) -> CliResult<usize> {
    data.images
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::invalid("limit", "no samples selected").into())
}

// ---------------------------------------------------------------- training

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainSparseArgs {
    /// L1 penalty strength.
    #[arg(long, default_value_t = 1e-2)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub step_size: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    /// Use only the first N training images.
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Checkpoint file name inside the output directory.
    #[arg(long, default_value = "sparse_model.json")]
    pub model_out: String,
}

#[derive(Serialize)]
struct TrainSummary {
    schema_version: u32,
    kind: &'static str,
    train_samples: usize,
    test_samples: usize,
    train_accuracy: f64,
    test_accuracy: f64,
    final_objective: f64,
    nonzero_weights: usize,
    fingerprint: String,
    checkpoint: PathBuf,
}

fn finish_training(
    g: &GlobalArgs,
    mut out: Output,
    model: AnyModel,
    report: crate::models::TrainReport,
    train_samples: usize,
    model_out: &str,
    report_name: &str,
) -> CliResult<()> {
    let test = preprocess_dataset(&load_raw(g, Split::Test, None)?, g.offset);
    let test_accuracy = accuracy(&model, &test)?;
    let path = out.path(model_out);
    save_checkpoint_with_header(&path, &model, Some(out.header()))?;
    let summary = TrainSummary {
        schema_version: 1,
        kind: model.kind(),
        train_samples,
        test_samples: test.len(),
        train_accuracy: report.train_accuracy,
        test_accuracy,
        final_objective: report.final_objective,
        nonzero_weights: report.nonzero_weights,
        fingerprint: model.fingerprint(),
        checkpoint: path.clone(),
    };
    out.json(report_name, &summary)?;
    println!(
        "{} model: train accuracy {:.4}, test accuracy {:.4}, {} nonzero parameters -> {}",
        model.kind(),
        report.train_accuracy,
        test_accuracy,
        report.nonzero_weights,
        path.display()
    );
    Ok(())
}

fn train_sparse(g: &GlobalArgs, name: &str, a: &TrainSparseArgs) -> CliResult<()> {
    let out = output(g, name, a)?;
    let train = preprocess_dataset(&load_raw(g, Split::Train, a.train_limit)?, g.offset);
    let cfg = TrainConfig {
        l1_strength: a.lambda,
        step_size: a.step_size,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: g.seed,
    };
    let (model, report) = train_sparse_linear(&train, &cfg)?;
    finish_training(g, out, AnyModel::Linear(model), report, train.len(), &a.model_out, "train_sparse.json")
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainConvnetArgs {
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long, default_value = "convnet_model.json")]
    pub model_out: String,
}

fn train_conv(g: &GlobalArgs, name: &str, a: &TrainConvnetArgs) -> CliResult<()> {
    let out = output(g, name, a)?;
    let train = preprocess_dataset(&load_raw(g, Split::Train, a.train_limit)?, g.offset);
    let cfg = ConvTrainConfig {
        learning_rate: a.learning_rate,
        momentum: a.momentum,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: g.seed,
    };
    let (model, report) = train_convnet(&train, &cfg)?;
    finish_training(g, out, AnyModel::Conv(model), report, train.len(), &a.model_out, "train_convnet.json")
}

// -------------------------------------------------------------- annotation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnnotateArgs {
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub limit: Option<usize>,
}

fn annotate(g: &GlobalArgs, name: &str, a: &AnnotateArgs) -> CliResult<()> {
    let mut out = output(g, name, a)?;
    let raw = load_raw(g, a.split.into(), a.limit)?;
    let boxes = annotate_dataset(&raw)?;
    let file = match a.split {
        SplitArg::Train => "boxes_train.csv",
        SplitArg::Test => "boxes_test.csv",
    };
    let p = out.csv(file, |w| write_boxes_csv(w, &boxes))?;
    println!("{} boxes -> {}", boxes.len(), p.display());
    Ok(())
}

// ---------------------------------------------------------- pointing game

#[derive(Debug, Clone, Args, Serialize)]
pub struct PointingGameArgs {
    /// Checkpoint path, `untrained` or `untrained:<seed>`.
    #[arg(long)]
    pub model: String,
    /// Attribution methods (default: every method the model supports).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Hit tolerances in pixels.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub tolerance: Vec<f64>,
    /// Evaluate the first N test images.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Row label in the CSV (default: the model argument).
    #[arg(long)]
    pub label: Option<String>,
}

fn pointing(g: &GlobalArgs, name: &str, a: &PointingGameArgs) -> CliResult<()> {
    let mut out = output(g, name, a)?;
    let model = load_model(&a.model, g.seed)?;
    let raw = load_raw(g, Split::Test, a.limit)?;
    let boxes = annotate_dataset(&raw)?;
    let data = preprocess_dataset(&raw, g.offset);
    let methods = if a.methods.is_empty() { default_methods(&model) } else { a.methods.clone() };
    let label = a.label.clone().unwrap_or_else(|| a.model.clone());
    let stream = SeededStream::new(g.seed).split(MAPS_STREAM);
    let mut results = Vec::new();
    for m in &methods {
        let maps = label_maps(*m, &model, &data, stream)?;
        for tol in &a.tolerance {
            let r = pointing_game(&maps, &boxes, *tol)?;
            println!("{m:>18} tau={tol}: {}/{} = {:.4}", r.hits, r.total, r.ratio);
            results.push((m.to_string(), r));
        }
    }
    let rows: Vec<_> = results.iter().map(|(m, r)| (label.clone(), m.clone(), r)).collect();
    out.csv("pointing_game.csv", |w| write_pointing_csv(w, &rows))?;
    Ok(())
}

// ------------------------------------------------------------ manipulation

#[derive(Debug, Clone, Args, Serialize)]
pub struct ManipulateArgs {
    /// Linear-model checkpoint.
    #[arg(long)]
    pub model: String,
    /// Lead of every corner attribution over the best other pixel.
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long)]
    pub limit: Option<usize>,
}

fn manipulate(g: &GlobalArgs, name: &str, a: &ManipulateArgs) -> CliResult<()> {
    let mut out = output(g, name, a)?;
    let AnyModel::Linear(model) = load_model(&a.model, g.seed)? else {
        return Err(Error::UnsupportedModel {
            method: "manipulate",
            model: "conv",
        }
        .into());
    };
    let raw = load_raw(g, Split::Test, a.limit)?;
    let boxes = annotate_dataset(&raw)?;
    let data = preprocess_dataset(&raw, g.offset);
    let (after, report) = manipulate_corner(&model, &data, &boxes, a.margin)?;
    out.json("manipulation.json", &report)?;
    let before_pg = pg_row(report.pg_ratio_before, data.len());
    let after_pg = pg_row(report.pg_ratio_after, data.len());
    out.csv("manipulation_pointing.csv", |w| {
        write_pointing_csv(
            w,
            &[
                ("before".into(), "hadamard".into(), &before_pg),
                ("after".into(), "hadamard".into(), &after_pg),
            ],
        )
    })?;
    save_checkpoint_with_header(out.path("manipulated_model.json"), &AnyModel::Linear(after), Some(out.header()))?;
    println!(
        "accuracy {:.4} -> {:.4}, pointing game {:.4} -> {:.4}, delta {:.6}",
        report.accuracy_before, report.accuracy_after, report.pg_ratio_before, report.pg_ratio_after, report.delta
    );
    assert_that(report.predictions_identical, "predictions_preserved", || {
        "prediction vector changed".into()
    })?;
    assert_that(report.pg_ratio_after == 0.0, "corner_pointing_zero", || {
        format!("ratio after manipulation is {}", report.pg_ratio_after)
    })
}

fn pg_row(ratio: f64, total: usize) -> crate::metrics::PointingGameResult {
    let hits = (ratio * total as f64).round() as usize;
    crate::metrics::PointingGameResult {
        hits,
        total,
        ratio,
        tolerance: 0.0,
        per_sample: Vec::new(),
    }
}

// ---------------------------------------------------------------- flipping

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlippingArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "zeros")]
    pub baselines: Vec<Baseline>,
    /// Explicit masked counts; must start at 0 and increase.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Vec<usize>,
    /// Spacing of the default schedule.
    #[arg(long, default_value_t = 28)]
    pub step: usize,
    /// Number of random orders (each `random` entry expands to this many).
    #[arg(long, default_value_t = 1)]
    pub random_orders: usize,
    #[arg(long, default_value_t = 500)]
    pub limit: usize,
}

fn svg_series(curves: &[FlippingCurve], d: usize) -> Vec<(String, Vec<f64>, Vec<f64>)> {
    curves
        .iter()
        .map(|c| {
            (
                format!("{} / {}", c.ordering_id, c.baseline),
                c.schedule.iter().map(|k| *k as f64 / d as f64).collect(),
                c.scores.clone(),
            )
        })
        .collect()
}

fn flipping(g: &GlobalArgs, name: &str, a: &FlippingArgs) -> CliResult<()> {
    let mut out = output(g, name, a)?;
    let model = load_model(&a.model, g.seed)?;
    let data = preprocess_dataset(&load_raw(g, Split::Test, Some(a.limit))?, g.offset);
    let d = pixels(&data)?;
    let schedule = schedule_for(&a.schedule, a.step, d);
    let methods = if a.methods.is_empty() {
        let mut m = default_methods(&model);
        m.retain(|m| *m != Method::EdgeDetector);
        m
    } else {
        a.methods.clone()
    };
    let base = SeededStream::new(g.seed);
    let mut curves = Vec::new();
    for baseline in &a.baselines {
        for m in &methods {
            if *m == Method::Random {
                let orders = random_order_curves(
                    &model,
                    &data,
                    &schedule,
                    *baseline,
                    a.random_orders,
                    base.split(RANDOM_ORDERS_STREAM),
                )?;
                curves.extend(orders);
                continue;
            }
            let maps = label_maps(*m, &model, &data, base.split(MAPS_STREAM))?;
            curves.push(pixel_flipping(&model, &data, &maps, &schedule, *baseline, base.split(FLIP_STREAM))?);
        }
    }
    for c in &curves {
        println!(
            "{:>18} {:>14}: score {:.4} -> {:.4}, accuracy {:.4} -> {:.4}",
            c.ordering_id,
            c.baseline.id(),
            c.scores[0],
            c.scores[c.scores.len() - 1],
            c.accuracies[0],
            c.accuracies[c.accuracies.len() - 1]
        );
    }
    out.csv("flipping_curves.csv", |w| write_curves_csv(w, &curves))?;
    let svg = super::curves_svg(out.header(), &svg_series(&curves, d));
    out.raw("flipping_curves.svg", svg.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReferenceFlippingArgs {
    #[arg(long)]
    pub model: String,
    /// Reference attribution (default: grad_cam for conv, hadamard for linear).
    #[arg(long)]
    pub reference: Option<Method>,
    /// Reference-set sizes N.
    #[arg(long = "n-ref", value_delimiter = ',', default_value = "50,100,200,400,784")]
    pub n_ref: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub schedule: Vec<usize>,
    #[arg(long, default_value_t = 25)]
    pub step: usize,
    #[arg(long, default_value = "zeros")]
    pub baseline: Baseline,
    #[arg(long, default_value_t = 500)]
    pub limit: usize,
}

fn reference_flipping(g: &GlobalArgs, name: &str, a: &ReferenceFlippingArgs) -> CliResult<()> {
    let mut out = output(g, name, a)?;
    let model = load_model(&a.model, g.seed)?;
    let data = preprocess_dataset(&load_raw(g, Split::Test, Some(a.limit))?, g.offset);
    let d = pixels(&data)?;
    let reference = a.reference.unwrap_or(match model {
        AnyModel::Linear(_) => Method::Hadamard,
        AnyModel::Conv(_) => Method::GradCam,
    });
    let base = SeededStream::new(g.seed);
    let maps = label_maps(reference, &model, &data, base.split(MAPS_STREAM))?;
    let max_n = a.n_ref.iter().copied().max().unwrap_or(0).min(d);
    let full = schedule_for(&a.schedule, a.step, max_n);
    let flip_stream = base.split(FLIP_STREAM);
    let attribution = pixel_flipping(&model, &data, &maps, &full, a.baseline, flip_stream)?;

    let mut curves = vec![attribution.clone()];
    for &n_ref in &a.n_ref {
        let mut sched: Vec<usize> = full.iter().copied().filter(|k| *k <= n_ref).collect();
        if sched.last() != Some(&n_ref) {
            sched.push(n_ref);
        }
        let c = reference_pixel_flipping(&model, &data, &maps, n_ref, &sched, a.baseline, flip_stream)?;
        // masking all N reference pixels is attribution masking at k = N
        let full_set = attribution
            .schedule
            .iter()
            .position(|k| *k == n_ref)
            .map(|i| attribution.scores[i].to_bits() == c.scores[c.scores.len() - 1].to_bits());
        assert_that(full_set != Some(false), "full_reference_equals_attribution", || {
            format!("N = {n_ref}: curves differ at k = N")
        })?;
        curves.push(c);
    }
    let random = random_order_curves(&model, &data, &full, a.baseline, 1, base.split(RANDOM_ORDERS_STREAM))?;
    curves.extend(random);
    for c in &curves {
        println!("{:>26}: score {:.4} at k = {}", c.ordering_id, c.scores[c.scores.len() - 1], c.schedule[c.schedule.len() - 1]);
    }

    out.csv("reference_curves.csv", |w| write_curves_csv(w, &curves))?;
    out.csv("reference_difference.csv", |w| {
        writeln!(w, "ordering_id,baseline_id,k,mean_score,reference_score,difference")?;
        for c in &curves[1..] {
            for (k, s) in c.schedule.iter().zip(&c.scores) {
                if let Some(i) = attribution.schedule.iter().position(|x| x == k) {
                    let r = attribution.scores[i];
                    writeln!(w, "{},{},{k},{s},{r},{}", c.ordering_id, c.baseline, s - r)?;
                }
            }
        }
        Ok(())
    })?;
    let svg = super::curves_svg(out.header(), &svg_series(&curves, d));
    out.raw("reference_curves.svg", svg.as_bytes())?;
    Ok(())
}

// --------------------------------------------------------------------- pgd

#[derive(Debug, Clone, Args, Serialize)]
pub struct PgdArgs {
    /// Conv checkpoint, `untrained` or `untrained:<seed>`.
    #[arg(long, default_value = "untrained")]
    pub model: String,
    #[arg(long, default_value = "enhance")]
    pub direction: Direction,
    #[arg(long, default_value_t = 0.3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.03)]
    pub step: f64,
    #[arg(long, default_value_t = 30)]
    pub steps: usize,
    #[arg(long, default_value_t = 1000)]
    pub limit: usize,
    /// Also write the perturbed images and labels as IDX files.
    #[arg(long)]
    pub dump_idx: bool,
}

fn pgd(g: &GlobalArgs, name: &str, a: &PgdArgs) -> CliResult<()> {
    let mut out = output(g, name, a)?;
    let AnyModel::Conv(net) = load_model(&a.model, g.seed)? else {
        return Err(Error::UnsupportedModel {
            method: "pgd experiment",
            model: "linear",
        }
        .into());
    };
    let raw = load_raw(g, Split::Test, Some(a.limit))?;
    let cfg = PgdConfig {
        epsilon: a.epsilon,
        step: a.step,
        steps: a.steps,
        direction: a.direction,
    };
    let (report, perturbed) = enhancement_experiment(&net, &raw, g.offset, &cfg)?;
    out.json("pgd_report.json", &report)?;
    out.csv("pgd_summary.csv", |w| {
        writeln!(w, "metric,value")?;
        writeln!(w, "raw_accuracy,{}", report.raw_accuracy)?;
        writeln!(w, "perturbed_accuracy,{}", report.perturbed_accuracy)?;
        writeln!(w, "max_linf,{}", report.max_linf)?;
        writeln!(w, "loss_moved_fraction,{}", report.loss_moved_fraction)?;
        writeln!(w, "spearman_gradient,{}", report.spearman_gradient)?;
        writeln!(w, "spearman_grad_cam,{}", report.spearman_grad_cam)
    })?;
    if a.dump_idx {
        let images = serialize_idx(&IdxPayload::Images(perturbed))?;
        let labels = serialize_idx(&IdxPayload::Labels(raw.labels.iter().map(|l| *l as u8).collect()))?;
        out.raw("perturbed-images-idx3-ubyte", &images)?;
        out.raw("perturbed-labels-idx1-ubyte", &labels)?;
        // the IDX format has no room for a header
        out.raw("perturbed-idx.header", format!("{}\n", out.header()).as_bytes())?;
    }
    println!(
        "{}: accuracy {:.4} -> {:.4}, max |x' - x| = {}, spearman gradient {:.3}, grad_cam {:.3}",
        a.direction,
        report.raw_accuracy,
        report.perturbed_accuracy,
        report.max_linf,
        report.spearman_gradient,
        report.spearman_grad_cam
    );
    assert_that(report.max_linf <= a.epsilon + 1e-12, "linf_budget", || {
        format!("max perturbation {} exceeds epsilon {}", report.max_linf, a.epsilon)
    })
}

// ------------------------------------------------------------------- dice

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub n: usize,
    pub n_ref: usize,
}

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected n:N, got `{s}`"))?;
        let n = a.trim().parse().map_err(|_| format!("bad n in `{s}`"))?;
        let n_ref = b.trim().parse().map_err(|_| format!("bad N in `{s}`"))?;
        Ok(Pair { n, n_ref })
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.n, self.n_ref)
    }
}

impl Serialize for Pair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Prop1Args {
    /// `n:N` pairs.
    #[arg(long, value_delimiter = ',', default_value = "2:4,3:6,9:12,50:200,100:784,1:784")]
    pub pairs: Vec<Pair>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
}

fn prop1(g: &GlobalArgs, name: &str, a: &Prop1Args) -> CliResult<()> {
    let mut out = output(g, name, a)?;
    let stream = SeededStream::new(g.seed).split(DICE_STREAM);
    let mut rows = Vec::new();
    for (i, p) in a.pairs.iter().enumerate() {
        let r = expected_dice_monte_carlo(p.n, p.n_ref, a.trials, stream.split(i as u64))?;
        println!(
            "n={:>4} N={:>4}: n/N = {:.6}, mc = {:.6} +- {:.6}",
            p.n, p.n_ref, r.closed_form, r.mc_mean, r.mc_stderr
        );
        rows.push(r);
    }
    out.csv("prop1.csv", |w| write_dice_csv(w, &rows))?;
    for r in &rows {
        if r.exhaustive_mean.is_some() {
            let exact = expected_dice_exhaustive(r.n, r.n_ref)?;
            assert_that(exact == Ratio::new(r.n as u128, r.n_ref as u128), "exhaustive_equals_closed_form", || {
                format!("n={} N={}: {}/{}", r.n, r.n_ref, exact.num, exact.den)
            })?;
        }
        assert_that(r.within_band(4.0), "mc_within_4_sigma", || {
            format!("n={} N={}: |{} - {}| > 4 * {}", r.n, r.n_ref, r.mc_mean, r.closed_form, r.mc_stderr)
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------- counterexample

#[derive(Debug, Clone, Args, Serialize)]
pub struct CounterexampleArgs {
    /// Random orders compared against the weight-only order.
    #[arg(long, default_value_t = 100)]
    pub random_orders: usize,
}

fn counterexample(g: &GlobalArgs, name: &str, a: &CounterexampleArgs) -> CliResult<()> {
    let mut out = output(g, name, a)?;
    let verdict = accuracy_counterexample()?;
    let goals = goals_flaw_check(a.random_orders, SeededStream::new(g.seed).split(RANDOM_ORDERS_STREAM))?;
    #[derive(Serialize)]
    struct Record<'a> {
        schema_version: u32,
        accuracy_indicator: &'a crate::counterexamples::CounterexampleVerdict,
        weight_ordering: &'a crate::counterexamples::GoalsFlawReport,
    }
    let record = Record {
        schema_version: 1,
        accuracy_indicator: &verdict,
        weight_ordering: &goals,
    };
    let path = out.json("counterexample.json", &record)?;
    print!("{}", std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
    assert_that(verdict.verdict, "masking_top_feature_keeps_prediction", || {
        "the constructed model did not behave as designed".into()
    })?;
    assert_that(goals.hadamard_minorizes, "hadamard_order_optimal", || {
        "a random order beat the Hadamard order".into()
    })
}

// ----------------------------------------------------------------- explain

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub method: Method,
    /// Test-set index.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Target class (default: the true label).
    #[arg(long)]
    pub target: Option<usize>,
}

fn explain(g: &GlobalArgs, name: &str, a: &ExplainArgs) -> CliResult<()> {
    let mut out = output(g, name, a)?;
    let model = load_model(&a.model, g.seed)?;
    let raw = load_raw(g, Split::Test, Some(a.index + 1))?;
    if raw.len() <= a.index {
        return Err(Error::invalid("index", format!("test split has {} images", raw.len())).into());
    }
    let data = preprocess_dataset(&raw, g.offset);
    let x = &data.images[a.index];
    let target = a.target.unwrap_or(data.labels[a.index]);
    let stream = SeededStream::new(g.seed).split(MAPS_STREAM).split(a.index as u64);
    let map = attribute(a.method, &model, x, target, stream)?;
    let stem = format!("explain_{}_{}", a.method, a.index);
    let header = out.header().to_string();
    out.csv(&format!("{stem}.csv"), |w| write_map_csv(w, &map))?;
    let mut pgm = Vec::new();
    write_map_pgm(&mut pgm, &map, &header).map_err(|e| Error::io(out.path(&stem), e))?;
    out.raw(&format!("{stem}.pgm"), &pgm)?;
    let (r, c) = map.values.coords(map.argmax());
    println!("{}: label {} target {target}, top pixel ({r}, {c})", a.method, data.labels[a.index]);
    Ok(())
}
