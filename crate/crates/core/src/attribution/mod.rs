//! Attribution methods. Each returns an [`AttributionMap`] for one
//! `(model, input, target)` triple.

mod export;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use export::{write_map_csv, write_map_pgm};

use crate::error::{Error, Result};
use crate::models::{AnyModel, Classifier, ConvNet, LinearModel, ReluRule};
use crate::numeric::{ImageGrid, SeededStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hadamard,
    WeightOnly,
    Gradient,
    InputXGradient,
    GuidedBp,
    Deconvnet,
    GradCam,
    Random,
    EdgeDetector,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Hadamard,
        Method::WeightOnly,
        Method::Gradient,
        Method::InputXGradient,
        Method::GuidedBp,
        Method::Deconvnet,
        Method::GradCam,
        Method::Random,
        Method::EdgeDetector,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Hadamard => "hadamard",
            Method::WeightOnly => "weight_only",
            Method::Gradient => "gradient",
            Method::InputXGradient => "input_x_gradient",
            Method::GuidedBp => "guided_bp",
            Method::Deconvnet => "deconvnet",
            Method::GradCam => "grad_cam",
            Method::Random => "random",
            Method::EdgeDetector => "edge_detector",
        }
    }

    /// Methods whose output never looks at the model.
    pub fn is_model_independent(self) -> bool {
        matches!(self, Method::Random | Method::EdgeDetector)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s || m.id().replace('_', "-") == s)
            .ok_or_else(|| Error::invalid("method", format!("unknown attribution method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub values: ImageGrid,
    pub target: usize,
    pub method: Method,
    /// `None` for model-independent methods.
    pub model_fingerprint: Option<String>,
}

impl AttributionMap {
    fn new(values: Vec<f64>, like: &ImageGrid, target: usize, method: Method, fp: Option<String>) -> Result<Self> {
        let mut values = like.with_values(values)?;
        values.set_domain((f64::NEG_INFINITY, f64::INFINITY));
        if let Some(pixel) = values.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { pixel });
        }
        Ok(Self {
            values,
            target,
            method,
            model_fingerprint: fp,
        })
    }

    /// Most important pixel, lowest row-major index on ties.
    pub fn argmax(&self) -> usize {
        self.values.argmax()
    }

    /// Pixel indices sorted by descending value; equal values keep row-major
    /// order.
    pub fn ranking(&self) -> Vec<usize> {
        let v = self.values.values();
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|a, b| v[*b].total_cmp(&v[*a]));
        idx
    }
}

fn check_target(classes: usize, target: usize) -> Result<()> {
    if target >= classes {
        Err(Error::ClassOutOfRange { class: target, classes })
    } else {
        Ok(())
    }
}

fn one_hot(classes: usize, target: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[target] = 1.0;
    v
}

/// `w_j^(target) * x_j`
pub fn hadamard(model: &LinearModel, x: &ImageGrid, target: usize) -> Result<AttributionMap> {
    model.check_input(x)?;
    model.check_class(target)?;
    let vals = model
        .column(target)
        .iter()
        .zip(x.values())
        .map(|(w, v)| w * v)
        .collect();
    AttributionMap::new(vals, x, target, Method::Hadamard, Some(model.fingerprint()))
}

/// `w_j^(target)`, whatever the input.
pub fn weight_only(model: &LinearModel, x: &ImageGrid, target: usize) -> Result<AttributionMap> {
    model.check_input(x)?;
    model.check_class(target)?;
    AttributionMap::new(
        model.column(target).to_vec(),
        x,
        target,
        Method::WeightOnly,
        Some(model.fingerprint()),
    )
}

pub fn gradient<M: Classifier + ?Sized>(model: &M, x: &ImageGrid, target: usize) -> Result<AttributionMap> {
    check_target(model.class_count(), target)?;
    let g = model.input_gradient(x, &one_hot(model.class_count(), target))?;
    AttributionMap::new(g.into_values(), x, target, Method::Gradient, Some(model.fingerprint()))
}

pub fn input_x_gradient<M: Classifier + ?Sized>(model: &M, x: &ImageGrid, target: usize) -> Result<AttributionMap> {
    check_target(model.class_count(), target)?;
    let g = model.input_gradient(x, &one_hot(model.class_count(), target))?;
    let vals = g.values().iter().zip(x.values()).map(|(g, v)| g * v).collect();
    AttributionMap::new(vals, x, target, Method::InputXGradient, Some(model.fingerprint()))
}

pub fn guided_bp(model: &ConvNet, x: &ImageGrid, target: usize) -> Result<AttributionMap> {
    let g = model.backward_input_with(x, target, ReluRule::Guided)?;
    AttributionMap::new(g.into_values(), x, target, Method::GuidedBp, Some(model.fingerprint()))
}

pub fn deconvnet(model: &ConvNet, x: &ImageGrid, target: usize) -> Result<AttributionMap> {
    let g = model.backward_input_with(x, target, ReluRule::Deconvnet)?;
    AttributionMap::new(g.into_values(), x, target, Method::Deconvnet, Some(model.fingerprint()))
}

/// Channel weights are the spatial mean of the target gradient at the
/// features entering the final dense layer; the map is the ReLU of the
/// weighted channel sum, upsampled to the input size by nearest neighbour.
pub fn grad_cam(model: &ConvNet, x: &ImageGrid, target: usize) -> Result<AttributionMap> {
    let (shape, acts, grads) = model.feature_activations(x, target)?;
    let plane = shape.height * shape.width;
    let mut cam = vec![0.0; plane];
    for k in 0..shape.channels {
        let g = &grads[k * plane..(k + 1) * plane];
        let alpha = g.iter().sum::<f64>() / plane as f64;
        if alpha != 0.0 {
            for (c, a) in cam.iter_mut().zip(&acts[k * plane..(k + 1) * plane]) {
                *c += alpha * a;
            }
        }
    }
    cam.iter_mut().for_each(|c| *c = c.max(0.0));
    let (h, w) = (x.height(), x.width());
    let up = upsample_nearest(&cam, shape.height, shape.width, h, w);
    AttributionMap::new(up, x, target, Method::GradCam, Some(model.fingerprint()))
}

/// Source cell for output `(r, c)` is `(r * src_h / h, c * src_w / w)`, which
/// replicates each cell into a block when the sizes divide.
pub fn upsample_nearest(src: &[f64], src_h: usize, src_w: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        let sr = r * src_h / h;
        for c in 0..w {
            out.push(src[sr * src_w + c * src_w / w]);
        }
    }
    out
}

/// I.i.d. uniform `[0, 1)` values drawn from `stream`.
pub fn random_attribution(x: &ImageGrid, stream: SeededStream) -> Result<AttributionMap> {
    let mut rng = stream.rng();
    let vals = (0..x.len()).map(|_| rng.random::<f64>()).collect();
    AttributionMap::new(vals, x, 0, Method::Random, None)
}

/// Sobel gradient magnitude with replicated borders.
pub fn edge_detector(x: &ImageGrid) -> Result<AttributionMap> {
    let (h, w) = (x.height() as isize, x.width() as isize);
    let at = |r: isize, c: isize| x.get(r.clamp(0, h - 1) as usize, c.clamp(0, w - 1) as usize);
    let mut vals = Vec::with_capacity(x.len());
    for r in 0..h {
        for c in 0..w {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            vals.push(gx.hypot(gy));
        }
    }
    AttributionMap::new(vals, x, 0, Method::EdgeDetector, None)
}

/// Runs `method` on any model. `stream` is only read by [`Method::Random`].
/// Model-independent methods record `target` but ignore the model.
pub fn attribute(
    method: Method,
    model: &AnyModel,
    x: &ImageGrid,
    target: usize,
    stream: SeededStream,
) -> Result<AttributionMap> {
    let unsupported = |model: &'static str| Error::UnsupportedModel {
        method: method.id(),
        model,
    };
    let mut map = match (method, model) {
        (Method::Hadamard, AnyModel::Linear(m)) => hadamard(m, x, target)?,
        (Method::WeightOnly, AnyModel::Linear(m)) => weight_only(m, x, target)?,
        (Method::Hadamard | Method::WeightOnly, AnyModel::Conv(_)) => return Err(unsupported("conv")),
        (Method::Gradient, m) => gradient(m, x, target)?,
        (Method::InputXGradient, m) => input_x_gradient(m, x, target)?,
        (Method::GuidedBp, AnyModel::Conv(m)) => guided_bp(m, x, target)?,
        (Method::Deconvnet, AnyModel::Conv(m)) => deconvnet(m, x, target)?,
        (Method::GradCam, AnyModel::Conv(m)) => grad_cam(m, x, target)?,
        (Method::GuidedBp | Method::Deconvnet | Method::GradCam, AnyModel::Linear(_)) => {
            return Err(unsupported("linear"))
        }
        (Method::Random, _) => random_attribution(x, stream)?,
        (Method::EdgeDetector, _) => edge_detector(x)?,
    };
    map.target = target;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Layer, Shape};
    use crate::numeric::finite_diff_gradient;
    use crate::numeric::relative_error;

    fn appendix_model() -> LinearModel {
        LinearModel::new(
            1,
            2,
            vec![vec![2.0, 1.0], vec![6f64.sqrt(), 0.0], vec![5f64.sqrt(), 0.0]],
            vec![0.0; 3],
        )
        .unwrap()
    }

    fn noisy(seed: u64, h: usize, w: usize) -> ImageGrid {
        let mut rng = SeededStream::new(seed).rng();
        ImageGrid::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect(), (0.0, 1.0)).unwrap()
    }

    #[test]
    fn hadamard_on_small_model() {
        let m = appendix_model();
        let x = ImageGrid::filled(1, 2, 1.0, (0.0, 1.0));
        assert_eq!(hadamard(&m, &x, 0).unwrap().values.values(), &[2.0, 1.0]);
        let zero = ImageGrid::filled(1, 2, 0.0, (0.0, 1.0));
        assert!(hadamard(&m, &zero, 0).unwrap().values.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hadamard_completeness() {
        let mut m = LinearModel::zeros(4, 4, 3);
        let mut rng = SeededStream::new(1).rng();
        for c in 0..3 {
            m.column_mut(c).iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
            m.bias_mut()[c] = rng.random_range(-1.0..1.0);
        }
        let x = noisy(2, 4, 4);
        for t in 0..3 {
            let map = hadamard(&m, &x, t).unwrap();
            let z = m.logits(&x).unwrap();
            assert!((map.values.sum() + m.bias()[t] - z[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_only_ignores_input() {
        let m = appendix_model();
        let a = weight_only(&m, &ImageGrid::filled(1, 2, 1.0, (0.0, 1.0)), 0).unwrap();
        let b = weight_only(&m, &noisy(3, 1, 2), 0).unwrap();
        assert_eq!(a.values.values(), &[2.0, 1.0]);
        assert!(a.values.bitwise_eq(&b.values));
    }

    #[test]
    fn linear_gradient_identities() {
        let m = appendix_model();
        let x = noisy(5, 1, 2);
        for t in 0..3 {
            assert!(gradient(&m, &x, t).unwrap().values.bitwise_eq(&weight_only(&m, &x, t).unwrap().values));
            assert!(input_x_gradient(&m, &x, t)
                .unwrap()
                .values
                .bitwise_eq(&hadamard(&m, &x, t).unwrap().values));
        }
    }

    #[test]
    fn conv_gradient_matches_oracle_and_input_x_gradient_composes() {
        let net = ConvNet::init_untrained(8);
        let x = noisy(12, 28, 28);
        let g = gradient(&net, &x, 3).unwrap();
        let fd = finite_diff_gradient(|v| Ok(net.logits(v)?[3]), &x, 1e-6).unwrap();
        assert!(relative_error(g.values.values(), fd.values()) < 1e-6);
        let ixg = input_x_gradient(&net, &x, 3).unwrap();
        for j in 0..x.len() {
            assert_eq!(ixg.values.values()[j], x.values()[j] * g.values.values()[j]);
        }
        let zero = ImageGrid::filled(28, 28, 0.0, (0.0, 1.0));
        assert!(input_x_gradient(&net, &zero, 3).unwrap().values.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_dense_net_has_identical_bp_variants() {
        let mut rng = SeededStream::new(4).rng();
        let net = ConvNet::from_layers(
            Shape::new(1, 5, 5),
            vec![Layer::Dense {
                inputs: 25,
                outputs: 3,
                weights: (0..75).map(|_| rng.random_range(-1.0..1.0)).collect(),
                bias: vec![0.1, 0.2, 0.3],
            }],
        )
        .unwrap();
        let x = noisy(6, 5, 5);
        let g = gradient(&net, &x, 1).unwrap();
        assert!(g.values.bitwise_eq(&guided_bp(&net, &x, 1).unwrap().values));
        assert!(g.values.bitwise_eq(&deconvnet(&net, &x, 1).unwrap().values));
    }

    /// conv -> relu -> dense, backward composed by hand.
    #[test]
    fn guided_is_deconvnet_masked_by_forward_gates() {
        let mut rng = SeededStream::new(10).rng();
        let (h, w, ch) = (4usize, 4usize, 2usize);
        let conv_w: Vec<f64> = (0..ch * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let conv_b: Vec<f64> = (0..ch).map(|_| rng.random_range(-0.3..0.3)).collect();
        let dense_w: Vec<f64> = (0..2 * ch * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let net = ConvNet::from_layers(
            Shape::new(1, h, w),
            vec![
                Layer::Conv2d {
                    in_channels: 1,
                    out_channels: ch,
                    weights: conv_w.clone(),
                    bias: conv_b.clone(),
                },
                Layer::Relu,
                Layer::Dense {
                    inputs: ch * h * w,
                    outputs: 2,
                    weights: dense_w.clone(),
                    bias: vec![0.0, 0.0],
                },
            ],
        )
        .unwrap();
        let x = noisy(11, h, w);
        let target = 0;

        // pre-activations by direct convolution
        let px = |r: isize, c: isize| {
            if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                0.0
            } else {
                x.get(r as usize, c as usize)
            }
        };
        let mut z = vec![0.0; ch * h * w];
        for k in 0..ch {
            for r in 0..h {
                for c in 0..w {
                    let mut acc = conv_b[k];
                    for kr in 0..3 {
                        for kc in 0..3 {
                            acc += conv_w[k * 9 + kr * 3 + kc] * px(r as isize + kr as isize - 1, c as isize + kc as isize - 1);
                        }
                    }
                    z[k * h * w + r * w + c] = acc;
                }
            }
        }
        let incoming = &dense_w[target * ch * h * w..(target + 1) * ch * h * w];
        let through = |gate: &dyn Fn(usize) -> bool| {
            let mut out = vec![0.0; h * w];
            for k in 0..ch {
                for r in 0..h {
                    for c in 0..w {
                        let u = k * h * w + r * w + c;
                        if !gate(u) {
                            continue;
                        }
                        for kr in 0..3 {
                            for kc in 0..3 {
                                let (sr, sc) = (r as isize + kr as isize - 1, c as isize + kc as isize - 1);
                                if sr >= 0 && sc >= 0 && sr < h as isize && sc < w as isize {
                                    out[sr as usize * w + sc as usize] += conv_w[k * 9 + kr * 3 + kc] * incoming[u];
                                }
                            }
                        }
                    }
                }
            }
            out
        };
        let deconv_manual = through(&|u| incoming[u] > 0.0);
        let guided_manual = through(&|u| incoming[u] > 0.0 && z[u] > 0.0);
        let standard_manual = through(&|u| z[u] > 0.0);

        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-12);
        assert!(close(deconvnet(&net, &x, target).unwrap().values.values(), &deconv_manual));
        assert!(close(guided_bp(&net, &x, target).unwrap().values.values(), &guided_manual));
        assert!(close(gradient(&net, &x, target).unwrap().values.values(), &standard_manual));
    }

    #[test]
    fn deconvnet_equals_standard_when_signals_nonnegative_and_gates_open() {
        // one ReLU fed by a positive-weight net: every incoming signal is
        // nonnegative, and positive pre-activations keep the standard gate open
        let net = ConvNet::from_layers(
            Shape::new(1, 3, 3),
            vec![
                Layer::Conv2d {
                    in_channels: 1,
                    out_channels: 1,
                    weights: vec![0.5; 9],
                    bias: vec![1.0],
                },
                Layer::Relu,
                Layer::Dense {
                    inputs: 9,
                    outputs: 1,
                    weights: vec![0.25; 9],
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        let x = noisy(2, 3, 3);
        let std = gradient(&net, &x, 0).unwrap();
        assert!(std.values.bitwise_eq(&deconvnet(&net, &x, 0).unwrap().values));
    }

    #[test]
    fn grad_cam_nonnegative_and_blocky() {
        let net = ConvNet::init_untrained(3);
        let x = noisy(7, 28, 28);
        let map = grad_cam(&net, &x, 2).unwrap();
        assert!(map.values.values().iter().all(|v| *v >= 0.0));
        for r in 0..28 {
            for c in 0..28 {
                assert_eq!(map.values.get(r, c), map.values.get(r / 2 * 2, c / 2 * 2));
            }
        }
    }

    #[test]
    fn grad_cam_zero_when_target_gradient_vanishes() {
        let mut net = ConvNet::init_untrained(3);
        if let Some(Layer::Dense { weights, inputs, .. }) = net.layers_mut().last_mut() {
            let n = *inputs;
            weights[5 * n..6 * n].iter_mut().for_each(|w| *w = 0.0);
        }
        let map = grad_cam(&net, &noisy(1, 28, 28), 5).unwrap();
        assert!(map.values.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn upsample_replicates_blocks() {
        let src: Vec<f64> = (0..49).map(f64::from).collect();
        let up = upsample_nearest(&src, 7, 7, 28, 28);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[3 * 28 + 3], 0.0);
        assert_eq!(up[4], 1.0);
        assert_eq!(up[27 * 28 + 27], 48.0);
    }

    #[test]
    fn random_is_seeded_and_model_free() {
        let x = ImageGrid::filled(28, 28, 0.1, (0.1, 1.1));
        let lin = AnyModel::Linear(LinearModel::zeros(28, 28, 10));
        let conv = AnyModel::Conv(ConvNet::init_untrained(1));
        let s = SeededStream::new(77);
        let a = attribute(Method::Random, &lin, &x, 0, s).unwrap();
        let b = attribute(Method::Random, &conv, &x, 0, s).unwrap();
        assert!(a.values.bitwise_eq(&b.values));
        let mut total = 0.0;
        for i in 0..100 {
            total += random_attribution(&x, s.split(i)).unwrap().values.sum();
        }
        assert!((total / (784.0 * 100.0) - 0.5).abs() < 0.01);
    }

    #[test]
    fn edge_detector_basics() {
        let flat = ImageGrid::filled(8, 8, 0.3, (0.0, 1.0));
        assert!(edge_detector(&flat).unwrap().values.values().iter().all(|v| *v == 0.0));
        let mut step = ImageGrid::filled(8, 8, 0.0, (0.0, 1.0));
        for r in 0..8 {
            for c in 4..8 {
                step.set(r, c, 1.0);
            }
        }
        let e = edge_detector(&step).unwrap();
        let best = e.values.values().iter().cloned().fold(0.0, f64::max);
        for r in 0..8 {
            assert_eq!(e.values.get(r, 3), best);
            assert_eq!(e.values.get(r, 4), best);
            assert_eq!(e.values.get(r, 0), 0.0);
        }
    }

    #[test]
    fn unsupported_combinations() {
        let lin = AnyModel::Linear(LinearModel::zeros(28, 28, 10));
        let conv = AnyModel::Conv(ConvNet::init_untrained(1));
        let x = ImageGrid::filled(28, 28, 0.1, (0.1, 1.1));
        let s = SeededStream::new(0);
        assert!(attribute(Method::GradCam, &lin, &x, 0, s).is_err());
        assert!(attribute(Method::Hadamard, &conv, &x, 0, s).is_err());
        assert!(attribute(Method::Gradient, &conv, &x, 10, s).is_err());
    }

    #[test]
    fn ranking_is_stable_descending() {
        let g = ImageGrid::new(1, 4, vec![0.5, 2.0, 0.5, 3.0], (0.0, 5.0)).unwrap();
        let map = AttributionMap::new(g.values().to_vec(), &g, 0, Method::Random, None).unwrap();
        assert_eq!(map.ranking(), vec![3, 1, 0, 2]);
    }

    #[test]
    fn method_ids_parse() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
        }
        assert_eq!("grad-cam".parse::<Method>().unwrap(), Method::GradCam);
        assert!("lrp".parse::<Method>().is_err());
    }
}
