use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{digest, Classifier, ReluRule};
use crate::error::{Error, Result};
use crate::numeric::{ImageGrid, SeededStream};

/// Channel-major activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Conv layers are 3x3, stride 1, zero padding 1. Pooling is 2x2, stride 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        /// `[out][in][3][3]`
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    MaxPool2,
    Dense {
        inputs: usize,
        outputs: usize,
        /// `[out][in]`
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
}

const K: usize = 3;

impl Layer {
    fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                weights,
                bias,
            } => {
                if input.channels != *in_channels {
                    return Err(Error::dims(
                        format!("{in_channels} input channels"),
                        input.channels,
                    ));
                }
                if weights.len() != out_channels * in_channels * K * K || bias.len() != *out_channels {
                    return Err(Error::Checkpoint(format!(
                        "conv {in_channels}->{out_channels} has {} weights / {} biases",
                        weights.len(),
                        bias.len()
                    )));
                }
                Ok(Shape::new(*out_channels, input.height, input.width))
            }
            Layer::Relu => Ok(input),
            Layer::MaxPool2 => {
                if input.height < 2 || input.width < 2 {
                    return Err(Error::dims("at least 2x2 before pooling", format!("{input:?}")));
                }
                Ok(Shape::new(input.channels, input.height / 2, input.width / 2))
            }
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => {
                if input.len() != *inputs {
                    return Err(Error::dims(format!("{inputs} dense inputs"), input.len()));
                }
                if weights.len() != inputs * outputs || bias.len() != *outputs {
                    return Err(Error::Checkpoint(format!(
                        "dense {inputs}->{outputs} has {} weights / {} biases",
                        weights.len(),
                        bias.len()
                    )));
                }
                Ok(Shape::new(*outputs, 1, 1))
            }
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                weights.len() + bias.len()
            }
            _ => 0,
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    /// `inputs[l]` is the input of layer `l`; the last entry holds the logits.
    pub inputs: Vec<Vec<f64>>,
    pub shapes: Vec<Shape>,
    /// Winning input offset per pooled output, for each pooling layer.
    pool_switches: Vec<Option<Vec<usize>>>,
}

impl ForwardTape {
    pub fn logits(&self) -> &[f64] {
        self.inputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// A sequential network over a single-channel image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvNet {
    input: Shape,
    layers: Vec<Layer>,
    /// Backward treatment of every ReLU; forward is unaffected.
    #[serde(default)]
    pub relu_rule: ReluRule,
}

fn uniform_fill(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

impl ConvNet {
    pub fn from_layers(input: Shape, layers: Vec<Layer>) -> Result<Self> {
        let net = Self {
            input,
            layers,
            relu_rule: ReluRule::Standard,
        };
        net.validate()?;
        Ok(net)
    }

    /// conv(1->8) relu pool, conv(8->16) relu pool, dense(16*7*7 -> 10),
    /// weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn init_untrained(seed: u64) -> Self {
        let mut rng = SeededStream::new(seed).rng();
        let c1 = 9.0f64;
        let c2 = (8 * 9) as f64;
        let fc = (16 * 7 * 7) as f64;
        let layers = vec![
            Layer::Conv2d {
                in_channels: 1,
                out_channels: 8,
                weights: uniform_fill(&mut rng, 8 * 9, 1.0 / c1.sqrt()),
                bias: uniform_fill(&mut rng, 8, 1.0 / c1.sqrt()),
            },
            Layer::Relu,
            Layer::MaxPool2,
            Layer::Conv2d {
                in_channels: 8,
                out_channels: 16,
                weights: uniform_fill(&mut rng, 16 * 8 * 9, 1.0 / c2.sqrt()),
                bias: uniform_fill(&mut rng, 16, 1.0 / c2.sqrt()),
            },
            Layer::Relu,
            Layer::MaxPool2,
            Layer::Dense {
                inputs: 16 * 7 * 7,
                outputs: 10,
                weights: uniform_fill(&mut rng, 10 * 784, 1.0 / fc.sqrt()),
                bias: uniform_fill(&mut rng, 10, 1.0 / fc.sqrt()),
            },
        ];
        Self {
            input: Shape::new(1, 28, 28),
            layers,
            relu_rule: ReluRule::Standard,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    #[cfg(test)]
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn with_rule(mut self, rule: ReluRule) -> Self {
        self.relu_rule = rule;
        self
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub(crate) fn validate(&self) -> Result<Shape> {
        if self.input.channels != 1 {
            return Err(Error::Checkpoint("only single-channel inputs are supported".into()));
        }
        let mut shape = self.input;
        for layer in &self.layers {
            shape = layer.output_shape(shape)?;
        }
        if !matches!(self.layers.last(), Some(Layer::Dense { .. })) {
            return Err(Error::Checkpoint("network must end with a dense layer".into()));
        }
        Ok(shape)
    }

    fn check_input(&self, x: &ImageGrid) -> Result<()> {
        if x.height() != self.input.height || x.width() != self.input.width {
            return Err(Error::dims(
                format!("{}x{}", self.input.height, self.input.width),
                format!("{}x{}", x.height(), x.width()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &ImageGrid) -> Result<ForwardTape> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_switches = Vec::with_capacity(self.layers.len());
        let mut cur = x.values().to_vec();
        let mut shape = self.input;
        for layer in &self.layers {
            let out_shape = layer.output_shape(shape)?;
            let (out, switches) = match layer {
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    weights,
                    bias,
                } => (
                    conv_forward(&cur, shape, *in_channels, *out_channels, weights, bias),
                    None,
                ),
                Layer::Relu => (cur.iter().map(|v| v.max(0.0)).collect(), None),
                Layer::MaxPool2 => {
                    let (o, s) = pool_forward(&cur, shape);
                    (o, Some(s))
                }
                Layer::Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                } => (dense_forward(&cur, *inputs, *outputs, weights, bias), None),
            };
            inputs.push(std::mem::replace(&mut cur, out));
            shapes.push(shape);
            pool_switches.push(switches);
            shape = out_shape;
        }
        inputs.push(cur);
        shapes.push(shape);
        Ok(ForwardTape {
            inputs,
            shapes,
            pool_switches,
        })
    }

    /// Propagates `upstream` (a signal on the logits) back to the input under
    /// `rule`. When `grads` is given, parameter gradients are accumulated into
    /// it (same layout as the layer parameters, see [`ConvNet::zero_grads`]).
    /// When `feature_grad` is given, it receives the signal arriving at the
    /// last post-ReLU activation.
    pub fn backward(
        &self,
        tape: &ForwardTape,
        upstream: &[f64],
        rule: ReluRule,
        mut grads: Option<&mut [Vec<f64>]>,
        mut feature_grad: Option<&mut Vec<f64>>,
    ) -> Result<Vec<f64>> {
        let out_len = tape.logits().len();
        if upstream.len() != out_len {
            return Err(Error::dims(out_len, upstream.len()));
        }
        let last = self.layers.len() - 1;
        let feature = self.feature_layer();
        let mut g = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &tape.inputs[l];
            let shape = tape.shapes[l];
            g = match layer {
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    weights,
                    ..
                } => {
                    if let Some(gr) = grads.as_deref_mut() {
                        conv_param_grads(input, &g, shape, *in_channels, *out_channels, &mut gr[l]);
                    }
                    if l == 0 && grads.is_some() && feature_grad.is_none() && l != last {
                        // input gradient of the first layer is not needed for training
                        Vec::new()
                    } else {
                        conv_backward_input(&g, shape, *in_channels, *out_channels, weights)
                    }
                }
                Layer::Relu => input.iter().zip(&g).map(|(z, gi)| rule.pass(*z, *gi)).collect(),
                Layer::MaxPool2 => {
                    let switches = tape.pool_switches[l]
                        .as_ref()
                        .expect("pool layer records switches");
                    let mut gin = vec![0.0; input.len()];
                    for (o, src) in switches.iter().enumerate() {
                        gin[*src] += g[o];
                    }
                    gin
                }
                Layer::Dense {
                    inputs,
                    outputs,
                    weights,
                    ..
                } => {
                    if let Some(gr) = grads.as_deref_mut() {
                        let slot = &mut gr[l];
                        for o in 0..*outputs {
                            let go = g[o];
                            if go != 0.0 {
                                let row = &mut slot[o * inputs..(o + 1) * inputs];
                                for (r, v) in row.iter_mut().zip(input) {
                                    *r += go * v;
                                }
                            }
                            slot[outputs * inputs + o] += go;
                        }
                    }
                    let mut gin = vec![0.0; *inputs];
                    for o in 0..*outputs {
                        let go = g[o];
                        if go != 0.0 {
                            for (gi, w) in gin.iter_mut().zip(&weights[o * inputs..(o + 1) * inputs]) {
                                *gi += go * w;
                            }
                        }
                    }
                    gin
                }
            };
            if l == feature {
                if let Some(fg) = feature_grad.as_deref_mut() {
                    fg.clone_from(&g);
                }
            }
        }
        Ok(g)
    }

    /// Index of the layer whose input is the last post-ReLU activation (the
    /// final layer when the net has no ReLU).
    fn feature_layer(&self) -> usize {
        self.layers
            .iter()
            .rposition(|l| matches!(l, Layer::Relu))
            .map_or(self.layers.len() - 1, |r| r + 1)
    }

    /// Zeroed gradient buffers, one per layer (`weights ++ bias`).
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|l| vec![0.0; l.param_count()])
            .collect()
    }

    /// Input-space signal of `logit_target` under this net's `relu_rule`.
    pub fn backward_input(&self, x: &ImageGrid, target: usize) -> Result<ImageGrid> {
        self.backward_input_with(x, target, self.relu_rule)
    }

    pub fn backward_input_with(&self, x: &ImageGrid, target: usize, rule: ReluRule) -> Result<ImageGrid> {
        let classes = self.class_count();
        if target >= classes {
            return Err(Error::ClassOutOfRange { class: target, classes });
        }
        let tape = self.forward(x)?;
        let mut upstream = vec![0.0; classes];
        upstream[target] = 1.0;
        let g = self.backward(&tape, &upstream, rule, None, None)?;
        let mut out = x.with_values(g)?;
        out.set_domain((f64::NEG_INFINITY, f64::INFINITY));
        Ok(out)
    }

    /// Last post-ReLU activations (conv2 for the default net) and the
    /// standard-rule gradient of `logit_target` there, with their shape.
    pub fn feature_activations(&self, x: &ImageGrid, target: usize) -> Result<(Shape, Vec<f64>, Vec<f64>)> {
        let classes = self.class_count();
        if target >= classes {
            return Err(Error::ClassOutOfRange { class: target, classes });
        }
        let tape = self.forward(x)?;
        let mut upstream = vec![0.0; classes];
        upstream[target] = 1.0;
        let mut fg = Vec::new();
        self.backward(&tape, &upstream, ReluRule::Standard, None, Some(&mut fg))?;
        let f = self.feature_layer();
        Ok((tape.shapes[f], tape.inputs[f].clone(), fg))
    }

    pub(crate) fn apply_update(&mut self, velocity: &[Vec<f64>], scale: f64) {
        for (layer, v) in self.layers.iter_mut().zip(velocity) {
            if let Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } = layer {
                let (vw, vb) = v.split_at(weights.len());
                for (w, d) in weights.iter_mut().zip(vw) {
                    *w += scale * d;
                }
                for (b, d) in bias.iter_mut().zip(vb) {
                    *b += scale * d;
                }
            }
        }
    }

    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                    vec![weights.as_slice(), bias.as_slice()]
                }
                _ => vec![],
            })
            .collect()
    }
}

impl Classifier for ConvNet {
    fn input_shape(&self) -> (usize, usize) {
        (self.input.height, self.input.width)
    }

    fn class_count(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense { outputs, .. }) => *outputs,
            _ => 0,
        }
    }

    fn logits(&self, x: &ImageGrid) -> Result<Vec<f64>> {
        let mut tape = self.forward(x)?;
        Ok(tape.inputs.pop().unwrap_or_default())
    }

    fn input_gradient(&self, x: &ImageGrid, upstream: &[f64]) -> Result<ImageGrid> {
        let tape = self.forward(x)?;
        let g = self.backward(&tape, upstream, ReluRule::Standard, None, None)?;
        let mut out = x.with_values(g)?;
        out.set_domain((f64::NEG_INFINITY, f64::INFINITY));
        Ok(out)
    }

    fn fingerprint(&self) -> String {
        digest(&self.param_slices())
    }
}

fn conv_forward(input: &[f64], shape: Shape, cin: usize, cout: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let (h, wd) = (shape.height, shape.width);
    let plane = h * wd;
    let mut out = vec![0.0; cout * plane];
    for o in 0..cout {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = b[o]);
        for i in 0..cin {
            let src = &input[i * plane..(i + 1) * plane];
            let kern = &w[(o * cin + i) * K * K..(o * cin + i + 1) * K * K];
            for kr in 0..K {
                for kc in 0..K {
                    let wv = kern[kr * K + kc];
                    // output (r, c) reads input (r + kr - 1, c + kc - 1)
                    let r_lo = 1usize.saturating_sub(kr);
                    let r_hi = (h + 1 - kr).min(h);
                    let c_lo = 1usize.saturating_sub(kc);
                    let c_hi = (wd + 1 - kc).min(wd);
                    for r in r_lo..r_hi {
                        let sr = r + kr - 1;
                        let drow = &mut dst[r * wd + c_lo..r * wd + c_hi];
                        let srow = &src[sr * wd + c_lo + kc - 1..sr * wd + c_hi + kc - 1];
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward_input(gout: &[f64], shape: Shape, cin: usize, cout: usize, w: &[f64]) -> Vec<f64> {
    let (h, wd) = (shape.height, shape.width);
    let plane = h * wd;
    let mut gin = vec![0.0; cin * plane];
    for o in 0..cout {
        let g = &gout[o * plane..(o + 1) * plane];
        for i in 0..cin {
            let dst = &mut gin[i * plane..(i + 1) * plane];
            let kern = &w[(o * cin + i) * K * K..(o * cin + i + 1) * K * K];
            for kr in 0..K {
                for kc in 0..K {
                    let wv = kern[kr * K + kc];
                    let r_lo = 1usize.saturating_sub(kr);
                    let r_hi = (h + 1 - kr).min(h);
                    let c_lo = 1usize.saturating_sub(kc);
                    let c_hi = (wd + 1 - kc).min(wd);
                    for r in r_lo..r_hi {
                        let sr = r + kr - 1;
                        let grow = &g[r * wd + c_lo..r * wd + c_hi];
                        let drow = &mut dst[sr * wd + c_lo + kc - 1..sr * wd + c_hi + kc - 1];
                        for (d, gv) in drow.iter_mut().zip(grow) {
                            *d += wv * gv;
                        }
                    }
                }
            }
        }
    }
    gin
}

fn conv_param_grads(input: &[f64], gout: &[f64], shape: Shape, cin: usize, cout: usize, slot: &mut [f64]) {
    let (h, wd) = (shape.height, shape.width);
    let plane = h * wd;
    let nw = cout * cin * K * K;
    for o in 0..cout {
        let g = &gout[o * plane..(o + 1) * plane];
        slot[nw + o] += g.iter().sum::<f64>();
        for i in 0..cin {
            let src = &input[i * plane..(i + 1) * plane];
            for kr in 0..K {
                for kc in 0..K {
                    let r_lo = 1usize.saturating_sub(kr);
                    let r_hi = (h + 1 - kr).min(h);
                    let c_lo = 1usize.saturating_sub(kc);
                    let c_hi = (wd + 1 - kc).min(wd);
                    let mut acc = 0.0;
                    for r in r_lo..r_hi {
                        let sr = r + kr - 1;
                        let grow = &g[r * wd + c_lo..r * wd + c_hi];
                        let srow = &src[sr * wd + c_lo + kc - 1..sr * wd + c_hi + kc - 1];
                        for (gv, s) in grow.iter().zip(srow) {
                            acc += gv * s;
                        }
                    }
                    slot[(o * cin + i) * K * K + kr * K + kc] += acc;
                }
            }
        }
    }
}

/// First maximal element (row-major within the window) wins ties.
fn pool_forward(input: &[f64], shape: Shape) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (shape.height / 2, shape.width / 2);
    let plane = shape.height * shape.width;
    let mut out = Vec::with_capacity(shape.channels * oh * ow);
    let mut switches = Vec::with_capacity(shape.channels * oh * ow);
    for ch in 0..shape.channels {
        for r in 0..oh {
            for c in 0..ow {
                let mut best = ch * plane + (2 * r) * shape.width + 2 * c;
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ch * plane + (2 * r + dr) * shape.width + 2 * c + dc;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                switches.push(best);
            }
        }
    }
    (out, switches)
}

fn dense_forward(input: &[f64], inputs: usize, outputs: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    (0..outputs)
        .map(|o| {
            w[o * inputs..(o + 1) * inputs]
                .iter()
                .zip(input)
                .fold(b[o], |acc, (wv, x)| acc + wv * x)
        })
        .collect()
}
