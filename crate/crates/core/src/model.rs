//! Layer graphs: the three rotated-MNIST architectures, forward and reverse passes.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gconv::{build_transform_index_table, transform_filters, transform_filters_backward, ExpandedFilters, GFilterBank, LayerKind, TransformIndexTable};
use crate::gconv::fast::{backward_expanded_filter, backward_input_expanded, correlate_expanded};
use crate::gfunc::{GStack, PlanarStack};
use crate::group::GroupId;
use crate::layers::{
    add_bias_backward, batch_norm_g, batch_norm_g_backward, coset_pool_stabilizer, dropout,
    dropout_backward, max_pool_backward, relu, relu_backward, spatial_max_pool, BatchNormCache, Mode,
    RunningStats,
};
use crate::real::Real;

pub const NUM_CLASSES: usize = 10;
pub const IMAGE_SIZE: usize = 28;
const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Z2cnn,
    P4cnn,
    P4cnnRp,
    /// Anything not built by [`build_model`].
    Custom,
}

impl ModelName {
    pub fn parse(s: &str) -> Result<ModelName> {
        match s.to_ascii_lowercase().as_str() {
            "z2cnn" => Ok(ModelName::Z2cnn),
            "p4cnn" => Ok(ModelName::P4cnn),
            "p4cnn_rp" | "p4cnn-rp" | "p4cnnrotationpooling" => Ok(ModelName::P4cnnRp),
            _ => Err(Error::UnknownModel(s.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Z2cnn => "z2cnn",
            ModelName::P4cnn => "p4cnn",
            ModelName::P4cnnRp => "p4cnn_rp",
            ModelName::Custom => "custom",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Descriptor of one layer; parameters are created from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        group: GroupId,
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        size: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    Dropout {
        p: f64,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    CosetPool,
}

#[derive(Clone, Debug)]
pub struct Conv<T> {
    pub bank: GFilterBank<T>,
    pub bias: Vec<T>,
    table: TransformIndexTable,
}

#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running: RunningStats<T>,
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv<T>),
    BatchNorm(BatchNorm<T>),
    Relu,
    Dropout(f64),
    MaxPool { size: usize, stride: usize },
    CosetPool,
}

/// Shape of a feature stack flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub group: GroupId,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub origin: (i64, i64),
}

impl Shape {
    fn of<T: Real>(f: &GStack<T>) -> Shape {
        Shape {
            group: f.group(),
            channels: f.channels(),
            height: f.height(),
            width: f.width(),
            origin: f.origin(),
        }
    }

    fn len(&self) -> usize {
        self.channels * self.group.stabilizer_size() * self.height * self.width
    }

    fn stack<T: Real>(&self, data: Vec<T>) -> Result<GStack<T>> {
        GStack::with_origin(
            self.group,
            self.channels,
            self.height,
            self.width,
            self.origin.0,
            self.origin.1,
            data,
        )
    }
}

/// A named parameter or buffer tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered layers plus parameters.
#[derive(Clone, Debug)]
pub struct LayerGraph<T> {
    name: ModelName,
    seed: u64,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    input: (usize, usize, usize),
}

enum Cache<T> {
    Conv {
        inputs: Vec<GStack<T>>,
        expanded: ExpandedFilters<T>,
        input_group: GroupId,
    },
    BatchNorm(BatchNormCache<T>),
    Relu(Vec<GStack<T>>),
    Dropout(Vec<Option<Vec<T>>>),
    Pool {
        input: Shape,
        argmax: Vec<Vec<u32>>,
    },
}

/// Everything the reverse pass needs from one forward pass.
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
    output: Shape,
}

/// Parameter gradients in [`LayerGraph::parameters_mut`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T>(pub Vec<Vec<T>>);

impl<T: Real> LayerGraph<T> {
    /// Build a graph for `channels × height × width` inputs with He-initialised
    /// filters, zero biases, unit BN scale. Shapes are validated here.
    pub fn from_specs(
        name: ModelName,
        seed: u64,
        specs: Vec<LayerSpec>,
        input: (usize, usize, usize),
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        for spec in &specs {
            layers.push(match *spec {
                LayerSpec::Conv {
                    group,
                    kind,
                    in_channels,
                    out_channels,
                    size,
                } => {
                    let mut bank = GFilterBank::zeros(group, kind, out_channels, in_channels, size)?;
                    let table = build_transform_index_table(group, bank.input_slices(), size)?;
                    let fan_in = (in_channels * bank.input_slices() * size * size) as f64;
                    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt())
                        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                    bank.data_mut()
                        .iter_mut()
                        .for_each(|w| *w = T::of(normal.sample(&mut rng)));
                    Layer::Conv(Conv {
                        bank,
                        bias: vec![T::zero(); out_channels],
                        table,
                    })
                }
                LayerSpec::BatchNorm { channels } => Layer::BatchNorm(BatchNorm {
                    gamma: vec![T::one(); channels],
                    beta: vec![T::zero(); channels],
                    running: RunningStats::new(channels),
                }),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Dropout { p } => {
                    if !(0.0..1.0).contains(&p) {
                        return Err(Error::InvalidArgument(format!("dropout probability {p}")));
                    }
                    Layer::Dropout(p)
                }
                LayerSpec::MaxPool { size, stride } => Layer::MaxPool { size, stride },
                LayerSpec::CosetPool => Layer::CosetPool,
            });
        }
        let graph = LayerGraph {
            name,
            seed,
            specs,
            layers,
            input,
        };
        graph.infer_output_shape()?;
        Ok(graph)
    }

    pub fn name(&self) -> ModelName {
        self.name
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input
    }

    /// Shape after the last layer, checking that every layer fits its input.
    pub fn infer_output_shape(&self) -> Result<Shape> {
        let (c, h, w) = self.input;
        let mut shape = Shape {
            group: GroupId::Z2,
            channels: c,
            height: h,
            width: w,
            origin: ((h as i64 - 1) / 2, (w as i64 - 1) / 2),
        };
        for (idx, spec) in self.specs.iter().enumerate() {
            let fail = |msg: String| Error::shape(format!("layer {idx}: {msg}"));
            shape = match *spec {
                LayerSpec::Conv {
                    group,
                    kind,
                    in_channels,
                    out_channels,
                    size,
                } => {
                    if shape.channels != in_channels {
                        return Err(fail(format!("expects {in_channels} channels, gets {}", shape.channels)));
                    }
                    let ok_group = match kind {
                        LayerKind::FirstLayer => shape.group == GroupId::Z2,
                        LayerKind::Full => shape.group == group,
                    };
                    if !ok_group {
                        return Err(fail(format!("{group} {} conv on a {} stack", kind.name(), shape.group)));
                    }
                    if size > shape.height || size > shape.width {
                        return Err(fail(format!("{size}x{size} filter on {}x{}", shape.height, shape.width)));
                    }
                    let c = (size as i64 - 1) / 2;
                    Shape {
                        group,
                        channels: out_channels,
                        height: shape.height - size + 1,
                        width: shape.width - size + 1,
                        origin: (shape.origin.0 - c, shape.origin.1 - c),
                    }
                }
                LayerSpec::BatchNorm { channels } => {
                    if channels != shape.channels {
                        return Err(fail(format!("batch norm over {channels} channels, gets {}", shape.channels)));
                    }
                    shape
                }
                LayerSpec::Relu | LayerSpec::Dropout { .. } => shape,
                LayerSpec::MaxPool { size, stride } => {
                    if size == 0 || stride == 0 || size > shape.height || size > shape.width {
                        return Err(fail(format!("{size}x{size} pool on {}x{}", shape.height, shape.width)));
                    }
                    let (h, w) = ((shape.height - size) / stride + 1, (shape.width - size) / stride + 1);
                    Shape {
                        height: h,
                        width: w,
                        origin: ((h as i64 - 1) / 2, (w as i64 - 1) / 2),
                        ..shape
                    }
                }
                LayerSpec::CosetPool => {
                    if shape.group == GroupId::Z2 {
                        return Err(fail("coset pooling on a Z² stack".into()));
                    }
                    Shape {
                        group: GroupId::Z2,
                        ..shape
                    }
                }
            };
        }
        Ok(shape)
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.data.len()).sum()
    }

    /// Trainable tensors, in a fixed order.
    pub fn parameters(&self) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    out.push(Tensor {
                        name: format!("layer{i}.weight"),
                        shape: c.bank.shape().to_vec(),
                        data: c.bank.data().to_vec(),
                    });
                    out.push(Tensor {
                        name: format!("layer{i}.bias"),
                        shape: vec![c.bias.len()],
                        data: c.bias.clone(),
                    });
                }
                Layer::BatchNorm(b) => {
                    out.push(Tensor {
                        name: format!("layer{i}.gamma"),
                        shape: vec![b.gamma.len()],
                        data: b.gamma.clone(),
                    });
                    out.push(Tensor {
                        name: format!("layer{i}.beta"),
                        shape: vec![b.beta.len()],
                        data: b.beta.clone(),
                    });
                }
                _ => {}
            }
        }
        out
    }

    /// Parameters followed by the batch-norm running statistics.
    pub fn tensors(&self) -> Vec<Tensor<T>> {
        let mut out = self.parameters();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::BatchNorm(b) = layer {
                out.push(Tensor {
                    name: format!("layer{i}.running_mean"),
                    shape: vec![b.running.mean.len()],
                    data: b.running.mean.clone(),
                });
                out.push(Tensor {
                    name: format!("layer{i}.running_var"),
                    shape: vec![b.running.var.len()],
                    data: b.running.var.clone(),
                });
            }
        }
        out
    }

    /// Overwrite tensors by name; every tensor of the graph must be supplied.
    pub fn load_tensors(&mut self, tensors: &[Tensor<T>]) -> Result<()> {
        let expected = self.tensors();
        if tensors.len() != expected.len() {
            return Err(Error::shape(format!(
                "{} tensors supplied, graph has {}",
                tensors.len(),
                expected.len()
            )));
        }
        for t in tensors {
            let want = expected
                .iter()
                .find(|e| e.name == t.name)
                .ok_or_else(|| Error::shape(format!("unknown tensor {}", t.name)))?;
            if want.shape != t.shape || t.data.len() != want.data.len() {
                return Err(Error::shape(format!("tensor {} has the wrong shape", t.name)));
            }
            let (layer, field) = t
                .name
                .strip_prefix("layer")
                .and_then(|s| s.split_once('.'))
                .ok_or_else(|| Error::shape(format!("bad tensor name {}", t.name)))?;
            let idx: usize = layer
                .parse()
                .map_err(|_| Error::shape(format!("bad tensor name {}", t.name)))?;
            let dst: &mut [T] = match (&mut self.layers[idx], field) {
                (Layer::Conv(c), "weight") => c.bank.data_mut(),
                (Layer::Conv(c), "bias") => &mut c.bias,
                (Layer::BatchNorm(b), "gamma") => &mut b.gamma,
                (Layer::BatchNorm(b), "beta") => &mut b.beta,
                (Layer::BatchNorm(b), "running_mean") => &mut b.running.mean,
                (Layer::BatchNorm(b), "running_var") => &mut b.running.var,
                _ => return Err(Error::shape(format!("unknown tensor {}", t.name))),
            };
            dst.copy_from_slice(&t.data);
        }
        Ok(())
    }

    /// Mutable views of the trainable tensors, in [`parameters`](Self::parameters) order.
    pub fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.bank.data_mut());
                    out.push(&mut c.bias);
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// Run the graph on a batch. `step` selects the dropout stream, so equal
    /// seeds and steps give equal masks. Train mode updates BN running stats.
    pub fn forward(
        &mut self,
        batch: &[PlanarStack<T>],
        mode: Mode,
        step: u64,
    ) -> Result<(Vec<GStack<T>>, Tape<T>)> {
        self.forward_until(batch, mode, step, self.layers.len())
    }

    /// Forward through the first `depth` layers only.
    pub fn forward_until(
        &mut self,
        batch: &[PlanarStack<T>],
        mode: Mode,
        step: u64,
        depth: usize,
    ) -> Result<(Vec<GStack<T>>, Tape<T>)> {
        if batch.is_empty() {
            return Err(Error::shape("empty batch"));
        }
        let (c, h, w) = self.input;
        if batch.iter().any(|x| x.channels() != c || x.height() != h || x.width() != w) {
            return Err(Error::shape(format!("inputs must be {c}x{h}x{w}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(step);
        let mut xs: Vec<GStack<T>> = batch.iter().map(|x| x.clone().into_gstack()).collect();
        let mut caches = Vec::with_capacity(depth);
        for layer in self.layers.iter_mut().take(depth) {
            let (next, cache) = match layer {
                Layer::Conv(conv) => {
                    let expanded = transform_filters(&conv.bank, &conv.table)?;
                    let input_group = xs[0].group();
                    let outs = xs
                        .iter()
                        .map(|x| {
                            let mut y = correlate_expanded(x, &expanded, conv.bank.group());
                            let per = y.data().len() / conv.bias.len();
                            for (chunk, &b) in y.data_mut().chunks_exact_mut(per).zip(&conv.bias) {
                                chunk.iter_mut().for_each(|v| *v += b);
                            }
                            y
                        })
                        .collect();
                    (
                        outs,
                        Cache::Conv {
                            inputs: std::mem::take(&mut xs),
                            expanded,
                            input_group,
                        },
                    )
                }
                Layer::BatchNorm(bn) => {
                    let (outs, cache) =
                        batch_norm_g(&xs, &bn.gamma, &bn.beta, BN_EPS, mode, &mut bn.running)?;
                    (outs, Cache::BatchNorm(cache))
                }
                Layer::Relu => (xs.iter().map(relu).collect(), Cache::Relu(std::mem::take(&mut xs))),
                Layer::Dropout(p) => {
                    let mut outs = Vec::with_capacity(xs.len());
                    let mut masks = Vec::with_capacity(xs.len());
                    for x in &xs {
                        let (y, m) = dropout(x, *p, &mut rng, mode)?;
                        outs.push(y);
                        masks.push(m);
                    }
                    (outs, Cache::Dropout(masks))
                }
                Layer::MaxPool { size, stride } => {
                    let input = Shape::of(&xs[0]);
                    let mut outs = Vec::with_capacity(xs.len());
                    let mut argmax = Vec::with_capacity(xs.len());
                    for x in &xs {
                        let p = spatial_max_pool(x, *size, *stride)?;
                        outs.push(p.output);
                        argmax.push(p.argmax);
                    }
                    (outs, Cache::Pool { input, argmax })
                }
                Layer::CosetPool => {
                    let input = Shape::of(&xs[0]);
                    let mut outs = Vec::with_capacity(xs.len());
                    let mut argmax = Vec::with_capacity(xs.len());
                    for x in &xs {
                        let p = coset_pool_stabilizer(x)?;
                        outs.push(p.output.into_gstack());
                        argmax.push(p.argmax);
                    }
                    (outs, Cache::Pool { input, argmax })
                }
            };
            xs = next;
            caches.push(cache);
        }
        let output = Shape::of(&xs[0]);
        Ok((xs, Tape { caches, output }))
    }

    /// Class scores: the output channels at the single remaining position.
    pub fn logits(&mut self, batch: &[PlanarStack<T>], mode: Mode, step: u64) -> Result<(Vec<Vec<T>>, Tape<T>)> {
        let (outs, tape) = self.forward(batch, mode, step)?;
        let logits = outs
            .iter()
            .map(|o| {
                if o.group() != GroupId::Z2 || o.height() != 1 || o.width() != 1 {
                    Err(Error::shape("graph does not end in a 1x1 planar map"))
                } else {
                    Ok(o.data().to_vec())
                }
            })
            .collect::<Result<_>>()?;
        Ok((logits, tape))
    }

    /// Reverse pass from output gradients; returns parameter gradients summed
    /// over the batch.
    pub fn backward(&self, tape: &Tape<T>, grads: Vec<GStack<T>>) -> Result<Gradients<T>> {
        if grads.iter().any(|g| Shape::of(g) != tape.output) {
            return Err(Error::shape("output gradient does not match the forward output"));
        }
        let mut per_layer: Vec<Vec<Vec<T>>> = vec![Vec::new(); tape.caches.len()];
        let mut gs = grads;
        for (idx, cache) in tape.caches.iter().enumerate().rev() {
            let layer = &self.layers[idx];
            gs = match (layer, cache) {
                (
                    Layer::Conv(conv),
                    Cache::Conv {
                        inputs,
                        expanded,
                        input_group,
                    },
                ) => {
                    let mut gexp: Option<ExpandedFilters<T>> = None;
                    let mut dbias = vec![T::zero(); conv.bias.len()];
                    for (g, x) in gs.iter().zip(inputs) {
                        let e = backward_expanded_filter(g, x, &conv.table);
                        match &mut gexp {
                            None => gexp = Some(e),
                            Some(acc) => acc.data.iter_mut().zip(&e.data).for_each(|(a, b)| *a += *b),
                        }
                        for (d, b) in dbias.iter_mut().zip(add_bias_backward(g)) {
                            *d += b;
                        }
                    }
                    let dw = transform_filters_backward(&gexp.expect("non-empty batch"), &conv.table)?;
                    per_layer[idx] = vec![dw.into_data(), dbias];
                    if idx == 0 {
                        Vec::new()
                    } else {
                        gs.iter()
                            .map(|g| backward_input_expanded(g, expanded, *input_group))
                            .collect()
                    }
                }
                (Layer::BatchNorm(bn), Cache::BatchNorm(cache)) => {
                    let (dx, dgamma, dbeta) = batch_norm_g_backward(&gs, &bn.gamma, cache)?;
                    per_layer[idx] = vec![dgamma, dbeta];
                    dx
                }
                (Layer::Relu, Cache::Relu(inputs)) => inputs
                    .iter()
                    .zip(&gs)
                    .map(|(x, g)| relu_backward(x, g))
                    .collect::<Result<_>>()?,
                (Layer::Dropout(_), Cache::Dropout(masks)) => gs
                    .iter()
                    .zip(masks)
                    .map(|(g, m)| dropout_backward(g, m.as_deref()))
                    .collect::<Result<_>>()?,
                (Layer::MaxPool { .. } | Layer::CosetPool, Cache::Pool { input, argmax }) => gs
                    .iter()
                    .zip(argmax)
                    .map(|(g, a)| input.stack(max_pool_backward(g.data(), a, input.len())))
                    .collect::<Result<_>>()?,
                _ => unreachable!("tape and graph out of step"),
            };
        }
        Ok(Gradients(per_layer.into_iter().flatten().collect()))
    }

    /// Mean softmax cross-entropy over the batch and its parameter gradients.
    pub fn loss_and_grad(
        &mut self,
        batch: &[PlanarStack<T>],
        labels: &[usize],
        step: u64,
    ) -> Result<(T, Gradients<T>)> {
        if labels.len() != batch.len() {
            return Err(Error::shape("one label per image"));
        }
        let (logits, tape) = self.logits(batch, Mode::Train, step)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
        let grads = dlogits
            .into_iter()
            .map(|d| tape.output.stack(d))
            .collect::<Result<_>>()?;
        let g = self.backward(&tape, grads)?;
        Ok((loss, g))
    }

    /// Predicted classes in eval mode.
    pub fn predict(&mut self, batch: &[PlanarStack<T>]) -> Result<Vec<usize>> {
        let (logits, _) = self.logits(batch, Mode::Eval, 0)?;
        Ok(logits.iter().map(|l| argmax(l)).collect())
    }
}

fn argmax<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Mean softmax cross-entropy and its gradient with respect to each logit row.
pub fn softmax_cross_entropy<T: Real>(logits: &[Vec<T>], labels: &[usize]) -> Result<(T, Vec<Vec<T>>)> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::shape("logits and labels must be non-empty and paired"));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &label) in logits.iter().zip(labels) {
        if label >= row.len() {
            return Err(Error::InvalidArgument(format!("label {label} with {} classes", row.len())));
        }
        let max = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.as_f64()));
        let exps: Vec<f64> = row.iter().map(|x| (x.as_f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() - (row[label].as_f64() - max);
        grads.push(
            exps.iter()
                .enumerate()
                .map(|(i, e)| T::of((e / sum - if i == label { 1.0 } else { 0.0 }) / n))
                .collect(),
        );
    }
    Ok((T::of(loss / n), grads))
}

fn conv(group: GroupId, kind: LayerKind, in_channels: usize, out_channels: usize, size: usize) -> LayerSpec {
    LayerSpec::Conv {
        group,
        kind,
        in_channels,
        out_channels,
        size,
    }
}

/// Layer descriptors of the named architecture.
pub fn architecture(name: ModelName) -> Result<Vec<LayerSpec>> {
    let mut specs = Vec::new();
    match name {
        ModelName::Z2cnn => {
            for i in 0..6 {
                let cin = if i == 0 { 1 } else { 20 };
                specs.push(conv(GroupId::Z2, LayerKind::FirstLayer, cin, 20, 3));
                specs.extend([
                    LayerSpec::BatchNorm { channels: 20 },
                    LayerSpec::Relu,
                    LayerSpec::Dropout { p: 0.3 },
                ]);
                if i == 1 {
                    specs.push(LayerSpec::MaxPool { size: 2, stride: 2 });
                }
            }
            specs.push(conv(GroupId::Z2, LayerKind::FirstLayer, 20, NUM_CLASSES, 4));
        }
        ModelName::P4cnn => {
            for i in 0..6 {
                let (cin, kind) = if i == 0 {
                    (1, LayerKind::FirstLayer)
                } else {
                    (10, LayerKind::Full)
                };
                specs.push(conv(GroupId::P4, kind, cin, 10, 3));
                specs.extend([LayerSpec::BatchNorm { channels: 10 }, LayerSpec::Relu]);
                if i == 1 {
                    specs.push(LayerSpec::MaxPool { size: 2, stride: 2 });
                }
            }
            specs.extend([
                conv(GroupId::P4, LayerKind::Full, 10, NUM_CLASSES, 3),
                LayerSpec::CosetPool,
                LayerSpec::MaxPool { size: 2, stride: 2 },
            ]);
        }
        ModelName::P4cnnRp => {
            for i in 0..6 {
                let cin = if i == 0 { 1 } else { 20 };
                specs.extend([
                    conv(GroupId::P4, LayerKind::FirstLayer, cin, 20, 3),
                    LayerSpec::CosetPool,
                    LayerSpec::BatchNorm { channels: 20 },
                    LayerSpec::Relu,
                    LayerSpec::Dropout { p: 0.3 },
                ]);
                if i == 1 {
                    specs.push(LayerSpec::MaxPool { size: 2, stride: 2 });
                }
            }
            specs.extend([
                conv(GroupId::P4, LayerKind::FirstLayer, 20, NUM_CLASSES, 3),
                LayerSpec::CosetPool,
                LayerSpec::MaxPool { size: 2, stride: 2 },
            ]);
        }
        ModelName::Custom => return Err(Error::UnknownModel("custom".into())),
    }
    Ok(specs)
}

/// One of the three rotated-MNIST networks for 1×28×28 inputs.
pub fn build_model<T: Real>(name: &str, seed: u64) -> Result<LayerGraph<T>> {
    let name = ModelName::parse(name)?;
    LayerGraph::from_specs(name, seed, architecture(name)?, (1, IMAGE_SIZE, IMAGE_SIZE))
}
