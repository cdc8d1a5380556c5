//! Model descriptions, parameter accounting, and the built network.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hexnn::kernels::{
    hconv2d_backward, hconv2d_forward, hconv2d_output_dims, same_padding_output,
    sconv2d_backward, sconv2d_forward, HexKernelPair, SquareKernel,
};
use crate::hexnn::layers::{
    adam_step, dense_backward, dense_forward, dropout_backward, dropout_forward, glorot_init,
    relu_backward, relu_forward, AdamConfig, AdamState, DenseParams,
};
use crate::hexnn::pooling::{
    hmaxpool_backward, hmaxpool_forward, hmaxpool_output_dims, smaxpool_backward,
    smaxpool_forward,
};
use crate::hexnn::tensor::Tensor4;

/// One layer of a model description.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// Seven-tap hexagonal convolution; stride 1 or 2.
    HexConv { filters: usize, stride: usize, relu: bool },
    /// 3x3 square convolution with same-padding; any positive stride.
    SquareConv { filters: usize, stride: usize, relu: bool },
    /// Seven-cell hexagonal max pooling.
    HexMaxPool,
    /// Square max pooling with truncated edge windows.
    SquareMaxPool { size: usize, stride: usize },
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize, relu: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec { name: name.into(), kind }
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `(rows, cols, channels)`
    Spatial(usize, usize, usize),
    /// Flattened feature vector of the given length.
    Flat(usize),
}

impl Shape {
    pub fn element_count(&self) -> usize {
        match *self {
            Shape::Spatial(r, c, ch) => r * c * ch,
            Shape::Flat(n) => n,
        }
    }

    fn display(&self) -> String {
        match *self {
            Shape::Spatial(r, c, ch) => format!("({r}, {c}, {ch})"),
            Shape::Flat(n) => format!("({n})"),
        }
    }
}

/// A network architecture: an input raster shape plus an ordered layer list.
/// Construction validates that the shapes chain consistently.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    input: (usize, usize, usize),
    layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(input: (usize, usize, usize), layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = ModelSpec { input, layers };
        spec.shapes()?;
        Ok(spec)
    }

    /// The square reference classifier: two convolutional blocks
    /// (32 and 64 filters, the second block downsampling by stride and by
    /// 2x2 pooling) and a 128-unit fully connected head. Defaults to a
    /// 32x32x3 input and 100 classes.
    pub fn s_cnn() -> ModelSpec {
        ModelSpec::new(
            (32, 32, 3),
            vec![
                LayerSpec::new("conv1", LayerKind::SquareConv { filters: 32, stride: 1, relu: true }),
                LayerSpec::new("conv2", LayerKind::SquareConv { filters: 32, stride: 2, relu: true }),
                LayerSpec::new("dropout1", LayerKind::Dropout { rate: 0.25 }),
                LayerSpec::new("conv3", LayerKind::SquareConv { filters: 64, stride: 1, relu: true }),
                LayerSpec::new("pool", LayerKind::SquareMaxPool { size: 2, stride: 2 }),
                LayerSpec::new("dropout2", LayerKind::Dropout { rate: 0.25 }),
                LayerSpec::new("flatten", LayerKind::Flatten),
                LayerSpec::new("dense1", LayerKind::Dense { units: 128, relu: true }),
                LayerSpec::new("dropout3", LayerKind::Dropout { rate: 0.5 }),
                LayerSpec::new("dense2", LayerKind::Dense { units: 100, relu: false }),
            ],
        )
        .expect("the built-in square architecture is consistent")
    }

    /// The hexagonal counterpart of [`ModelSpec::s_cnn`] on the equal-count
    /// 34x30 raster, with every convolution and the pooling replaced by the
    /// seven-cell hexagonal versions. Defaults to 100 classes.
    pub fn h_cnn() -> ModelSpec {
        ModelSpec::new(
            (34, 30, 3),
            vec![
                LayerSpec::new("conv1", LayerKind::HexConv { filters: 32, stride: 1, relu: true }),
                LayerSpec::new("conv2", LayerKind::HexConv { filters: 32, stride: 2, relu: true }),
                LayerSpec::new("dropout1", LayerKind::Dropout { rate: 0.25 }),
                LayerSpec::new("conv3", LayerKind::HexConv { filters: 64, stride: 1, relu: true }),
                LayerSpec::new("pool", LayerKind::HexMaxPool),
                LayerSpec::new("dropout2", LayerKind::Dropout { rate: 0.25 }),
                LayerSpec::new("flatten", LayerKind::Flatten),
                LayerSpec::new("dense1", LayerKind::Dense { units: 128, relu: true }),
                LayerSpec::new("dropout3", LayerKind::Dropout { rate: 0.5 }),
                LayerSpec::new("dense2", LayerKind::Dense { units: 100, relu: false }),
            ],
        )
        .expect("the built-in hexagonal architecture is consistent")
    }

    /// Same architecture on a different input raster.
    pub fn with_input(mut self, rows: usize, cols: usize, channels: usize) -> Result<ModelSpec> {
        self.input = (rows, cols, channels);
        self.shapes()?;
        Ok(self)
    }

    /// Same architecture with the final dense layer resized to `classes`.
    pub fn with_classes(mut self, classes: usize) -> Result<ModelSpec> {
        let last = self
            .layers
            .iter_mut()
            .rev()
            .find_map(|l| match &mut l.kind {
                LayerKind::Dense { units, .. } => Some(units),
                _ => None,
            })
            .ok_or_else(|| Error::invalid_argument("model has no dense layer to resize"))?;
        *last = classes;
        self.shapes()?;
        Ok(self)
    }

    pub fn input(&self) -> (usize, usize, usize) {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output classes: the width of the final layer.
    pub fn classes(&self) -> usize {
        self.shapes()
            .expect("validated at construction")
            .last()
            .map(|s| s.element_count())
            .unwrap_or(self.input.0 * self.input.1 * self.input.2)
    }

    /// The activation shape after each layer.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let (rows, cols, channels) = self.input;
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::invalid_argument("model input dimensions must be positive"));
        }
        let mut shape = Shape::Spatial(rows, cols, channels);
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer_output_shape(&layer.kind, shape, &layer.name)?;
            out.push(shape);
        }
        Ok(out)
    }
}

fn spatial(shape: Shape, name: &str) -> Result<(usize, usize, usize)> {
    match shape {
        Shape::Spatial(r, c, ch) => Ok((r, c, ch)),
        Shape::Flat(_) => Err(Error::shape_mismatch(format!(
            "layer {name} needs a spatial input but receives a flat vector"
        ))),
    }
}

fn layer_output_shape(kind: &LayerKind, input: Shape, name: &str) -> Result<Shape> {
    match *kind {
        LayerKind::HexConv { filters, stride, .. } => {
            let (r, c, _) = spatial(input, name)?;
            if filters == 0 {
                return Err(Error::invalid_argument(format!("layer {name} has zero filters")));
            }
            let (ro, co) = hconv2d_output_dims(r, c, stride)?;
            Ok(Shape::Spatial(ro, co, filters))
        }
        LayerKind::SquareConv { filters, stride, .. } => {
            let (r, c, _) = spatial(input, name)?;
            if filters == 0 {
                return Err(Error::invalid_argument(format!("layer {name} has zero filters")));
            }
            if stride == 0 {
                return Err(Error::invalid_argument(format!("layer {name} has zero stride")));
            }
            Ok(Shape::Spatial(
                same_padding_output(r, stride),
                same_padding_output(c, stride),
                filters,
            ))
        }
        LayerKind::HexMaxPool => {
            let (r, c, ch) = spatial(input, name)?;
            let (ro, co) = hmaxpool_output_dims(r, c)?;
            Ok(Shape::Spatial(ro, co, ch))
        }
        LayerKind::SquareMaxPool { size, stride } => {
            let (r, c, ch) = spatial(input, name)?;
            if size == 0 || stride == 0 {
                return Err(Error::invalid_argument(format!(
                    "layer {name} has a zero pooling size or stride"
                )));
            }
            Ok(Shape::Spatial(
                same_padding_output(r, stride),
                same_padding_output(c, stride),
                ch,
            ))
        }
        LayerKind::Dropout { rate } => {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::invalid_argument(format!(
                    "layer {name} has dropout rate {rate}, expected [0, 1)"
                )));
            }
            Ok(input)
        }
        LayerKind::Flatten => {
            let (r, c, ch) = spatial(input, name)?;
            Ok(Shape::Flat(r * c * ch))
        }
        LayerKind::Dense { units, .. } => {
            if units == 0 {
                return Err(Error::invalid_argument(format!("layer {name} has zero units")));
            }
            match input {
                Shape::Flat(_) => Ok(Shape::Flat(units)),
                Shape::Spatial(..) => Err(Error::shape_mismatch(format!(
                    "layer {name} needs a flat input; add a flatten layer first"
                ))),
            }
        }
    }
}

/// One row of a parameter summary.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSummary {
    pub name: String,
    pub type_label: String,
    pub size_label: String,
    pub output_shape: Shape,
    pub params: usize,
}

fn layer_labels(kind: &LayerKind) -> (String, String) {
    match *kind {
        LayerKind::HexConv { .. } => ("HConv2D".to_string(), "7^1".to_string()),
        LayerKind::SquareConv { .. } => ("SConv2D".to_string(), "3 x 3".to_string()),
        LayerKind::HexMaxPool => ("HMaxPool2D".to_string(), "7^1".to_string()),
        LayerKind::SquareMaxPool { size, .. } => {
            ("SMaxPool2D".to_string(), format!("{size} x {size}"))
        }
        LayerKind::Dropout { rate } => ("Dropout".to_string(), format!("{rate}")),
        LayerKind::Flatten => ("Flatten".to_string(), "/".to_string()),
        LayerKind::Dense { units, .. } => ("Dense".to_string(), format!("{units}")),
    }
}

fn layer_params(kind: &LayerKind, input: Shape) -> usize {
    match *kind {
        LayerKind::HexConv { filters, .. } => {
            let Shape::Spatial(_, _, ch) = input else { return 0 };
            7 * ch * filters + filters
        }
        LayerKind::SquareConv { filters, .. } => {
            let Shape::Spatial(_, _, ch) = input else { return 0 };
            9 * ch * filters + filters
        }
        LayerKind::Dense { units, .. } => {
            let Shape::Flat(n) = input else { return 0 };
            n * units + units
        }
        _ => 0,
    }
}

/// Per-layer parameter counts and the trainable total.
pub fn count_params(spec: &ModelSpec) -> Result<(Vec<LayerSummary>, usize)> {
    let shapes = spec.shapes()?;
    let (rows, cols, channels) = spec.input();
    let mut input = Shape::Spatial(rows, cols, channels);
    let mut summaries = Vec::with_capacity(spec.layers().len());
    let mut total = 0;
    for (layer, &output) in spec.layers().iter().zip(&shapes) {
        let (type_label, size_label) = layer_labels(&layer.kind);
        let params = layer_params(&layer.kind, input);
        total += params;
        summaries.push(LayerSummary {
            name: layer.name.clone(),
            type_label,
            size_label,
            output_shape: output,
            params,
        });
        input = output;
    }
    Ok((summaries, total))
}

/// Formats a number with thin-space digit grouping: `9248` becomes `9 248`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let bytes = digits.as_bytes();
    let mut out = String::with_capacity(bytes.len() + bytes.len() / 3);
    for (i, &b) in bytes.iter().enumerate() {
        if i > 0 && (bytes.len() - i).is_multiple_of(3) {
            out.push(' ');
        }
        out.push(b as char);
    }
    out
}

/// Renders the layer table for an architecture. The output is byte-stable
/// for a given spec: fixed column set, single-space-padded columns sized to
/// the content, and a closing total line.
pub fn summary_table(spec: &ModelSpec) -> Result<String> {
    let (summaries, total) = count_params(spec)?;
    let header = ["Layer", "Type", "Size / rate", "Output shape", "Param #"];
    let rows: Vec<[String; 5]> = summaries
        .iter()
        .map(|s| {
            [
                s.name.clone(),
                s.type_label.clone(),
                s.size_label.clone(),
                s.output_shape.display(),
                group_thousands(s.params),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let write_row = |out: &mut String, cells: [&str; 5]| {
        for (i, (cell, &w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            if i + 1 < cells.len() {
                for _ in cell.len()..w {
                    out.push(' ');
                }
            }
        }
        out.push('\n');
    };
    write_row(&mut out, header);
    let rule_len = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(rule_len));
    out.push('\n');
    for row in &rows {
        write_row(&mut out, [&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    out.push_str(&"-".repeat(rule_len));
    out.push('\n');
    out.push_str(&format!("Total trainable params: {}\n", group_thousands(total)));
    Ok(out)
}

#[derive(Debug, Clone)]
enum LayerState {
    HexConv { stride: usize, relu: bool, kernel: HexKernelPair },
    SquareConv { stride: usize, relu: bool, kernel: SquareKernel },
    HexPool,
    SquarePool { size: usize, stride: usize },
    Dropout { rate: f64 },
    Flatten,
    Dense { relu: bool, params: DenseParams },
}

enum LayerCache {
    Conv { input: Tensor4, pre: Option<Tensor4> },
    HexPool { dims: (usize, usize, usize, usize), argmax: Vec<Option<usize>> },
    SquarePool { dims: (usize, usize, usize, usize), argmax: Vec<usize> },
    Dropout { mask: Option<Vec<f64>> },
    Flatten { dims: (usize, usize, usize, usize) },
    Dense { input: Tensor4, pre: Option<Tensor4> },
}

/// Parameter gradients for one layer, matching that layer's storage layout.
pub enum LayerGrad {
    Pair { weights: Vec<f64>, bias: Vec<f64> },
    None,
}

/// Per-layer optimizer state (weight and bias moments).
pub struct ModelOptState {
    layers: Vec<Option<(AdamState, AdamState)>>,
}

/// A built network: a validated spec plus its parameter tensors.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<LayerState>,
}

impl Model {
    /// Initializes parameters with the uniform Glorot scheme (biases start at
    /// zero), drawing from `rng` in layer order: convolution fans count the
    /// taps (7 per hexagonal tap set, 9 per 3x3 kernel) times the channel
    /// counts, dense fans are the layer widths.
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Model> {
        let shapes = spec.shapes()?;
        Model::init_impl(spec, shapes, rng)
    }

    /// [`Model::init`] drawing from the crate's standard seeded generator.
    pub fn seeded(spec: &ModelSpec, seed: u64) -> Result<Model> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        Model::init(spec, &mut rng)
    }

    fn init_impl(spec: &ModelSpec, shapes: Vec<Shape>, rng: &mut impl Rng) -> Result<Model> {
        let (rows, cols, channels) = spec.input();
        let mut input = Shape::Spatial(rows, cols, channels);
        let mut layers = Vec::with_capacity(spec.layers().len());
        for (layer, &output) in spec.layers().iter().zip(&shapes) {
            let state = match layer.kind {
                LayerKind::HexConv { filters, stride, relu } => {
                    let (_, _, c_in) = spatial(input, &layer.name)?;
                    let taps = glorot_init(7 * c_in, 7 * filters, 7 * c_in * filters, rng);
                    let kernel =
                        HexKernelPair::from_parts(c_in, filters, taps, vec![0.0; filters])?;
                    LayerState::HexConv { stride, relu, kernel }
                }
                LayerKind::SquareConv { filters, stride, relu } => {
                    let (_, _, c_in) = spatial(input, &layer.name)?;
                    let weights = glorot_init(9 * c_in, 9 * filters, 9 * c_in * filters, rng);
                    let kernel =
                        SquareKernel::from_parts(3, c_in, filters, weights, vec![0.0; filters])?;
                    LayerState::SquareConv { stride, relu, kernel }
                }
                LayerKind::HexMaxPool => LayerState::HexPool,
                LayerKind::SquareMaxPool { size, stride } => {
                    LayerState::SquarePool { size, stride }
                }
                LayerKind::Dropout { rate } => LayerState::Dropout { rate },
                LayerKind::Flatten => LayerState::Flatten,
                LayerKind::Dense { units, relu } => {
                    let n_in = input.element_count();
                    let weights = glorot_init(n_in, units, n_in * units, rng);
                    let mut params = DenseParams::new(n_in, units)?;
                    params.weights_mut().copy_from_slice(&weights);
                    LayerState::Dense { relu, params }
                }
            };
            layers.push(state);
            input = output;
        }
        Ok(Model { spec: spec.clone(), layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn fresh_opt_state(&self) -> ModelOptState {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerState::HexConv { kernel, .. } => Some((
                    AdamState::new(kernel.taps().len()),
                    AdamState::new(kernel.bias().len()),
                )),
                LayerState::SquareConv { kernel, .. } => Some((
                    AdamState::new(kernel.weights().len()),
                    AdamState::new(kernel.bias().len()),
                )),
                LayerState::Dense { params, .. } => Some((
                    AdamState::new(params.weights().len()),
                    AdamState::new(params.bias().len()),
                )),
                _ => None,
            })
            .collect();
        ModelOptState { layers }
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        let (rows, cols, channels) = self.spec.input();
        let (_, r, c, ch) = x.dims();
        if (r, c, ch) != (rows, cols, channels) {
            return Err(Error::shape_mismatch(format!(
                "model expects ({rows}, {cols}, {channels}) inputs, got ({r}, {c}, {ch})"
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass: dropout is the identity.
    pub fn forward_eval(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        let mut act = x.clone();
        for state in &self.layers {
            act = match state {
                LayerState::HexConv { stride, relu, kernel } => {
                    let z = hconv2d_forward(&act, kernel, *stride)?;
                    if *relu { relu_forward(&z) } else { z }
                }
                LayerState::SquareConv { stride, relu, kernel } => {
                    let z = sconv2d_forward(&act, kernel, *stride)?;
                    if *relu { relu_forward(&z) } else { z }
                }
                LayerState::HexPool => hmaxpool_forward(&act)?.0,
                LayerState::SquarePool { size, stride } => {
                    smaxpool_forward(&act, *size, *stride)?.0
                }
                LayerState::Dropout { .. } => act,
                LayerState::Flatten => act.flattened(),
                LayerState::Dense { relu, params } => {
                    let z = dense_forward(&act, params)?;
                    if *relu { relu_forward(&z) } else { z }
                }
            };
        }
        Ok(act)
    }

    /// Training-mode forward pass: applies dropout, drawing mask randomness
    /// from `rng` in layer order, and records what the backward pass needs.
    fn forward_train(&self, x: &Tensor4, rng: &mut impl Rng) -> Result<(Vec<LayerCache>, Tensor4)> {
        self.check_input(x)?;
        let mut act = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for state in &self.layers {
            let (cache, next) = match state {
                LayerState::HexConv { stride, relu, kernel } => {
                    let z = hconv2d_forward(&act, kernel, *stride)?;
                    let input = std::mem::replace(&mut act, Tensor4::zeros(1, 1, 1, 1));
                    if *relu {
                        let a = relu_forward(&z);
                        (LayerCache::Conv { input, pre: Some(z) }, a)
                    } else {
                        (LayerCache::Conv { input, pre: None }, z)
                    }
                }
                LayerState::SquareConv { stride, relu, kernel } => {
                    let z = sconv2d_forward(&act, kernel, *stride)?;
                    let input = std::mem::replace(&mut act, Tensor4::zeros(1, 1, 1, 1));
                    if *relu {
                        let a = relu_forward(&z);
                        (LayerCache::Conv { input, pre: Some(z) }, a)
                    } else {
                        (LayerCache::Conv { input, pre: None }, z)
                    }
                }
                LayerState::HexPool => {
                    let dims = act.dims();
                    let (z, argmax) = hmaxpool_forward(&act)?;
                    (LayerCache::HexPool { dims, argmax }, z)
                }
                LayerState::SquarePool { size, stride } => {
                    let dims = act.dims();
                    let (z, argmax) = smaxpool_forward(&act, *size, *stride)?;
                    (LayerCache::SquarePool { dims, argmax }, z)
                }
                LayerState::Dropout { rate } => {
                    let (z, mask) = dropout_forward(&act, *rate, rng)?;
                    (LayerCache::Dropout { mask: Some(mask) }, z)
                }
                LayerState::Flatten => {
                    let dims = act.dims();
                    let z = act.flattened();
                    (LayerCache::Flatten { dims }, z)
                }
                LayerState::Dense { relu, params } => {
                    let z = dense_forward(&act, params)?;
                    let input = std::mem::replace(&mut act, Tensor4::zeros(1, 1, 1, 1));
                    if *relu {
                        let a = relu_forward(&z);
                        (LayerCache::Dense { input, pre: Some(z) }, a)
                    } else {
                        (LayerCache::Dense { input, pre: None }, z)
                    }
                }
            };
            caches.push(cache);
            act = next;
        }
        Ok((caches, act))
    }

    fn backward(&self, caches: &[LayerCache], grad_logits: Tensor4) -> Result<Vec<LayerGrad>> {
        let mut grad = grad_logits;
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        for (state, cache) in self.layers.iter().zip(caches).rev() {
            let layer_grad = match (state, cache) {
                (
                    LayerState::HexConv { stride, relu, kernel },
                    LayerCache::Conv { input, pre },
                ) => {
                    if *relu {
                        grad = relu_backward(pre.as_ref().expect("cached with relu"), &grad)?;
                    }
                    let (gx, g) = hconv2d_backward(input, kernel, *stride, &grad)?;
                    grad = gx;
                    LayerGrad::Pair { weights: g.taps, bias: g.bias }
                }
                (
                    LayerState::SquareConv { stride, relu, kernel },
                    LayerCache::Conv { input, pre },
                ) => {
                    if *relu {
                        grad = relu_backward(pre.as_ref().expect("cached with relu"), &grad)?;
                    }
                    let (gx, g) = sconv2d_backward(input, kernel, *stride, &grad)?;
                    grad = gx;
                    LayerGrad::Pair { weights: g.weights, bias: g.bias }
                }
                (LayerState::HexPool, LayerCache::HexPool { dims, argmax }) => {
                    grad = hmaxpool_backward(*dims, argmax, &grad)?;
                    LayerGrad::None
                }
                (
                    LayerState::SquarePool { size, stride },
                    LayerCache::SquarePool { dims, argmax },
                ) => {
                    grad = smaxpool_backward(*dims, *size, *stride, argmax, &grad)?;
                    LayerGrad::None
                }
                (LayerState::Dropout { .. }, LayerCache::Dropout { mask }) => {
                    if let Some(mask) = mask {
                        grad = dropout_backward(mask, &grad)?;
                    }
                    LayerGrad::None
                }
                (LayerState::Flatten, LayerCache::Flatten { dims }) => {
                    let (b, r, c, ch) = *dims;
                    grad = Tensor4::from_data(b, r, c, ch, grad.into_data())?;
                    LayerGrad::None
                }
                (LayerState::Dense { relu, params }, LayerCache::Dense { input, pre }) => {
                    if *relu {
                        grad = relu_backward(pre.as_ref().expect("cached with relu"), &grad)?;
                    }
                    let (gx, g) = dense_backward(input, params, &grad)?;
                    grad = gx;
                    LayerGrad::Pair { weights: g.weights, bias: g.bias }
                }
                _ => {
                    return Err(Error::invalid_argument(
                        "layer cache does not match the model it was recorded from",
                    ))
                }
            };
            grads.push(layer_grad);
        }
        grads.reverse();
        Ok(grads)
    }

    fn apply_grads(
        &mut self,
        grads: &[LayerGrad],
        opt: &mut ModelOptState,
        cfg: &AdamConfig,
    ) -> Result<()> {
        if grads.len() != self.layers.len() || opt.layers.len() != self.layers.len() {
            return Err(Error::shape_mismatch(
                "gradient or optimizer state does not match the model".to_string(),
            ));
        }
        for ((state, grad), slot) in self.layers.iter_mut().zip(grads).zip(&mut opt.layers) {
            let LayerGrad::Pair { weights, bias } = grad else {
                continue;
            };
            let (ws, bs) = slot
                .as_mut()
                .ok_or_else(|| Error::shape_mismatch("optimizer state missing".to_string()))?;
            match state {
                LayerState::HexConv { kernel, .. } => {
                    adam_step(kernel.taps_mut(), weights, ws, cfg)?;
                    adam_step(kernel.bias_mut(), bias, bs, cfg)?;
                }
                LayerState::SquareConv { kernel, .. } => {
                    adam_step(kernel.weights_mut(), weights, ws, cfg)?;
                    adam_step(kernel.bias_mut(), bias, bs, cfg)?;
                }
                LayerState::Dense { params, .. } => {
                    adam_step(params.weights_mut(), weights, ws, cfg)?;
                    adam_step(params.bias_mut(), bias, bs, cfg)?;
                }
                _ => {
                    return Err(Error::shape_mismatch(
                        "gradient present for a parameterless layer".to_string(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// One optimization step on a batch: forward, loss, backward, update.
    /// Returns the mean batch loss and the batch predictions.
    pub fn train_step(
        &mut self,
        x: &Tensor4,
        labels: &[usize],
        opt: &mut ModelOptState,
        cfg: &AdamConfig,
        rng: &mut impl Rng,
    ) -> Result<(f64, Vec<usize>)> {
        let (caches, logits) = self.forward_train(x, rng)?;
        let (loss, grad_logits, predictions) =
            crate::hexnn::layers::softmax_cross_entropy(&logits, labels)?;
        let grads = self.backward(&caches, grad_logits)?;
        self.apply_grads(&grads, opt, cfg)?;
        Ok((loss, predictions))
    }

    /// Named parameter tensors in layer order, as `(name, dims, values)`.
    /// Hexagonal taps are `[7, c_in, c_out]`, square kernels
    /// `[3, 3, c_in, c_out]`, dense weights `[n_in, n_out]`, biases `[n]`.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (spec, state) in self.spec.layers().iter().zip(&self.layers) {
            match state {
                LayerState::HexConv { kernel, .. } => {
                    out.push((
                        format!("{}.taps", spec.name),
                        vec![7, kernel.c_in(), kernel.c_out()],
                        kernel.taps(),
                    ));
                    out.push((
                        format!("{}.bias", spec.name),
                        vec![kernel.c_out()],
                        kernel.bias(),
                    ));
                }
                LayerState::SquareConv { kernel, .. } => {
                    out.push((
                        format!("{}.weights", spec.name),
                        vec![kernel.size(), kernel.size(), kernel.c_in(), kernel.c_out()],
                        kernel.weights(),
                    ));
                    out.push((
                        format!("{}.bias", spec.name),
                        vec![kernel.c_out()],
                        kernel.bias(),
                    ));
                }
                LayerState::Dense { params, .. } => {
                    out.push((
                        format!("{}.weights", spec.name),
                        vec![params.n_in(), params.n_out()],
                        params.weights(),
                    ));
                    out.push((
                        format!("{}.bias", spec.name),
                        vec![params.n_out()],
                        params.bias(),
                    ));
                }
                _ => {}
            }
        }
        out
    }

    /// Mutable view of the named tensors, same order and dims as
    /// [`Model::named_tensors`].
    pub fn named_tensors_mut(&mut self) -> Vec<(String, Vec<usize>, &mut [f64])> {
        let mut out: Vec<(String, Vec<usize>, &mut [f64])> = Vec::new();
        for (spec, state) in self.spec.layers().iter().zip(&mut self.layers) {
            match state {
                LayerState::HexConv { kernel, .. } => {
                    let c_in = kernel.c_in();
                    let c_out = kernel.c_out();
                    let (taps, bias) = kernel.parts_mut();
                    out.push((format!("{}.taps", spec.name), vec![7, c_in, c_out], taps));
                    out.push((format!("{}.bias", spec.name), vec![c_out], bias));
                }
                LayerState::SquareConv { kernel, .. } => {
                    let size = kernel.size();
                    let c_in = kernel.c_in();
                    let c_out = kernel.c_out();
                    let (weights, bias) = kernel.parts_mut();
                    out.push((
                        format!("{}.weights", spec.name),
                        vec![size, size, c_in, c_out],
                        weights,
                    ));
                    out.push((format!("{}.bias", spec.name), vec![c_out], bias));
                }
                LayerState::Dense { params, .. } => {
                    let n_in = params.n_in();
                    let n_out = params.n_out();
                    let (weights, bias) = params.parts_mut();
                    out.push((format!("{}.weights", spec.name), vec![n_in, n_out], weights));
                    out.push((format!("{}.bias", spec.name), vec![n_out], bias));
                }
                _ => {}
            }
        }
        out
    }
}
