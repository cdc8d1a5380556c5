//! Dense, activation, dropout, and loss primitives plus the optimizer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hexnn::tensor::Tensor4;

/// Fully connected layer weights: `weights[ci * n_out + co]`, bias `[n_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseParams {
    pub fn new(n_in: usize, n_out: usize) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::invalid_argument("dense layer sizes must be positive"));
        }
        Ok(DenseParams {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Disjoint mutable views of the weights and the bias.
    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Fully connected forward pass on flat activations `(batch, 1, 1, n_in)`.
pub fn dense_forward(x: &Tensor4, params: &DenseParams) -> Result<Tensor4> {
    let (batch, rows, cols, n_in) = x.dims();
    if rows != 1 || cols != 1 || n_in != params.n_in() {
        return Err(Error::shape_mismatch(format!(
            "dense layer expects (batch, 1, 1, {}), got {:?}",
            params.n_in(),
            x.dims()
        )));
    }
    let n_out = params.n_out();
    let mut out = Tensor4::zeros(batch, 1, 1, n_out);
    let xd = x.data();
    let od = out.data_mut();
    for b in 0..batch {
        let o = &mut od[b * n_out..(b + 1) * n_out];
        o.copy_from_slice(params.bias());
        for ci in 0..n_in {
            let xv = xd[b * n_in + ci];
            let w = &params.weights()[ci * n_out..(ci + 1) * n_out];
            for (ov, &wv) in o.iter_mut().zip(w) {
                *ov += xv * wv;
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`dense_forward`].
pub fn dense_backward(
    x: &Tensor4,
    params: &DenseParams,
    grad_out: &Tensor4,
) -> Result<(Tensor4, DenseGrad)> {
    let (batch, rows, cols, n_in) = x.dims();
    if rows != 1 || cols != 1 || n_in != params.n_in() {
        return Err(Error::shape_mismatch(format!(
            "dense layer expects (batch, 1, 1, {}), got {:?}",
            params.n_in(),
            x.dims()
        )));
    }
    let n_out = params.n_out();
    if grad_out.dims() != (batch, 1, 1, n_out) {
        return Err(Error::shape_mismatch(format!(
            "output gradient has dims {:?}, expected {:?}",
            grad_out.dims(),
            (batch, 1, 1, n_out)
        )));
    }
    let mut grad_x = Tensor4::zeros(batch, 1, 1, n_in);
    let mut grad = DenseGrad {
        weights: vec![0.0; params.weights().len()],
        bias: vec![0.0; n_out],
    };
    let xd = x.data();
    let gd = grad_out.data();
    let wd = params.weights();
    let gxd = grad_x.data_mut();
    for b in 0..batch {
        let g = &gd[b * n_out..(b + 1) * n_out];
        for (bias_g, &gv) in grad.bias.iter_mut().zip(g) {
            *bias_g += gv;
        }
        for ci in 0..n_in {
            let xv = xd[b * n_in + ci];
            let w = &wd[ci * n_out..(ci + 1) * n_out];
            let gw = &mut grad.weights[ci * n_out..(ci + 1) * n_out];
            let mut acc = 0.0;
            for co in 0..n_out {
                let gv = g[co];
                acc += w[co] * gv;
                gw[co] += xv * gv;
            }
            gxd[b * n_in + ci] += acc;
        }
    }
    Ok((grad_x, grad))
}

/// Elementwise rectifier.
pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gradient of the rectifier given the pre-activation values. The
/// subgradient at exactly zero is taken as zero.
pub fn relu_backward(pre: &Tensor4, grad_out: &Tensor4) -> Result<Tensor4> {
    if pre.dims() != grad_out.dims() {
        return Err(Error::shape_mismatch(format!(
            "rectifier gradient dims {:?} do not match activations {:?}",
            grad_out.dims(),
            pre.dims()
        )));
    }
    let mut grad = grad_out.clone();
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(grad)
}

/// Inverted dropout: each element is zeroed with probability `rate` and the
/// survivors are scaled by `1 / (1 - rate)`, so the expected activation is
/// unchanged and inference needs no rescaling. Returns the dropped tensor
/// and the applied mask. A rate of zero consumes no randomness.
pub fn dropout_forward(
    x: &Tensor4,
    rate: f64,
    rng: &mut impl Rng,
) -> Result<(Tensor4, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid_argument(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok((x.clone(), vec![1.0; x.len()]));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
        .collect();
    let mut out = x.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, mask))
}

/// Backward pass of [`dropout_forward`]: the same mask scales the gradient.
pub fn dropout_backward(mask: &[f64], grad_out: &Tensor4) -> Result<Tensor4> {
    if mask.len() != grad_out.len() {
        return Err(Error::shape_mismatch(format!(
            "dropout mask has {} entries but the gradient has {}",
            mask.len(),
            grad_out.len()
        )));
    }
    let mut grad = grad_out.clone();
    for (g, &m) in grad.data_mut().iter_mut().zip(mask) {
        *g *= m;
    }
    Ok(grad)
}

/// Softmax cross-entropy over logits `(batch, 1, 1, classes)`.
///
/// Returns the mean loss, the loss gradient at the logits (already divided
/// by the batch size), and the per-sample argmax predictions.
pub fn softmax_cross_entropy(
    logits: &Tensor4,
    labels: &[usize],
) -> Result<(f64, Tensor4, Vec<usize>)> {
    let (batch, rows, cols, classes) = logits.dims();
    if rows != 1 || cols != 1 {
        return Err(Error::shape_mismatch(format!(
            "loss expects flat logits (batch, 1, 1, classes), got {:?}",
            logits.dims()
        )));
    }
    if labels.len() != batch {
        return Err(Error::shape_mismatch(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid_argument(format!(
            "label {bad} is out of range for {classes} classes"
        )));
    }
    let ld = logits.data();
    let mut grad = Tensor4::zeros(batch, 1, 1, classes);
    let mut predictions = Vec::with_capacity(batch);
    let mut loss = 0.0;
    let inv_batch = 1.0 / batch as f64;
    let gd = grad.data_mut();
    for b in 0..batch {
        let row = &ld[b * classes..(b + 1) * classes];
        let mut best = 0usize;
        let mut max = f64::NEG_INFINITY;
        for (c, &v) in row.iter().enumerate() {
            if v > max {
                max = v;
                best = c;
            }
        }
        predictions.push(best);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        let label = labels[b];
        // log p = (v - max) - ln denom, computed without forming p first.
        loss -= (row[label] - max) - denom.ln();
        let g = &mut gd[b * classes..(b + 1) * classes];
        for (c, &v) in row.iter().enumerate() {
            let p = (v - max).exp() / denom;
            g[c] = (p - if c == label { 1.0 } else { 0.0 }) * inv_batch;
        }
    }
    Ok((loss * inv_batch, grad, predictions))
}

/// Uniform Glorot initialization: samples `len` values from
/// `[-sqrt(6 / (fan_in + fan_out)), sqrt(6 / (fan_in + fan_out)))`.
pub fn glorot_init(fan_in: usize, fan_out: usize, len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

/// Adam hyperparameters. Defaults: learning rate `1e-3`, decay rates `0.9`
/// and `0.999`, epsilon `1e-8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&self) -> u32 {
        self.step
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape_mismatch(format!(
            "optimizer saw {} parameters, {} gradients, and state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let correction1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let correction2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / correction1;
        let v_hat = state.v[i] / correction2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}
