//! Convolution kernels: the shared-weight hexagonal pair and the square
//! reference convolution.

use crate::error::{Error, Result};
use crate::hexnn::tensor::Tensor4;

/// Row parity of a pseudohexagonal raster: even rows are unshifted, odd rows
/// are shifted right by half a pitch, so the two parities see mirrored
/// neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_row(row: usize) -> Parity {
        if row.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// The seven (row, col) offsets a hexagonal kernel reads for this parity:
    /// the center first, then the six neighbors counterclockwise starting
    /// from due east. Matches `hexgrid::neighbors` ordering.
    pub fn tap_offsets(self) -> &'static [(i64, i64); 7] {
        match self {
            Parity::Even => &EVEN_TAP_OFFSETS,
            Parity::Odd => &ODD_TAP_OFFSETS,
        }
    }

    /// The 3x3 footprint mask for this parity, indexed `[dr + 1][dc + 1]`.
    /// Exactly seven of the nine entries are set.
    pub fn mask(self) -> [[bool; 3]; 3] {
        let mut m = [[false; 3]; 3];
        for &(dr, dc) in self.tap_offsets() {
            m[(dr + 1) as usize][(dc + 1) as usize] = true;
        }
        m
    }
}

pub const EVEN_TAP_OFFSETS: [(i64, i64); 7] =
    [(0, 0), (0, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0)];

pub const ODD_TAP_OFFSETS: [(i64, i64); 7] =
    [(0, 0), (0, 1), (1, 1), (1, 0), (0, -1), (-1, 0), (-1, 1)];

/// Weights for a hexagonal convolution. Both row parities share the same
/// seven taps; only the 3x3 placement of those taps differs between even and
/// odd rows. Parameter count is therefore `7 * c_in * c_out + c_out`.
///
/// Tap storage is tap-major: `taps[(t * c_in + ci) * c_out + co]`, with tap
/// order matching [`Parity::tap_offsets`].
#[derive(Debug, Clone, PartialEq)]
pub struct HexKernelPair {
    c_in: usize,
    c_out: usize,
    taps: Vec<f64>,
    bias: Vec<f64>,
}

impl HexKernelPair {
    pub fn new(c_in: usize, c_out: usize) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(Error::invalid_argument("kernel channel counts must be positive"));
        }
        Ok(HexKernelPair {
            c_in,
            c_out,
            taps: vec![0.0; 7 * c_in * c_out],
            bias: vec![0.0; c_out],
        })
    }

    pub fn from_parts(c_in: usize, c_out: usize, taps: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let mut k = HexKernelPair::new(c_in, c_out)?;
        if taps.len() != k.taps.len() {
            return Err(Error::shape_mismatch(format!(
                "expected {} taps, got {}",
                k.taps.len(),
                taps.len()
            )));
        }
        if bias.len() != c_out {
            return Err(Error::shape_mismatch(format!(
                "expected {} bias values, got {}",
                c_out,
                bias.len()
            )));
        }
        k.taps = taps;
        k.bias = bias;
        Ok(k)
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn taps_mut(&mut self) -> &mut [f64] {
        &mut self.taps
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    #[inline]
    pub fn tap(&self, t: usize, ci: usize, co: usize) -> f64 {
        self.taps[(t * self.c_in + ci) * self.c_out + co]
    }

    /// Disjoint mutable views of the taps and the bias.
    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.taps, &mut self.bias)
    }

    pub fn param_count(&self) -> usize {
        self.taps.len() + self.bias.len()
    }

    /// Materializes the 3x3 weight matrix one row parity sees, laid out
    /// `[((ky * 3 + kx) * c_in + ci) * c_out + co]`. Off-mask positions are
    /// exactly zero: the pair stores no weight there, so the zeros are
    /// structural and survive any amount of training.
    pub fn parity_weights(&self, parity: Parity) -> Vec<f64> {
        let mut w = vec![0.0; 9 * self.c_in * self.c_out];
        for (t, &(dr, dc)) in parity.tap_offsets().iter().enumerate() {
            let cell = ((dr + 1) * 3 + (dc + 1)) as usize;
            let dst = cell * self.c_in * self.c_out;
            let src = t * self.c_in * self.c_out;
            w[dst..dst + self.c_in * self.c_out]
                .copy_from_slice(&self.taps[src..src + self.c_in * self.c_out]);
        }
        w
    }
}

/// Gradients matching a [`HexKernelPair`]'s storage layout.
#[derive(Debug, Clone, PartialEq)]
pub struct HexKernelGrad {
    pub taps: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Output dimensions of [`hconv2d_forward`]. Stride 1 preserves the raster.
/// Stride 2 keeps every second row and column and appends one final row
/// center past the last even row when the row count is even, giving
/// `rows / 2 + 1` rows and `cols / 2` columns.
pub fn hconv2d_output_dims(rows: usize, cols: usize, stride: usize) -> Result<(usize, usize)> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid_argument("convolution input has no cells"));
    }
    match stride {
        1 => Ok((rows, cols)),
        2 => {
            let rows_out = rows / 2 + 1;
            let cols_out = cols / 2;
            if cols_out == 0 {
                return Err(Error::invalid_argument(
                    "input is too narrow for a stride-2 hexagonal convolution",
                ));
            }
            Ok((rows_out, cols_out))
        }
        s => Err(Error::invalid_argument(format!(
            "hexagonal convolution stride must be 1 or 2, got {s}"
        ))),
    }
}

/// Hexagonal convolution with zero padding outside the raster. Each output
/// cell `(i, j)` reads the seven-tap neighborhood around input cell
/// `(stride * i, stride * j)`, using the tap placement for the parity of the
/// *output* row `i`.
pub fn hconv2d_forward(x: &Tensor4, kernel: &HexKernelPair, stride: usize) -> Result<Tensor4> {
    let (batch, rows, cols, c_in) = x.dims();
    if c_in != kernel.c_in() {
        return Err(Error::shape_mismatch(format!(
            "input has {c_in} channels but the kernel expects {}",
            kernel.c_in()
        )));
    }
    let (rows_out, cols_out) = hconv2d_output_dims(rows, cols, stride)?;
    let c_out = kernel.c_out();
    let mut out = Tensor4::zeros(batch, rows_out, cols_out, c_out);
    let xd = x.data();
    let taps = kernel.taps();
    let od = out.data_mut();
    for b in 0..batch {
        for i in 0..rows_out {
            let offsets = Parity::of_row(i).tap_offsets();
            let center_r = (stride * i) as i64;
            for j in 0..cols_out {
                let center_c = (stride * j) as i64;
                let out_base = ((b * rows_out + i) * cols_out + j) * c_out;
                od[out_base..out_base + c_out].copy_from_slice(kernel.bias());
                for (t, &(dr, dc)) in offsets.iter().enumerate() {
                    let rr = center_r + dr;
                    let cc = center_c + dc;
                    if rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                        continue;
                    }
                    let x_base = ((b * rows + rr as usize) * cols + cc as usize) * c_in;
                    for ci in 0..c_in {
                        let xv = xd[x_base + ci];
                        let tap_base = (t * c_in + ci) * c_out;
                        let w = &taps[tap_base..tap_base + c_out];
                        let o = &mut od[out_base..out_base + c_out];
                        for (ov, &wv) in o.iter_mut().zip(w) {
                            *ov += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`hconv2d_forward`]: given the forward input and the
/// loss gradient at the output, produces the gradient at the input and the
/// tap/bias gradients. Because masked-off positions have no stored weight,
/// their gradient is structurally zero.
pub fn hconv2d_backward(
    x: &Tensor4,
    kernel: &HexKernelPair,
    stride: usize,
    grad_out: &Tensor4,
) -> Result<(Tensor4, HexKernelGrad)> {
    let (batch, rows, cols, c_in) = x.dims();
    if c_in != kernel.c_in() {
        return Err(Error::shape_mismatch(format!(
            "input has {c_in} channels but the kernel expects {}",
            kernel.c_in()
        )));
    }
    let (rows_out, cols_out) = hconv2d_output_dims(rows, cols, stride)?;
    let c_out = kernel.c_out();
    if grad_out.dims() != (batch, rows_out, cols_out, c_out) {
        return Err(Error::shape_mismatch(format!(
            "output gradient has dims {:?}, expected {:?}",
            grad_out.dims(),
            (batch, rows_out, cols_out, c_out)
        )));
    }
    let mut grad_x = Tensor4::zeros(batch, rows, cols, c_in);
    let mut grad = HexKernelGrad {
        taps: vec![0.0; kernel.taps().len()],
        bias: vec![0.0; c_out],
    };
    let xd = x.data();
    let gd = grad_out.data();
    let taps = kernel.taps();
    let gxd = grad_x.data_mut();
    for b in 0..batch {
        for i in 0..rows_out {
            let offsets = Parity::of_row(i).tap_offsets();
            let center_r = (stride * i) as i64;
            for j in 0..cols_out {
                let center_c = (stride * j) as i64;
                let out_base = ((b * rows_out + i) * cols_out + j) * c_out;
                let g = &gd[out_base..out_base + c_out];
                for (bias_g, &gv) in grad.bias.iter_mut().zip(g) {
                    *bias_g += gv;
                }
                for (t, &(dr, dc)) in offsets.iter().enumerate() {
                    let rr = center_r + dr;
                    let cc = center_c + dc;
                    if rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                        continue;
                    }
                    let x_base = ((b * rows + rr as usize) * cols + cc as usize) * c_in;
                    for ci in 0..c_in {
                        let xv = xd[x_base + ci];
                        let tap_base = (t * c_in + ci) * c_out;
                        let mut acc = 0.0;
                        for co in 0..c_out {
                            let gv = g[co];
                            acc += taps[tap_base + co] * gv;
                            grad.taps[tap_base + co] += xv * gv;
                        }
                        gxd[x_base + ci] += acc;
                    }
                }
            }
        }
    }
    Ok((grad_x, grad))
}

/// Weights for a square `size x size` convolution, stored
/// `[((ky * size + kx) * c_in + ci) * c_out + co]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareKernel {
    c_in: usize,
    c_out: usize,
    size: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl SquareKernel {
    pub fn new(size: usize, c_in: usize, c_out: usize) -> Result<Self> {
        if size == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::invalid_argument("kernel dimensions must be positive"));
        }
        Ok(SquareKernel {
            c_in,
            c_out,
            size,
            weights: vec![0.0; size * size * c_in * c_out],
            bias: vec![0.0; c_out],
        })
    }

    pub fn from_parts(
        size: usize,
        c_in: usize,
        c_out: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let mut k = SquareKernel::new(size, c_in, c_out)?;
        if weights.len() != k.weights.len() {
            return Err(Error::shape_mismatch(format!(
                "expected {} weights, got {}",
                k.weights.len(),
                weights.len()
            )));
        }
        if bias.len() != c_out {
            return Err(Error::shape_mismatch(format!(
                "expected {} bias values, got {}",
                c_out,
                bias.len()
            )));
        }
        k.weights = weights;
        k.bias = bias;
        Ok(k)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
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
pub struct SquareKernelGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Output length of one axis under same-padding: `ceil(len / stride)`.
pub fn same_padding_output(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Leading zero-padding on one axis for same-padding: total padding is
/// `max((out - 1) * stride + size - len, 0)`, split with the smaller half
/// leading.
fn same_padding_before(len: usize, size: usize, stride: usize) -> usize {
    let out = same_padding_output(len, stride);
    let span = (out - 1) * stride + size;
    span.saturating_sub(len) / 2
}

/// Square convolution with same-padding: output is `ceil(in / stride)` per
/// axis, padded positions read as zero.
pub fn sconv2d_forward(x: &Tensor4, kernel: &SquareKernel, stride: usize) -> Result<Tensor4> {
    let (batch, rows, cols, c_in) = x.dims();
    if c_in != kernel.c_in() {
        return Err(Error::shape_mismatch(format!(
            "input has {c_in} channels but the kernel expects {}",
            kernel.c_in()
        )));
    }
    if stride == 0 {
        return Err(Error::invalid_argument("convolution stride must be positive"));
    }
    let size = kernel.size();
    let rows_out = same_padding_output(rows, stride);
    let cols_out = same_padding_output(cols, stride);
    let pad_top = same_padding_before(rows, size, stride);
    let pad_left = same_padding_before(cols, size, stride);
    let c_out = kernel.c_out();
    let mut out = Tensor4::zeros(batch, rows_out, cols_out, c_out);
    let xd = x.data();
    let wd = kernel.weights();
    let od = out.data_mut();
    for b in 0..batch {
        for i in 0..rows_out {
            for j in 0..cols_out {
                let out_base = ((b * rows_out + i) * cols_out + j) * c_out;
                od[out_base..out_base + c_out].copy_from_slice(kernel.bias());
                for ky in 0..size {
                    let rr = (i * stride + ky) as i64 - pad_top as i64;
                    if rr < 0 || rr >= rows as i64 {
                        continue;
                    }
                    for kx in 0..size {
                        let cc = (j * stride + kx) as i64 - pad_left as i64;
                        if cc < 0 || cc >= cols as i64 {
                            continue;
                        }
                        let x_base = ((b * rows + rr as usize) * cols + cc as usize) * c_in;
                        for ci in 0..c_in {
                            let xv = xd[x_base + ci];
                            let w_base = ((ky * size + kx) * c_in + ci) * c_out;
                            let w = &wd[w_base..w_base + c_out];
                            let o = &mut od[out_base..out_base + c_out];
                            for (ov, &wv) in o.iter_mut().zip(w) {
                                *ov += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`sconv2d_forward`].
pub fn sconv2d_backward(
    x: &Tensor4,
    kernel: &SquareKernel,
    stride: usize,
    grad_out: &Tensor4,
) -> Result<(Tensor4, SquareKernelGrad)> {
    let (batch, rows, cols, c_in) = x.dims();
    if c_in != kernel.c_in() {
        return Err(Error::shape_mismatch(format!(
            "input has {c_in} channels but the kernel expects {}",
            kernel.c_in()
        )));
    }
    if stride == 0 {
        return Err(Error::invalid_argument("convolution stride must be positive"));
    }
    let size = kernel.size();
    let rows_out = same_padding_output(rows, stride);
    let cols_out = same_padding_output(cols, stride);
    let pad_top = same_padding_before(rows, size, stride);
    let pad_left = same_padding_before(cols, size, stride);
    let c_out = kernel.c_out();
    if grad_out.dims() != (batch, rows_out, cols_out, c_out) {
        return Err(Error::shape_mismatch(format!(
            "output gradient has dims {:?}, expected {:?}",
            grad_out.dims(),
            (batch, rows_out, cols_out, c_out)
        )));
    }
    let mut grad_x = Tensor4::zeros(batch, rows, cols, c_in);
    let mut grad = SquareKernelGrad {
        weights: vec![0.0; kernel.weights().len()],
        bias: vec![0.0; c_out],
    };
    let xd = x.data();
    let gd = grad_out.data();
    let wd = kernel.weights();
    let gxd = grad_x.data_mut();
    for b in 0..batch {
        for i in 0..rows_out {
            for j in 0..cols_out {
                let out_base = ((b * rows_out + i) * cols_out + j) * c_out;
                let g = &gd[out_base..out_base + c_out];
                for (bias_g, &gv) in grad.bias.iter_mut().zip(g) {
                    *bias_g += gv;
                }
                for ky in 0..size {
                    let rr = (i * stride + ky) as i64 - pad_top as i64;
                    if rr < 0 || rr >= rows as i64 {
                        continue;
                    }
                    for kx in 0..size {
                        let cc = (j * stride + kx) as i64 - pad_left as i64;
                        if cc < 0 || cc >= cols as i64 {
                            continue;
                        }
                        let x_base = ((b * rows + rr as usize) * cols + cc as usize) * c_in;
                        for ci in 0..c_in {
                            let xv = xd[x_base + ci];
                            let w_base = ((ky * size + kx) * c_in + ci) * c_out;
                            let mut acc = 0.0;
                            for co in 0..c_out {
                                let gv = g[co];
                                acc += wd[w_base + co] * gv;
                                grad.weights[w_base + co] += xv * gv;
                            }
                            gxd[x_base + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok((grad_x, grad))
}
