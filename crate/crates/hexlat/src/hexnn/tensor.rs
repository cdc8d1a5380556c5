//! Dense batch-major tensors for the network kernels.

use crate::error::{Error, Result};

/// A dense rank-4 tensor laid out batch-major: `(batch, rows, cols, channels)`
/// with channels contiguous. All network ops consume and produce this shape;
/// flat vectors are represented as `(batch, 1, 1, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    batch: usize,
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(batch: usize, rows: usize, cols: usize, channels: usize) -> Self {
        debug_assert!(batch > 0 && rows > 0 && cols > 0 && channels > 0);
        Tensor4 {
            batch,
            rows,
            cols,
            channels,
            data: vec![0.0; batch * rows * cols * channels],
        }
    }

    pub fn from_data(
        batch: usize,
        rows: usize,
        cols: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if batch == 0 || rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::invalid_argument("tensor dimensions must be positive"));
        }
        let expected = batch * rows * cols * channels;
        if data.len() != expected {
            return Err(Error::shape_mismatch(format!(
                "tensor data has {} values, expected {expected} for ({batch}, {rows}, {cols}, {channels})",
                data.len()
            )));
        }
        Ok(Tensor4 { batch, rows, cols, channels, data })
    }

    pub fn from_fn(
        batch: usize,
        rows: usize,
        cols: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Tensor4::zeros(batch, rows, cols, channels);
        for b in 0..batch {
            for r in 0..rows {
                for c in 0..cols {
                    for ch in 0..channels {
                        let i = t.index(b, r, c, ch);
                        t.data[i] = f(b, r, c, ch);
                    }
                }
            }
        }
        t
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.batch, self.rows, self.cols, self.channels)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, b: usize, r: usize, c: usize, ch: usize) -> usize {
        ((b * self.rows + r) * self.cols + c) * self.channels + ch
    }

    #[inline]
    pub fn at(&self, b: usize, r: usize, c: usize, ch: usize) -> f64 {
        self.data[self.index(b, r, c, ch)]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, r: usize, c: usize, ch: usize) -> &mut f64 {
        let i = self.index(b, r, c, ch);
        &mut self.data[i]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterprets the spatial dimensions as one flat feature axis,
    /// preserving the batch axis and the element order.
    pub fn flattened(&self) -> Tensor4 {
        Tensor4 {
            batch: self.batch,
            rows: 1,
            cols: 1,
            channels: self.rows * self.cols * self.channels,
            data: self.data.clone(),
        }
    }
}
