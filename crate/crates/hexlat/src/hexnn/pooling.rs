//! Max pooling on hexagonal and square rasters.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::hexgrid::{spiral_to_axial, axial_to_linewise, HexGridSpec, SpiralAddress};
use crate::hexnn::assignment::assignment_solve;
use crate::hexnn::kernels::{same_padding_output, Parity};
use crate::hexnn::tensor::Tensor4;

/// How the seven window offsets of hexagonal pooling were derived: the ideal
/// targets are the seven scaled cluster centers of the next aggregation
/// level, and the candidates are the seven in-mask offsets of a 3x3 window.
/// A minimum-cost assignment on squared center distances pairs them up.
#[derive(Debug, Clone)]
pub struct PoolingAssignment {
    /// Cartesian positions (pitch units, relative to the window center) of
    /// the seven scaled cluster centers, in digit order.
    pub ideal: Vec<(f64, f64)>,
    /// The seven in-mask (row, col) window offsets, in 3x3 scan order.
    pub candidates: Vec<(i64, i64)>,
    /// Cartesian positions of the candidates, same order and units.
    pub candidate_positions: Vec<(f64, f64)>,
    /// `assignment[d]` is the candidate index chosen for digit `d`.
    pub assignment: Vec<usize>,
    /// Total squared-distance cost of the assignment.
    pub cost: f64,
}

/// Builds the offset assignment for windows centered on a row of the given
/// parity. Geometry is evaluated on a 9x9 unit-pitch grid so that all center
/// differences are exact lattice positions.
pub fn pooling_assignment(parity: Parity) -> PoolingAssignment {
    let spec = HexGridSpec::new(9, 9, 1.0).expect("static grid parameters are valid");
    let anchor_row = spec.rows() / 2; // row 4: even, so digit geometry is exact
    let anchor_col = spec.cols() / 2;
    let origin = spec
        .center_position(anchor_row, anchor_col)
        .expect("anchor lies inside the grid");

    // Scaled cluster centers: digit d followed by a zero selects the center
    // of the d-th first-order cluster in a second-order neighborhood.
    let ideal: Vec<(f64, f64)> = (0..7u8)
        .map(|d| {
            let addr = SpiralAddress::new(vec![d, 0]).expect("digits below seven");
            let axial = spiral_to_axial(&addr);
            let (row, col) =
                axial_to_linewise(axial, &spec).expect("9x9 grid covers the order-2 cluster");
            let p = spec.center_position(row, col).expect("mapped cell is in bounds");
            (p.0 - origin.0, p.1 - origin.1)
        })
        .collect();

    let base_row = match parity {
        Parity::Even => anchor_row as i64,
        Parity::Odd => anchor_row as i64 + 1,
    };
    let base = spec.center_unchecked(base_row, anchor_col as i64);
    let mask = parity.mask();
    let mut candidates = Vec::with_capacity(7);
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if mask[(dr + 1) as usize][(dc + 1) as usize] {
                candidates.push((dr, dc));
            }
        }
    }
    let candidate_positions: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&(dr, dc)| {
            let p = spec.center_unchecked(base_row + dr, anchor_col as i64 + dc);
            (p.0 - base.0, p.1 - base.1)
        })
        .collect();

    let cost: Vec<Vec<f64>> = ideal
        .iter()
        .map(|&(ix, iy)| {
            candidate_positions
                .iter()
                .map(|&(cx, cy)| (ix - cx).powi(2) + (iy - cy).powi(2))
                .collect()
        })
        .collect();
    let (assignment, total) = assignment_solve(&cost).expect("7x7 finite cost matrix");
    PoolingAssignment {
        ideal,
        candidates,
        candidate_positions,
        assignment,
        cost: total,
    }
}

/// The seven (row, col) offsets a hexagonal pooling window reads, for
/// windows centered on a row of the given parity. Digit-ordered: center
/// first, then counterclockwise from east. Computed once per parity from
/// [`pooling_assignment`] and cached.
pub fn pool_offsets(parity: Parity) -> [(i64, i64); 7] {
    static CACHE: OnceLock<[[(i64, i64); 7]; 2]> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        let build = |p: Parity| {
            let a = pooling_assignment(p);
            let mut out = [(0i64, 0i64); 7];
            for (digit, &cand) in a.assignment.iter().enumerate() {
                out[digit] = a.candidates[cand];
            }
            out
        };
        [build(Parity::Even), build(Parity::Odd)]
    });
    match parity {
        Parity::Even => cache[0],
        Parity::Odd => cache[1],
    }
}

/// Output dimensions of hexagonal max pooling: `ceil((rows - 2) / 2)` rows
/// and `ceil(cols / 3)` columns. Inputs need at least three rows and columns
/// so that one full window fits.
pub fn hmaxpool_output_dims(rows: usize, cols: usize) -> Result<(usize, usize)> {
    if rows < 3 || cols < 3 {
        return Err(Error::invalid_argument(format!(
            "hexagonal pooling needs at least a 3x3 input, got {rows}x{cols}"
        )));
    }
    Ok(((rows - 1) / 2, cols.div_ceil(3)))
}

/// Window center rows: spread evenly over `[1, rows - 2]` with half-up
/// rounding, so the first and last windows hug the raster edges.
fn hpool_row_centers(rows: usize, rows_out: usize) -> Vec<usize> {
    if rows_out == 1 {
        return vec![1 + (rows - 3) / 2];
    }
    let den = rows_out - 1;
    (0..rows_out)
        .map(|i| {
            let num = i * (rows - 3);
            1 + (2 * num + den) / (2 * den)
        })
        .collect()
}

/// Hexagonal max pooling: each output cell takes the maximum over a
/// seven-cell window whose offsets come from [`pool_offsets`], keyed by the
/// parity of the window's center row. Window positions outside the raster
/// contribute the padding value zero, which participates in the maximum.
///
/// Returns the pooled tensor and, per output element, the flat input index
/// of the winning cell (`None` when the zero padding won). Ties go to the
/// first maximal cell in offset order.
pub fn hmaxpool_forward(x: &Tensor4) -> Result<(Tensor4, Vec<Option<usize>>)> {
    let (batch, rows, cols, ch) = x.dims();
    let (rows_out, cols_out) = hmaxpool_output_dims(rows, cols)?;
    let row_centers = hpool_row_centers(rows, rows_out);
    let mut out = Tensor4::zeros(batch, rows_out, cols_out, ch);
    let mut argmax = vec![None; out.len()];
    for b in 0..batch {
        for (i, &cr) in row_centers.iter().enumerate() {
            let offsets = pool_offsets(Parity::of_row(cr));
            for j in 0..cols_out {
                let cc = (3 * j + 1) as i64;
                for c in 0..ch {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = None;
                    for &(dr, dc) in &offsets {
                        let rr = cr as i64 + dr;
                        let col = cc + dc;
                        let (v, idx) = if rr >= 0
                            && col >= 0
                            && rr < rows as i64
                            && col < cols as i64
                        {
                            let flat = x.index(b, rr as usize, col as usize, c);
                            (x.data()[flat], Some(flat))
                        } else {
                            (0.0, None)
                        };
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                    let o = out.index(b, i, j, c);
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Backward pass of [`hmaxpool_forward`]: routes each output gradient to the
/// input cell that won the maximum; gradients whose window was won by the
/// zero padding are dropped. `x_dims` and `argmax` must come from the
/// matching forward call.
pub fn hmaxpool_backward(
    x_dims: (usize, usize, usize, usize),
    argmax: &[Option<usize>],
    grad_out: &Tensor4,
) -> Result<Tensor4> {
    let (batch, rows, cols, ch) = x_dims;
    let (rows_out, cols_out) = hmaxpool_output_dims(rows, cols)?;
    if grad_out.dims() != (batch, rows_out, cols_out, ch) {
        return Err(Error::shape_mismatch(format!(
            "output gradient has dims {:?}, expected {:?}",
            grad_out.dims(),
            (batch, rows_out, cols_out, ch)
        )));
    }
    if argmax.len() != grad_out.len() {
        return Err(Error::shape_mismatch(format!(
            "argmax records {} entries but the output has {}",
            argmax.len(),
            grad_out.len()
        )));
    }
    let mut grad_x = Tensor4::zeros(batch, rows, cols, ch);
    let limit = grad_x.len();
    let gxd = grad_x.data_mut();
    for (slot, &g) in argmax.iter().zip(grad_out.data()) {
        if let Some(idx) = *slot {
            if idx >= limit {
                return Err(Error::shape_mismatch(
                    "argmax entry points outside the input tensor".to_string(),
                ));
            }
            gxd[idx] += g;
        }
    }
    Ok(grad_x)
}

/// Square max pooling with same-style coverage: output is
/// `ceil(in / stride)` per axis, windows start at `i * stride` and are
/// truncated at the raster edge, so no padding value ever participates.
/// Returns the pooled tensor and per-element winning flat input indices
/// (always present; ties go to the first maximal cell in scan order).
pub fn smaxpool_forward(
    x: &Tensor4,
    size: usize,
    stride: usize,
) -> Result<(Tensor4, Vec<usize>)> {
    let (batch, rows, cols, ch) = x.dims();
    if size == 0 || stride == 0 {
        return Err(Error::invalid_argument("pooling size and stride must be positive"));
    }
    let rows_out = same_padding_output(rows, stride);
    let cols_out = same_padding_output(cols, stride);
    let mut out = Tensor4::zeros(batch, rows_out, cols_out, ch);
    let mut argmax = vec![0usize; out.len()];
    for b in 0..batch {
        for i in 0..rows_out {
            let r0 = i * stride;
            let r1 = (r0 + size).min(rows);
            for j in 0..cols_out {
                let c0 = j * stride;
                let c1 = (c0 + size).min(cols);
                for c in 0..ch {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for rr in r0..r1 {
                        for col in c0..c1 {
                            let flat = x.index(b, rr, col, c);
                            let v = x.data()[flat];
                            if v > best {
                                best = v;
                                best_idx = flat;
                            }
                        }
                    }
                    let o = out.index(b, i, j, c);
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Backward pass of [`smaxpool_forward`].
pub fn smaxpool_backward(
    x_dims: (usize, usize, usize, usize),
    size: usize,
    stride: usize,
    argmax: &[usize],
    grad_out: &Tensor4,
) -> Result<Tensor4> {
    let (batch, rows, cols, ch) = x_dims;
    if size == 0 || stride == 0 {
        return Err(Error::invalid_argument("pooling size and stride must be positive"));
    }
    let rows_out = same_padding_output(rows, stride);
    let cols_out = same_padding_output(cols, stride);
    if grad_out.dims() != (batch, rows_out, cols_out, ch) {
        return Err(Error::shape_mismatch(format!(
            "output gradient has dims {:?}, expected {:?}",
            grad_out.dims(),
            (batch, rows_out, cols_out, ch)
        )));
    }
    if argmax.len() != grad_out.len() {
        return Err(Error::shape_mismatch(format!(
            "argmax records {} entries but the output has {}",
            argmax.len(),
            grad_out.len()
        )));
    }
    let mut grad_x = Tensor4::zeros(batch, rows, cols, ch);
    let limit = grad_x.len();
    let gxd = grad_x.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        if idx >= limit {
            return Err(Error::shape_mismatch(
                "argmax entry points outside the input tensor".to_string(),
            ));
        }
        gxd[idx] += g;
    }
    Ok(grad_x)
}
