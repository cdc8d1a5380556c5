//! Addressing and geometry for pseudohexagonal grids.
//!
//! Cells are stored on a rectangular row/column raster in which every odd row
//! is shifted right by half a pitch; cell centers then form a hexagonal
//! lattice of pointy-top hexagons with row spacing `pitch * sqrt(3) / 2`.
//! On top of that raster ("linewise") addressing this module provides axial /
//! cube coordinates, base-7 spiral addresses with their septree scaling map,
//! hexagonal blocks, and neighbor enumeration.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Axial coordinate on the hex lattice. The equivalent cube coordinate is
/// `(x, y, z) = (q, -q - r, r)`, so `x + y + z = 0` by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HexCoord {
    pub q: i64,
    pub r: i64,
}

impl HexCoord {
    pub const ORIGIN: HexCoord = HexCoord { q: 0, r: 0 };

    pub fn new(q: i64, r: i64) -> Self {
        HexCoord { q, r }
    }

    /// Cube form `(x, y, z)` with `x + y + z = 0`.
    pub fn cube(&self) -> (i64, i64, i64) {
        (self.q, -self.q - self.r, self.r)
    }

    /// Lattice position in pitch units: the q axis points along +x, the
    /// r axis 60 degrees away (toward increasing rows).
    pub fn to_cartesian(&self) -> (f64, f64) {
        (
            self.q as f64 + 0.5 * self.r as f64,
            self.r as f64 * SQRT_3 / 2.0,
        )
    }
}

/// Geometry of a pseudohexagonal grid: `rows x cols` pointy-top cells,
/// horizontal center distance `pitch`, odd rows shifted right by `pitch / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HexGridSpec {
    rows: usize,
    cols: usize,
    pitch: f64,
}

impl HexGridSpec {
    pub fn new(rows: usize, cols: usize, pitch: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid_argument(format!(
                "grid needs at least one row and one column, got {rows}x{cols}"
            )));
        }
        if !pitch.is_finite() || pitch <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "pitch must be positive and finite, got {pitch}"
            )));
        }
        Ok(HexGridSpec { rows, cols, pitch })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Center-to-vertex distance of one cell: `pitch / sqrt(3)`.
    pub fn circumradius(&self) -> f64 {
        self.pitch / SQRT_3
    }

    /// Vertical distance between consecutive row centerlines.
    pub fn row_step(&self) -> f64 {
        self.pitch * SQRT_3 / 2.0
    }

    /// Rightward displacement of `row` in pitch units (0.5 for odd rows).
    pub fn row_shift(row: i64) -> f64 {
        if row.rem_euclid(2) == 1 {
            0.5
        } else {
            0.0
        }
    }

    /// Center of cell `(row, col)` relative to the center of cell `(0, 0)`.
    /// No bounds check: usable for virtual cells outside the raster.
    pub fn center_unchecked(&self, row: i64, col: i64) -> (f64, f64) {
        (
            (col as f64 + Self::row_shift(row)) * self.pitch,
            row as f64 * self.row_step(),
        )
    }

    /// Center of an in-bounds cell; errors otherwise. Neighboring centers lie
    /// exactly `pitch` apart.
    pub fn center_position(&self, row: usize, col: usize) -> Result<(f64, f64)> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::invalid_argument(format!(
                "cell ({row}, {col}) out of bounds for a {}x{} grid",
                self.rows, self.cols
            )));
        }
        Ok(self.center_unchecked(row as i64, col as i64))
    }

    /// Lower-left corner of the bounding box that encloses every cell
    /// hexagon, relative to the center of cell `(0, 0)`.
    pub fn bbox_min(&self) -> (f64, f64) {
        (-self.pitch / 2.0, -self.circumradius())
    }

    /// Width of the bounding box enclosing every cell hexagon. Grids with at
    /// least two rows are half a pitch wider because of the shifted rows.
    pub fn bbox_width(&self) -> f64 {
        let shift = if self.rows >= 2 { 0.5 } else { 0.0 };
        (self.cols as f64 + shift) * self.pitch
    }

    pub fn bbox_height(&self) -> f64 {
        (self.rows as f64 - 1.0) * self.row_step() + 2.0 * self.circumradius()
    }
}

/// Base-7 spiral address, most significant digit first. Digit 0 keeps a cell
/// in place and digits 1-6 step through the six unit directions
/// counterclockwise from east; every extra digit level addresses a factor-7
/// larger cluster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpiralAddress {
    digits: Vec<u8>,
}

impl SpiralAddress {
    pub fn new(digits: Vec<u8>) -> Result<Self> {
        if let Some(&digit) = digits.iter().find(|&&d| d >= 7) {
            return Err(Error::InvalidAddress { digit });
        }
        Ok(SpiralAddress { digits })
    }

    /// The address with the given integer value, zero-padded to `order`
    /// digits. Errors when `value >= 7^order`.
    pub fn from_value(value: u64, order: usize) -> Result<Self> {
        let mut digits = vec![0u8; order];
        let mut rest = value;
        for slot in digits.iter_mut().rev() {
            *slot = (rest % 7) as u8;
            rest /= 7;
        }
        if rest != 0 {
            return Err(Error::invalid_argument(format!(
                "value {value} does not fit in {order} base-7 digits"
            )));
        }
        SpiralAddress::new(digits)
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    /// Number of digits; order 0 is the empty address for the origin.
    pub fn order(&self) -> usize {
        self.digits.len()
    }

    pub fn value(&self) -> u64 {
        self.digits.iter().fold(0, |acc, &d| acc * 7 + d as u64)
    }
}

impl fmt::Display for SpiralAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.digits.is_empty() {
            return f.write_str("0");
        }
        for d in &self.digits {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for SpiralAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .chars()
            .map(|c| match c.to_digit(7) {
                Some(d) => Ok(d as u8),
                None => Err(Error::InvalidAddress { digit: u8::MAX }),
            })
            .collect::<Result<Vec<_>>>()?;
        SpiralAddress::new(digits)
    }
}

/// Unit step of each spiral digit: digit 0 stays put, digits 1-6 walk the six
/// axial neighbor directions counterclockwise starting at east.
pub const DIGIT_STEPS: [HexCoord; 7] = [
    HexCoord { q: 0, r: 0 },
    HexCoord { q: 1, r: 0 },
    HexCoord { q: 0, r: 1 },
    HexCoord { q: -1, r: 1 },
    HexCoord { q: -1, r: 0 },
    HexCoord { q: 0, r: -1 },
    HexCoord { q: 1, r: -1 },
];

/// One aggregation level of the septree: the determinant-7 linear map
/// `(q, r) -> (2q - r, q + 3r)` that carries the unit neighbors onto the
/// index-7 sublattice. Cluster centers of order n sit at the n-fold image of
/// the digit steps.
pub fn aggregate_step(c: HexCoord) -> HexCoord {
    HexCoord::new(2 * c.q - c.r, c.q + 3 * c.r)
}

/// Axial coordinate addressed by a spiral address: Horner evaluation of
/// `sum_k T^(n-1-k) * step(digit_k)` with T the septree scaling map.
pub fn spiral_to_axial(addr: &SpiralAddress) -> HexCoord {
    let mut acc = HexCoord::ORIGIN;
    for &d in addr.digits() {
        let scaled = aggregate_step(acc);
        let step = DIGIT_STEPS[d as usize];
        acc = HexCoord::new(scaled.q + step.q, scaled.r + step.r);
    }
    acc
}

/// Raster cell of an axial coordinate: `col = q + floor(r / 2)`, `row = r`,
/// translated so axial (0, 0) lands on the central cell
/// `(rows / 2, cols / 2)`. Returns `None` outside the raster.
pub fn axial_to_linewise(c: HexCoord, spec: &HexGridSpec) -> Option<(usize, usize)> {
    let row = c.r + (spec.rows() / 2) as i64;
    let col = c.q + c.r.div_euclid(2) + (spec.cols() / 2) as i64;
    if row < 0 || col < 0 || row >= spec.rows() as i64 || col >= spec.cols() as i64 {
        return None;
    }
    Some((row as usize, col as usize))
}

/// Inverse of [`axial_to_linewise`]; exact for every in-bounds cell.
pub fn linewise_to_axial(row: usize, col: usize, spec: &HexGridSpec) -> HexCoord {
    let r = row as i64 - (spec.rows() / 2) as i64;
    let q = col as i64 - (spec.cols() / 2) as i64 - r.div_euclid(2);
    HexCoord::new(q, r)
}

/// The six cells adjacent to `(row, col)`, counterclockwise from east
/// (treating increasing row index as increasing y). Results may fall outside
/// any particular raster; callers clamp or skip as needed.
pub fn neighbors(row: i64, col: i64) -> [(i64, i64); 6] {
    if row.rem_euclid(2) == 0 {
        [
            (row, col + 1),
            (row + 1, col),
            (row + 1, col - 1),
            (row, col - 1),
            (row - 1, col - 1),
            (row - 1, col),
        ]
    } else {
        [
            (row, col + 1),
            (row + 1, col + 1),
            (row + 1, col),
            (row, col - 1),
            (row - 1, col),
            (row - 1, col + 1),
        ]
    }
}

/// A hexagonal block of side length `n`, indexed over the `(2n-1) x (2n-1)`
/// box: members are the `(x, y)` with `1 <= x, y <= 2n - 1` and `|x - y| < n`.
/// Its size follows the centered-hexagonal law `3n^2 - 3n + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HexBlock {
    n: usize,
    members: Vec<(i64, i64)>,
}

impl HexBlock {
    /// Side length of the block.
    pub fn side(&self) -> usize {
        self.n
    }

    pub fn members(&self) -> &[(i64, i64)] {
        &self.members
    }

    /// Member count M.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Closed-form size of [`hex_block`]: the centered hexagonal number.
pub fn hex_block_len(n: usize) -> usize {
    3 * n * n - 3 * n + 1
}

/// Enumerates the hexagonal block of side length `n` in lexicographic order.
pub fn hex_block(n: usize) -> Result<HexBlock> {
    if n == 0 {
        return Err(Error::invalid_argument(
            "hex block side length must be at least 1",
        ));
    }
    let side = n as i64;
    let mut members = Vec::with_capacity(hex_block_len(n));
    for x in 1..=(2 * side - 1) {
        for y in 1..=(2 * side - 1) {
            if (x - y).abs() < side {
                members.push((x, y));
            }
        }
    }
    Ok(HexBlock { n, members })
}
