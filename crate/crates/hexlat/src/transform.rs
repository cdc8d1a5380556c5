//! Conversions between square-pixel images and pseudohexagonal sample grids.
//!
//! `s2h` centers a hex grid's bounding box over the image and samples the
//! image at every cell center; `h2s` goes the other way by interpolating the
//! hexagonal lattice at every pixel center. Sample values follow the 8-bit
//! convention [0, 255] and are clamped to it on output; sampling positions
//! outside an input are edge-clamped.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hexgrid::{HexGridSpec, SQRT_3};

/// Row-major, channel-interleaved raster image with real-valued samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl SquareImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        validate_dims(width, height, channels)?;
        Ok(SquareImage {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        })
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        validate_dims(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(Error::shape_mismatch(format!(
                "image data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(SquareImage {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut img = SquareImage::new(width, height, channels)?;
        for y in 0..height {
            for x in 0..width {
                for ch in 0..channels {
                    *img.at_mut(x, y, ch) = f(x, y, ch);
                }
            }
        }
        Ok(img)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + ch]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize, ch: usize) -> &mut f64 {
        &mut self.data[(y * self.width + x) * self.channels + ch]
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
}

/// Multi-channel samples stored linewise (row-major) on a [`HexGridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct HexArray {
    spec: HexGridSpec,
    channels: usize,
    data: Vec<f64>,
}

impl HexArray {
    pub fn new(spec: HexGridSpec, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid_argument("hex array needs at least 1 channel"));
        }
        Ok(HexArray {
            spec,
            channels,
            data: vec![0.0; spec.cell_count() * channels],
        })
    }

    pub fn from_data(spec: HexGridSpec, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid_argument("hex array needs at least 1 channel"));
        }
        if data.len() != spec.cell_count() * channels {
            return Err(Error::shape_mismatch(format!(
                "hex data length {} does not match {}x{}x{}",
                data.len(),
                spec.rows(),
                spec.cols(),
                channels
            )));
        }
        Ok(HexArray {
            spec,
            channels,
            data,
        })
    }

    pub fn from_fn(
        spec: HexGridSpec,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut hex = HexArray::new(spec, channels)?;
        for row in 0..spec.rows() {
            for col in 0..spec.cols() {
                for ch in 0..channels {
                    *hex.at_mut(row, col, ch) = f(row, col, ch);
                }
            }
        }
        Ok(hex)
    }

    pub fn spec(&self) -> &HexGridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.spec.cols() + col) * self.channels + ch]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize, ch: usize) -> &mut f64 {
        &mut self.data[(row * self.spec.cols() + col) * self.channels + ch]
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
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterpMode {
    Nearest,
    #[default]
    Bilinear,
    Bicubic,
}

impl std::str::FromStr for InterpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(InterpMode::Nearest),
            "bilinear" => Ok(InterpMode::Bilinear),
            "bicubic" => Ok(InterpMode::Bicubic),
            other => Err(Error::invalid_argument(format!(
                "unknown interpolation mode '{other}' (expected nearest, bilinear or bicubic)"
            ))),
        }
    }
}

impl std::fmt::Display for InterpMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InterpMode::Nearest => "nearest",
            InterpMode::Bilinear => "bilinear",
            InterpMode::Bicubic => "bicubic",
        })
    }
}

/// Registration of a hex grid over an image: the grid's bounding box is
/// centered on the image rectangle. Grid coordinates are relative to the
/// center of cell (0, 0); image coordinates put pixel `(x, y)` at the square
/// `[x, x+1) x [y, y+1)`.
#[derive(Debug, Clone, Copy)]
pub struct Placement {
    offset_x: f64,
    offset_y: f64,
}

impl Placement {
    pub fn centered(width: usize, height: usize, spec: &HexGridSpec) -> Self {
        let (min_x, min_y) = spec.bbox_min();
        Placement {
            offset_x: (width as f64 - spec.bbox_width()) / 2.0 - min_x,
            offset_y: (height as f64 - spec.bbox_height()) / 2.0 - min_y,
        }
    }

    #[inline]
    pub fn to_image(&self, gx: f64, gy: f64) -> (f64, f64) {
        (gx + self.offset_x, gy + self.offset_y)
    }

    #[inline]
    pub fn to_grid(&self, ix: f64, iy: f64) -> (f64, f64) {
        (ix - self.offset_x, iy - self.offset_y)
    }

    /// Image coordinates of the center of cell `(row, col)`.
    pub fn cell_center(&self, spec: &HexGridSpec, row: usize, col: usize) -> (f64, f64) {
        let (gx, gy) = spec.center_unchecked(row as i64, col as i64);
        self.to_image(gx, gy)
    }
}

/// Equal-sample-count grid for a `width x height` image: `rows =
/// round(height * sqrt(2 / sqrt(3)))`, `cols = round(width * sqrt(sqrt(3) /
/// 2))` (hexagonal rows pack about 7.5% denser vertically), with the pitch
/// chosen so the grid bounding box spans the image width.
pub fn choose_grid(width: usize, height: usize) -> Result<HexGridSpec> {
    if width == 0 || height == 0 {
        return Err(Error::invalid_argument("image dimensions must be positive"));
    }
    let rows = ((height as f64) * (2.0 / SQRT_3).sqrt()).round().max(1.0) as usize;
    let cols = ((width as f64) * (SQRT_3 / 2.0).sqrt()).round().max(1.0) as usize;
    let shift = if rows >= 2 { 0.5 } else { 0.0 };
    HexGridSpec::new(rows, cols, width as f64 / (cols as f64 + shift))
}

/// Grid whose cells have circumradius `radius` (`pitch = radius * sqrt(3)`),
/// sized by rounding the image extent to whole rows/columns. Errors when the
/// radius is so large that no row or column fits.
pub fn grid_for_radius(width: usize, height: usize, radius: f64) -> Result<HexGridSpec> {
    if width == 0 || height == 0 {
        return Err(Error::invalid_argument("image dimensions must be positive"));
    }
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::invalid_argument(format!(
            "circumradius must be positive and finite, got {radius}"
        )));
    }
    let pitch = radius * SQRT_3;
    let row_step = pitch * SQRT_3 / 2.0;
    let rows = (height as f64 / row_step).round() as usize;
    let cols = (width as f64 / pitch).round() as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid_argument(format!(
            "circumradius {radius} leaves no grid cells on a {width}x{height} image"
        )));
    }
    HexGridSpec::new(rows, cols, pitch)
}

/// Samples the image at every hex cell center (grid bounding box centered on
/// the image). Bicubic uses the Catmull-Rom kernel; output samples are
/// clamped to [0, 255].
pub fn s2h(img: &SquareImage, spec: &HexGridSpec, mode: InterpMode) -> Result<HexArray> {
    let mut out = HexArray::new(*spec, img.channels())?;
    let place = Placement::centered(img.width(), img.height(), spec);
    let spec = *spec;
    let channels = img.channels();
    let row_stride = spec.cols() * channels;
    out.data_mut()
        .par_chunks_mut(row_stride)
        .enumerate()
        .for_each(|(row, out_row)| {
            for col in 0..spec.cols() {
                let (gx, gy) = spec.center_unchecked(row as i64, col as i64);
                let (ix, iy) = place.to_image(gx, gy);
                let slot = &mut out_row[col * channels..(col + 1) * channels];
                sample_square_into(img, ix, iy, mode, slot);
            }
        });
    Ok(out)
}

/// Interpolates the hexagonal lattice at every pixel center of a `width x
/// height` output. Nearest returns the value of the hexagon containing the
/// pixel center; bilinear interpolates barycentrically on the triangulation
/// of hex centers; bicubic aliases to bilinear (no cubic scheme is defined on
/// this lattice).
pub fn h2s(hex: &HexArray, width: usize, height: usize, mode: InterpMode) -> Result<SquareImage> {
    let mut out = SquareImage::new(width, height, hex.channels())?;
    let place = Placement::centered(width, height, hex.spec());
    let channels = hex.channels();
    let row_stride = width * channels;
    out.data_mut()
        .par_chunks_mut(row_stride)
        .enumerate()
        .for_each(|(py, out_row)| {
            for px in 0..width {
                let (gx, gy) = place.to_grid(px as f64 + 0.5, py as f64 + 0.5);
                let slot = &mut out_row[px * channels..(px + 1) * channels];
                sample_hex_into(hex, gx, gy, mode, slot);
            }
        });
    Ok(out)
}

/// Square-to-square resampling at output pixel centers, with the same
/// interpolation kernels and edge handling as [`s2h`]. This is the square
/// baseline the hexagonal pipeline is measured against.
pub fn resize_square(
    img: &SquareImage,
    width: usize,
    height: usize,
    mode: InterpMode,
) -> Result<SquareImage> {
    let mut out = SquareImage::new(width, height, img.channels())?;
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let channels = img.channels();
    let row_stride = width * channels;
    out.data_mut()
        .par_chunks_mut(row_stride)
        .enumerate()
        .for_each(|(py, out_row)| {
            let y = (py as f64 + 0.5) * sy;
            for px in 0..width {
                let x = (px as f64 + 0.5) * sx;
                let slot = &mut out_row[px * channels..(px + 1) * channels];
                sample_square_into(img, x, y, mode, slot);
            }
        });
    Ok(out)
}

fn validate_dims(width: usize, height: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::invalid_argument(format!(
            "image dimensions must be positive, got {width}x{height}x{channels}"
        )));
    }
    Ok(())
}

#[inline]
fn clamp_sample(v: f64) -> f64 {
    v.clamp(0.0, 255.0)
}

#[inline]
fn split_frac(u: f64) -> (i64, f64) {
    let f = u.floor();
    (f as i64, u - f)
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Catmull-Rom weights for the four samples around a point at parameter `t`
/// past the second sample. Weights sum to 1 and reproduce linear data.
fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

pub(crate) fn sample_square_into(
    img: &SquareImage,
    x: f64,
    y: f64,
    mode: InterpMode,
    out: &mut [f64],
) {
    match mode {
        InterpMode::Nearest => {
            // pixel (i, j) owns the square [i, i+1) x [j, j+1)
            let px = clamp_index(x.floor() as i64, img.width());
            let py = clamp_index(y.floor() as i64, img.height());
            for (ch, slot) in out.iter_mut().enumerate() {
                *slot = clamp_sample(img.at(px, py, ch));
            }
        }
        InterpMode::Bilinear => {
            let (x0, tx) = split_frac(x - 0.5);
            let (y0, ty) = split_frac(y - 0.5);
            let xl = clamp_index(x0, img.width());
            let xr = clamp_index(x0 + 1, img.width());
            let yt = clamp_index(y0, img.height());
            let yb = clamp_index(y0 + 1, img.height());
            for (ch, slot) in out.iter_mut().enumerate() {
                let top = img.at(xl, yt, ch) * (1.0 - tx) + img.at(xr, yt, ch) * tx;
                let bot = img.at(xl, yb, ch) * (1.0 - tx) + img.at(xr, yb, ch) * tx;
                *slot = clamp_sample(top * (1.0 - ty) + bot * ty);
            }
        }
        InterpMode::Bicubic => {
            let (x0, tx) = split_frac(x - 0.5);
            let (y0, ty) = split_frac(y - 0.5);
            let wx = catmull_rom_weights(tx);
            let wy = catmull_rom_weights(ty);
            let xs = [
                clamp_index(x0 - 1, img.width()),
                clamp_index(x0, img.width()),
                clamp_index(x0 + 1, img.width()),
                clamp_index(x0 + 2, img.width()),
            ];
            let ys = [
                clamp_index(y0 - 1, img.height()),
                clamp_index(y0, img.height()),
                clamp_index(y0 + 1, img.height()),
                clamp_index(y0 + 2, img.height()),
            ];
            for (ch, slot) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &yy) in ys.iter().enumerate() {
                    let mut row = 0.0;
                    for (i, &xx) in xs.iter().enumerate() {
                        row += img.at(xx, yy, ch) * wx[i];
                    }
                    acc += row * wy[j];
                }
                *slot = clamp_sample(acc);
            }
        }
    }
}

/// Cell whose hexagon contains the point `(gx, gy)` in grid coordinates
/// (equivalently: the nearest cell center). Points outside the raster attach
/// to the nearest boundary cell; ties resolve to the smallest (row, col).
pub(crate) fn nearest_cell(spec: &HexGridSpec, gx: f64, gy: f64) -> (usize, usize) {
    let rows = spec.rows() as i64;
    let t = gy / spec.row_step();
    let r_lo = (t.floor() as i64 - 1).clamp(0, rows - 1);
    let r_hi = (t.ceil() as i64 + 1).clamp(0, rows - 1);
    let mut best = (0usize, 0usize);
    let mut best_d = f64::INFINITY;
    for row in r_lo..=r_hi {
        let u = gx / spec.pitch() - HexGridSpec::row_shift(row);
        let c_lo = clamp_index(u.floor() as i64, spec.cols());
        let c_hi = clamp_index(u.ceil() as i64, spec.cols());
        for col in c_lo..=c_hi {
            let (cx, cy) = spec.center_unchecked(row, col as i64);
            let d = (gx - cx) * (gx - cx) + (gy - cy) * (gy - cy);
            if d < best_d {
                best_d = d;
                best = (row as usize, col);
            }
        }
    }
    best
}

fn sample_hex_into(hex: &HexArray, gx: f64, gy: f64, mode: InterpMode, out: &mut [f64]) {
    match mode {
        InterpMode::Nearest => {
            let (row, col) = nearest_cell(hex.spec(), gx, gy);
            for (ch, slot) in out.iter_mut().enumerate() {
                *slot = clamp_sample(hex.at(row, col, ch));
            }
        }
        InterpMode::Bilinear | InterpMode::Bicubic => barycentric_into(hex, gx, gy, out),
    }
}

fn barycentric_weights(
    p: (f64, f64),
    a: (f64, f64),
    b: (f64, f64),
    c: (f64, f64),
) -> Option<[f64; 3]> {
    let det = (b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1);
    if det.abs() < 1e-12 {
        return None;
    }
    let w0 = ((b.0 - p.0) * (c.1 - p.1) - (c.0 - p.0) * (b.1 - p.1)) / det;
    let w1 = ((c.0 - p.0) * (a.1 - p.1) - (a.0 - p.0) * (c.1 - p.1)) / det;
    let w2 = 1.0 - w0 - w1;
    const EPS: f64 = -1e-9;
    if w0 >= EPS && w1 >= EPS && w2 >= EPS {
        Some([w0, w1, w2])
    } else {
        None
    }
}

/// Barycentric interpolation on the triangulation formed by the zigzag of
/// two consecutive rows of cell centers. Column/row lookups are edge-clamped
/// while vertex *positions* stay on the virtual lattice, so the scheme stays
/// well-defined (and constant-preserving) outside the raster too.
fn barycentric_into(hex: &HexArray, gx: f64, gy: f64, out: &mut [f64]) {
    let spec = hex.spec();
    let rows = spec.rows() as i64;
    let cols = spec.cols() as i64;
    let u = gx / spec.pitch();

    if rows == 1 {
        // degenerate strip: linear interpolation along the single row
        let (c0, t) = split_frac(u);
        let lo = clamp_index(c0, spec.cols());
        let hi = clamp_index(c0 + 1, spec.cols());
        for (ch, slot) in out.iter_mut().enumerate() {
            *slot = clamp_sample(hex.at(0, lo, ch) * (1.0 - t) + hex.at(0, hi, ch) * t);
        }
        return;
    }

    let t = gy / spec.row_step();
    let r0 = (t.floor() as i64).clamp(0, rows - 2);
    let frac = (t - r0 as f64).clamp(0.0, 1.0);
    let (unshifted, shifted) = if HexGridSpec::row_shift(r0) == 0.0 {
        (r0, r0 + 1)
    } else {
        (r0 + 1, r0)
    };

    // zigzag vertex k: even k sits on the unshifted row at x = k/2, odd k on
    // the shifted row at x = k/2 + 1/2 (pitch units); local y is 0 on row r0
    // and 1 on row r0+1
    let vertex = |k: i64| -> (f64, f64, usize, usize) {
        let col = k.div_euclid(2);
        let (row, x) = if k.rem_euclid(2) == 0 {
            (unshifted, col as f64)
        } else {
            (shifted, col as f64 + 0.5)
        };
        let y = if row == r0 { 0.0 } else { 1.0 };
        (x, y, row as usize, col.clamp(0, cols - 1) as usize)
    };

    let m = (2.0 * u).floor() as i64;
    // the band between vertices m and m+1 is split by their common edge into
    // triangles (m-1, m, m+1) and (m, m+1, m+2)
    for tri in [[m - 1, m, m + 1], [m, m + 1, m + 2]] {
        let va = vertex(tri[0]);
        let vb = vertex(tri[1]);
        let vc = vertex(tri[2]);
        if let Some(w) = barycentric_weights(
            (u, frac),
            (va.0, va.1),
            (vb.0, vb.1),
            (vc.0, vc.1),
        ) {
            for (ch, slot) in out.iter_mut().enumerate() {
                let v = w[0] * hex.at(va.2, va.3, ch)
                    + w[1] * hex.at(vb.2, vb.3, ch)
                    + w[2] * hex.at(vc.2, vc.3, ch);
                *slot = clamp_sample(v);
            }
            return;
        }
    }

    // unreachable for the zigzag geometry (dets are +/-1); guard anyway
    let va = vertex(m);
    let vb = vertex(m + 1);
    for (ch, slot) in out.iter_mut().enumerate() {
        *slot = clamp_sample(0.5 * (hex.at(va.2, va.3, ch) + hex.at(vb.2, vb.3, ch)));
    }
}
