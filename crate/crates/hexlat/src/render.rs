//! Rasterization of hex arrays back onto square pixel canvases for visual
//! inspection.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hexgrid::SQRT_3;
use crate::transform::{nearest_cell, HexArray, SquareImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Output pixels per pitch unit. Must be positive.
    pub scale: f64,
    /// Sub-samples per pixel axis, box filtered. One of 1, 2, or 4.
    pub supersample: u8,
    /// Value painted where no hexagon covers the sample point.
    pub background: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { scale: 8.0, supersample: 1, background: 0.0 }
    }
}

/// True when `(x, y)` lies inside the pointy-top hexagon centered at
/// `(cx, cy)`: within half a pitch horizontally and under the sloped caps
/// vertically. Boundary points count as inside (within a relative epsilon, so
/// seams between neighbors do not drop samples to the background).
fn hexagon_contains(pitch: f64, cx: f64, cy: f64, x: f64, y: f64) -> bool {
    let dx = (x - cx).abs();
    let dy = (y - cy).abs();
    let circumradius = pitch / SQRT_3;
    let eps = 1e-9 * pitch;
    dx <= pitch / 2.0 + eps && dy <= circumradius - dx / SQRT_3 + eps
}

/// Paints a hex array onto a fresh canvas sized `ceil(bbox * scale / pitch)`.
/// Each output pixel is sampled `supersample^2` times on a regular subgrid
/// and box filtered; a sample takes the value of the hexagon containing it,
/// or `background` when it falls in no hexagon (the bounding box corners).
/// At `supersample == 1` every non-background pixel therefore copies some
/// cell's value exactly.
pub fn rasterize(hex: &HexArray, options: &RenderOptions) -> Result<SquareImage> {
    if !options.scale.is_finite() || options.scale <= 0.0 {
        return Err(Error::invalid_argument(format!(
            "render scale must be positive, got {}",
            options.scale
        )));
    }
    if ![1, 2, 4].contains(&options.supersample) {
        return Err(Error::invalid_argument(format!(
            "supersample factor must be 1, 2, or 4, got {}",
            options.supersample
        )));
    }
    let spec = *hex.spec();
    let channels = hex.channels();
    let per_unit = options.scale / spec.pitch();
    let width = (spec.bbox_width() * per_unit).ceil() as usize;
    let height = (spec.bbox_height() * per_unit).ceil() as usize;
    if width == 0 || height == 0 {
        return Err(Error::invalid_argument(
            "render scale is too small to produce any pixels",
        ));
    }
    let (min_x, min_y) = spec.bbox_min();
    let ss = options.supersample as usize;
    let norm = 1.0 / (ss * ss) as f64;
    let mut out = SquareImage::new(width, height, channels)?;
    let row_len = width * channels;
    out.data_mut()
        .par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(py, row)| {
            let mut acc = vec![0.0f64; channels];
            for px in 0..width {
                acc.fill(0.0);
                for sy in 0..ss {
                    let y = min_y + (py as f64 + (sy as f64 + 0.5) / ss as f64) / per_unit;
                    for sx in 0..ss {
                        let x = min_x + (px as f64 + (sx as f64 + 0.5) / ss as f64) / per_unit;
                        let (r, c) = nearest_cell(&spec, x, y);
                        let (cx, cy) = spec.center_unchecked(r as i64, c as i64);
                        if hexagon_contains(spec.pitch(), cx, cy, x, y) {
                            for (ch, a) in acc.iter_mut().enumerate() {
                                *a += hex.at(r, c, ch);
                            }
                        } else {
                            for a in acc.iter_mut() {
                                *a += options.background;
                            }
                        }
                    }
                }
                for (ch, &a) in acc.iter().enumerate() {
                    row[px * channels + ch] = a * norm;
                }
            }
        });
    Ok(out)
}
