//! Exact area-weighted image quality metrics for lattice transformations.
//!
//! Each hexagonal cell is projected onto the source image and clipped against
//! every pixel square it overlaps; the resulting subarea weights turn the
//! per-cell squared error into an area-weighted MSE. PSNR on top of this MSE
//! measures a transformation's efficiency `T`; comparing a hexagonal grid
//! against a square resampling with the same sample count yields the
//! difference `delta = T_h - T_q`.

use crate::error::{Error, Result};
use crate::hexgrid::{HexGridSpec, SQRT_3};
use crate::transform::{
    grid_for_radius, resize_square, s2h, HexArray, InterpMode, Placement, SquareImage,
};

/// Peak sample value for 8-bit sources.
pub const MAX_I_8BIT: f64 = 255.0;

/// Axis-aligned rectangle (min corner inclusive, max corner exclusive in
/// pixel terms, though clipping treats it as a closed region).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Rect {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }
}

/// Intersection of one hexagonal cell with one image pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subarea {
    /// `(x, y)` pixel index in the reference image.
    pub pixel: (usize, usize),
    pub area: f64,
    /// Reference pixel value I.
    pub ref_value: f64,
    /// Transformed (hex cell) value K.
    pub hex_value: f64,
}

/// How the weighted squared-error sum is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalizer {
    /// Divide by total projected area (default: an area-weighted mean, which
    /// keeps the metric comparable across resolutions).
    #[default]
    TotalArea,
    /// Divide by the number of subareas (alternative reading, kept for
    /// comparison).
    SubareaCount,
}

/// Sutherland-Hodgman clip of a convex counterclockwise polygon against an
/// axis-aligned rectangle. Returns the (convex, counterclockwise, possibly
/// empty) intersection; subjects with fewer than 3 vertices yield empty.
pub fn clip_convex(subject: &[(f64, f64)], rect: &Rect) -> Vec<(f64, f64)> {
    if subject.len() < 3 {
        return Vec::new();
    }

    #[derive(Clone, Copy)]
    enum Edge {
        Left,
        Right,
        Top,
        Bottom,
    }
    let inside = |p: (f64, f64), e: Edge| match e {
        Edge::Left => p.0 >= rect.x_min,
        Edge::Right => p.0 <= rect.x_max,
        Edge::Top => p.1 >= rect.y_min,
        Edge::Bottom => p.1 <= rect.y_max,
    };
    let intersect = |a: (f64, f64), b: (f64, f64), e: Edge| -> (f64, f64) {
        match e {
            Edge::Left | Edge::Right => {
                let x = if matches!(e, Edge::Left) {
                    rect.x_min
                } else {
                    rect.x_max
                };
                let t = (x - a.0) / (b.0 - a.0);
                (x, a.1 + t * (b.1 - a.1))
            }
            Edge::Top | Edge::Bottom => {
                let y = if matches!(e, Edge::Top) {
                    rect.y_min
                } else {
                    rect.y_max
                };
                let t = (y - a.1) / (b.1 - a.1);
                (a.0 + t * (b.0 - a.0), y)
            }
        }
    };

    let mut poly = subject.to_vec();
    for edge in [Edge::Left, Edge::Right, Edge::Top, Edge::Bottom] {
        if poly.is_empty() {
            break;
        }
        let input = std::mem::take(&mut poly);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let cur_in = inside(cur, edge);
            let prev_in = inside(prev, edge);
            if cur_in {
                if !prev_in {
                    poly.push(intersect(prev, cur, edge));
                }
                poly.push(cur);
            } else if prev_in {
                poly.push(intersect(prev, cur, edge));
            }
        }
    }
    poly
}

/// Shoelace area of a simple polygon; non-negative for counterclockwise
/// vertex order.
pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

/// Vertices of a pointy-top hexagon, counterclockwise. The flat left/right
/// edges sit at `x = cx +/- circumradius * sqrt(3) / 2` (half a pitch).
pub fn hexagon_vertices(cx: f64, cy: f64, circumradius: f64) -> [(f64, f64); 6] {
    let mut v = [(0.0, 0.0); 6];
    for (k, slot) in v.iter_mut().enumerate() {
        let angle = std::f64::consts::PI / 6.0 + k as f64 * std::f64::consts::PI / 3.0;
        *slot = (
            cx + circumradius * angle.cos(),
            cy + circumradius * angle.sin(),
        );
    }
    v
}

/// Normalized weighted mean of squared subarea errors.
pub fn mse_from_subareas(subareas: &[Subarea], normalizer: Normalizer) -> Result<f64> {
    let mut num = 0.0;
    let mut total_area = 0.0;
    for s in subareas {
        let d = s.ref_value - s.hex_value;
        num += s.area * d * d;
        total_area += s.area;
    }
    let den = match normalizer {
        Normalizer::TotalArea => total_area,
        Normalizer::SubareaCount => subareas.len() as f64,
    };
    if den <= 0.0 {
        return Err(Error::UndefinedMetric(
            "zero total overlap between lattice and image".into(),
        ));
    }
    Ok(num / den)
}

/// `(pixel, area)` overlaps of the hexagon of cell `(row, col)` with the
/// image's pixel squares, under the same centered placement `s2h` uses.
fn cell_pixel_overlaps(
    width: usize,
    height: usize,
    place: &Placement,
    spec: &HexGridSpec,
    row: usize,
    col: usize,
    out: &mut Vec<((usize, usize), f64)>,
) {
    out.clear();
    let (cx, cy) = place.cell_center(spec, row, col);
    let r = spec.circumradius();
    let half_pitch = spec.pitch() / 2.0;
    let poly = hexagon_vertices(cx, cy, r);

    let x_lo = ((cx - half_pitch).floor() as i64).max(0);
    let x_hi = ((cx + half_pitch).ceil() as i64).min(width as i64);
    let y_lo = ((cy - r).floor() as i64).max(0);
    let y_hi = ((cy + r).ceil() as i64).min(height as i64);
    for py in y_lo..y_hi {
        for px in x_lo..x_hi {
            let rect = Rect::new(px as f64, py as f64, px as f64 + 1.0, py as f64 + 1.0);
            let area = polygon_area(&clip_convex(&poly, &rect));
            if area > 0.0 {
                out.push(((px as usize, py as usize), area));
            }
        }
    }
}

/// All subareas of one cell against one image channel. Exposed mainly so the
/// geometric bookkeeping (area conservation, value plumbing) is testable.
pub fn cell_subareas(
    img: &SquareImage,
    hex: &HexArray,
    row: usize,
    col: usize,
    ch: usize,
) -> Result<Vec<Subarea>> {
    if row >= hex.spec().rows() || col >= hex.spec().cols() {
        return Err(Error::invalid_argument(format!(
            "cell ({row}, {col}) out of bounds"
        )));
    }
    if ch >= img.channels() || ch >= hex.channels() {
        return Err(Error::invalid_argument(format!("channel {ch} out of bounds")));
    }
    let place = Placement::centered(img.width(), img.height(), hex.spec());
    let mut overlaps = Vec::new();
    cell_pixel_overlaps(
        img.width(),
        img.height(),
        &place,
        hex.spec(),
        row,
        col,
        &mut overlaps,
    );
    Ok(overlaps
        .into_iter()
        .map(|((px, py), area)| Subarea {
            pixel: (px, py),
            area,
            ref_value: img.at(px, py, ch),
            hex_value: hex.at(row, col, ch),
        })
        .collect())
}

/// Area-weighted MSE between an image and a hex lattice registered over it:
/// every (hexagon x pixel) intersection contributes its area times the
/// squared value difference; the sum is normalized by the total projected
/// area. Multi-channel inputs average the per-channel MSEs. Cells partially
/// outside the image contribute only their in-image subareas.
pub fn weighted_mse(img: &SquareImage, hex: &HexArray) -> Result<f64> {
    weighted_mse_with(img, hex, Normalizer::TotalArea)
}

pub fn weighted_mse_with(
    img: &SquareImage,
    hex: &HexArray,
    normalizer: Normalizer,
) -> Result<f64> {
    if img.channels() != hex.channels() {
        return Err(Error::shape_mismatch(format!(
            "image has {} channels, hex array {}",
            img.channels(),
            hex.channels()
        )));
    }
    let spec = *hex.spec();
    let place = Placement::centered(img.width(), img.height(), &spec);
    let channels = img.channels();
    let mut num = vec![0.0f64; channels];
    let mut total_area = 0.0;
    let mut count = 0usize;
    let mut overlaps = Vec::new();
    for row in 0..spec.rows() {
        for col in 0..spec.cols() {
            cell_pixel_overlaps(
                img.width(),
                img.height(),
                &place,
                &spec,
                row,
                col,
                &mut overlaps,
            );
            for &((px, py), area) in &overlaps {
                total_area += area;
                count += 1;
                for (ch, acc) in num.iter_mut().enumerate() {
                    let d = img.at(px, py, ch) - hex.at(row, col, ch);
                    *acc += area * d * d;
                }
            }
        }
    }
    let den = match normalizer {
        Normalizer::TotalArea => total_area,
        Normalizer::SubareaCount => count as f64,
    };
    if den <= 0.0 {
        return Err(Error::UndefinedMetric(
            "zero total overlap between lattice and image".into(),
        ));
    }
    Ok(num.iter().sum::<f64>() / channels as f64 / den)
}

/// Same area-weighted MSE specialized to square-on-square cells: `coarse`
/// is stretched over `img` and every (coarse cell x pixel) overlap
/// contributes. This is the square-lattice half of the efficiency
/// comparison.
pub fn square_resample_mse(img: &SquareImage, coarse: &SquareImage) -> Result<f64> {
    if img.channels() != coarse.channels() {
        return Err(Error::shape_mismatch(format!(
            "image has {} channels, resampled image {}",
            img.channels(),
            coarse.channels()
        )));
    }
    let spans_x = axis_spans(img.width(), coarse.width());
    let spans_y = axis_spans(img.height(), coarse.height());
    let channels = img.channels();
    let mut num = vec![0.0f64; channels];
    let mut total_area = 0.0;
    for (cy, span_y) in spans_y.iter().enumerate() {
        for (cx, span_x) in spans_x.iter().enumerate() {
            for &(py, ly) in span_y {
                for &(px, lx) in span_x {
                    let area = lx * ly;
                    total_area += area;
                    for (ch, acc) in num.iter_mut().enumerate() {
                        let d = img.at(px, py, ch) - coarse.at(cx, cy, ch);
                        *acc += area * d * d;
                    }
                }
            }
        }
    }
    if total_area <= 0.0 {
        return Err(Error::UndefinedMetric("zero overlap area".into()));
    }
    Ok(num.iter().sum::<f64>() / channels as f64 / total_area)
}

/// For each coarse cell along one axis: the fine pixels it overlaps and the
/// overlap length. Coarse cell k covers `[k, k+1) * n_fine / n_coarse`.
fn axis_spans(n_fine: usize, n_coarse: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_fine as f64 / n_coarse as f64;
    (0..n_coarse)
        .map(|k| {
            let lo = k as f64 * scale;
            let hi = (k as f64 + 1.0) * scale;
            let mut spans = Vec::new();
            let mut p = lo.floor() as usize;
            while (p as f64) < hi && p < n_fine {
                let seg = hi.min(p as f64 + 1.0) - lo.max(p as f64);
                if seg > 0.0 {
                    spans.push((p, seg));
                }
                p += 1;
            }
            spans
        })
        .collect()
}

/// Peak signal-to-noise ratio in decibels; zero MSE yields positive
/// infinity.
pub fn psnr(mse: f64, max_i: f64) -> Result<f64> {
    if mse < 0.0 || mse.is_nan() {
        return Err(Error::invalid_argument(format!(
            "mse must be non-negative, got {mse}"
        )));
    }
    if max_i.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !max_i.is_finite() {
        return Err(Error::invalid_argument(format!(
            "peak value must be positive and finite, got {max_i}"
        )));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_i * max_i / mse).log10())
}

/// Transformation-efficiency comparison at one circumradius: `t_h` is the
/// PSNR of the hexagonal resampling, `t_q` that of a square resampling with
/// the same sample count, `delta = t_h - t_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyReport {
    pub r: f64,
    pub rows: usize,
    pub cols: usize,
    pub mse_h: f64,
    pub mse_q: f64,
    pub t_h: f64,
    pub t_q: f64,
    pub delta: f64,
    pub max_i: f64,
}

#[derive(Debug, Clone)]
pub enum SweepEntry {
    Report(EfficiencyReport),
    /// Radius produced no usable grid (e.g. larger than the image).
    Skipped { r: f64, reason: String },
}

/// Efficiency comparison for one image at one hexagon circumradius.
pub fn efficiency_report(
    img: &SquareImage,
    radius: f64,
    mode: InterpMode,
) -> Result<EfficiencyReport> {
    let spec = grid_for_radius(img.width(), img.height(), radius)?;
    efficiency_report_for_spec(img, &spec, mode)
}

/// [`efficiency_report`] against an explicitly chosen grid (e.g. the
/// equal-sample-count grid, whose rounding differs from the radius route).
pub fn efficiency_report_for_spec(
    img: &SquareImage,
    spec: &HexGridSpec,
    mode: InterpMode,
) -> Result<EfficiencyReport> {
    let spec = *spec;
    let hex = s2h(img, &spec, mode)?;
    let mse_h = weighted_mse(img, &hex)?;
    let t_h = psnr(mse_h, MAX_I_8BIT)?;

    // square baseline: same sample count, laid out as rows x cols pixels
    let coarse = resize_square(img, spec.cols(), spec.rows(), mode)?;
    let mse_q = square_resample_mse(img, &coarse)?;
    let t_q = psnr(mse_q, MAX_I_8BIT)?;

    Ok(EfficiencyReport {
        r: spec.circumradius(),
        rows: spec.rows(),
        cols: spec.cols(),
        mse_h,
        mse_q,
        t_h,
        t_q,
        delta: t_h - t_q,
        max_i: MAX_I_8BIT,
    })
}

/// Runs [`efficiency_report`] over a sequence of circumradii; radii that
/// produce no grid become `Skipped` entries instead of aborting the sweep.
pub fn efficiency_sweep(img: &SquareImage, r_values: &[f64], mode: InterpMode) -> Vec<SweepEntry> {
    r_values
        .iter()
        .map(|&r| match efficiency_report(img, r, mode) {
            Ok(report) => SweepEntry::Report(report),
            Err(err) => SweepEntry::Skipped {
                r,
                reason: err.to_string(),
            },
        })
        .collect()
}

/// Analytic area of a regular hexagon with the given circumradius.
pub fn hexagon_area(circumradius: f64) -> f64 {
    3.0 * SQRT_3 / 2.0 * circumradius * circumradius
}
