//! On-disk containers: the hex-array snapshot format, PGM and PNG images,
//! and the IDX dataset layout.
//!
//! Hex-array snapshot layout (integers and floats little-endian):
//!
//! ```text
//! magic    b"HEXA"
//! version  u16
//! rows     u32
//! cols     u32
//! channels u16
//! pitch    f64
//! values   f64 * rows * cols * channels
//! ```
//!
//! Values round-trip bitwise; the reader rejects bad magic, truncation, and
//! trailing bytes with the offset of the problem.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hexgrid::HexGridSpec;
use crate::transform::{HexArray, SquareImage};

pub const HEXA_MAGIC: [u8; 4] = *b"HEXA";
pub const HEXA_VERSION: u16 = 1;

pub fn write_hexa(hex: &HexArray, path: &Path) -> Result<()> {
    let spec = hex.spec();
    let rows = u32::try_from(spec.rows())
        .map_err(|_| Error::invalid_argument("row count exceeds the container limit"))?;
    let cols = u32::try_from(spec.cols())
        .map_err(|_| Error::invalid_argument("column count exceeds the container limit"))?;
    let channels = u16::try_from(hex.channels())
        .map_err(|_| Error::invalid_argument("channel count exceeds the container limit"))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&HEXA_MAGIC)?;
    w.write_all(&HEXA_VERSION.to_le_bytes())?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    w.write_all(&channels.to_le_bytes())?;
    w.write_all(&spec.pitch().to_le_bytes())?;
    for v in hex.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(at, format!("truncated while reading {what}"))
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }
}

pub fn read_hexa(path: &Path) -> Result<HexArray> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?), offset: 0 };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if magic != HEXA_MAGIC {
        return Err(Error::format(0, "not a hex-array snapshot (bad magic)".to_string()));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2, "version")?;
    let version = u16::from_le_bytes(b2);
    if version != HEXA_VERSION {
        return Err(Error::format(4, format!("unsupported snapshot version {version}")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4, "row count")?;
    let rows = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4, "column count")?;
    let cols = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b2, "channel count")?;
    let channels = u16::from_le_bytes(b2) as usize;
    let mut b8 = [0u8; 8];
    let pitch_at = r.offset;
    r.read_exact(&mut b8, "pitch")?;
    let pitch = f64::from_le_bytes(b8);
    let spec = HexGridSpec::new(rows, cols, pitch)
        .map_err(|e| Error::format(pitch_at - 10, format!("bad grid header: {e}")))?;
    if channels == 0 {
        return Err(Error::format(pitch_at - 2, "channel count is zero".to_string()));
    }
    let len = rows * cols * channels;
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut b8, "cell values")?;
        values.push(f64::from_le_bytes(b8));
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(Error::format(r.offset, "trailing data after the cell values".to_string()));
    }
    HexArray::from_data(spec, channels, values)
}

/// Writes a single-channel image as binary PGM (P5, maxval 255). Values are
/// clamped to `[0, 255]` and rounded.
pub fn write_pgm(image: &SquareImage, path: &Path) -> Result<()> {
    if image.channels() != 1 {
        return Err(Error::invalid_argument(format!(
            "PGM stores one channel, image has {}",
            image.channels()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", image.width(), image.height())?;
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| v.clamp(0.0, 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Reads a binary PGM (P5) file with maxval at most 255.
pub fn read_pgm(path: &Path) -> Result<SquareImage> {
    let bytes = fs::read(path)?;

    let skip_separators = |pos: &mut usize| {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                return;
            }
        }
    };
    let token = |pos: &mut usize, what: &str| -> Result<u64> {
        skip_separators(pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if *pos == start {
            return Err(Error::format(start as u64, format!("expected {what}")));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start as u64, format!("unreadable {what}")))
    };

    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(Error::format(0, "not a binary PGM (expected P5)".to_string()));
    }
    let mut pos = 2usize;
    let width = token(&mut pos, "width")? as usize;
    let height = token(&mut pos, "height")? as usize;
    let maxval_at = pos;
    let maxval = token(&mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(
            maxval_at as u64,
            format!("unsupported maxval {maxval}, expected 1-255"),
        ));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(pos as u64, "missing separator before pixel data".to_string()));
    }
    pos += 1;
    let len = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(2, "image dimensions overflow".to_string()))?;
    if width == 0 || height == 0 {
        return Err(Error::format(2, "image dimensions must be positive".to_string()));
    }
    if bytes.len() - pos < len {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated pixel data: have {}, need {len}", bytes.len() - pos),
        ));
    }
    if bytes.len() - pos > len {
        return Err(Error::format(
            (pos + len) as u64,
            "trailing data after the pixel payload".to_string(),
        ));
    }
    let data: Vec<f64> = bytes[pos..pos + len].iter().map(|&b| b as f64).collect();
    SquareImage::from_data(width, height, 1, data)
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Reads an image file into float pixels. PGM is parsed directly; anything
/// else goes through the image decoder (PNG). Grayscale sources yield one
/// channel, color sources three.
pub fn read_image(path: &Path) -> Result<SquareImage> {
    if has_extension(path, "pgm") {
        return read_pgm(path);
    }
    let dynamic = image::ImageReader::open(path)?.decode()?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    use image::ColorType;
    match dynamic.color() {
        ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16 => {
            let gray = dynamic.to_luma8();
            let data: Vec<f64> = gray.as_raw().iter().map(|&v| v as f64).collect();
            SquareImage::from_data(w, h, 1, data)
        }
        _ => {
            let rgb = dynamic.to_rgb8();
            let data: Vec<f64> = rgb.as_raw().iter().map(|&v| v as f64).collect();
            SquareImage::from_data(w, h, 3, data)
        }
    }
}

/// Writes an image by extension: `.pgm` for one channel, `.png` for one or
/// three channels. Values are clamped to `[0, 255]` and rounded.
pub fn write_image(image: &SquareImage, path: &Path) -> Result<()> {
    if has_extension(path, "pgm") {
        return write_pgm(image, path);
    }
    if !has_extension(path, "png") {
        return Err(Error::invalid_argument(format!(
            "unsupported output image format: {}",
            path.display()
        )));
    }
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| v.clamp(0.0, 255.0).round() as u8)
        .collect();
    let (w, h) = (image.width() as u32, image.height() as u32);
    match image.channels() {
        1 => {
            let buf = image::GrayImage::from_raw(w, h, bytes)
                .expect("buffer length matches dimensions");
            buf.save(path)?;
        }
        3 => {
            let buf = image::RgbImage::from_raw(w, h, bytes)
                .expect("buffer length matches dimensions");
            buf.save(path)?;
        }
        n => {
            return Err(Error::invalid_argument(format!(
                "cannot encode an image with {n} channels"
            )))
        }
    }
    Ok(())
}

/// A labeled image list, as ingested from IDX files or a class directory.
#[derive(Debug, Clone)]
pub struct LabeledImages {
    pub images: Vec<SquareImage>,
    pub labels: Vec<usize>,
    /// Class names by label index. For IDX digits these are "0" through "9".
    pub class_names: Vec<String>,
    /// One stable name per image: `class/file` for directories, the sample
    /// index for IDX archives. Feeds deterministic train/test splitting.
    pub names: Vec<String>,
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn idx_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    let end = at + 4;
    if bytes.len() < end {
        return Err(Error::format(bytes.len() as u64, format!("truncated while reading {what}")));
    }
    Ok(u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]))
}

/// Reads an IDX image file plus its label file (the handwritten-digit
/// dataset layout: big-endian headers, unsigned-byte payloads) into
/// grayscale images with labels 0 through 9.
pub fn ingest_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImages> {
    let img = fs::read(images_path)?;
    let magic = idx_u32(&img, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(0, format!("bad image magic {magic:#010x}")));
    }
    let count = idx_u32(&img, 4, "image count")? as usize;
    let rows = idx_u32(&img, 8, "image rows")? as usize;
    let cols = idx_u32(&img, 12, "image columns")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(8, "image dimensions must be positive".to_string()));
    }
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .and_then(|v| v.checked_add(16))
        .ok_or_else(|| Error::format(4, "image counts overflow".to_string()))?;
    if img.len() != expected {
        return Err(Error::format(
            img.len().min(expected) as u64,
            format!("image payload is {} bytes, expected {expected}", img.len()),
        ));
    }

    let lbl = fs::read(labels_path)?;
    let magic = idx_u32(&lbl, 0, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(0, format!("bad label magic {magic:#010x}")));
    }
    let label_count = idx_u32(&lbl, 4, "label count")? as usize;
    if label_count != count {
        return Err(Error::format(
            4,
            format!("{label_count} labels for {count} images"),
        ));
    }
    let expected = 8 + count;
    if lbl.len() != expected {
        return Err(Error::format(
            lbl.len().min(expected) as u64,
            format!("label payload is {} bytes, expected {expected}", lbl.len()),
        ));
    }

    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let stride = rows * cols;
    for i in 0..count {
        let start = 16 + i * stride;
        let data: Vec<f64> = img[start..start + stride].iter().map(|&b| b as f64).collect();
        images.push(SquareImage::from_data(cols, rows, 1, data)?);
        let label = lbl[8 + i];
        if label > 9 {
            return Err(Error::format((8 + i) as u64, format!("label {label} is not a digit")));
        }
        labels.push(label as usize);
    }
    let names = (0..count).map(|i| format!("{i:05}")).collect();
    Ok(LabeledImages {
        images,
        labels,
        class_names: (0..10).map(|d| d.to_string()).collect(),
        names,
    })
}

/// Reads a directory with one subdirectory per class into a labeled image
/// list. Class indices follow the lexicographic order of the subdirectory
/// names, and files within a class are visited in lexicographic order, so
/// the result is stable across runs. Only `.png` and `.pgm` files are read.
pub fn ingest_image_dir(dir: &Path) -> Result<LabeledImages> {
    let mut class_dirs: Vec<(String, std::path::PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            class_dirs.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    if class_dirs.is_empty() {
        return Err(Error::invalid_argument(format!(
            "{} contains no class subdirectories",
            dir.display()
        )));
    }
    class_dirs.sort_by(|a, b| a.0.cmp(&b.0));
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut names = Vec::new();
    let mut class_names = Vec::with_capacity(class_dirs.len());
    for (label, (name, path)) in class_dirs.into_iter().enumerate() {
        let mut files: Vec<std::path::PathBuf> = fs::read_dir(&path)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| has_extension(p, "png") || has_extension(p, "pgm"))
            .collect();
        files.sort();
        for file in files {
            images.push(read_image(&file)?);
            labels.push(label);
            names.push(format!(
                "{name}/{}",
                file.file_name().unwrap_or_default().to_string_lossy()
            ));
        }
        class_names.push(name);
    }
    if images.is_empty() {
        return Err(Error::invalid_argument(format!(
            "{} contains no readable images",
            dir.display()
        )));
    }
    Ok(LabeledImages { images, labels, class_names, names })
}

/// Deterministic train/test split assignment: hashes a file or sample name
/// (FNV-1a) and puts roughly four fifths of the names in the training split.
pub fn name_in_train_split(name: &str) -> bool {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in name.as_bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash % 10 < 8
}
