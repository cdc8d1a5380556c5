//! Binary weight snapshots.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"HXNN"
//! version u16
//! count   u32              number of tensor records
//! record  name_len u32, name bytes (UTF-8),
//!         ndim u32, dims u32 * ndim,
//!         values f64 * product(dims)
//! ```
//!
//! Loading is strict: every tensor of the model must be present with
//! matching dimensions, and unknown records are rejected.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hexnn::model::Model;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"HXNN";
pub const WEIGHTS_VERSION: u16 = 1;

pub fn save_weights(model: &Model, path: &Path) -> Result<()> {
    let tensors = model.named_tensors();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(tensors.len()).map_err(|_| {
        Error::invalid_argument("model has too many tensors for the container")
    })?.to_le_bytes())?;
    for (name, dims, values) in tensors {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            let d = u32::try_from(*d)
                .map_err(|_| Error::invalid_argument("tensor dimension exceeds u32"))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
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

    fn read_u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
}

/// Loads a weight snapshot into a model of the matching architecture.
pub fn load_weights(model: &mut Model, path: &Path) -> Result<()> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?), offset: 0 };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if magic != WEIGHTS_MAGIC {
        return Err(Error::format(0, "not a weight snapshot (bad magic)".to_string()));
    }
    let version = r.read_u16("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::format(4, format!("unsupported snapshot version {version}")));
    }
    let count = r.read_u32("tensor count")? as usize;
    let mut records: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    for _ in 0..count {
        let name_at = r.offset;
        let name_len = r.read_u32("tensor name length")? as usize;
        if name_len > 4096 {
            return Err(Error::format(name_at, format!("implausible name length {name_len}")));
        }
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes, "tensor name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format(name_at + 4, "tensor name is not UTF-8".to_string()))?;
        let ndim = r.read_u32("tensor rank")? as usize;
        if ndim > 8 {
            return Err(Error::format(r.offset - 4, format!("implausible tensor rank {ndim}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.read_u32("tensor dimension")? as usize);
        }
        let len: usize = dims.iter().product();
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(r.read_f64("tensor values")?);
        }
        if records.insert(name.clone(), (dims, values)).is_some() {
            return Err(Error::format(name_at, format!("duplicate tensor {name}")));
        }
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(Error::format(r.offset, "trailing data after the last tensor".to_string()));
    }

    let tensors = model.named_tensors_mut();
    if records.len() != tensors.len() {
        let expected: Vec<&str> = tensors.iter().map(|(n, _, _)| n.as_str()).collect();
        let extra: Vec<&String> = records
            .keys()
            .filter(|k| !expected.contains(&k.as_str()))
            .collect();
        if !extra.is_empty() {
            return Err(Error::shape_mismatch(format!(
                "snapshot contains tensors the model lacks: {extra:?}"
            )));
        }
    }
    for (name, dims, values) in tensors {
        let (rec_dims, rec_values) = records.remove(&name).ok_or_else(|| {
            Error::shape_mismatch(format!("snapshot is missing tensor {name}"))
        })?;
        if rec_dims != dims {
            return Err(Error::shape_mismatch(format!(
                "tensor {name} has dims {rec_dims:?} in the snapshot, expected {dims:?}"
            )));
        }
        values.copy_from_slice(&rec_values);
    }
    if let Some(name) = records.keys().next() {
        return Err(Error::shape_mismatch(format!(
            "snapshot contains tensors the model lacks: [{name:?}]"
        )));
    }
    Ok(())
}
