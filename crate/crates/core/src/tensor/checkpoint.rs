//! Versioned tensor checkpoint file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PLRC" | u32 version | u32 header_len | header (UTF-8, may be empty)
//! u32 entry_count
//! per entry: u32 name_len | name | u8 dtype | u32 rank | u64 dims[rank] | raw values
//! ```
//!
//! The header holds free-form text; the network stores its configuration
//! there as canonical JSON.

use std::fs;
use std::path::Path;

use super::Tensor;
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};

pub const MAGIC: &[u8; 4] = b"PLRC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to the requested precision (exact when the dtype already matches).
    pub fn to_scalar<S: Scalar>(&self) -> Tensor<S> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: String,
    pub entries: Vec<(String, AnyTensor)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&AnyTensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn encode_checkpoint<S: Scalar>(header: &str, entries: &[(String, &Tensor<S>)]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(header.len() as u32);
    w.bytes(header.as_bytes());
    w.u32(entries.len() as u32);
    for (name, t) in entries {
        w.string(name);
        w.u8(S::DTYPE.tag());
        w.u32(t.shape().len() as u32);
        for &d in t.shape() {
            w.u64(d as u64);
        }
        for &v in t.data() {
            v.write_le(&mut w.buf);
        }
    }
    w.buf
}

fn read_values<S: Scalar>(r: &mut ByteReader, shape: Vec<usize>) -> Result<Tensor<S>> {
    let n: usize = shape.iter().product();
    let raw = r.take(n * S::DTYPE.size())?;
    let data = raw.chunks_exact(S::DTYPE.size()).map(S::read_le).collect();
    Tensor::new(shape, data)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let hlen = r.u32()? as usize;
    let header = String::from_utf8(r.take(hlen)?.to_vec())
        .map_err(|e| Error::Format(format!("checkpoint header is not UTF-8: {e}")))?;
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let tag = r.u8()?;
        let dtype = DType::from_tag(tag)
            .ok_or_else(|| Error::Format(format!("unknown dtype tag {tag} for '{name}'")))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len_u64()).collect::<Result<Vec<_>>>()?;
        let t = match dtype {
            DType::F32 => AnyTensor::F32(read_values(&mut r, shape)?),
            DType::F64 => AnyTensor::F64(read_values(&mut r, shape)?),
        };
        entries.push((name, t));
    }
    r.finish()?;
    Ok(Checkpoint { header, entries })
}

pub fn write_checkpoint<S: Scalar>(
    path: &Path,
    header: &str,
    entries: &[(String, &Tensor<S>)],
) -> Result<()> {
    fs::write(path, encode_checkpoint(header, entries)).map_err(|e| Error::at_path(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::at_path(path, e))?;
    decode_checkpoint(&bytes)
}
