//! Binary weights container.
//!
//! Layout (little-endian): magic `SHRW`, version byte `0x01`, tensor count
//! `u32`, then per tensor: name length `u16`, UTF-8 name, rank `u8`, one `u32`
//! per extent and the `f32` payload.

use std::fs;
use std::path::Path;

use crate::codec::Reader;
use crate::error::{Error, Result};
use crate::tensor_core::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SHRW";
pub const WEIGHTS_VERSION: u8 = 0x01;

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Weights {
    tensors: Vec<(String, Tensor)>,
}

impl Weights {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor; replaces an existing tensor of the same name in place.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.tensors.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.push(WEIGHTS_VERSION);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::InvalidArgument(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            encode_tensor(tensor, &mut out)?;
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "weights file");
        let magic = r.take(4)?;
        if magic != WEIGHTS_MAGIC {
            return Err(Error::format(
                "weights file",
                format!("bad magic {magic:02x?}"),
            ));
        }
        let version = r.u8()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::format(
                "weights file",
                format!("unsupported version {version:#04x}"),
            ));
        }
        let count = r.u32()? as usize;
        let mut weights = Weights::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| Error::format("weights file", format!("tensor name: {e}")))?
                .to_string();
            let tensor = decode_tensor(&mut r)?;
            if weights.get(&name).is_some() {
                return Err(Error::format(
                    "weights file",
                    format!("duplicate tensor `{name}`"),
                ));
            }
            weights.tensors.push((name, tensor));
        }
        r.finish()?;
        Ok(weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

/// Appends `rank u8`, extents and payload. Shared with the sample-matrix files.
pub(crate) fn encode_tensor(tensor: &Tensor, out: &mut Vec<u8>) -> Result<()> {
    let rank = u8::try_from(tensor.rank())
        .map_err(|_| Error::InvalidArgument(format!("rank {} too large", tensor.rank())))?;
    out.push(rank);
    for &d in tensor.shape() {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidArgument(format!("extent {d} too large")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub(crate) fn decode_tensor(r: &mut Reader<'_>) -> Result<Tensor> {
    let rank = r.u8()? as usize;
    if rank == 0 {
        return Err(r.error("tensor of rank 0"));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut numel: usize = 1;
    for _ in 0..rank {
        let d = r.u32()? as usize;
        if d == 0 {
            return Err(r.error("zero extent"));
        }
        numel = numel
            .checked_mul(d)
            .ok_or_else(|| r.error("element count overflows"))?;
        shape.push(d);
    }
    let bytes_needed = numel
        .checked_mul(4)
        .ok_or_else(|| r.error("payload size overflows"))?;
    let payload = r.take(bytes_needed)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(shape, data)
}
