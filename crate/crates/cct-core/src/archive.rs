//! Tensor archive file format.
//!
//! Layout: an 8-byte little-endian unsigned header length, a UTF-8 JSON
//! header mapping tensor name to `{dtype, shape, data_offsets: [begin, end)}`,
//! then one contiguous byte buffer. Offsets are relative to the buffer start.
//! Header keys are sorted, so `save(load(x))` is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub data_offsets: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorArchive {
    tensors: BTreeMap<String, TensorInfo>,
    data: Vec<u8>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn info(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.get(name)
    }

    pub fn insert_f32(&mut self, name: &str, shape: &[usize], values: &[f32]) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(Error::Archive(format!("duplicate tensor name {name:?}")));
        }
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(Error::Archive(format!(
                "tensor {name:?}: shape {shape:?} implies {count} values, got {}",
                values.len()
            )));
        }
        let begin = self.data.len();
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        self.tensors.insert(
            name.to_string(),
            TensorInfo {
                dtype: "f32".into(),
                shape: shape.to_vec(),
                data_offsets: [begin, self.data.len()],
            },
        );
        Ok(())
    }

    pub fn get_f32(&self, name: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        let info = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Archive(format!("missing tensor {name:?}")))?;
        let bytes = &self.data[info.data_offsets[0]..info.data_offsets[1]];
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok((info.shape.clone(), values))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.tensors)?;
        let mut out = Vec::with_capacity(8 + header.len() + self.data.len());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Archive("file shorter than 8-byte header length".into()));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if header_len > body.len() {
            return Err(Error::Archive(format!(
                "header length {header_len} exceeds remaining {} bytes",
                body.len()
            )));
        }
        let tensors: BTreeMap<String, TensorInfo> = serde_json::from_slice(&body[..header_len])
            .map_err(|e| Error::Archive(format!("malformed header: {e}")))?;
        let data = body[header_len..].to_vec();

        let mut extents: Vec<(usize, usize, &str)> = Vec::with_capacity(tensors.len());
        for (name, info) in &tensors {
            if info.dtype != "f32" {
                return Err(Error::Archive(format!(
                    "tensor {name:?}: unsupported dtype {:?}",
                    info.dtype
                )));
            }
            let [begin, end] = info.data_offsets;
            if begin > end || end > data.len() {
                return Err(Error::Archive(format!(
                    "tensor {name:?}: extent [{begin}, {end}) outside buffer of {} bytes",
                    data.len()
                )));
            }
            let expect: usize = info.shape.iter().product::<usize>() * 4;
            if end - begin != expect {
                return Err(Error::Archive(format!(
                    "tensor {name:?}: extent {} bytes does not match shape {:?}",
                    end - begin,
                    info.shape
                )));
            }
            extents.push((begin, end, name));
        }
        extents.sort_unstable();
        for w in extents.windows(2) {
            let (_, end_a, name_a) = w[0];
            let (begin_b, _, name_b) = w[1];
            if begin_b < end_a {
                return Err(Error::Archive(format!(
                    "tensors {name_a:?} and {name_b:?} have overlapping extents"
                )));
            }
        }
        Ok(Self { tensors, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}
