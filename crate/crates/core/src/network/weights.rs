//! Named-tensor weight container and its binary file format.
//!
//! Layout (little-endian, no padding): magic `SSNW`, `u32` version = 1,
//! `u32` tensor count, then per tensor: `u32` name length, UTF-8 name,
//! `u8` rank, rank x `u32` dims, and `dims-product` x `f32` row-major
//! payload.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result, WeightsError};
use crate::tensor::DenseArray;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"SSNW";
pub const WEIGHTS_VERSION: u32 = 1;

/// Ordered map of tensor name to value, covering every parameter of the
/// network. Iteration order is lexicographic by name, which fixes the
/// on-disk layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SSNetWeights {
    tensors: BTreeMap<String, DenseArray>,
}

impl SSNetWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: DenseArray) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray> {
        self.tensors.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<DenseArray> {
        self.tensors.remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Serializes to the binary format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.rank() as u8);
            for &dim in tensor.shape() {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses the binary format, rejecting bad magic, unknown versions,
    /// truncation (naming the tensor being read), and trailing bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize, ctx: &'static str| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(WeightsError::TruncatedHeader { context: ctx }.into());
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let take_u32 = |pos: &mut usize, ctx: &'static str| -> Result<u32> {
            let s = take(pos, 4, ctx)?;
            Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        };

        let magic = take(&mut pos, 4, "magic")?;
        if magic != WEIGHTS_MAGIC {
            return Err(WeightsError::BadMagic {
                found: [magic[0], magic[1], magic[2], magic[3]],
            }
            .into());
        }
        let version = take_u32(&mut pos, "version")?;
        if version != WEIGHTS_VERSION {
            return Err(WeightsError::UnsupportedVersion { found: version }.into());
        }
        let count = take_u32(&mut pos, "tensor count")? as usize;

        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = take_u32(&mut pos, "name length")? as usize;
            let name_bytes = take(&mut pos, name_len, "name")?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| WeightsError::InvalidName)?
                .to_string();
            let rank = take(&mut pos, 1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let dim = if pos + 4 > bytes.len() {
                    return Err(WeightsError::TruncatedTensor { name }.into());
                } else {
                    let s = &bytes[pos..pos + 4];
                    pos += 4;
                    u32::from_le_bytes([s[0], s[1], s[2], s[3]]) as usize
                };
                if dim == 0 {
                    return Err(WeightsError::ZeroDim { name }.into());
                }
                shape.push(dim);
            }
            let n: usize = shape.iter().product();
            if pos + 4 * n > bytes.len() {
                return Err(WeightsError::TruncatedTensor { name }.into());
            }
            let mut data = Vec::with_capacity(n);
            for i in 0..n {
                let s = &bytes[pos + 4 * i..pos + 4 * i + 4];
                data.push(f32::from_le_bytes([s[0], s[1], s[2], s[3]]));
            }
            pos += 4 * n;
            tensors.insert(name, DenseArray::new(shape, data)?);
        }
        if pos != bytes.len() {
            return Err(WeightsError::TrailingBytes {
                extra: bytes.len() - pos,
            }
            .into());
        }
        Ok(Self { tensors })
    }

    /// Writes the container atomically (temp file + rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(WeightsError::Io)?)
            .read_to_end(&mut bytes)
            .map_err(WeightsError::Io)?;
        Self::from_bytes(&bytes)
    }
}

/// Removes tensors from a weight container while checking shapes,
/// tracking what remains so completeness can be enforced afterwards.
pub(crate) struct Loader {
    weights: SSNetWeights,
}

impl Loader {
    pub fn new(weights: SSNetWeights) -> Self {
        Self { weights }
    }

    pub fn take(&mut self, name: &str, shape: &[usize]) -> Result<DenseArray> {
        let tensor = self
            .weights
            .remove(name)
            .ok_or_else(|| Error::MissingTensor { name: name.into() })?;
        if tensor.shape() != shape {
            return Err(Error::TensorShape {
                name: name.into(),
                expected: shape.to_vec(),
                got: tensor.shape().to_vec(),
            });
        }
        Ok(tensor)
    }

    /// Errors if any tensor was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some(name) = self.weights.names().next() {
            return Err(Error::UnexpectedTensor { name: name.into() });
        }
        Ok(())
    }
}
