//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "GCLCKPT\0"
//! version    u32      currently 1
//! meta_len   u32      followed by meta_len bytes of UTF-8 metadata
//! count      u32
//! manifest   count × { name_len u16, name bytes, dtype u8, ndim u8, dims u64 × ndim }
//! payload    raw little-endian arrays in manifest order
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::tensor::{DType, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"GCLCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic header)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint has no entry named {0:?}")]
    Missing(String),
    #[error("entry {name:?}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("entry {name:?}: expected scalar type {expected}, found {found}")]
    TypeMismatch {
        name: String,
        expected: &'static str,
        found: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl NamedTensor {
    pub fn from_tensor<S: Real>(name: impl Into<String>, t: &Tensor<S>) -> Self {
        let data = match S::DTYPE {
            DType::F32 => TensorData::F32(t.data().iter().map(|x| x.as_f64() as f32).collect()),
            DType::F64 => TensorData::F64(t.data().iter().map(|x| x.as_f64()).collect()),
        };
        Self {
            name: name.into(),
            shape: t.shape().to_vec(),
            data,
        }
    }

    /// Converts back to a typed tensor; the stored scalar type must be `S`.
    pub fn to_tensor<S: Real>(&self) -> Result<Tensor<S>, CheckpointError> {
        if self.data.dtype() != S::DTYPE {
            return Err(CheckpointError::TypeMismatch {
                name: self.name.clone(),
                expected: S::DTYPE.name(),
                found: self.data.dtype().name(),
            });
        }
        let values: Vec<S> = match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| S::of(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| S::of(x)).collect(),
        };
        Tensor::new(self.shape.clone(), values)
            .map_err(|e| CheckpointError::Malformed(format!("{}: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub entries: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(metadata: impl Into<String>) -> Self {
        Self {
            metadata: metadata.into(),
            entries: Vec::new(),
        }
    }

    pub fn push<S: Real>(&mut self, name: impl Into<String>, t: &Tensor<S>) {
        self.entries.push(NamedTensor::from_tensor(name, t));
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Fetches `name`, rejecting a different shape or scalar type.
    pub fn tensor<S: Real>(&self, name: &str, expected_shape: &[usize]) -> Result<Tensor<S>, CheckpointError> {
        let entry = self
            .get(name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        if entry.shape != expected_shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: expected_shape.to_vec(),
                found: entry.shape.clone(),
            });
        }
        entry.to_tensor()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        let mut header = Vec::new();
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&VERSION.to_le_bytes());
        let meta = self.metadata.as_bytes();
        header.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        header.extend_from_slice(meta);
        header.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            let name = e.name.as_bytes();
            if name.len() > u16::MAX as usize || e.shape.len() > u8::MAX as usize {
                return Err(CheckpointError::Malformed(format!("entry {:?} too large", e.name)));
            }
            if e.shape.iter().product::<usize>() != e.data.len() {
                return Err(CheckpointError::Malformed(format!("entry {:?} shape/data disagree", e.name)));
            }
            header.extend_from_slice(&(name.len() as u16).to_le_bytes());
            header.extend_from_slice(name);
            header.push(e.data.dtype().tag());
            header.push(e.shape.len() as u8);
            for &d in &e.shape {
                header.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        w.write_all(&header)?;
        let mut buf = Vec::new();
        for e in &self.entries {
            buf.clear();
            match &e.data {
                TensorData::F32(v) => v.iter().for_each(|x| x.write_le(&mut buf)),
                TensorData::F64(v) => v.iter().for_each(|x| x.write_le(&mut buf)),
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let meta_len = cur.u32()? as usize;
        let metadata = String::from_utf8(cur.take(meta_len)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("metadata is not UTF-8".into()))?;
        let count = cur.u32()? as usize;
        let mut manifest = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Malformed("entry name is not UTF-8".into()))?;
            let tag = cur.take(1)?[0];
            let dtype = DType::from_tag(tag)
                .ok_or_else(|| CheckpointError::Malformed(format!("unknown scalar type tag {tag}")))?;
            let ndim = cur.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.u64()? as usize);
            }
            manifest.push((name, dtype, shape));
        }
        let mut entries = Vec::with_capacity(manifest.len());
        for (name, dtype, shape) in manifest {
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CheckpointError::Malformed(format!("entry {name:?} is too large")))?;
            let size = dtype.size_of();
            let raw = cur.take(len.checked_mul(size).ok_or_else(|| {
                CheckpointError::Malformed(format!("entry {name:?} is too large"))
            })?)?;
            let data = match dtype {
                DType::F32 => TensorData::F32(raw.chunks_exact(4).map(f32::read_le).collect()),
                DType::F64 => TensorData::F64(raw.chunks_exact(8).map(f64::read_le).collect()),
            };
            entries.push(NamedTensor { name, shape, data });
        }
        if cur.pos != bytes.len() {
            return Err(CheckpointError::Malformed("trailing bytes after payload".into()));
        }
        Ok(Self { metadata, entries })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Malformed("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new("{\"epoch\":3}");
        ck.push("w", &Tensor::<f64>::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-300, f64::MAX]).unwrap());
        ck.push("b", &Tensor::<f32>::new(vec![1, 2], vec![0.25, -7.0]).unwrap());
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let w: Tensor<f64> = back.tensor("w", &[2, 3]).unwrap();
        assert_eq!(w.data()[4].to_bits(), 1e-300f64.to_bits());
    }

    #[test]
    fn rejects_shape_and_type_mismatch() {
        let ck = sample();
        assert!(matches!(
            ck.tensor::<f64>("w", &[3, 2]),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            ck.tensor::<f64>("b", &[1, 2]),
            Err(CheckpointError::TypeMismatch { .. })
        ));
        assert!(matches!(ck.tensor::<f64>("nope", &[1]), Err(CheckpointError::Missing(_))));
    }

    #[test]
    fn rejects_bad_header_and_truncation() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::read_from(bad.as_slice()), Err(CheckpointError::BadMagic)));
        let mut future = buf.clone();
        future[8] = 9;
        assert!(matches!(
            Checkpoint::read_from(future.as_slice()),
            Err(CheckpointError::UnsupportedVersion(9))
        ));
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(Checkpoint::read_from(truncated), Err(CheckpointError::Malformed(_))));
    }
}
