//! Binary weight files.
//!
//! Layout, little endian: magic `PCWT`, `u32` version, `u8` dtype tag, the
//! 32-byte spec hash, `u32` tensor count, then per tensor a `u32` rank, the
//! `u64` extents and the raw values.

use std::io::{Read, Write};

use super::{NnError, Tensor};
use crate::scalar::{DType, Scalar};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"PCWT";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile<T> {
    pub spec_hash: [u8; 32],
    pub tensors: Vec<Tensor<T>>,
}

pub fn write_weights<T: Scalar>(mut out: impl Write, spec_hash: &[u8; 32], tensors: &[Tensor<T>]) -> Result<(), NnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    buf.push(T::DTYPE as u8);
    buf.extend_from_slice(spec_hash);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            v.write_le(&mut buf);
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn read_values<S: Scalar, T: Scalar>(cur: &mut Cursor<'_>, count: usize) -> Result<Vec<T>, NnError> {
    let bytes = cur.take(count.checked_mul(S::BYTES).ok_or_else(|| NnError::Format("tensor too large".into()))?)?;
    Ok(bytes.chunks_exact(S::BYTES).map(|b| T::from_f64_lossy(S::read_le(b).as_f64())).collect())
}

/// Read a weight file, converting values to `T` if the file was stored in
/// the other precision. With `expected_hash` set, a file written for a
/// different spec is rejected.
pub fn read_weights<T: Scalar>(mut input: impl Read, expected_hash: Option<&[u8; 32]>) -> Result<WeightFile<T>, NnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != WEIGHTS_MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let dtype = DType::from_tag(cur.take(1)?[0]).ok_or_else(|| NnError::Format("unknown dtype".into()))?;
    let spec_hash: [u8; 32] = cur.take(32)?.try_into().expect("32 bytes");
    if let Some(expected) = expected_hash {
        if *expected != spec_hash {
            return Err(NnError::SpecHashMismatch { expected: hex::encode(expected), found: hex::encode(spec_hash) });
        }
    }
    let count = cur.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = cur.u32()? as usize;
        if rank > 8 {
            return Err(NnError::Format(format!("tensor rank {rank} too large")));
        }
        let shape = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let len = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
        let len = len.ok_or_else(|| NnError::Format("tensor too large".into()))?;
        let data = match dtype {
            DType::F32 => read_values::<f32, T>(&mut cur, len)?,
            DType::F64 => read_values::<f64, T>(&mut cur, len)?,
        };
        tensors.push(Tensor::from_vec(&shape, data)?);
    }
    if cur.pos != bytes.len() {
        return Err(NnError::Format("trailing bytes".into()));
    }
    Ok(WeightFile { spec_hash, tensors })
}
