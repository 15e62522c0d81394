//! Flat named-tensor container.
//!
//! Layout (little endian): magic `VGTENSOR`, `u32` version, `u32` count,
//! then per tensor in name order: `u32` name length, UTF-8 name, `u64` rows,
//! `u64` cols, `rows * cols` `f64` values.

use super::{Tensor, TensorError};
use std::collections::BTreeMap;

pub const MAGIC: &[u8; 8] = b"VGTENSOR";
pub const VERSION: u32 = 1;

pub fn write_tensors(tensors: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TensorError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TensorError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses a container, returning the tensors and the number of bytes used.
pub fn read_tensors(bytes: &[u8]) -> Result<(BTreeMap<String, Tensor>, usize), TensorError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| TensorError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| TensorError::Checkpoint(format!("{name}: shape overflow")))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| TensorError::Checkpoint("size overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.insert(name, Tensor::from_vec(rows, cols, data)?);
    }
    Ok((out, r.pos))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_byte_stable() {
        let mut m = BTreeMap::new();
        m.insert("b".to_string(), Tensor::from_vec(1, 2, vec![1.5, -0.25]).unwrap());
        m.insert("a".to_string(), Tensor::identity(2));
        let bytes = write_tensors(&m);
        assert_eq!(bytes, write_tensors(&m.clone()));
        let (back, used) = read_tensors(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(used, bytes.len());
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        let mut m = BTreeMap::new();
        m.insert("w".to_string(), Tensor::zeros(2, 2));
        let bytes = write_tensors(&m);
        assert!(read_tensors(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_tensors(&bad).is_err());
    }
}
