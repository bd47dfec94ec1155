//! Little-endian tensor archive used by checkpoints and prototype archives.
//!
//! Layout:
//!
//! ```text
//! magic   8 bytes   "ENSANT01"
//! dtype   1 byte    4 = f32, 8 = f64
//! count   u32       number of tensors
//! repeat count times:
//!   rank  u32
//!   dims  rank x u32
//!   data  prod(dims) x dtype, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"ENSANT01";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

pub fn encode<T: Scalar>(tensors: &[Tensor<T>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(T::WIDTH as u8);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        debug_assert_eq!(t.dims.iter().product::<usize>(), t.data.len());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated tensor archive".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Vec<Tensor<T>>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let width = r.take(1)?[0] as usize;
    if width != T::WIDTH {
        return Err(Error::Checkpoint(format!(
            "archive holds {width}-byte scalars, expected {}",
            T::WIDTH
        )));
    }
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = r.take(n * T::WIDTH)?;
        let data = raw.chunks_exact(T::WIDTH).map(T::read_le).collect();
        tensors.push(Tensor { dims, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes in tensor archive".into()));
    }
    Ok(tensors)
}

pub fn write<T: Scalar>(path: &Path, tensors: &[Tensor<T>]) -> Result<()> {
    fs::write(path, encode(tensors)).map_err(|e| Error::io(path, e))
}

pub fn read<T: Scalar>(path: &Path) -> Result<Vec<Tensor<T>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn round_trip(data in proptest::collection::vec(-1e6f32..1e6, 0..40), split in 0usize..40) {
            let split = split.min(data.len());
            let tensors = vec![
                Tensor { dims: vec![split], data: data[..split].to_vec() },
                Tensor { dims: vec![1, data.len() - split], data: data[split..].to_vec() },
            ];
            let back: Vec<Tensor<f32>> = decode(&encode(&tensors)).unwrap();
            prop_assert_eq!(back, tensors);
        }
    }

    #[test]
    fn width_mismatch_and_truncation_fail() {
        let bytes = encode(&[Tensor { dims: vec![2], data: vec![1.0f32, 2.0] }]);
        assert!(decode::<f64>(&bytes).is_err());
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
    }
}
