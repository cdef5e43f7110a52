//! `.apna` little-endian array container.
//!
//! ```text
//! 0   4 bytes   magic "APNA"
//! 4   u8        dtype: 1 = f32, 2 = f64
//! 5   u8        ndim
//! 6   u16       reserved, zero
//! 8   u64 × ndim dimensions, outermost first
//! ..  data      row-major, little-endian
//! ```

use std::path::Path;

use crate::error::{Error, Result};

pub const ARRAY_MAGIC: &[u8; 4] = b"APNA";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            ArrayData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            ArrayData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self> {
        if shape.len() > u8::MAX as usize {
            return Err(Error::ArrayFormat(format!("{} dimensions exceed 255", shape.len())));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ArrayFormat(format!("shape {shape:?} does not hold {} values", data.len())));
        }
        Ok(Array { shape, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.shape.len() + 8 * self.data.len());
        out.extend_from_slice(ARRAY_MAGIC);
        out.push(self.data.dtype() as u8);
        out.push(self.shape.len() as u8);
        out.extend_from_slice(&0u16.to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::ArrayFormat(m);
        if b.len() < 8 || &b[..4] != ARRAY_MAGIC {
            return Err(bad("missing APNA magic".into()));
        }
        let dtype = match b[4] {
            1 => Dtype::F32,
            2 => Dtype::F64,
            d => return Err(bad(format!("unknown dtype {d}"))),
        };
        let ndim = b[5] as usize;
        if u16::from_le_bytes([b[6], b[7]]) != 0 {
            return Err(bad("reserved header field is not zero".into()));
        }
        let header = 8 + 8 * ndim;
        if b.len() < header {
            return Err(bad("truncated header".into()));
        }
        let shape: Vec<usize> = b[8..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
            .collect();
        let width = if dtype == Dtype::F32 { 4 } else { 8 };
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| bad(format!("shape {shape:?} overflows")))?;
        let body = &b[header..];
        if body.len() != n {
            return Err(bad(format!("expected {n} data bytes for shape {shape:?}, found {}", body.len())));
        }
        let data = match dtype {
            Dtype::F32 => ArrayData::F32(
                body.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            Dtype::F64 => ArrayData::F64(
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Array::new(shape, data)
    }
}

pub fn write_array(path: impl AsRef<Path>, array: &Array) -> Result<()> {
    std::fs::write(path, array.to_bytes())?;
    Ok(())
}

pub fn read_array(path: impl AsRef<Path>) -> Result<Array> {
    Array::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let a = Array::new(vec![2, 3], ArrayData::F32(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let b = a.to_bytes();
        assert_eq!(&b[..8], b"APNA\x01\x02\x00\x00");
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
        assert_eq!(&b[16..24], &3u64.to_le_bytes());
        assert_eq!(&b[24..28], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 24 + 6 * 4);
    }

    #[test]
    fn malformed_inputs() {
        let a = Array::new(vec![2], ArrayData::F64(vec![1.0, 2.0])).unwrap().to_bytes();
        assert!(Array::from_bytes(&a[..a.len() - 1]).is_err());
        let mut d = a.clone();
        d[4] = 7;
        assert!(Array::from_bytes(&d).is_err());
        let mut r = a.clone();
        r[6] = 1;
        assert!(Array::from_bytes(&r).is_err());
        assert!(Array::from_bytes(b"NOPE").is_err());
        assert!(Array::new(vec![3], ArrayData::F32(vec![0.0])).is_err());
    }

    #[test]
    fn scalar_array() {
        let a = Array::new(vec![], ArrayData::F64(vec![4.5])).unwrap();
        assert_eq!(Array::from_bytes(&a.to_bytes()).unwrap(), a);
    }

    proptest! {
        #[test]
        fn roundtrip(rows in 0usize..6, cols in 0usize..6, seed in any::<u32>(), f32s in any::<bool>()) {
            let n = rows * cols;
            let vals: Vec<f64> = (0..n).map(|i| (i as f64 + seed as f64).sin()).collect();
            let data = if f32s {
                ArrayData::F32(vals.iter().map(|&v| v as f32).collect())
            } else {
                ArrayData::F64(vals)
            };
            let a = Array::new(vec![rows, cols], data).unwrap();
            prop_assert_eq!(Array::from_bytes(&a.to_bytes()).unwrap(), a);
        }
    }
}
