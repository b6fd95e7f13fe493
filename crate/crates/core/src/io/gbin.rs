//! GBIN: `"GBIN"`, u8 dtype code (0 = f32, 1 = f64, 2 = u8), u8 rank,
//! rank x u64 little-endian dims, then the row-major little-endian payload.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GBIN";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
    U8 = 2,
}

impl Dtype {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            2 => Ok(Dtype::U8),
            c => Err(Error::Format(format!("unknown GBIN dtype code {c}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::U8 => "u8",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbinArray {
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    /// Payload widened to f64.
    pub data: Vec<f64>,
}

pub fn encode(dtype: Dtype, dims: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    let count: usize = dims.iter().product();
    if count != data.len() {
        return Err(Error::Shape(format!("dims {dims:?} vs {} values", data.len())));
    }
    if dims.len() > u8::MAX as usize {
        return Err(Error::Format(format!("rank {} too large", dims.len())));
    }
    let mut out = Vec::with_capacity(6 + 8 * dims.len() + count * dtype.size());
    out.extend_from_slice(MAGIC);
    out.push(dtype as u8);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match dtype {
        Dtype::F32 => data.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::U8 => {
            for &v in data {
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::Format(format!("{v} is not representable as u8")));
                }
                out.push(v as u8);
            }
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<GbinArray> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated GBIN header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("missing GBIN magic".into()));
    }
    let mut hdr = [0u8; 2];
    r.read_exact(&mut hdr).map_err(|_| Error::Format("truncated GBIN header".into()))?;
    let dtype = Dtype::from_code(hdr[0])?;
    let rank = hdr[1] as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|_| Error::Format("truncated GBIN dims".into()))?;
        dims.push(u64::from_le_bytes(b) as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("GBIN dims overflow".into()))?;
    let need = count.checked_mul(dtype.size()).ok_or_else(|| Error::Format("GBIN payload overflow".into()))?;
    if r.len() != need {
        return Err(Error::Format(format!("GBIN payload is {} bytes, dims need {need}", r.len())));
    }
    let data = match dtype {
        Dtype::F32 => r.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect(),
        Dtype::F64 => r.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect(),
        Dtype::U8 => r.iter().map(|&b| b as f64).collect(),
    };
    Ok(GbinArray { dtype, dims, data })
}

pub fn write_gbin(path: impl AsRef<Path>, dtype: Dtype, dims: &[usize], data: &[f64]) -> Result<()> {
    let bytes = encode(dtype, dims, data)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_gbin(path: impl AsRef<Path>) -> Result<GbinArray> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let b = encode(Dtype::U8, &[2, 3], &[0.0, 1.0, 2.0, 3.0, 4.0, 255.0]).unwrap();
        assert_eq!(&b[..4], b"GBIN");
        assert_eq!(b[4], 2);
        assert_eq!(b[5], 2);
        assert_eq!(&b[6..14], &2u64.to_le_bytes());
        assert_eq!(&b[14..22], &3u64.to_le_bytes());
        assert_eq!(&b[22..], &[0, 1, 2, 3, 4, 255]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"GBIM\x01\x00").is_err());
        assert!(decode(b"GBIN\x07\x00").is_err());
        let mut b = encode(Dtype::F64, &[3], &[1.0, 2.0, 3.0]).unwrap();
        b.pop();
        assert!(decode(&b).is_err());
        assert!(encode(Dtype::U8, &[1], &[1.5]).is_err());
    }

    proptest! {
        #[test]
        fn f64_round_trip(dims in proptest::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
            let n: usize = dims.iter().product();
            let mut r = crate::rng::Rng::new(seed);
            let data: Vec<f64> = (0..n).map(|_| r.normal() * 1e3).collect();
            let back = decode(&encode(Dtype::F64, &dims, &data).unwrap()).unwrap();
            prop_assert_eq!(back.dims, dims);
            prop_assert_eq!(back.data, data);
        }
    }
}
