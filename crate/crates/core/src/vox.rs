//! VOX1 volume container.
//!
//! Layout (little-endian): magic `VOX1`, u8 dtype code (0 = f32), u8 rank,
//! rank×u64 dims, then the raw f32 payload. Payload length is always
//! 4·product(dims) and the format round-trips bit-exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

const MAGIC: &[u8; 4] = b"VOX1";
const DTYPE_F32: u8 = 0;

pub fn to_bytes<E: Element>(t: &Tensor<E>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(6 + 8 * t.rank() + 4 * t.len());
    buf.extend_from_slice(MAGIC);
    buf.push(DTYPE_F32);
    buf.push(t.rank() as u8);
    for &d in t.dims() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
    }
    buf
}

pub fn from_bytes(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a VOX1 volume".into()));
    }
    if bytes[4] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {}", bytes[4])));
    }
    let rank = bytes[5] as usize;
    let header = 6 + 8 * rank;
    if bytes.len() < header {
        return Err(Error::Format("truncated VOX1 header".into()));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 6 + 8 * i;
        dims.push(u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize);
    }
    let n: usize = dims.iter().product();
    if bytes.len() != header + 4 * n {
        return Err(Error::Format(format!(
            "VOX1 payload length {} does not match dims {dims:?}",
            bytes.len() - header
        )));
    }
    let data: Vec<f32> = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(dims, data)
}

pub fn save<E: Element>(path: &Path, t: &Tensor<E>) -> Result<()> {
    Ok(std::fs::write(path, to_bytes(t))?)
}

pub fn load(path: &Path) -> Result<Tensor<f32>> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let t = Tensor::<f32>::uniform(&[3, 4, 5], -10.0, 10.0, &mut rng);
        let bytes = to_bytes(&t);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.dims(), t.dims());
        let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn payload_length_mismatch_is_rejected() {
        let t = Tensor::<f32>::zeros(&[2, 2]);
        let mut bytes = to_bytes(&t);
        bytes.pop();
        assert!(from_bytes(&bytes).is_err());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let t = Tensor::<f32>::zeros(&[2]);
        let mut bytes = to_bytes(&t);
        bytes[0] = b'X';
        assert!(from_bytes(&bytes).is_err());
    }
}
