//! AVOL: a minimal little-endian container for dense arrays.
//!
//! Layout: magic `AVOL`, version byte (1), dtype byte (1 = f32, 2 = u8), rank
//! byte, one reserved zero byte, then rank u32 extents, then the C-ordered
//! payload. Every way a file can be malformed maps to its own error variant
//! so callers can report precisely what is wrong.

use crate::error::{Error, Result, VolumeError};
use crate::tensor::Tensor;
use std::path::Path;

const MAGIC: [u8; 4] = *b"AVOL";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 8;
const MAX_RANK: usize = 8;

/// Element types AVOL can store.
pub trait AvolElement: Copy {
    const CODE: u8;
    const NAME: &'static str;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl AvolElement for f32 {
    const CODE: u8 = 1;
    const NAME: &'static str = "f32";
    const SIZE: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl AvolElement for u8 {
    const CODE: u8 = 2;
    const NAME: &'static str = "u8";
    const SIZE: usize = 1;

    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }

    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

fn dtype_name(code: u8) -> &'static str {
    match code {
        1 => f32::NAME,
        2 => u8::NAME,
        _ => "unknown",
    }
}

pub fn encode<E: AvolElement>(t: &Tensor<E>) -> Vec<u8> {
    let shape = t.shape();
    assert!(shape.len() <= MAX_RANK, "rank {} exceeds AVOL maximum", shape.len());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * shape.len() + t.numel() * E::SIZE);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(E::CODE);
    out.push(shape.len() as u8);
    out.push(0);
    for &ext in shape {
        out.extend_from_slice(&(ext as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn decode<E: AvolElement>(bytes: &[u8]) -> std::result::Result<Tensor<E>, VolumeError> {
    if bytes.len() < HEADER_LEN {
        return Err(VolumeError::PayloadShort { expected: HEADER_LEN, found: bytes.len() });
    }
    if bytes[..4] != MAGIC {
        return Err(VolumeError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(VolumeError::BadVersion(bytes[4]));
    }
    let dtype = bytes[5];
    if dtype != f32::CODE && dtype != u8::CODE {
        return Err(VolumeError::BadDtype(dtype));
    }
    if dtype != E::CODE {
        return Err(VolumeError::DtypeMismatch {
            found: dtype_name(dtype),
            requested: E::NAME,
        });
    }
    let rank = bytes[6] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(VolumeError::BadDims(format!("rank {rank} outside 1..={MAX_RANK}")));
    }
    if bytes[7] != 0 {
        return Err(VolumeError::BadReserved);
    }
    let dims_end = HEADER_LEN + 4 * rank;
    if bytes.len() < dims_end {
        return Err(VolumeError::PayloadShort { expected: dims_end, found: bytes.len() });
    }
    let mut shape = Vec::with_capacity(rank);
    let mut numel: usize = 1;
    for i in 0..rank {
        let off = HEADER_LEN + 4 * i;
        let ext =
            u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
                as usize;
        if ext == 0 {
            return Err(VolumeError::BadDims(format!("zero extent on axis {i}")));
        }
        numel = numel
            .checked_mul(ext)
            .ok_or_else(|| VolumeError::BadDims(format!("extent product overflows at axis {i}")))?;
        shape.push(ext);
    }
    let expected = dims_end + numel * E::SIZE;
    if bytes.len() < expected {
        return Err(VolumeError::PayloadShort { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(VolumeError::PayloadLong { extra: bytes.len() - expected });
    }
    let mut data = Vec::with_capacity(numel);
    for i in 0..numel {
        data.push(E::read_le(&bytes[dims_end + i * E::SIZE..]));
    }
    Ok(Tensor::from_vec(&shape, data).expect("shape and buffer were checked"))
}

pub fn write<E: AvolElement>(path: &Path, t: &Tensor<E>) -> Result<()> {
    std::fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read<E: AvolElement>(path: &Path) -> Result<Tensor<E>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(Error::Volume)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trip_preserves_bits() {
        let t = Tensor::from_vec(
            &[2, 3],
            vec![0.0f32, -0.0, 1.5, f32::MIN_POSITIVE, -1e30, 3.141592],
        )
        .unwrap();
        let back: Tensor<f32> = decode(&encode(&t)).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn u8_round_trip() {
        let t = Tensor::from_vec(&[4, 1, 2], (0..8).map(|v| (v * 31) as u8).collect()).unwrap();
        let back: Tensor<u8> = decode(&encode(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn encoding_is_little_endian_with_pinned_header() {
        let t = Tensor::from_vec(&[2], vec![1.0f32, 0.0]).unwrap();
        let bytes = encode(&t);
        assert_eq!(&bytes[..8], &[0x41, 0x56, 0x4F, 0x4C, 1, 1, 1, 0]); // "AVOL", v1, f32, rank 1
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]); // extent 2
        assert_eq!(&bytes[12..16], &[0, 0, 0x80, 0x3F]); // 1.0f32 LE
    }

    #[test]
    fn each_defect_gets_its_own_error() {
        let good = encode(&Tensor::from_vec(&[2], vec![1.0f32, 2.0]).unwrap());

        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(decode::<f32>(&bad).unwrap_err(), VolumeError::BadMagic);

        let mut bad = good.clone();
        bad[4] = 9;
        assert_eq!(decode::<f32>(&bad).unwrap_err(), VolumeError::BadVersion(9));

        let mut bad = good.clone();
        bad[5] = 7;
        assert_eq!(decode::<f32>(&bad).unwrap_err(), VolumeError::BadDtype(7));

        assert_eq!(
            decode::<u8>(&good).unwrap_err(),
            VolumeError::DtypeMismatch { found: "f32", requested: "u8" }
        );

        let mut bad = good.clone();
        bad[6] = 0;
        assert!(matches!(decode::<f32>(&bad).unwrap_err(), VolumeError::BadDims(_)));

        let mut bad = good.clone();
        bad[7] = 1;
        assert_eq!(decode::<f32>(&bad).unwrap_err(), VolumeError::BadReserved);

        let mut bad = good.clone();
        bad.pop();
        assert!(matches!(
            decode::<f32>(&bad).unwrap_err(),
            VolumeError::PayloadShort { .. }
        ));

        let mut bad = good.clone();
        bad.push(0);
        assert_eq!(decode::<f32>(&bad).unwrap_err(), VolumeError::PayloadLong { extra: 1 });

        assert!(matches!(
            decode::<f32>(&good[..6]).unwrap_err(),
            VolumeError::PayloadShort { expected: 8, found: 6 }
        ));
    }

    #[test]
    fn zero_extent_is_rejected() {
        let good = encode(&Tensor::from_vec(&[1], vec![1.0f32]).unwrap());
        let mut bad = good.clone();
        bad[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode::<f32>(&bad).unwrap_err(), VolumeError::BadDims(_)));
    }

    #[test]
    fn file_round_trip_and_missing_file_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.avol");
        let t = Tensor::from_vec(&[2, 2], vec![1u8, 2, 3, 4]).unwrap();
        write(&path, &t).unwrap();
        assert_eq!(read::<u8>(&path).unwrap(), t);
        let err = read::<u8>(&dir.path().join("absent.avol")).unwrap_err();
        assert!(err.to_string().contains("absent.avol"), "{err}");
    }
}
