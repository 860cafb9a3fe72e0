use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, MAX_NDIM};

pub const ZTF_MAGIC: &[u8; 4] = b"ZTF1";
const DTYPE_F32: u8 = 1;

/// Serializes a tensor: magic, dtype, rank, `u32` dims, then the `f32`
/// payload, all little-endian.
pub fn encode_ztf(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(6 + 4 * t.ndim() + 4 * t.data().len());
    out.extend_from_slice(ZTF_MAGIC);
    out.push(DTYPE_F32);
    out.push(t.ndim() as u8);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::shape(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn parse_header(bytes: &[u8]) -> Result<(Vec<usize>, usize)> {
    if bytes.len() < 6 {
        return Err(Error::Truncated {
            expected: 6,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != ZTF_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes[4] != DTYPE_F32 {
        return Err(Error::DType(bytes[4]));
    }
    let ndim = bytes[5] as usize;
    if ndim > MAX_NDIM {
        return Err(Error::shape(format!("rank {ndim} exceeds {MAX_NDIM}")));
    }
    let header_len = 6 + 4 * ndim;
    if bytes.len() < header_len {
        return Err(Error::Truncated {
            expected: header_len,
            found: bytes.len(),
        });
    }
    let dims = bytes[6..header_len]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .collect();
    Ok((dims, header_len))
}

pub fn decode_ztf(bytes: &[u8]) -> Result<Tensor> {
    let (dims, header_len) = parse_header(bytes)?;
    let payload = &bytes[header_len..];
    let count: usize = dims.iter().product();
    if payload.len() != count * 4 {
        return Err(Error::shape(format!(
            "dims {dims:?} need {} payload bytes, found {}",
            count * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(dims, data)
}

pub fn read_ztf(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_ztf(&read_bytes(path.as_ref())?)
}

pub fn write_ztf(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_ztf(t)?)
}

/// Reads only the header and returns the dims, without touching the payload.
pub fn read_ztf_header(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 6 + 4 * MAX_NDIM];
    let mut filled = 0;
    while filled < head.len() {
        match file.read(&mut head[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    parse_header(&head[..filled]).map(|(dims, _)| dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_is_thirty_bytes() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_ztf(&t).unwrap();
        assert_eq!(bytes.len(), 4 + 1 + 1 + 8 + 16);
        assert_eq!(&bytes[..6], b"ZTF1\x01\x02");
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(&bytes[26..30], &4.0f32.to_le_bytes());
        assert_eq!(decode_ztf(&bytes).unwrap(), t);
    }

    #[test]
    fn rejects_bad_headers() {
        let t = Tensor::new(vec![3], vec![0.5; 3]).unwrap();
        let mut bytes = encode_ztf(&t).unwrap();
        bytes[3] = b'2';
        assert!(matches!(decode_ztf(&bytes), Err(Error::BadMagic)));
        bytes[3] = b'1';
        bytes[4] = 2;
        assert!(matches!(decode_ztf(&bytes), Err(Error::DType(2))));
        bytes[4] = 1;
        bytes.pop();
        assert!(matches!(decode_ztf(&bytes), Err(Error::Shape(_))));
    }
}
