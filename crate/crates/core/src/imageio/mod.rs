//! File formats: binary PGM/PPM images, raw mosaics with JSON sidecars,
//! and the ZTF tensor container used to exchange feature maps.
//!
//! Samples are quantized with round-half-up after clamping, so a file
//! written by this module reads back and rewrites to the same bytes.

mod pnm;
mod raw;
mod ztf;

pub use pnm::{read_image, write_image, BitDepth};
pub use raw::{read_raw, sidecar_path, write_raw, RawSidecar};
pub use ztf::{decode_ztf, encode_ztf, read_ztf, read_ztf_header, write_ztf, ZTF_MAGIC};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `floor(v * maxval + 0.5)` after clamping `v` to `[0, 1]`.
#[inline]
pub(crate) fn quantize_unit(v: f32, maxval: u32) -> u32 {
    let v = v.clamp(0.0, 1.0) as f64;
    (v * maxval as f64 + 0.5).floor() as u32
}
