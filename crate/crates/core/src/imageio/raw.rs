use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pnm::{decode_samples, encode_samples};
use super::{read_bytes, write_bytes};
use crate::bayer::{BayerMosaic, Cfa, RawMetadata};
use crate::error::{Error, Result};

/// JSON metadata stored next to a raw PGM as `<path>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSidecar {
    pub cfa: String,
    pub black_level: f32,
    pub white_level: f32,
    pub wb_gains: [f32; 3],
    pub focal_mm: f32,
}

impl RawSidecar {
    pub fn to_metadata(&self) -> Result<RawMetadata> {
        let meta = RawMetadata {
            cfa: self.cfa.parse::<Cfa>()?,
            black_level: self.black_level,
            white_level: self.white_level,
            wb_gains: self.wb_gains,
            focal_mm: self.focal_mm,
        };
        meta.validate()?;
        Ok(meta)
    }
}

impl From<&RawMetadata> for RawSidecar {
    fn from(m: &RawMetadata) -> Self {
        Self {
            cfa: m.cfa.as_str().to_string(),
            black_level: m.black_level,
            white_level: m.white_level,
            wb_gains: m.wb_gains,
            focal_mm: m.focal_mm,
        }
    }
}

/// `frame.pgm` -> `frame.pgm.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Reads a 16-bit PGM mosaic and its sidecar. Sample values are kept on the
/// sensor scale, unnormalized.
pub fn read_raw(path: impl AsRef<Path>) -> Result<BayerMosaic> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    if !side.is_file() {
        return Err(Error::MissingSidecar(side));
    }
    let sidecar: RawSidecar = serde_json::from_slice(&read_bytes(&side)?)
        .map_err(|e| Error::Sidecar(format!("{}: {e}", side.display())))?;
    let meta = sidecar.to_metadata()?;

    let bytes = read_bytes(path)?;
    let (header, samples) = decode_samples(&bytes)?;
    if header.channels != 1 {
        return Err(Error::Format("raw mosaic must be a P5 graymap".into()));
    }
    if header.maxval != 65535 {
        return Err(Error::Format(format!(
            "raw mosaic maxval must be 65535, found {}",
            header.maxval
        )));
    }
    let data = samples.into_iter().map(|s| s as f32).collect();
    BayerMosaic::new(header.height, header.width, data, meta)
}

/// Writes the mosaic as a 16-bit PGM plus sidecar. Samples are rounded
/// half-up and clamped to `[0, 65535]`.
pub fn write_raw(mosaic: &BayerMosaic, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_samples(
        1,
        mosaic.width(),
        mosaic.height(),
        65535,
        mosaic
            .data()
            .iter()
            .map(|&v| (v as f64 + 0.5).floor().clamp(0.0, 65535.0) as u32),
    );
    write_bytes(path, &bytes)?;
    let sidecar = RawSidecar::from(mosaic.meta());
    let json = serde_json::to_vec_pretty(&sidecar)
        .map_err(|e| Error::Sidecar(e.to_string()))?;
    write_bytes(&sidecar_path(path), &json)
}
