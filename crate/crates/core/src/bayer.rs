//! Bayer colour-filter-array mosaics and their capture metadata.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2x2 Bayer colour filter arrangement, named in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Cfa {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl Cfa {
    pub const ALL: [Cfa; 4] = [Cfa::Rggb, Cfa::Bggr, Cfa::Grbg, Cfa::Gbrg];

    /// Colour index (0 = R, 1 = G, 2 = B) of each 2x2 position, raster order.
    pub fn pattern(self) -> [usize; 4] {
        match self {
            Cfa::Rggb => [0, 1, 1, 2],
            Cfa::Bggr => [2, 1, 1, 0],
            Cfa::Grbg => [1, 0, 2, 1],
            Cfa::Gbrg => [1, 2, 0, 1],
        }
    }

    /// Colour index recorded at mosaic position `(y, x)`.
    #[inline]
    pub fn color_at(self, y: usize, x: usize) -> usize {
        self.pattern()[((y & 1) << 1) | (x & 1)]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cfa::Rggb => "RGGB",
            Cfa::Bggr => "BGGR",
            Cfa::Grbg => "GRBG",
            Cfa::Gbrg => "GBRG",
        }
    }
}

impl fmt::Display for Cfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cfa {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(Cfa::Rggb),
            "BGGR" => Ok(Cfa::Bggr),
            "GRBG" => Ok(Cfa::Grbg),
            "GBRG" => Ok(Cfa::Gbrg),
            _ => Err(Error::UnknownCfa(s.to_string())),
        }
    }
}

/// Capture metadata carried alongside a mosaic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawMetadata {
    pub cfa: Cfa,
    pub black_level: f32,
    pub white_level: f32,
    /// Per-channel `(r, g, b)` white balance multipliers.
    pub wb_gains: [f32; 3],
    pub focal_mm: f32,
}

impl RawMetadata {
    pub fn validate(&self) -> Result<()> {
        if !(self.white_level > self.black_level) {
            return Err(Error::invalid(format!(
                "white level {} must exceed black level {}",
                self.white_level, self.black_level
            )));
        }
        if self.wb_gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::invalid(format!(
                "white balance gains must be positive, got {:?}",
                self.wb_gains
            )));
        }
        if !(self.focal_mm > 0.0 && self.focal_mm.is_finite()) {
            return Err(Error::invalid(format!(
                "focal length must be positive, got {}",
                self.focal_mm
            )));
        }
        Ok(())
    }

    /// Metadata of an already-normalized `[0, 1]` mosaic.
    pub fn normalized(cfa: Cfa) -> Self {
        Self {
            cfa,
            black_level: 0.0,
            white_level: 1.0,
            wb_gains: [1.0; 3],
            focal_mm: 1.0,
        }
    }
}

/// Single-channel raw frame. Height and width are always even.
#[derive(Debug, Clone, PartialEq)]
pub struct BayerMosaic {
    height: usize,
    width: usize,
    data: Vec<f32>,
    meta: RawMetadata,
}

impl BayerMosaic {
    pub fn new(height: usize, width: usize, data: Vec<f32>, meta: RawMetadata) -> Result<Self> {
        if height == 0 || width == 0 || height % 2 == 1 || width % 2 == 1 {
            return Err(Error::OddDimensions { height, width });
        }
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "{} samples for a {height}x{width} mosaic",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample {v}")));
        }
        meta.validate()?;
        Ok(Self {
            height,
            width,
            data,
            meta,
        })
    }

    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<f32>, meta: RawMetadata) -> Self {
        debug_assert!(height.is_multiple_of(2) && width.is_multiple_of(2));
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
            meta,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn meta(&self) -> &RawMetadata {
        &self.meta
    }

    pub fn cfa(&self) -> Cfa {
        self.meta.cfa
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn with_meta(mut self, meta: RawMetadata) -> Result<Self> {
        meta.validate()?;
        self.meta = meta;
        Ok(self)
    }
}
