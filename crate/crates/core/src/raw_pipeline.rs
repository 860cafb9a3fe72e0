//! Raw-domain preprocessing: black-level normalization, CFA-aligned
//! cropping, 2x2 packing, white balance and the sRGB transfer curve.

use crate::bayer::{BayerMosaic, Cfa, RawMetadata};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageBuffer};
use crate::tensor::Tensor;

/// Half-resolution four-channel view of a mosaic.
///
/// Channel `k` of packed pixel `(i, j)` is mosaic sample
/// `(2i + k / 2, 2j + k % 2)`: top-left, top-right, bottom-left,
/// bottom-right. Colour identity comes from the CFA tag.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedRaw {
    height: usize,
    width: usize,
    data: Vec<f32>,
    meta: RawMetadata,
}

impl PackedRaw {
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
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[(i * self.width + j) * 4 + k]
    }

    /// Crop in packed coordinates. Any packed offset is CFA-consistent.
    pub fn crop(&self, i0: usize, j0: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || i0 + height > self.height || j0 + width > self.width {
            return Err(Error::OutOfBounds(format!(
                "packed crop ({j0}, {i0}) {width}x{height} of {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * 4);
        for i in i0..i0 + height {
            let start = (i * self.width + j0) * 4;
            data.extend_from_slice(&self.data[start..start + width * 4]);
        }
        Ok(Self {
            height,
            width,
            data,
            meta: self.meta,
        })
    }

    /// `[H/2, W/2, 4]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width, 4], self.data.clone())
            .expect("packed shape is consistent")
    }
}

/// Subtracts the black level and rescales to `[0, 1]`, clamping.
pub fn normalize_raw(m: &BayerMosaic) -> BayerMosaic {
    let meta = m.meta();
    let black = meta.black_level as f64;
    let range = meta.white_level as f64 - black;
    let data = m
        .data()
        .iter()
        .map(|&v| ((v as f64 - black) / range).clamp(0.0, 1.0) as f32)
        .collect();
    let out_meta = RawMetadata {
        black_level: 0.0,
        white_level: 1.0,
        ..*meta
    };
    BayerMosaic::from_parts(m.height(), m.width(), data, out_meta)
}

pub fn pack_bayer(m: &BayerMosaic) -> PackedRaw {
    let (h, w) = (m.height() / 2, m.width() / 2);
    let mut data = Vec::with_capacity(h * w * 4);
    for i in 0..h {
        for j in 0..w {
            for k in 0..4 {
                data.push(m.get(2 * i + k / 2, 2 * j + k % 2));
            }
        }
    }
    PackedRaw {
        height: h,
        width: w,
        data,
        meta: *m.meta(),
    }
}

pub fn unpack_bayer(p: &PackedRaw) -> BayerMosaic {
    let (h, w) = (p.height * 2, p.width * 2);
    let mut data = vec![0.0; h * w];
    for i in 0..p.height {
        for j in 0..p.width {
            for k in 0..4 {
                data[(2 * i + k / 2) * w + 2 * j + k % 2] = p.get(i, j, k);
            }
        }
    }
    BayerMosaic::from_parts(h, w, data, p.meta)
}

/// Crops a mosaic at even offsets and sizes so the CFA phase is unchanged.
pub fn crop_cfa_aligned(
    m: &BayerMosaic,
    x0: usize,
    y0: usize,
    width: usize,
    height: usize,
) -> Result<BayerMosaic> {
    if x0 % 2 == 1 || y0 % 2 == 1 || width % 2 == 1 || height % 2 == 1 {
        return Err(Error::CfaPhase {
            x0,
            y0,
            width,
            height,
        });
    }
    if width == 0 || height == 0 || x0 + width > m.width() || y0 + height > m.height() {
        return Err(Error::OutOfBounds(format!(
            "crop ({x0}, {y0}) {width}x{height} of a {}x{} mosaic",
            m.height(),
            m.width()
        )));
    }
    let mut data = Vec::with_capacity(width * height);
    for y in y0..y0 + height {
        let start = y * m.width() + x0;
        data.extend_from_slice(&m.data()[start..start + width]);
    }
    Ok(BayerMosaic::from_parts(height, width, data, *m.meta()))
}

/// Per-channel gain followed by a clamp to `[0, 1]`.
pub fn apply_white_balance(img: &ImageBuffer, gains: [f32; 3]) -> Result<ImageBuffer> {
    if img.channels() != 3 {
        return Err(Error::shape(format!(
            "white balance needs 3 channels, got {}",
            img.channels()
        )));
    }
    if gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::invalid(format!("gains must be positive, got {gains:?}")));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .flat_map(|p| (0..3).map(move |c| (p[c] * gains[c]).clamp(0.0, 1.0)))
        .collect();
    let space = match img.space() {
        ColorSpace::LinearRaw => ColorSpace::LinearRgb,
        s => s,
    };
    ImageBuffer::new(img.height(), img.width(), 3, data, space)
}

#[inline]
pub fn linear_to_srgb_value(x: f64) -> f64 {
    if x <= 0.003_130_8 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
pub fn srgb_to_linear_value(x: f64) -> f64 {
    if x <= 0.040_45 {
        x / 12.92
    } else {
        ((x + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(img: &ImageBuffer) -> ImageBuffer {
    let data = img
        .data()
        .iter()
        .map(|&v| linear_to_srgb_value(v.clamp(0.0, 1.0) as f64).clamp(0.0, 1.0) as f32)
        .collect();
    ImageBuffer::from_parts(img.height(), img.width(), img.channels(), data, ColorSpace::Srgb)
}

pub fn srgb_to_linear(img: &ImageBuffer) -> ImageBuffer {
    let data = img
        .data()
        .iter()
        .map(|&v| srgb_to_linear_value(v.clamp(0.0, 1.0) as f64).clamp(0.0, 1.0) as f32)
        .collect();
    ImageBuffer::from_parts(
        img.height(),
        img.width(),
        img.channels(),
        data,
        ColorSpace::LinearRgb,
    )
}
