//! Interleaved floating-point images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Colour encoding of the samples held by an [`ImageBuffer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorSpace {
    /// Linear sensor scale; samples may exceed 1.
    LinearRaw,
    LinearRgb,
    Srgb,
}

/// Row-major `H x W x C` image of `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    space: ColorSpace,
}

impl ImageBuffer {
    /// Builds an image, validating the shape and sample range.
    ///
    /// Samples must be finite, and lie in `[0, 1]` unless the space is
    /// [`ColorSpace::LinearRaw`].
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        space: ColorSpace,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::shape(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{} samples for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample {v}")));
        }
        if space != ColorSpace::LinearRaw {
            if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::invalid(format!(
                    "sample {v} outside [0, 1] for {space:?}"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            space,
        })
    }

    /// Constant-valued image.
    pub fn filled(
        height: usize,
        width: usize,
        channels: usize,
        value: f32,
        space: ColorSpace,
    ) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
            space,
        )
    }

    /// Builds an image from a per-sample function `f(y, x, c)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        space: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data, space)
    }

    /// Wraps data whose validity is guaranteed by construction.
    pub(crate) fn from_parts(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        space: ColorSpace,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
            space,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(y, x, c)]
    }

    /// Sample with coordinates clamped to the image.
    #[inline]
    pub fn get_clamped(&self, y: isize, x: isize, c: usize) -> f32 {
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let x = x.clamp(0, self.width as isize - 1) as usize;
        self.get(y, x, c)
    }

    /// Bilinear sample at continuous pixel coordinates, edge-clamped.
    pub fn sample_bilinear(&self, y: f64, x: f64, c: usize) -> f64 {
        let y0 = y.floor();
        let x0 = x.floor();
        let fy = y - y0;
        let fx = x - x0;
        let (y0, x0) = (y0 as isize, x0 as isize);
        let v00 = self.get_clamped(y0, x0, c) as f64;
        let v01 = self.get_clamped(y0, x0 + 1, c) as f64;
        let v10 = self.get_clamped(y0 + 1, x0, c) as f64;
        let v11 = self.get_clamped(y0 + 1, x0 + 1, c) as f64;
        let top = v00 + (v01 - v00) * fx;
        let bottom = v10 + (v11 - v10) * fx;
        top + (bottom - top) * fy
    }

    /// Retags the colour space, revalidating the sample range.
    pub fn with_space(self, space: ColorSpace) -> Result<Self> {
        Self::new(self.height, self.width, self.channels, self.data, space)
    }

    /// Applies `f` to every sample and clamps the result to `[0, 1]`
    /// unless the image is linear raw.
    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Self {
        let clamp = self.space != ColorSpace::LinearRaw;
        let data = self
            .data
            .iter()
            .map(|&v| {
                let out = f(v);
                if clamp {
                    out.clamp(0.0, 1.0)
                } else {
                    out
                }
            })
            .collect();
        Self::from_parts(self.height, self.width, self.channels, data, self.space)
    }

    /// Copies out the rectangle `[y0, y0 + height) x [x0, x0 + width)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::OutOfBounds(format!(
                "crop ({x0}, {y0}) {width}x{height} of a {}x{} image",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(width * height * self.channels);
        for y in y0..y0 + height {
            let start = self.index(y, x0, 0);
            data.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Ok(Self::from_parts(height, width, self.channels, data, self.space))
    }

    /// Central crop of the requested size.
    pub fn center_crop(&self, width: usize, height: usize) -> Result<Self> {
        if width > self.width || height > self.height {
            return Err(Error::OutOfBounds(format!(
                "center crop {height}x{width} of a {}x{} image",
                self.height, self.width
            )));
        }
        self.crop(
            (self.width - width) / 2,
            (self.height - height) / 2,
            width,
            height,
        )
    }

    /// Rec. 601 luma for three-channel images; single-channel images are
    /// returned unchanged.
    pub fn to_luma(&self) -> Result<Self> {
        match self.channels {
            1 => Ok(self.clone()),
            3 => {
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                    .collect();
                Ok(Self::from_parts(self.height, self.width, 1, data, self.space))
            }
            c => Err(Error::shape(format!(
                "luma needs 1 or 3 channels, got {c}"
            ))),
        }
    }

    /// Single channel `c` as a one-channel image.
    pub fn channel(&self, c: usize) -> Self {
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Self::from_parts(self.height, self.width, 1, data, self.space)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}
