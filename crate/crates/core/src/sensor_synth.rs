//! Synthetic sensor data: CFA subsampling of an sRGB image plus Gaussian
//! noise whose standard deviation is drawn once per image.
//!
//! Noise is added to the mosaicked, gamma-encoded values rather than in the
//! linear domain. That is not how photon noise behaves; it is the standard
//! synthetic baseline this crate reproduces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bayer::{BayerMosaic, Cfa, RawMetadata};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::resample::resize_bicubic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub sigma_min: f32,
    pub sigma_max: f32,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_min: 1e-4,
            sigma_max: 1e-2,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn fixed(sigma: f32, seed: u64) -> Self {
        Self {
            sigma_min: sigma,
            sigma_max: sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.sigma_min && self.sigma_min <= self.sigma_max && self.sigma_max.is_finite())
        {
            return Err(Error::invalid(format!(
                "noise range [{}, {}] is not ordered and non-negative",
                self.sigma_min, self.sigma_max
            )));
        }
        Ok(())
    }
}

/// Keeps one colour channel per pixel according to `cfa`.
pub fn mosaic_rgb(img: &ImageBuffer, cfa: Cfa) -> Result<BayerMosaic> {
    if img.channels() != 3 {
        return Err(Error::shape(format!(
            "mosaicking needs 3 channels, got {}",
            img.channels()
        )));
    }
    let (h, w) = (img.height(), img.width());
    if h % 2 == 1 || w % 2 == 1 {
        return Err(Error::OddDimensions {
            height: h,
            width: w,
        });
    }
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            data.push(img.get(y, x, cfa.color_at(y, x)));
        }
    }
    Ok(BayerMosaic::from_parts(h, w, data, RawMetadata::normalized(cfa)))
}

/// Adds i.i.d. `N(0, sigma^2)` noise and clamps to `[0, 1]`; `sigma` is
/// drawn uniformly from the configured range. Returns the noisy mosaic and
/// the sigma used.
pub fn add_gaussian_noise_with_sigma(m: &BayerMosaic, cfg: &NoiseConfig) -> Result<(BayerMosaic, f32)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sigma = if cfg.sigma_max > cfg.sigma_min {
        rng.random_range(cfg.sigma_min..=cfg.sigma_max)
    } else {
        cfg.sigma_min
    };
    if sigma == 0.0 {
        return Ok((m.clone(), 0.0));
    }
    let normal = Normal::new(0.0f64, sigma as f64)
        .map_err(|e| Error::invalid(format!("noise sigma {sigma}: {e}")))?;
    let data = m
        .data()
        .iter()
        .map(|&v| (v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32)
        .collect();
    Ok((
        BayerMosaic::from_parts(m.height(), m.width(), data, *m.meta()),
        sigma,
    ))
}

pub fn add_gaussian_noise(m: &BayerMosaic, cfg: &NoiseConfig) -> Result<BayerMosaic> {
    add_gaussian_noise_with_sigma(m, cfg).map(|(m, _)| m)
}

/// Builds a synthetic training pair from a high-resolution sRGB image:
/// bicubic downsample by `zoom`, mosaic, add noise. The second element is
/// the untouched high-resolution target.
pub fn synth_pair(
    rgb_hr: &ImageBuffer,
    zoom: usize,
    cfa: Cfa,
    cfg: &NoiseConfig,
) -> Result<(BayerMosaic, ImageBuffer)> {
    if !matches!(zoom, 2 | 4 | 8) {
        return Err(Error::invalid(format!("zoom must be 2, 4 or 8, got {zoom}")));
    }
    let (h, w) = (rgb_hr.height(), rgb_hr.width());
    if h % (2 * zoom) != 0 || w % (2 * zoom) != 0 {
        return Err(Error::shape(format!(
            "{h}x{w} is not divisible by {}",
            2 * zoom
        )));
    }
    let low = resize_bicubic(rgb_hr, 1.0 / zoom as f64)?;
    let mosaic = mosaic_rgb(&low, cfa)?;
    let noisy = add_gaussian_noise(&mosaic, cfg)?;
    Ok((noisy, rgb_hr.clone()))
}
