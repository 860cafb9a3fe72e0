//! Full-reference distortion metrics: PSNR and Gaussian-window SSIM.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    /// Side of the Gaussian window; must be odd.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("SSIM sigma must be positive, got {}", self.sigma)));
        }
        for (name, k) in [("k1", self.k1), ("k2", self.k2)] {
            if !(k > 0.0 && k < 1.0) {
                return Err(Error::invalid(format!("SSIM {name} must lie in (0, 1), got {k}")));
            }
        }
        if !(self.data_range > 0.0 && self.data_range.is_finite()) {
            return Err(Error::invalid(format!(
                "data range must be positive, got {}",
                self.data_range
            )));
        }
        Ok(())
    }

    fn kernel(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }
}

fn same_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "images differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean squared error over every sample.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::invalid(format!("data range must be positive, got {data_range}")));
    }
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

/// Separable valid-mode filtering of a single plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Structural similarity: the mean of the Gaussian-weighted SSIM map over
/// every window position fully inside the image, averaged over channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, cfg: &SsimConfig) -> Result<f64> {
    cfg.validate()?;
    same_shape(a, b)?;
    let (h, w, c) = a.shape();
    if h.min(w) < cfg.window {
        return Err(Error::shape(format!(
            "{h}x{w} image is smaller than the {}-pixel SSIM window",
            cfg.window
        )));
    }
    let k = cfg.kernel();
    let c1 = (cfg.k1 * cfg.data_range).powi(2);
    let c2 = (cfg.k2 * cfg.data_range).powi(2);
    let mut total = 0.0;
    for ch in 0..c {
        let pa: Vec<f64> = a.data().iter().skip(ch).step_by(c).map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.data().iter().skip(ch).step_by(c).map(|&v| v as f64).collect();
        let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
        let mu_a = filter_valid(&pa, h, w, &k);
        let mu_b = filter_valid(&pb, h, w, &k);
        let e_aa = filter_valid(&prod(&pa, &pa), h, w, &k);
        let e_bb = filter_valid(&prod(&pb, &pb), h, w, &k);
        let e_ab = filter_valid(&prod(&pa, &pb), h, w, &k);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            sum += num / den;
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / c as f64)
}

/// Drops `border` pixels from every edge, for scoring pairs whose edges
/// are known to be misaligned.
pub fn crop_border(img: &ImageBuffer, border: usize) -> Result<ImageBuffer> {
    if border == 0 {
        return Ok(img.clone());
    }
    let (h, w, _) = img.shape();
    if 2 * border >= h || 2 * border >= w {
        return Err(Error::shape(format!(
            "border {border} leaves nothing of a {h}x{w} image"
        )));
    }
    img.crop(border, border, w - 2 * border, h - 2 * border)
}
