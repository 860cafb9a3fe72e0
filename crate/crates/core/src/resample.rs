//! Catmull-Rom bicubic resampling.

use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageBuffer};

const A: f64 = -0.5;

/// Cubic convolution kernel with `a = -0.5`.
#[inline]
pub fn catmull_rom(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Four taps (first index and weights) for every output position along an axis.
fn axis_taps(input: usize, output: usize) -> Vec<(isize, [f64; 4])> {
    let ratio = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = (o as f64 + 0.5) * ratio - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut w = [0.0; 4];
            for (k, wk) in w.iter_mut().enumerate() {
                *wk = catmull_rom(frac - (k as f64 - 1.0));
            }
            (base as isize - 1, w)
        })
        .collect()
}

/// Resizes to an explicit output size. Sampling is half-pixel centred and
/// reads beyond the border are clamped to the edge.
pub fn resize_bicubic_to(img: &ImageBuffer, height: usize, width: usize) -> Result<ImageBuffer> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "resize target {height}x{width} is empty"
        )));
    }
    let (h, w, c) = img.shape();
    let xtaps = axis_taps(w, width);
    let ytaps = axis_taps(h, height);

    // horizontal pass, f64 intermediate
    let mut rows = vec![0.0f64; h * width * c];
    for y in 0..h {
        for (ox, (x0, wx)) in xtaps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, wk) in wx.iter().enumerate() {
                    acc += wk * img.get_clamped(y as isize, x0 + k as isize, ch) as f64;
                }
                rows[(y * width + ox) * c + ch] = acc;
            }
        }
    }

    let clamp = img.space() != ColorSpace::LinearRaw;
    let mut out = Vec::with_capacity(height * width * c);
    for (y0, wy) in &ytaps {
        for ox in 0..width {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, wk) in wy.iter().enumerate() {
                    let y = (y0 + k as isize).clamp(0, h as isize - 1) as usize;
                    acc += wk * rows[(y * width + ox) * c + ch];
                }
                let v = acc as f32;
                out.push(if clamp { v.clamp(0.0, 1.0) } else { v });
            }
        }
    }
    Ok(ImageBuffer::from_parts(height, width, c, out, img.space()))
}

/// Resizes by `scale`, rounding each output dimension to the nearest integer.
pub fn resize_bicubic(img: &ImageBuffer, scale: f64) -> Result<ImageBuffer> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let height = (img.height() as f64 * scale).round() as usize;
    let width = (img.width() as f64 * scale).round() as usize;
    if height < 1 || width < 1 {
        return Err(Error::invalid(format!(
            "scale {scale} shrinks {}x{} below one pixel",
            img.height(),
            img.width()
        )));
    }
    resize_bicubic_to(img, height, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_interpolates() {
        assert_eq!(catmull_rom(0.0), 1.0);
        assert_eq!(catmull_rom(1.0), 0.0);
        assert_eq!(catmull_rom(2.0), 0.0);
        for i in 0..10 {
            let f = i as f64 / 10.0;
            let sum: f64 = (-1..3).map(|k| catmull_rom(f - k as f64)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_scale() {
        let img = ImageBuffer::from_fn(7, 9, 3, ColorSpace::Srgb, |y, x, c| {
            ((y * 13 + x * 7 + c * 3) % 17) as f32 / 16.0
        })
        .unwrap();
        let out = resize_bicubic(&img, 1.0).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constants_stay_constant() {
        let img = ImageBuffer::filled(10, 6, 3, 0.37, ColorSpace::Srgb).unwrap();
        for scale in [0.5, 1.5, 2.0, 0.25, 3.3] {
            let out = resize_bicubic(&img, scale).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-6));
        }
    }

    #[test]
    fn upsampled_ramp_stays_linear() {
        let img = ImageBuffer::from_fn(8, 32, 1, ColorSpace::Srgb, |_, x, _| x as f32 / 40.0)
            .unwrap();
        let out = resize_bicubic(&img, 2.0).unwrap();
        assert_eq!(out.shape(), (16, 64, 1));
        // output x maps to input (x + 0.5) / 2 - 0.5
        for y in 0..16 {
            for x in 4..60 {
                let src = (x as f64 + 0.5) / 2.0 - 0.5;
                let expect = src / 40.0;
                assert!((out.get(y, x, 0) as f64 - expect).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn rejects_degenerate_scales() {
        let img = ImageBuffer::filled(4, 4, 1, 0.0, ColorSpace::Srgb).unwrap();
        assert!(resize_bicubic(&img, 0.0).is_err());
        assert!(resize_bicubic(&img, 0.01).is_err());
    }
}
