//! Procedural multi-octave textures used as stand-ins for natural image
//! crops in tests, examples and the CLI's synthetic scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{ColorSpace, ImageBuffer};
use crate::resample::resize_bicubic_to;

/// Fractal value noise: octaves of bicubically interpolated random lattices
/// whose amplitude halves as their cell size halves.
///
/// `cell` is the lattice spacing of the coarsest octave in pixels. The
/// result is rescaled into `[0.05, 0.95]`; colour channels share a common
/// luminance structure plus weaker per-channel variation.
pub fn fractal_texture(height: usize, width: usize, channels: usize, cell: f64, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0f64; height * width * channels];
    let mut cell = cell.max(1.0);
    let mut amp = 1.0;
    while cell >= 1.0 {
        let gh = (height as f64 / cell).ceil() as usize + 1;
        let gw = (width as f64 / cell).ceil() as usize + 1;
        let shared: Vec<f32> = (0..gh * gw).map(|_| rng.random::<f32>()).collect();
        let lattice = ImageBuffer::from_fn(gh, gw, channels, ColorSpace::LinearRaw, |y, x, _| {
            shared[y * gw + x]
        })
        .expect("lattice is non-empty");
        let chroma = ImageBuffer::from_fn(gh, gw, channels, ColorSpace::LinearRaw, |_, _, _| {
            rng.random::<f32>()
        })
        .expect("lattice is non-empty");
        let up = resize_bicubic_to(&lattice, height, width).expect("non-empty target");
        let upc = resize_bicubic_to(&chroma, height, width).expect("non-empty target");
        for ((a, &l), &c) in acc.iter_mut().zip(up.data()).zip(upc.data()) {
            *a += amp * (0.8 * l as f64 + 0.2 * c as f64);
        }
        cell /= 2.0;
        amp *= 0.6;
    }
    let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let data = acc
        .into_iter()
        .map(|v| (0.05 + 0.9 * (v - lo) / span) as f32)
        .collect();
    ImageBuffer::new(height, width, channels, data, ColorSpace::Srgb).expect("rescaled into [0, 1]")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_is_seeded_and_bounded() {
        let a = fractal_texture(32, 48, 3, 8.0, 1);
        assert_eq!(a, fractal_texture(32, 48, 3, 8.0, 1));
        assert_ne!(a, fractal_texture(32, 48, 3, 8.0, 2));
        assert!(a.data().iter().all(|v| (0.05..=0.95).contains(v)));
    }
}
