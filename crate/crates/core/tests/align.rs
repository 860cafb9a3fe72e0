use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zoomkit_core::align::{
    compute_scale_offset, ecc_align, random_misalignment, synth_misalignment, warp_euclidean, EccConfig,
    EuclideanTransform,
};
use zoomkit_core::texture::fractal_texture;
use zoomkit_core::{ColorSpace, Error, ImageBuffer};

fn close(a: &EuclideanTransform, b: &EuclideanTransform, deg: f64, px: f64) -> bool {
    (a.theta - b.theta).abs().to_degrees() <= deg && (a.tx - b.tx).hypot(a.ty - b.ty) <= px
}

#[test]
fn recovers_random_motions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..8u64 {
        let img = fractal_texture(128, 128, 3, 16.0, trial);
        let t = EuclideanTransform::new(
            rng.random_range(-4.0f64..4.0).to_radians(),
            rng.random_range(-6.0..6.0),
            rng.random_range(-6.0..6.0),
        );
        let dst = warp_euclidean(&img, &t);
        let a = ecc_align(&img, &dst, &EccConfig::default()).unwrap();
        assert!(close(&a.transform, &t, 0.1, 0.2), "trial {trial}: {t:?} vs {:?}", a.transform);
        assert!(a.ecc > 0.95);
    }
}

#[test]
fn affine_intensity_change_keeps_identity() {
    let img = fractal_texture(96, 96, 1, 12.0, 3);
    for (gain, bias) in [(0.5f32, 0.1f32), (1.3, -0.05), (0.8, 0.15)] {
        let dst = img.map(|v| gain * v + bias);
        let a = ecc_align(&img, &dst, &EccConfig::default()).unwrap();
        assert!(close(&a.transform, &EuclideanTransform::IDENTITY, 0.01, 0.01), "{:?}", a.transform);
        assert!(a.ecc > 0.999);
    }
}

#[test]
fn recovers_motion_under_gain_change() {
    let img = fractal_texture(128, 128, 3, 16.0, 9);
    let t = random_misalignment(128, 0.03, 4);
    let dst = synth_misalignment(&img, &t, [0.9, 1.0, 1.1]).unwrap();
    let a = ecc_align(&img, &dst, &EccConfig::default()).unwrap();
    assert!(close(&a.transform, &t, 0.1, 0.3), "{t:?} vs {:?}", a.transform);
}

#[test]
fn misalignment_magnitudes() {
    for seed in 0..50 {
        let t = random_misalignment(3264, 0.0, seed);
        let mag = t.tx.hypot(t.ty);
        assert!((35.0..=76.0).contains(&mag), "{mag}");
        assert_eq!(t.theta, 0.0);
    }
}

#[test]
fn flat_inputs_do_not_converge() {
    let flat = ImageBuffer::filled(64, 64, 1, 0.5, ColorSpace::Srgb).unwrap();
    let tex = fractal_texture(64, 64, 1, 8.0, 1);
    assert!(matches!(ecc_align(&tex, &flat, &EccConfig::default()), Err(Error::NonConvergence(_))));
}

#[test]
fn wide_to_tele_offset() {
    assert!((compute_scale_offset(35.0, 150.0, 4.0) - 1.0714).abs() <= 1e-4);
}
