use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zoomkit_core::align::{warp_euclidean, EuclideanTransform};
use zoomkit_core::cobi::{cobi_rgb_value_and_grad, match_statistics, CobiConfig, NeighborSearch};
use zoomkit_core::features::PatchConfig;
use zoomkit_core::optimize::{loss_and_grad, optimize_image, Init, LossKind, OptimizeConfig};
use zoomkit_core::resample::resize_bicubic_to;
use zoomkit_core::texture::fractal_texture;
use zoomkit_core::{ColorSpace, ImageBuffer};

fn perturbed(img: &ImageBuffer, idx: usize, delta: f32) -> (ImageBuffer, f64) {
    let mut data = img.data().to_vec();
    let old = data[idx];
    data[idx] = old + delta;
    let step = data[idx] as f64 - old as f64;
    let (h, w, c) = img.shape();
    (ImageBuffer::new(h, w, c, data, ColorSpace::LinearRaw).unwrap(), step)
}

fn check_gradient(cfg: &CobiConfig, seed: u64, h: f32) {
    let src = fractal_texture(20, 20, 3, 5.0, seed);
    let tgt = fractal_texture(20, 20, 3, 5.0, seed + 100);
    let (_, base, grad) = cobi_rgb_value_and_grad(&src, &tgt, cfg, NeighborSearch::Exhaustive).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for _ in 0..200 {
        let idx = rng.random_range(0..src.data().len());
        let (plus, hp) = perturbed(&src, idx, h);
        let (minus, hm) = perturbed(&src, idx, -h);
        let (lp, mp, _) = cobi_rgb_value_and_grad(&plus, &tgt, cfg, NeighborSearch::Exhaustive).unwrap();
        let (lm, mm, _) = cobi_rgb_value_and_grad(&minus, &tgt, cfg, NeighborSearch::Exhaustive).unwrap();
        if mp.indices() != base.indices() || mm.indices() != base.indices() {
            continue;
        }
        let fd = (lp - lm) / (hp - hm);
        let err = (fd - grad[idx]).abs() / fd.abs().max(grad[idx].abs()).max(1e-12);
        assert!(err < 1e-4, "seed {seed} sample {idx}: analytic {} vs numeric {fd}", grad[idx]);
        checked += 1;
    }
    assert!(checked >= 100, "only {checked} samples kept their matches");
}

#[test]
fn gradient_matches_finite_differences() {
    let cfg = CobiConfig { patch: PatchConfig::new(4, 2), ..CobiConfig::default() };
    check_gradient(&cfg, 1, 1e-3);
    check_gradient(&CobiConfig { w_s: 0.0, ..cfg.clone() }, 2, 1e-3);
    // centred patches have much smaller norms, so the cosine curves faster
    // and the central difference needs a shorter step
    check_gradient(&CobiConfig { mean_shift: true, ..cfg }, 3, 2e-4);
}

#[test]
fn identical_target_is_a_fixed_point() {
    let img = fractal_texture(24, 24, 3, 6.0, 5);
    for loss in [LossKind::Cobi, LossKind::Cx, LossKind::L1] {
        let cfg = OptimizeConfig {
            steps: 20,
            loss,
            init: Init::Copy,
            cobi: CobiConfig { patch: PatchConfig::new(5, 1), ..CobiConfig::default() },
            ..OptimizeConfig::default()
        };
        let (out, trace) = optimize_image(&img, &img, &cfg).unwrap();
        assert!(trace.iter().all(|t| t.loss.abs() < 1e-9), "{loss:?}: {:?}", trace[0]);
        let worst = out.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(worst < 1e-3, "{loss:?} moved by {worst}");
    }
}

#[test]
fn runs_are_deterministic() {
    let target = fractal_texture(24, 24, 3, 6.0, 7);
    let cfg = OptimizeConfig {
        steps: 10,
        init: Init::Noise,
        seed: 9,
        step_size: 0.01,
        cobi: CobiConfig { patch: PatchConfig::new(5, 1), ..CobiConfig::default() },
        ..OptimizeConfig::default()
    };
    let (a, ta) = optimize_image(&target, &target, &cfg).unwrap();
    let (b, tb) = optimize_image(&target, &target, &cfg).unwrap();
    assert_eq!(a, b);
    let bits = |t: &[zoomkit_core::optimize::TracePoint]| t.iter().map(|p| p.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&ta), bits(&tb));
    let exhaustive = OptimizeConfig { search: NeighborSearch::Exhaustive, ..cfg };
    let (c, tc) = optimize_image(&target, &target, &exhaustive).unwrap();
    assert_eq!(a, c);
    assert_eq!(bits(&ta), bits(&tc));
}

#[test]
fn l1_decreases_monotonically_at_small_steps() {
    let target = fractal_texture(32, 32, 3, 8.0, 1);
    let low = resize_bicubic_to(&target, 8, 8).unwrap();
    let cfg = OptimizeConfig { steps: 100, step_size: 0.01, momentum: 0.0, loss: LossKind::L1, ..OptimizeConfig::default() };
    let (_, trace) = optimize_image(&low, &target, &cfg).unwrap();
    assert_eq!(trace.len(), 101);
    for w in trace.windows(2) {
        assert!(w[1].loss <= w[0].loss, "{:?} -> {:?}", w[0], w[1]);
    }
}

#[test]
fn l1_converges_on_aligned_pair() {
    let target = fractal_texture(64, 64, 3, 16.0, 3);
    let low = resize_bicubic_to(&target, 16, 16).unwrap();
    let cfg = OptimizeConfig { steps: 2000, loss: LossKind::L1, ..OptimizeConfig::default() };
    let (out, _) = optimize_image(&low, &target, &cfg).unwrap();
    let mae = out.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>()
        / out.data().len() as f64;
    assert!(mae < 1e-3, "mae {mae}");
}

#[test]
fn bilateral_optimization_spreads_matches() {
    let ground = fractal_texture(48, 48, 3, 12.0, 4);
    let target = warp_euclidean(&ground, &EuclideanTransform::new(0.0, 3.0, 0.0));
    let low = resize_bicubic_to(&ground, 12, 12).unwrap();
    let cfg = OptimizeConfig {
        steps: 60,
        step_size: 0.001,
        cobi: CobiConfig { patch: PatchConfig::new(5, 1), mean_shift: true, ..CobiConfig::default() },
        ..OptimizeConfig::default()
    };
    let (out, trace) = optimize_image(&low, &target, &cfg).unwrap();
    assert!(trace.last().unwrap().loss < trace[0].loss);
    let start = zoomkit_core::optimize::initialize(&low, &target, &cfg).unwrap();
    let unique = |img: &ImageBuffer| {
        let (_, _, m) = loss_and_grad(img, &target, &cfg).unwrap();
        let m = m.unwrap();
        match_statistics(&m, m.targets).unique_fraction
    };
    assert!(unique(&out) > unique(&start), "{} vs {}", unique(&out), unique(&start));
}
