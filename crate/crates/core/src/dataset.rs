//! Training-pair preparation from per-scene focal-length sequences.
//!
//! A scene directory holds one capture per focal length: a raw mosaic
//! (`NAME.pgm` plus its `NAME.pgm.json` sidecar, which carries the focal
//! length) and the camera-processed rendering `NAME.ppm` of the same
//! frame. Each usable (wide, tele) pair becomes a packed raw input cropped
//! to the tele field of view and an RGB target registered to it.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{compute_scale_offset, ecc_align, fov_crop_size, warp_euclidean, Alignment, EccConfig};
use crate::bayer::BayerMosaic;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::imageio::{read_image, read_raw, write_image, write_ztf, BitDepth};
use crate::raw_pipeline::{crop_cfa_aligned, normalize_raw, pack_bayer, PackedRaw};
use crate::resample::resize_bicubic_to;

/// Default tolerance on `f_gt / (f_in * zoom)`; it yields three pairs at
/// 4X and one at 8X on a 24-240 mm sequence.
pub const DEFAULT_TOLERANCE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capture {
    pub focal_mm: f64,
    pub raw: PathBuf,
    pub rgb: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSequence {
    pub id: String,
    captures: Vec<Capture>,
}

impl SceneSequence {
    /// Needs at least two captures with strictly increasing focal lengths.
    pub fn new(id: impl Into<String>, captures: Vec<Capture>) -> Result<Self> {
        let id = id.into();
        if captures.len() < 2 {
            return Err(Error::invalid(format!(
                "scene {id:?} has {} capture(s), need at least 2",
                captures.len()
            )));
        }
        if captures.windows(2).any(|w| !(w[0].focal_mm < w[1].focal_mm)) {
            return Err(Error::invalid(format!(
                "scene {id:?}: focal lengths must be strictly increasing"
            )));
        }
        Ok(Self { id, captures })
    }

    pub fn captures(&self) -> &[Capture] {
        &self.captures
    }

    pub fn focals(&self) -> Vec<f64> {
        self.captures.iter().map(|c| c.focal_mm).collect()
    }

    pub fn capture(&self, focal_mm: f64) -> Option<&Capture> {
        self.captures.iter().find(|c| c.focal_mm == focal_mm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scene: String,
    pub f_in: f64,
    pub f_gt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    /// Normalized, field-of-view matched raw input.
    pub input: PackedRaw,
    /// Registered target, `2 * zoom` times the packed input size.
    pub target: ImageBuffer,
    pub zoom: usize,
    pub provenance: Provenance,
    /// Motion from the wide crop to the downsized tele frame.
    pub alignment: Alignment,
    pub scale_offset: f64,
}

/// All `(f_in, f_gt)` with `|f_gt / (f_in * zoom) - 1| <= tol`, `f_in <= f_gt`.
pub fn enumerate_pairs(s: &SceneSequence, zoom: f64, tol: f64) -> Vec<(f64, f64)> {
    let f = s.focals();
    let mut out = Vec::new();
    for i in 0..f.len() {
        for j in i..f.len() {
            if (compute_scale_offset(f[i], f[j], zoom) - 1.0).abs() <= tol {
                out.push((f[i], f[j]));
            }
        }
    }
    out
}

/// Registers and crops one wide/tele capture pair.
///
/// The wide mosaic is cropped (CFA-aligned) to the tele field of view and
/// the wide rendering is cropped identically. The tele rendering is
/// downsized to that crop, ECC recovers the residual motion, and the tele
/// frame is warped back at full resolution before being resampled to
/// exactly `zoom` times the mosaic crop, which absorbs the scale offset.
pub fn build_pair(
    scene: &str,
    wide: &Capture,
    tele: &Capture,
    zoom: usize,
    ecc: &EccConfig,
) -> Result<TrainingPair> {
    if zoom == 0 {
        return Err(Error::invalid("zoom must be positive"));
    }
    let raw = read_raw(&wide.raw)?;
    let rgb_wide = read_image(&wide.rgb)?;
    let rgb_tele = read_image(&tele.rgb)?;
    build_pair_from(scene, wide.focal_mm, tele.focal_mm, &raw, &rgb_wide, &rgb_tele, zoom, ecc)
}

/// [`build_pair`] on in-memory captures.
#[allow(clippy::too_many_arguments)]
pub fn build_pair_from(
    scene: &str,
    f_in: f64,
    f_gt: f64,
    raw: &BayerMosaic,
    rgb_wide: &ImageBuffer,
    rgb_tele: &ImageBuffer,
    zoom: usize,
    ecc: &EccConfig,
) -> Result<TrainingPair> {
    if (rgb_wide.height(), rgb_wide.width()) != (raw.height(), raw.width()) {
        return Err(Error::shape(format!(
            "rendering {}x{} does not match mosaic {}x{}",
            rgb_wide.height(),
            rgb_wide.width(),
            raw.height(),
            raw.width()
        )));
    }
    let (ch, cw) = fov_crop_size(raw.height(), raw.width(), f_in, f_gt)?;
    let (ch, cw) = (ch & !1, cw & !1);
    if ch < 16 || cw < 16 {
        return Err(Error::shape(format!("field-of-view crop {ch}x{cw} is too small")));
    }
    let y0 = ((raw.height() - ch) / 2) & !1;
    let x0 = ((raw.width() - cw) / 2) & !1;
    let mosaic = crop_cfa_aligned(raw, x0, y0, cw, ch)?;
    let wide_crop = rgb_wide.crop(x0, y0, cw, ch)?;

    let tele_small = resize_bicubic_to(rgb_tele, ch, cw)?;
    let alignment = ecc_align(&wide_crop, &tele_small, ecc)?;
    let factor = rgb_tele.width() as f64 / cw as f64;
    let registered = warp_euclidean(rgb_tele, &alignment.transform.scaled(factor).inverse());
    let target = resize_bicubic_to(&registered, ch * zoom, cw * zoom)?;

    Ok(TrainingPair {
        input: pack_bayer(&normalize_raw(&mosaic)),
        target,
        zoom,
        provenance: Provenance {
            scene: scene.to_string(),
            f_in,
            f_gt,
        },
        alignment,
        scale_offset: compute_scale_offset(f_in, f_gt, zoom as f64),
    })
}

/// Shuffles scenes with `seed` and splits them into train, validation and
/// test. Validation and test get `round(ratio * n)` scenes and train the
/// rest; every bucket with a non-zero ratio gets at least one scene.
pub fn split_scenes<T: Clone>(scenes: &[T], ratios: (f64, f64, f64), seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (rt, rv, rs) = ratios;
    if [rt, rv, rs].iter().any(|r| !(*r >= 0.0)) || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let n = scenes.len();
    let buckets = [rt, rv, rs].iter().filter(|r| **r > 0.0).count();
    if n < buckets {
        return Err(Error::invalid(format!(
            "{n} scene(s) cannot fill {buckets} non-empty split buckets"
        )));
    }
    let size = |r: f64| {
        if r > 0.0 {
            ((r * n as f64).round() as usize).max(1)
        } else {
            0
        }
    };
    let (mut nv, mut ns) = (size(rv), size(rs));
    let min_train = usize::from(rt > 0.0);
    while nv + ns + min_train > n {
        // only reachable for tiny n; shrink the larger of the two
        if nv >= ns && nv > usize::from(rv > 0.0) {
            nv -= 1;
        } else {
            ns -= 1;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| scenes[i].clone()).collect::<Vec<T>>();
    let nt = n - nv - ns;
    Ok((
        pick(&order[..nt]),
        pick(&order[nt..nt + nv]),
        pick(&order[nt + nv..]),
    ))
}

/// Random `size x size` packed crop and its `2 * zoom * size` target crop.
pub fn crop_training_patch(pair: &TrainingPair, size: usize, seed: u64) -> Result<TrainingPair> {
    let (ph, pw) = (pair.input.height(), pair.input.width());
    let s = 2 * pair.zoom;
    if size == 0 || size > ph || size > pw {
        return Err(Error::shape(format!("patch {size} does not fit a {ph}x{pw} packed input")));
    }
    if pair.target.height() < ph * s || pair.target.width() < pw * s {
        return Err(Error::shape("target is smaller than the packed input footprint"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let i = rng.random_range(0..=ph - size);
    let j = rng.random_range(0..=pw - size);
    Ok(TrainingPair {
        input: pair.input.crop(i, j, size, size)?,
        target: pair.target.crop(j * s, i * s, size * s, size * s)?,
        ..pair.clone()
    })
}

#[derive(Deserialize)]
struct FocalOnly {
    focal_mm: f64,
}

/// Reads one scene directory: every `*.pgm` with a sidecar and a same-stem
/// `.ppm`, ordered by focal length.
pub fn scan_scene(dir: &Path) -> Result<SceneSequence> {
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut captures = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let sidecar = crate::imageio::sidecar_path(&path);
        let text = fs::read_to_string(&sidecar).map_err(|_| Error::MissingSidecar(sidecar.clone()))?;
        let focal: FocalOnly = serde_json::from_str(&text)
            .map_err(|e| Error::Sidecar(format!("{}: {e}", sidecar.display())))?;
        let rgb = path.with_extension("ppm");
        if !rgb.is_file() {
            return Err(Error::Format(format!("{} has no rendering {}", path.display(), rgb.display())));
        }
        captures.push(Capture {
            focal_mm: focal.focal_mm,
            raw: path,
            rgb,
        });
    }
    captures.sort_by(|a, b| a.focal_mm.total_cmp(&b.focal_mm));
    SceneSequence::new(id, captures)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene: String,
    pub split: Split,
    pub f_in: f64,
    pub f_gt: f64,
    pub zoom: usize,
    pub scale_offset: f64,
    pub alignment: Alignment,
    pub input: PathBuf,
    pub target: PathBuf,
    /// `[H/2, W/2, 4]`.
    pub input_dims: [usize; 3],
    /// `[H, W, 3]`.
    pub target_dims: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub scene: String,
    pub f_in: f64,
    pub f_gt: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub zoom: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub pairs: Vec<ManifestEntry>,
    pub skipped: Vec<SkippedPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareConfig {
    pub zoom: usize,
    pub tolerance: f64,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub ecc: EccConfig,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            zoom: 4,
            tolerance: DEFAULT_TOLERANCE,
            ratios: (0.8, 0.1, 0.1),
            seed: 0,
            ecc: EccConfig::default(),
        }
    }
}

/// Prepares every scene under `root` and writes `input.ztf`, `target.ppm`
/// (16-bit) per pair plus `manifest.json` into `out`.
///
/// Pairs whose alignment fails are skipped and listed in the manifest.
pub fn prepare_dataset(root: &Path, out: &Path, cfg: &PrepareConfig) -> Result<Manifest> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let scenes = dirs.iter().map(|d| scan_scene(d)).collect::<Result<Vec<_>>>()?;
    let (train, val, test) = split_scenes(&scenes, cfg.ratios, cfg.seed)?;
    let split_of = |id: &str| {
        if val.iter().any(|s| s.id == id) {
            Split::Val
        } else if test.iter().any(|s| s.id == id) {
            Split::Test
        } else {
            debug_assert!(train.iter().any(|s| s.id == id));
            Split::Train
        }
    };

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let jobs: Vec<(&SceneSequence, f64, f64)> = scenes
        .iter()
        .flat_map(|s| {
            enumerate_pairs(s, cfg.zoom as f64, cfg.tolerance)
                .into_iter()
                .filter(|(a, b)| a < b)
                .map(move |(a, b)| (s, a, b))
        })
        .collect();
    type Outcome = std::result::Result<ManifestEntry, SkippedPair>;
    let results: Vec<Result<Outcome>> = jobs
        .par_iter()
        .map(|&(scene, f_in, f_gt)| {
            let wide = scene.capture(f_in).expect("focal comes from the scene");
            let tele = scene.capture(f_gt).expect("focal comes from the scene");
            let skip = |e: Error| {
                log::warn!("skipping {} {f_in}->{f_gt} mm: {e}", scene.id);
                SkippedPair {
                    scene: scene.id.clone(),
                    f_in,
                    f_gt,
                    reason: e.to_string(),
                }
            };
            // alignment failures are expected in real captures; I/O errors are not
            let pair = match build_pair(&scene.id, wide, tele, cfg.zoom, &cfg.ecc) {
                Ok(p) => p,
                Err(e @ (Error::NonConvergence(_) | Error::Shape(_))) => return Ok(Err(skip(e))),
                Err(e) => return Err(e),
            };
            let name = format!("{}_{}_{}", scene.id, f_in, f_gt);
            let dir = out.join(&name);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_ztf(&pair.input.to_tensor(), dir.join("input.ztf"))?;
            write_image(&pair.target, dir.join("target.ppm"), BitDepth::Sixteen)?;
            Ok(Ok(ManifestEntry {
                scene: scene.id.clone(),
                split: split_of(&scene.id),
                f_in,
                f_gt,
                zoom: cfg.zoom,
                scale_offset: pair.scale_offset,
                alignment: pair.alignment,
                input: PathBuf::from(&name).join("input.ztf"),
                target: PathBuf::from(&name).join("target.ppm"),
                input_dims: [pair.input.height(), pair.input.width(), 4],
                target_dims: [pair.target.height(), pair.target.width(), pair.target.channels()],
            }))
        })
        .collect();

    let mut manifest = Manifest {
        zoom: cfg.zoom,
        tolerance: cfg.tolerance,
        seed: cfg.seed,
        pairs: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        match r? {
            Ok(e) => manifest.pairs.push(e),
            Err(s) => manifest.skipped.push(s),
        }
    }
    let path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(focals: &[f64]) -> SceneSequence {
        let caps = focals
            .iter()
            .map(|&f| Capture {
                focal_mm: f,
                raw: PathBuf::new(),
                rgb: PathBuf::new(),
            })
            .collect();
        SceneSequence::new("s", caps).unwrap()
    }

    const FOCALS: [f64; 7] = [24.0, 35.0, 50.0, 70.0, 100.0, 150.0, 240.0];

    #[test]
    fn pair_enumeration() {
        let s = scene(&FOCALS);
        assert_eq!(enumerate_pairs(&s, 4.0, 0.1), vec![(24.0, 100.0), (35.0, 150.0)]);
        assert_eq!(
            enumerate_pairs(&s, 4.0, DEFAULT_TOLERANCE),
            vec![(24.0, 100.0), (35.0, 150.0), (70.0, 240.0)]
        );
        assert_eq!(enumerate_pairs(&s, 8.0, DEFAULT_TOLERANCE), vec![(35.0, 240.0)]);
        assert!(enumerate_pairs(&s, 4.0, 0.25).len() > 3);
        assert_eq!(enumerate_pairs(&scene(&[35.0, 70.0]), 2.0, 0.0), vec![(35.0, 70.0)]);
    }

    #[test]
    fn sequence_invariants() {
        assert!(SceneSequence::new("a", vec![]).is_err());
        let c = |f| Capture {
            focal_mm: f,
            raw: PathBuf::new(),
            rgb: PathBuf::new(),
        };
        assert!(SceneSequence::new("a", vec![c(50.0), c(35.0)]).is_err());
        assert!(SceneSequence::new("a", vec![c(35.0), c(35.0)]).is_err());
    }

    #[test]
    fn splits() {
        let ids: Vec<usize> = (0..500).collect();
        let (tr, va, te) = split_scenes(&ids, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (400, 50, 50));
        assert_eq!(split_scenes(&ids, (0.8, 0.1, 0.1), 7).unwrap(), (tr, va, te));

        let ten: Vec<usize> = (0..10).collect();
        let (tr, va, te) = split_scenes(&ten, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));

        let three: Vec<usize> = (0..3).collect();
        let (tr, va, te) = split_scenes(&three, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (1, 1, 1));
        assert!(split_scenes(&three[..2], (0.8, 0.1, 0.1), 1).is_err());
        assert!(split_scenes(&ten, (0.5, 0.1, 0.1), 1).is_err());
    }
}
