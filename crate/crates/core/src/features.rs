//! Feature sets for contextual matching: `n x n` RGB patches, feature maps
//! loaded from tensors, and the cosine distance between feature vectors.
//!
//! Coordinates are normalized to `[0, 1]` by `W - 1` and `H - 1` so the
//! spatial weight of the bilateral loss does not depend on resolution. An
//! axis of length one maps to 0.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::tensor::Tensor;

/// Guard for the norm product in [`cosine_distance`].
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    vectors: Vec<f32>,
    coords: Vec<[f32; 2]>,
    source_dims: (usize, usize),
    layer: Option<String>,
}

impl FeatureSet {
    /// `vectors` holds `coords.len()` rows of length `dim`.
    pub fn new(
        dim: usize,
        vectors: Vec<f32>,
        coords: Vec<[f32; 2]>,
        source_dims: (usize, usize),
    ) -> Result<Self> {
        if dim == 0 || coords.is_empty() {
            return Err(Error::shape("feature set must hold at least one feature of dimension >= 1"));
        }
        if vectors.len() != dim * coords.len() {
            return Err(Error::shape(format!(
                "{} values for {} features of dimension {dim}",
                vectors.len(),
                coords.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vectors contain non-finite values"));
        }
        if coords
            .iter()
            .flatten()
            .any(|c| !(0.0..=1.0).contains(c))
        {
            return Err(Error::invalid("feature coordinates must lie in [0, 1]"));
        }
        Ok(Self {
            dim,
            vectors,
            coords,
            source_dims,
            layer: None,
        })
    }

    pub fn with_layer(mut self, name: impl Into<String>) -> Self {
        self.layer = Some(name.into());
        self
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn coord(&self, i: usize) -> [f32; 2] {
        self.coords[i]
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn coords(&self) -> &[[f32; 2]] {
        &self.coords
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn layer(&self) -> Option<&str> {
        self.layer.as_deref()
    }

    /// Mean feature vector.
    pub fn mean_vector(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.vectors.chunks_exact(self.dim) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Subtracts `mean` from every vector.
    pub fn shifted_by(&self, mean: &[f64]) -> Result<Self> {
        if mean.len() != self.dim {
            return Err(Error::shape(format!(
                "mean of dimension {} for features of dimension {}",
                mean.len(),
                self.dim
            )));
        }
        let vectors = self
            .vectors
            .chunks_exact(self.dim)
            .flat_map(|row| row.iter().zip(mean).map(|(&v, &m)| (v as f64 - m) as f32))
            .collect();
        Ok(Self {
            vectors,
            ..self.clone()
        })
    }

    /// Multiplies every vector by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            vectors: self.vectors.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Centres both sets on the mean of the target set, the mean shift used by
/// the original contextual loss.
pub fn mean_shift_pair(src: &FeatureSet, tgt: &FeatureSet) -> Result<(FeatureSet, FeatureSet)> {
    let mean = tgt.mean_vector();
    Ok((src.shifted_by(&mean)?, tgt.shifted_by(&mean)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    /// Patch side in pixels.
    pub n: usize,
    pub stride: usize,
}

impl PatchConfig {
    /// Patch size for 4X zoom.
    pub const ZOOM_4X: PatchConfig = PatchConfig { n: 10, stride: 1 };
    /// Patch size for 8X zoom.
    pub const ZOOM_8X: PatchConfig = PatchConfig { n: 15, stride: 1 };

    pub fn new(n: usize, stride: usize) -> Self {
        Self { n, stride }
    }

    /// Patch grid `(rows, cols)` on an `height x width` image.
    pub fn grid(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        if self.n == 0 || self.stride == 0 {
            return Err(Error::invalid(format!(
                "patch size and stride must be positive, got {self:?}"
            )));
        }
        if self.n > height || self.n > width {
            return Err(Error::invalid(format!(
                "{n}x{n} patch is larger than the {height}x{width} image",
                n = self.n
            )));
        }
        Ok((
            (height - self.n) / self.stride + 1,
            (width - self.n) / self.stride + 1,
        ))
    }
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self::ZOOM_4X
    }
}

#[inline]
fn normalized(pos: f64, extent: usize) -> f32 {
    if extent <= 1 {
        0.0
    } else {
        (pos / (extent - 1) as f64) as f32
    }
}

/// Every valid `n x n` patch (no padding) in row-major order. A vector is
/// the patch flattened as `(dy, dx, c)`; its coordinate is the patch centre.
pub fn extract_patch_features(img: &ImageBuffer, cfg: PatchConfig) -> Result<FeatureSet> {
    let (h, w, c) = img.shape();
    let (rows, cols) = cfg.grid(h, w)?;
    let n = cfg.n;
    let dim = n * n * c;
    let half = (n as f64 - 1.0) / 2.0;
    let mut vectors = Vec::with_capacity(rows * cols * dim);
    let mut coords = Vec::with_capacity(rows * cols);
    let data = img.data();
    for r in 0..rows {
        let y0 = r * cfg.stride;
        for k in 0..cols {
            let x0 = k * cfg.stride;
            for dy in 0..n {
                let start = img.index(y0 + dy, x0, 0);
                vectors.extend_from_slice(&data[start..start + n * c]);
            }
            coords.push([
                normalized(x0 as f64 + half, w),
                normalized(y0 as f64 + half, h),
            ]);
        }
    }
    FeatureSet::new(dim, vectors, coords, (h, w))
}

/// Turns a `[C, H, W]` activation tensor into `H * W` features of dimension `C`.
pub fn load_feature_map(t: &Tensor, layer_name: &str) -> Result<FeatureSet> {
    let &[c, h, w] = t.dims() else {
        return Err(Error::shape(format!(
            "feature map must have dims [C, H, W], got {:?}",
            t.dims()
        )));
    };
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::shape(format!("empty feature map {:?}", t.dims())));
    }
    let data = t.data();
    let plane = h * w;
    let mut vectors = Vec::with_capacity(plane * c);
    let mut coords = Vec::with_capacity(plane);
    for y in 0..h {
        for x in 0..w {
            vectors.extend((0..c).map(|ch| data[ch * plane + y * w + x]));
            coords.push([normalized(x as f64, w), normalized(y as f64, h)]);
        }
    }
    Ok(FeatureSet::new(c, vectors, coords, (h, w))?.with_layer(layer_name))
}

#[inline]
fn dot_norms(p: &[f32], q: &[f32]) -> (f64, f64, f64) {
    let (mut dot, mut pp, mut qq) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in p.iter().zip(q) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        pp += a * a;
        qq += b * b;
    }
    (dot, pp.sqrt(), qq.sqrt())
}

/// `1 - p.q / max(|p| |q|, 1e-12)`, in `[0, 2]`. A zero vector is at
/// distance 1 from everything.
pub fn cosine_distance(p: &[f32], q: &[f32]) -> f64 {
    let (dot, np, nq) = dot_norms(p, q);
    1.0 - dot / (np * nq).max(COSINE_EPS)
}

/// Same as [`cosine_distance`] with the norms precomputed.
#[inline]
pub(crate) fn cosine_distance_with_norms(p: &[f32], q: &[f32], np: f64, nq: f64) -> f64 {
    let mut dot = 0.0f64;
    for (&a, &b) in p.iter().zip(q) {
        dot += a as f64 * b as f64;
    }
    1.0 - dot / (np * nq).max(COSINE_EPS)
}

pub(crate) fn norms(set: &FeatureSet) -> Vec<f64> {
    set.vectors
        .chunks_exact(set.dim)
        .map(|row| row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ColorSpace;

    #[test]
    fn cosine_special_cases() {
        let p = [0.3f32, -1.2, 2.0];
        assert!(cosine_distance(&p, &p).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        let neg: Vec<f32> = p.iter().map(|v| -v).collect();
        assert!((cosine_distance(&p, &neg) - 2.0).abs() < 1e-15);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 2.0]), 1.0);
    }

    #[test]
    fn single_pixel_patches() {
        let img = ImageBuffer::from_fn(3, 4, 3, ColorSpace::Srgb, |y, x, c| {
            (y * 12 + x * 3 + c) as f32 / 36.0
        })
        .unwrap();
        let f = extract_patch_features(&img, PatchConfig::new(1, 1)).unwrap();
        assert_eq!((f.len(), f.dim()), (12, 3));
        assert_eq!(f.vector(5), &[img.get(1, 1, 0), img.get(1, 1, 1), img.get(1, 1, 2)]);
        assert_eq!(f.coord(0), [0.0, 0.0]);
        assert_eq!(f.coord(11), [1.0, 1.0]);
    }

    #[test]
    fn patch_counts() {
        let img = ImageBuffer::filled(5, 5, 3, 0.5, ColorSpace::Srgb).unwrap();
        let f = extract_patch_features(&img, PatchConfig::new(3, 1)).unwrap();
        assert_eq!((f.len(), f.dim()), (9, 27));
        assert_eq!(f.coord(4), [0.5, 0.5]);
        let img = ImageBuffer::filled(17, 23, 1, 0.5, ColorSpace::Srgb).unwrap();
        for (n, stride) in [(1, 1), (4, 3), (10, 2), (17, 5)] {
            let f = extract_patch_features(&img, PatchConfig::new(n, stride)).unwrap();
            assert_eq!(f.len(), ((17 - n) / stride + 1) * ((23 - n) / stride + 1));
        }
        assert!(extract_patch_features(&img, PatchConfig::new(18, 1)).is_err());
        assert_eq!(PatchConfig::ZOOM_4X.n, 10);
        assert_eq!(PatchConfig::ZOOM_8X.n, 15);
    }

    #[test]
    fn feature_maps() {
        let t = Tensor::new(vec![2, 1, 1], vec![0.5, -1.0]).unwrap();
        let f = load_feature_map(&t, "conv1_2").unwrap();
        assert_eq!((f.len(), f.dim()), (1, 2));
        assert_eq!(f.vector(0), &[0.5, -1.0]);
        assert_eq!(f.coord(0), [0.0, 0.0]);
        assert_eq!(f.layer(), Some("conv1_2"));

        let t = Tensor::new(vec![64, 32, 32], vec![0.0; 64 * 32 * 32]).unwrap();
        let f = load_feature_map(&t, "conv2_2").unwrap();
        assert_eq!((f.len(), f.dim()), (1024, 64));
        assert_eq!(f.coord(0), [0.0, 0.0]);
        assert_eq!(f.coord(31), [1.0, 0.0]);
        assert_eq!(f.coord(32 * 31), [0.0, 1.0]);
        assert_eq!(f.coord(1023), [1.0, 1.0]);

        let flat = Tensor::new(vec![4, 4], vec![0.0; 16]).unwrap();
        assert!(load_feature_map(&flat, "x").is_err());
    }

    #[test]
    fn mean_shift_centres_target() {
        let q = FeatureSet::new(2, vec![1.0, 2.0, 3.0, 4.0], vec![[0.0, 0.0], [1.0, 1.0]], (1, 2))
            .unwrap();
        let (p2, q2) = mean_shift_pair(&q, &q).unwrap();
        assert_eq!(q2.vectors(), &[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(p2, q2);
    }
}
