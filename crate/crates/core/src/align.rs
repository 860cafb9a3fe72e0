//! Preprocessing for optically zoomed pairs: field-of-view matching, the
//! residual scale offset between focal lengths, and Euclidean registration
//! by enhanced correlation coefficient (ECC) maximization.
//!
//! A transform maps a point `x` of the source image to
//! `R(theta) (x - c) + c + t` in the destination, with `c` the image centre
//! `((W - 1) / 2, (H - 1) / 2)`. [`warp_euclidean`] resamples an image
//! through that mapping and [`ecc_align`] recovers it from an image pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayer::BayerMosaic;
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageBuffer};
use crate::raw_pipeline::crop_cfa_aligned;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EuclideanTransform {
    /// Rotation in radians.
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl EuclideanTransform {
    pub const IDENTITY: Self = Self {
        theta: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(theta: f64, tx: f64, ty: f64) -> Self {
        Self { theta, tx, ty }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::new(0.0, tx, ty)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.theta.is_finite() && self.tx.is_finite() && self.ty.is_finite();
        if !finite || self.theta.abs() >= std::f64::consts::PI {
            return Err(Error::invalid(format!("invalid transform {self:?}")));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.theta.sin_cos();
        // -R^T t
        Self {
            theta: -self.theta,
            tx: -(c * self.tx + s * self.ty),
            ty: -(-s * self.tx + c * self.ty),
        }
    }

    /// The same motion expressed on an image resampled by `factor`
    /// (half-pixel centred), e.g. `2.0` when moving to a twice larger image.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            theta: self.theta,
            tx: self.tx * factor,
            ty: self.ty * factor,
        }
    }

    /// Maps `(x, y)` about centre `(cx, cy)`.
    #[inline]
    pub fn apply(&self, x: f64, y: f64, cx: f64, cy: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        (c * dx - s * dy + cx + self.tx, s * dx + c * dy + cy + self.ty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EccConfig {
    pub pyramid_levels: usize,
    pub max_iters_per_level: usize,
    /// Stop a level once the correlation improves by less than this.
    pub eps: f64,
}

impl Default for EccConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            max_iters_per_level: 50,
            eps: 1e-6,
        }
    }
}

impl EccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 || self.max_iters_per_level < 1 || !(self.eps > 0.0) {
            return Err(Error::invalid(format!("invalid ECC configuration {self:?}")));
        }
        Ok(())
    }
}

/// Recovered transform plus the final correlation coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub transform: EuclideanTransform,
    pub ecc: f64,
}

/// Central crops used for field-of-view matching.
pub trait FovCrop: Sized {
    fn dims(&self) -> (usize, usize);
    /// Central crop of `height x width`.
    fn crop_center(&self, height: usize, width: usize) -> Result<Self>;
}

impl FovCrop for ImageBuffer {
    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    fn crop_center(&self, height: usize, width: usize) -> Result<Self> {
        self.center_crop(width, height)
    }
}

impl FovCrop for BayerMosaic {
    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    /// Sizes and offsets are rounded down to even values to keep the CFA phase.
    fn crop_center(&self, height: usize, width: usize) -> Result<Self> {
        let (h, w) = (height & !1, width & !1);
        let y0 = ((self.height() - h) / 2) & !1;
        let x0 = ((self.width() - w) / 2) & !1;
        crop_cfa_aligned(self, x0, y0, w, h)
    }
}

/// Size of the central region a wide frame shares with a telephoto frame.
pub fn fov_crop_size(height: usize, width: usize, f_wide: f64, f_tele: f64) -> Result<(usize, usize)> {
    if !(f_wide > 0.0 && f_tele >= f_wide) {
        return Err(Error::invalid(format!(
            "need 0 < f_wide <= f_tele, got {f_wide} and {f_tele}"
        )));
    }
    let ratio = f_wide / f_tele;
    // the tiny slack keeps exact ratios such as 1000 * 35/140 from rounding down
    let h = (height as f64 * ratio + 1e-9).floor() as usize;
    let w = (width as f64 * ratio + 1e-9).floor() as usize;
    Ok((h, w))
}

/// Crops `wide` to the field of view of a `f_tele` capture.
pub fn match_fov<T: FovCrop>(wide: &T, f_wide: f64, f_tele: f64) -> Result<T> {
    let (h, w) = wide.dims();
    let (ch, cw) = fov_crop_size(h, w, f_wide, f_tele)?;
    if ch < 2 || cw < 2 {
        return Err(Error::invalid(format!(
            "field-of-view crop {ch}x{cw} is smaller than 2x2"
        )));
    }
    wide.crop_center(ch, cw)
}

/// Residual resampling factor when `f_gt / f_in` misses the nominal zoom.
pub fn compute_scale_offset(f_in: f64, f_gt: f64, zoom: f64) -> f64 {
    f_gt / (f_in * zoom)
}

fn image_center(height: usize, width: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Resamples `img` so that source point `x` lands at `t(x)`. Bilinear,
/// edge-clamped.
pub fn warp_euclidean(img: &ImageBuffer, t: &EuclideanTransform) -> ImageBuffer {
    let (h, w, c) = img.shape();
    let (cx, cy) = image_center(h, w);
    let inv = t.inverse();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv.apply(x as f64, y as f64, cx, cy);
            for ch in 0..c {
                data.push(img.sample_bilinear(sy, sx, ch) as f32);
            }
        }
    }
    let mut out = ImageBuffer::from_parts(h, w, c, data, img.space());
    if img.space() != ColorSpace::LinearRaw {
        for v in out.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    out
}

/// Warps and then applies a per-channel gain, clamping to `[0, 1]`.
/// Simulates residual camera motion plus an illumination change.
pub fn synth_misalignment(img: &ImageBuffer, t: &EuclideanTransform, gains: [f32; 3]) -> Result<ImageBuffer> {
    if gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::invalid(format!("gains must be positive, got {gains:?}")));
    }
    let warped = warp_euclidean(img, t);
    let c = warped.channels();
    let mut data = warped.into_data();
    for (i, v) in data.iter_mut().enumerate() {
        *v = (*v * gains[(i % c).min(2)]).clamp(0.0, 1.0);
    }
    ImageBuffer::new(img.height(), img.width(), c, data, img.space())
}

/// Draws a misalignment whose translation magnitude is 1.1-2.3% of the
/// image width, the relative size of a 40-80 px shift on an 8-megapixel
/// frame. Rotation is uniform in `[-max_theta, max_theta]`.
pub fn random_misalignment(width: usize, max_theta: f64, seed: u64) -> EuclideanTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mag = rng.random_range(0.011..=0.023) * width as f64;
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    let theta = if max_theta > 0.0 {
        rng.random_range(-max_theta..=max_theta)
    } else {
        0.0
    };
    EuclideanTransform::new(theta, mag * dir.cos(), mag * dir.sin())
}

// ---------------------------------------------------------------------------
// ECC

/// Single-channel f64 plane.
#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn from_luma(img: &ImageBuffer) -> Result<Self> {
        let l = img.to_luma()?;
        Ok(Self {
            h: l.height(),
            w: l.width(),
            v: l.data().iter().map(|&v| v as f64).collect(),
        })
    }

    #[inline]
    fn at(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.v[y * self.w + x]
    }

    #[inline]
    fn bilinear(&self, y: f64, x: f64) -> f64 {
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as isize, x0 as isize);
        let top = self.at(y0, x0) * (1.0 - fx) + self.at(y0, x0 + 1) * fx;
        let bot = self.at(y0 + 1, x0) * (1.0 - fx) + self.at(y0 + 1, x0 + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Separable [1 4 6 4 1] / 16 smoothing, edge-clamped.
    fn smooth(&self) -> Self {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let mut tmp = vec![0.0; self.v.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                tmp[y * self.w + x] = (0..5)
                    .map(|k| K[k] * self.at(y as isize, x as isize + k as isize - 2))
                    .sum();
            }
        }
        let tmp = Plane {
            h: self.h,
            w: self.w,
            v: tmp,
        };
        let mut out = vec![0.0; self.v.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                out[y * self.w + x] = (0..5)
                    .map(|k| K[k] * tmp.at(y as isize + k as isize - 2, x as isize))
                    .sum();
            }
        }
        Plane {
            h: self.h,
            w: self.w,
            v: out,
        }
    }

    /// 2x2 box decimation. Level pixel `x` covers full-resolution `2x + 0.5`.
    fn halve(&self) -> Self {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (y2, x2) = (2 * y, 2 * x);
                v.push(
                    0.25 * (self.v[y2 * self.w + x2]
                        + self.v[y2 * self.w + x2 + 1]
                        + self.v[(y2 + 1) * self.w + x2]
                        + self.v[(y2 + 1) * self.w + x2 + 1]),
                );
            }
        }
        Plane { h, w, v }
    }

    fn gradients(&self) -> (Plane, Plane) {
        let mut gx = vec![0.0; self.v.len()];
        let mut gy = vec![0.0; self.v.len()];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let i = y as usize * self.w + x as usize;
                gx[i] = 0.5 * (self.at(y, x + 1) - self.at(y, x - 1));
                gy[i] = 0.5 * (self.at(y + 1, x) - self.at(y - 1, x));
            }
        }
        (
            Plane {
                h: self.h,
                w: self.w,
                v: gx,
            },
            Plane {
                h: self.h,
                w: self.w,
                v: gy,
            },
        )
    }
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let scale = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if !(d.abs() > 1e-14 * scale.powi(3)) {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][k] = b[r];
        }
        *xk = det(&m) / d;
    }
    Some(x)
}

/// Correlation of `template` with `input` sampled through `p`.
fn correlation(template: &Plane, input: &Plane, p: &EuclideanTransform, cx: f64, cy: f64) -> Option<f64> {
    let (xmax, ymax) = (input.w as f64 - 1.0, input.h as f64 - 1.0);
    let (mut ir, mut iw) = (Vec::new(), Vec::new());
    for y in 0..template.h {
        for x in 0..template.w {
            let (wx, wy) = p.apply(x as f64, y as f64, cx, cy);
            if wx >= 0.0 && wy >= 0.0 && wx <= xmax && wy <= ymax {
                ir.push(template.v[y * template.w + x]);
                iw.push(input.bilinear(wy, wx));
            }
        }
    }
    if ir.len() < 16 {
        return None;
    }
    let n = ir.len() as f64;
    let mr = ir.iter().sum::<f64>() / n;
    let mw = iw.iter().sum::<f64>() / n;
    let (mut dot, mut nr, mut nw) = (0.0, 0.0, 0.0);
    for (a, b) in ir.iter().zip(&iw) {
        let (a, b) = (a - mr, b - mw);
        dot += a * b;
        nr += a * a;
        nw += b * b;
    }
    let den = (nr * nw).sqrt();
    (den > 0.0).then(|| dot / den)
}

enum Step {
    Updated { rho: f64 },
    /// The correlation cannot be increased from here.
    Stalled { rho: f64 },
}

struct EccLevel {
    template: Plane,
    input: Plane,
    gx: Plane,
    gy: Plane,
    cx: f64,
    cy: f64,
}

impl EccLevel {
    /// One forward-additive ECC update of `p`.
    fn step(&self, p: &mut EuclideanTransform) -> Result<Step> {
        let (s, c) = p.theta.sin_cos();
        let (xmax, ymax) = (self.input.w as f64 - 1.0, self.input.h as f64 - 1.0);
        let mut ir = Vec::new();
        let mut iw = Vec::new();
        let mut jac: Vec<[f64; 3]> = Vec::new();
        for y in 0..self.template.h {
            for x in 0..self.template.w {
                let (dx, dy) = (x as f64 - self.cx, y as f64 - self.cy);
                let wx = c * dx - s * dy + self.cx + p.tx;
                let wy = s * dx + c * dy + self.cy + p.ty;
                if !(wx >= 0.0 && wy >= 0.0 && wx <= xmax && wy <= ymax) {
                    continue;
                }
                let gx = self.gx.bilinear(wy, wx);
                let gy = self.gy.bilinear(wy, wx);
                let dtheta = gx * (-s * dx - c * dy) + gy * (c * dx - s * dy);
                ir.push(self.template.v[y * self.template.w + x]);
                iw.push(self.input.bilinear(wy, wx));
                jac.push([dtheta, gx, gy]);
            }
        }
        let n = ir.len();
        if n < 16 {
            return Err(Error::NonConvergence(
                "warped template no longer overlaps the input".into(),
            ));
        }
        let nf = n as f64;
        let mr = ir.iter().sum::<f64>() / nf;
        let mw = iw.iter().sum::<f64>() / nf;
        let mut mj = [0.0; 3];
        for j in &jac {
            for k in 0..3 {
                mj[k] += j[k] / nf;
            }
        }

        let mut hess = [[0.0; 3]; 3];
        let (mut pr, mut pw) = ([0.0; 3], [0.0; 3]);
        let (mut nr2, mut nw2, mut dot) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let a = ir[i] - mr;
            let b = iw[i] - mw;
            let g = [jac[i][0] - mj[0], jac[i][1] - mj[1], jac[i][2] - mj[2]];
            for r in 0..3 {
                for k in 0..3 {
                    hess[r][k] += g[r] * g[k];
                }
                pr[r] += g[r] * a;
                pw[r] += g[r] * b;
            }
            nr2 += a * a;
            nw2 += b * b;
            dot += a * b;
        }
        if !(nr2 > 0.0 && nw2 > 0.0) {
            return Err(Error::NonConvergence("image has no intensity variation".into()));
        }
        let rho = dot / (nr2 * nw2).sqrt();
        let Some(hinv_pw) = solve3(hess, pw) else {
            return Err(Error::NonConvergence("image has no gradient energy".into()));
        };
        let proj_w: f64 = (0..3).map(|k| pw[k] * hinv_pw[k]).sum();
        let proj_rw: f64 = (0..3).map(|k| pr[k] * hinv_pw[k]).sum();
        let lambda_n = nw2 - proj_w;
        let lambda_d = dot - proj_rw;
        if lambda_d <= 0.0 {
            return Ok(Step::Stalled { rho });
        }
        let lambda = lambda_n / lambda_d;
        // G^T (lambda * i_r - i_w)
        let rhs = [
            lambda * pr[0] - pw[0],
            lambda * pr[1] - pw[1],
            lambda * pr[2] - pw[2],
        ];
        let delta = solve3(hess, rhs)
            .ok_or_else(|| Error::NonConvergence("singular ECC Hessian".into()))?;
        p.theta += delta[0];
        p.tx += delta[1];
        p.ty += delta[2];
        Ok(Step::Updated { rho })
    }
}

/// Estimates the Euclidean motion taking `src` onto `dst`, so that
/// `warp_euclidean(src, &t)` approximates `dst`.
///
/// Three-channel inputs are reduced to Rec. 601 luma. The estimate is
/// refined coarse to fine over a 2x pyramid; each level iterates until the
/// correlation gain drops below `cfg.eps`. The correlation coefficient is
/// invariant to affine intensity changes of either image.
pub fn ecc_align(src: &ImageBuffer, dst: &ImageBuffer, cfg: &EccConfig) -> Result<Alignment> {
    cfg.validate()?;
    if src.height() != dst.height() || src.width() != dst.width() {
        return Err(Error::shape(format!(
            "ECC inputs differ in size: {}x{} vs {}x{}",
            src.height(),
            src.width(),
            dst.height(),
            dst.width()
        )));
    }
    let mut templates = vec![Plane::from_luma(src)?];
    let mut inputs = vec![Plane::from_luma(dst)?];
    let (cx0, cy0) = image_center(src.height(), src.width());
    let mut centers = vec![(cx0, cy0)];
    for _ in 1..cfg.pyramid_levels {
        let (t, i) = (templates.last().unwrap(), inputs.last().unwrap());
        if t.h / 2 < 8 || t.w / 2 < 8 {
            break;
        }
        let (cx, cy) = *centers.last().unwrap();
        templates.push(t.halve());
        inputs.push(i.halve());
        centers.push(((cx - 0.5) / 2.0, (cy - 0.5) / 2.0));
    }
    let levels = templates.len();

    let mut p = EuclideanTransform::IDENTITY;
    for level in (0..levels).rev() {
        let input = inputs[level].smooth();
        let (gx, gy) = input.gradients();
        let lvl = EccLevel {
            template: templates[level].smooth(),
            input,
            gx,
            gy,
            cx: centers[level].0,
            cy: centers[level].1,
        };
        let coarsest = level == levels - 1;
        let mut last = f64::NEG_INFINITY;
        for iter in 0..cfg.max_iters_per_level {
            match lvl.step(&mut p)? {
                Step::Stalled { rho } => {
                    if coarsest && iter == 0 {
                        return Err(Error::NonConvergence(format!(
                            "correlation cannot be increased from the initial estimate (rho = {rho:.4})"
                        )));
                    }
                    break;
                }
                Step::Updated { rho } => {
                    if (rho - last).abs() < cfg.eps {
                        break;
                    }
                    last = rho;
                }
            }
        }
        log::debug!(
            "ecc level {level}: theta {:.6} t ({:.4}, {:.4}) rho {last:.6}",
            p.theta,
            p.tx,
            p.ty
        );
        if level > 0 {
            p = p.scaled(2.0);
        }
    }
    if !(p.theta.is_finite() && p.tx.is_finite() && p.ty.is_finite()) {
        return Err(Error::NonConvergence("estimate diverged".into()));
    }
    let ecc = correlation(&templates[0], &inputs[0], &p, cx0, cy0)
        .ok_or_else(|| Error::NonConvergence("estimate leaves no overlap".into()))?;
    if !(ecc > 0.0) {
        return Err(Error::NonConvergence(format!(
            "final correlation {ecc:.4} is not positive"
        )));
    }
    Ok(Alignment { transform: p, ecc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayer::{Cfa, RawMetadata};
    use crate::texture::fractal_texture;

    #[test]
    fn inverse_composes_to_identity() {
        let t = EuclideanTransform::new(0.3, 4.0, -2.5);
        let inv = t.inverse();
        let (x, y) = t.apply(10.0, 3.0, 5.0, 6.0);
        let (bx, by) = inv.apply(x, y, 5.0, 6.0);
        assert!((bx - 10.0).abs() < 1e-12 && (by - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fov_on_images() {
        let img = ImageBuffer::filled(800, 1000, 1, 0.5, ColorSpace::Srgb).unwrap();
        let out = match_fov(&img, 35.0, 140.0).unwrap();
        assert_eq!((out.height(), out.width()), (200, 250));
        let same = match_fov(&img, 50.0, 50.0).unwrap();
        assert_eq!(same, img);
        assert!(match_fov(&img, 1.0, 1000.0).is_err());
        assert!(match_fov(&img, 50.0, 35.0).is_err());
    }

    #[test]
    fn fov_on_mosaics_rounds_to_even() {
        let data = (0..1024 * 1024).map(|v| (v % 4096) as f32).collect();
        let m = BayerMosaic::new(1024, 1024, data, RawMetadata::normalized(Cfa::Rggb)).unwrap();
        let out = match_fov(&m, 24.0, 240.0).unwrap();
        assert_eq!((out.height(), out.width()), (102, 102));
        // requested offset 461 rounds down to 460
        assert_eq!(out.get(0, 0), m.get(460, 460));
        assert_eq!(out.cfa(), Cfa::Rggb);
    }

    #[test]
    fn scale_offsets() {
        assert!((compute_scale_offset(35.0, 150.0, 4.0) - 1.0714).abs() < 1e-4);
        assert_eq!(compute_scale_offset(35.0, 140.0, 4.0), 1.0);
        assert_eq!(compute_scale_offset(24.0, 240.0, 8.0), 1.25);
    }

    #[test]
    fn warp_identity_and_integer_shift() {
        let img = fractal_texture(24, 30, 3, 6.0, 4);
        assert_eq!(warp_euclidean(&img, &EuclideanTransform::IDENTITY), img);
        let shifted = warp_euclidean(&img, &EuclideanTransform::translation(1.0, 0.0));
        for y in 0..24 {
            for x in 1..30 {
                for c in 0..3 {
                    assert_eq!(shifted.get(y, x, c), img.get(y, x - 1, c));
                }
            }
        }
    }

    #[test]
    fn four_quarter_turns() {
        let img = fractal_texture(32, 32, 1, 8.0, 2);
        let quarter = EuclideanTransform::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let mut out = img.clone();
        for _ in 0..4 {
            out = warp_euclidean(&out, &quarter);
        }
        for y in 4..28 {
            for x in 4..28 {
                assert!((out.get(y, x, 0) - img.get(y, x, 0)).abs() < 0.05);
            }
        }
    }

    #[test]
    fn warp_round_trip_interior() {
        // band-limited, so two bilinear passes lose little
        let img = crate::resample::resize_bicubic_to(&fractal_texture(16, 16, 3, 4.0, 3), 64, 64).unwrap();
        let t = EuclideanTransform::new(0.05, 3.2, -1.7);
        let back = warp_euclidean(&warp_euclidean(&img, &t), &t.inverse());
        // translation plus the rotation's displacement at the corners
        let band = (t.tx.abs() + t.ty.abs() + 0.05 * 46.0 + 2.0).ceil() as usize;
        let (mut sum, mut count, mut worst) = (0.0f64, 0usize, 0.0f32);
        for y in band..64 - band {
            for x in band..64 - band {
                for c in 0..3 {
                    let d = (back.get(y, x, c) - img.get(y, x, c)).abs();
                    sum += d as f64;
                    count += 1;
                    worst = worst.max(d);
                }
            }
        }
        let mean = sum / count as f64;
        assert!(mean < 0.01, "mean {mean}");
        assert!(worst < 0.1, "worst {worst}");
    }

    #[test]
    fn misalignment_generator() {
        let img = fractal_texture(16, 16, 3, 4.0, 1);
        let same = synth_misalignment(&img, &EuclideanTransform::IDENTITY, [1.0; 3]).unwrap();
        assert_eq!(same, img);
        let t = random_misalignment(256, 0.0, 11);
        let mag = t.tx.hypot(t.ty);
        assert!((2.8..=5.9).contains(&mag), "{mag}");
        assert_eq!(t, random_misalignment(256, 0.0, 11));
        assert!(synth_misalignment(&img, &t, [0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn ecc_fixed_point() {
        let img = fractal_texture(128, 128, 3, 16.0, 5);
        let a = ecc_align(&img, &img, &EccConfig::default()).unwrap();
        assert!(a.transform.tx.abs() < 1e-3 && a.transform.ty.abs() < 1e-3);
        assert!(a.transform.theta.abs() < 1e-5);
        assert!(a.ecc > 0.999);
    }

    #[test]
    fn ecc_recovers_translation() {
        let img = fractal_texture(128, 128, 3, 16.0, 6);
        let t = EuclideanTransform::translation(3.0, -2.0);
        let dst = warp_euclidean(&img, &t);
        let a = ecc_align(&img, &dst, &EccConfig::default()).unwrap();
        assert!((a.transform.tx - 3.0).abs() < 0.2, "{:?}", a);
        assert!((a.transform.ty + 2.0).abs() < 0.2, "{:?}", a);
    }

    #[test]
    fn ecc_rejects_mismatched_sizes_and_flat_images() {
        let a = fractal_texture(32, 32, 1, 8.0, 1);
        let b = fractal_texture(32, 40, 1, 8.0, 1);
        assert!(matches!(
            ecc_align(&a, &b, &EccConfig::default()),
            Err(Error::Shape(_))
        ));
        let flat = ImageBuffer::filled(32, 32, 1, 0.5, ColorSpace::Srgb).unwrap();
        assert!(matches!(
            ecc_align(&flat, &flat, &EccConfig::default()),
            Err(Error::NonConvergence(_))
        ));
    }
}
