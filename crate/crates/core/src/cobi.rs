//! Contextual (CX) and contextual bilateral (CoBi) losses.
//!
//! Both treat the source and target as unordered feature sets. CX matches
//! every source feature to its nearest target feature under cosine
//! distance and averages the matched distances:
//!
//! ```text
//! CX(P, Q)   = 1/N sum_i min_j D(p_i, q_j)
//! CoBi(P, Q) = 1/N sum_i min_j D(p_i, q_j) + w_s |(x_i, y_i) - (x_j, y_j)|
//! ```
//!
//! This is the hard-minimum form, not the softmax-normalized contextual
//! similarity of the earlier contextual loss. Argmin ties go to the lowest
//! target index, so serial and parallel runs agree exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    cosine_distance_with_norms, extract_patch_features, mean_shift_pair, norms, FeatureSet,
    PatchConfig, COSINE_EPS,
};
use crate::image::{ColorSpace, ImageBuffer};

#[derive(Debug, Clone, PartialEq)]
pub struct CobiConfig {
    /// Weight of the spatial term.
    pub w_s: f64,
    /// Patch features of the RGB term.
    pub patch: PatchConfig,
    /// Weight of the deep-feature term.
    pub lambda: f64,
    pub layers: Vec<String>,
    /// Centre both feature sets on the target mean before matching.
    pub mean_shift: bool,
}

impl Default for CobiConfig {
    fn default() -> Self {
        Self {
            w_s: 0.5,
            patch: PatchConfig::ZOOM_4X,
            lambda: 1.0,
            layers: ["conv1_2", "conv2_2", "conv3_2"]
                .into_iter()
                .map(String::from)
                .collect(),
            mean_shift: false,
        }
    }
}

impl CobiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_s >= 0.0 && self.w_s.is_finite()) {
            return Err(Error::invalid(format!("w_s must be finite and >= 0, got {}", self.w_s)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Best target for one source feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub index: usize,
    /// Cosine distance.
    pub feature: f64,
    /// Euclidean distance between normalized coordinates.
    pub spatial: f64,
    /// The minimized quantity: `feature + w_s * spatial` (or `feature` for CX).
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matches: Vec<Match>,
    /// Size of the target set.
    pub targets: usize,
}

impl MatchResult {
    /// Mean of the per-feature totals, summed in source order.
    pub fn loss(&self) -> f64 {
        let sum: f64 = self.matches.iter().map(|m| m.total).sum();
        sum / self.matches.len() as f64
    }

    pub fn indices(&self) -> Vec<usize> {
        self.matches.iter().map(|m| m.index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniqueMatchStats {
    /// Targets with exactly one incoming match, over all targets.
    pub unique_fraction: f64,
    /// Targets with at least one incoming match.
    pub matched_targets: usize,
    pub total_targets: usize,
}

/// How candidate targets are enumerated for each source feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborSearch {
    /// Every target.
    Exhaustive,
    /// Only targets within this coordinate distance, falling back to every
    /// target when none lie inside. Approximate for small windows.
    Window(f64),
    /// Targets visited in rings of grid cells around the source, stopping
    /// once the spatial term alone rules out every remaining target.
    /// Always exact.
    Expanding,
}

fn check_dims(p: &FeatureSet, q: &FeatureSet) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::shape(format!(
            "feature dimensions differ: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

#[inline]
fn spatial_distance(a: [f32; 2], b: [f32; 2]) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    (dx * dx + dy * dy).sqrt()
}

struct Prepared<'a> {
    p: &'a FeatureSet,
    q: &'a FeatureSet,
    pn: Vec<f64>,
    qn: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(p: &'a FeatureSet, q: &'a FeatureSet) -> Self {
        Self {
            p,
            q,
            pn: norms(p),
            qn: norms(q),
        }
    }

    #[inline]
    fn candidate(&self, i: usize, j: usize, w_s: Option<f64>) -> Match {
        let feature =
            cosine_distance_with_norms(self.p.vector(i), self.q.vector(j), self.pn[i], self.qn[j]);
        let spatial = spatial_distance(self.p.coord(i), self.q.coord(j));
        let total = match w_s {
            Some(w) => feature + w * spatial,
            None => feature,
        };
        Match {
            index: j,
            feature,
            spatial,
            total,
        }
    }

    /// Scans all targets in index order; strict `<` keeps the lowest index on ties.
    fn exhaustive(&self, i: usize, w_s: Option<f64>) -> Match {
        let mut best = self.candidate(i, 0, w_s);
        for j in 1..self.q.len() {
            let m = self.candidate(i, j, w_s);
            if m.total < best.total {
                best = m;
            }
        }
        best
    }
}

/// Uniform bucket grid over target coordinates.
struct CoordGrid {
    cells: usize,
    buckets: Vec<Vec<usize>>,
}

impl CoordGrid {
    fn new(q: &FeatureSet, cells: usize) -> Self {
        let cells = cells.clamp(1, 512);
        let mut buckets = vec![Vec::new(); cells * cells];
        for (j, c) in q.coords().iter().enumerate() {
            let (cx, cy) = (Self::cell(c[0], cells), Self::cell(c[1], cells));
            buckets[cy * cells + cx].push(j);
        }
        Self { cells, buckets }
    }

    #[inline]
    fn cell(v: f32, cells: usize) -> usize {
        ((v as f64 * cells as f64) as usize).min(cells - 1)
    }

    fn cell_of(&self, c: [f32; 2]) -> (usize, usize) {
        (Self::cell(c[0], self.cells), Self::cell(c[1], self.cells))
    }

    /// Candidate indices in the cells overlapping the window around `c`.
    fn neighbors(&self, c: [f32; 2], window: f64) -> impl Iterator<Item = usize> + '_ {
        let n = self.cells as f64;
        let lo = |v: f32| ((v as f64 - window) * n).floor().max(0.0) as usize;
        let hi = |v: f32| (((v as f64 + window) * n).floor().max(0.0) as usize).min(self.cells - 1);
        let (x0, x1, y0, y1) = (lo(c[0]), hi(c[0]), lo(c[1]), hi(c[1]));
        (y0..=y1).flat_map(move |y| {
            (x0..=x1).flat_map(move |x| self.buckets[y * self.cells + x].iter().copied())
        })
    }

    /// Candidate indices in the cells at Chebyshev distance exactly `k`
    /// from cell `(cx, cy)`.
    fn ring(&self, (cx, cy): (usize, usize), k: usize) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy, k, n) = (cx as isize, cy as isize, k as isize, self.cells as isize);
        (cy - k..=cy + k)
            .flat_map(move |y| (cx - k..=cx + k).map(move |x| (x, y)))
            .filter(move |&(x, y)| {
                ((x - cx).abs() == k || (y - cy).abs() == k) && (0..n).contains(&x) && (0..n).contains(&y)
            })
            .flat_map(move |(x, y)| self.buckets[(y * n + x) as usize].iter().copied())
    }
}

/// Lexicographic `(total, index)` comparison, so the visiting order of
/// candidates cannot change the result.
#[inline]
fn improves(m: &Match, best: &Option<Match>) -> bool {
    match best {
        None => true,
        Some(b) => m.total < b.total || (m.total == b.total && m.index < b.index),
    }
}

fn windowed_best(
    prep: &Prepared<'_>,
    grid: &CoordGrid,
    i: usize,
    w_s: f64,
    window: f64,
) -> Option<Match> {
    let ci = prep.p.coord(i);
    let mut best: Option<Match> = None;
    for j in grid.neighbors(ci, window) {
        if spatial_distance(ci, prep.q.coord(j)) > window {
            continue;
        }
        let m = prep.candidate(i, j, Some(w_s));
        if improves(&m, &best) {
            best = Some(m);
        }
    }
    best
}

fn expanding_best(prep: &Prepared<'_>, grid: &CoordGrid, i: usize, w_s: f64) -> Match {
    let ci = prep.p.coord(i);
    let home = grid.cell_of(ci);
    let size = 1.0 / grid.cells as f64;
    let mut best: Option<Match> = None;
    for k in 0..grid.cells {
        if let Some(b) = &best {
            // a target k rings out is separated from the source by at least
            // k - 1 whole cells, and cosine distances are non-negative
            let reach = k.saturating_sub(1) as f64 * size;
            if w_s * reach > b.total + 1e-12 {
                break;
            }
        }
        for j in grid.ring(home, k) {
            let m = prep.candidate(i, j, Some(w_s));
            if improves(&m, &best) {
                best = Some(m);
            }
        }
    }
    best.expect("target set is non-empty")
}

fn run_search(p: &FeatureSet, q: &FeatureSet, w_s: Option<f64>, search: NeighborSearch) -> MatchResult {
    let prep = Prepared::new(p, q);
    let ws = w_s.unwrap_or(0.0);
    let matches = match search {
        NeighborSearch::Window(window) if ws > 0.0 && window < std::f64::consts::SQRT_2 => {
            let grid = CoordGrid::new(q, (1.0 / window).floor() as usize);
            (0..p.len())
                .into_par_iter()
                .map(|i| windowed_best(&prep, &grid, i, ws, window).unwrap_or_else(|| prep.exhaustive(i, w_s)))
                .collect()
        }
        NeighborSearch::Expanding if ws > 0.0 => {
            // roughly four targets per cell
            let grid = CoordGrid::new(q, ((q.len() as f64 / 4.0).sqrt()) as usize);
            (0..p.len())
                .into_par_iter()
                .map(|i| expanding_best(&prep, &grid, i, ws))
                .collect()
        }
        _ => (0..p.len())
            .into_par_iter()
            .map(|i| prep.exhaustive(i, w_s))
            .collect(),
    };
    MatchResult {
        matches,
        targets: q.len(),
    }
}

/// Contextual loss: mean over source features of the minimum cosine
/// distance to any target feature.
pub fn cx_loss(p: &FeatureSet, q: &FeatureSet) -> Result<(f64, MatchResult)> {
    check_dims(p, q)?;
    let m = run_search(p, q, None, NeighborSearch::Exhaustive);
    Ok((m.loss(), m))
}

/// Contextual bilateral loss with spatial weight `w_s`.
pub fn cobi_loss(p: &FeatureSet, q: &FeatureSet, w_s: f64) -> Result<(f64, MatchResult)> {
    cobi_loss_with(p, q, w_s, NeighborSearch::Exhaustive)
}

pub fn cobi_loss_with(
    p: &FeatureSet,
    q: &FeatureSet,
    w_s: f64,
    search: NeighborSearch,
) -> Result<(f64, MatchResult)> {
    check_dims(p, q)?;
    if !(w_s >= 0.0 && w_s.is_finite()) {
        return Err(Error::invalid(format!("w_s must be finite and >= 0, got {w_s}")));
    }
    let m = run_search(p, q, Some(w_s), search);
    Ok((m.loss(), m))
}

/// Bilateral matching restricted to targets within `window` of each source
/// coordinate; a source with no target inside its window is matched
/// against all targets. With `window >= sqrt(2)` the result is exactly the
/// exhaustive one.
pub fn nn_search_pruned(p: &FeatureSet, q: &FeatureSet, w_s: f64, window: f64) -> Result<MatchResult> {
    check_dims(p, q)?;
    if !(w_s > 0.0 && w_s.is_finite()) {
        return Err(Error::invalid(format!("pruned search needs w_s > 0, got {w_s}")));
    }
    if !(window > 0.0 && window <= std::f64::consts::SQRT_2) {
        return Err(Error::invalid(format!("window must lie in (0, sqrt 2], got {window}")));
    }
    Ok(run_search(p, q, Some(w_s), NeighborSearch::Window(window)))
}

/// Counts how many source features picked each target.
pub fn match_statistics(m: &MatchResult, targets: usize) -> UniqueMatchStats {
    let mut incoming = vec![0usize; targets];
    for mt in &m.matches {
        if let Some(c) = incoming.get_mut(mt.index) {
            *c += 1;
        }
    }
    let unique = incoming.iter().filter(|&&c| c == 1).count();
    let matched = incoming.iter().filter(|&&c| c > 0).count();
    UniqueMatchStats {
        unique_fraction: if targets == 0 {
            0.0
        } else {
            unique as f64 / targets as f64
        },
        matched_targets: matched,
        total_targets: targets,
    }
}

fn rgb_features(src: &ImageBuffer, tgt: &ImageBuffer, cfg: &CobiConfig) -> Result<(FeatureSet, FeatureSet)> {
    if src.channels() != tgt.channels() {
        return Err(Error::shape(format!(
            "channel counts differ: {} vs {}",
            src.channels(),
            tgt.channels()
        )));
    }
    let p = extract_patch_features(src, cfg.patch)?;
    let q = extract_patch_features(tgt, cfg.patch)?;
    if cfg.mean_shift {
        mean_shift_pair(&p, &q)
    } else {
        Ok((p, q))
    }
}

/// CoBi over `n x n` RGB patches of `src` and `tgt`.
pub fn cobi_rgb(src: &ImageBuffer, tgt: &ImageBuffer, cfg: &CobiConfig) -> Result<(f64, MatchResult)> {
    cfg.validate()?;
    let (p, q) = rgb_features(src, tgt, cfg)?;
    cobi_loss(&p, &q, cfg.w_s)
}

/// Combined objective: CoBi on RGB patches plus `lambda` times the mean CoBi
/// over the paired deep feature layers.
pub fn cobi_objective(
    src: &ImageBuffer,
    tgt: &ImageBuffer,
    deep_src: &[FeatureSet],
    deep_tgt: &[FeatureSet],
    cfg: &CobiConfig,
) -> Result<f64> {
    cfg.validate()?;
    if deep_src.len() != deep_tgt.len() {
        return Err(Error::shape(format!(
            "{} source layers but {} target layers",
            deep_src.len(),
            deep_tgt.len()
        )));
    }
    for (a, b) in deep_src.iter().zip(deep_tgt) {
        if let (Some(la), Some(lb)) = (a.layer(), b.layer()) {
            if la != lb {
                return Err(Error::shape(format!("layer {la:?} paired with {lb:?}")));
            }
        }
    }
    let (rgb, _) = cobi_rgb(src, tgt, cfg)?;
    if deep_src.is_empty() || cfg.lambda == 0.0 {
        return Ok(rgb);
    }
    let mut deep = 0.0;
    for (a, b) in deep_src.iter().zip(deep_tgt) {
        deep += cobi_loss(a, b, cfg.w_s)?.0;
    }
    Ok(rgb + cfg.lambda * deep / deep_src.len() as f64)
}

/// Gradient of the cosine distance `D(p, q)` with respect to `p`.
#[inline]
fn cosine_grad(p: &[f32], q: &[f32], np: f64, nq: f64, out: &mut [f64], scale: f64) {
    if np * nq < COSINE_EPS {
        return;
    }
    let dot: f64 = p.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
    let a = -1.0 / (np * nq);
    let b = dot / (np * np * np * nq);
    for ((o, &pv), &qv) in out.iter_mut().zip(p).zip(q) {
        *o += scale * (a * qv as f64 + b * pv as f64);
    }
}

/// RGB-term loss, its matches, and the gradient with respect to every
/// sample of `src` (row-major `H x W x C`).
///
/// Matches are held fixed while differentiating, so this is the gradient of
/// the loss wherever each argmin is unique. The spatial term does not depend
/// on pixel values and contributes nothing.
pub fn cobi_rgb_value_and_grad(
    src: &ImageBuffer,
    tgt: &ImageBuffer,
    cfg: &CobiConfig,
    search: NeighborSearch,
) -> Result<(f64, MatchResult, Vec<f64>)> {
    cfg.validate()?;
    let (p, q) = rgb_features(src, tgt, cfg)?;
    let (loss, m) = cobi_loss_with(&p, &q, cfg.w_s, search)?;
    let grad = scatter_patch_grad(src, cfg.patch, &p, &q, &m, None);
    Ok((loss, m, grad))
}

/// Same as [`cobi_rgb_value_and_grad`] for the CX loss.
pub fn cx_rgb_value_and_grad(
    src: &ImageBuffer,
    tgt: &ImageBuffer,
    cfg: &CobiConfig,
) -> Result<(f64, MatchResult, Vec<f64>)> {
    let (p, q) = rgb_features(src, tgt, cfg)?;
    let (loss, m) = cx_loss(&p, &q)?;
    let grad = scatter_patch_grad(src, cfg.patch, &p, &q, &m, None);
    Ok((loss, m, grad))
}

pub(crate) fn scatter_patch_grad(
    src: &ImageBuffer,
    patch: PatchConfig,
    p: &FeatureSet,
    q: &FeatureSet,
    m: &MatchResult,
    scale: Option<f64>,
) -> Vec<f64> {
    let (h, w, c) = src.shape();
    let (_, cols) = patch.grid(h, w).expect("features were extracted with this grid");
    let (pn, qn) = (norms(p), norms(q));
    let scale = scale.unwrap_or(1.0 / p.len() as f64);
    let n = patch.n;
    let mut grad = vec![0.0f64; h * w * c];
    let mut local = vec![0.0f64; p.dim()];
    for (i, mt) in m.matches.iter().enumerate() {
        local.iter_mut().for_each(|v| *v = 0.0);
        cosine_grad(p.vector(i), q.vector(mt.index), pn[i], qn[mt.index], &mut local, scale);
        let (y0, x0) = ((i / cols) * patch.stride, (i % cols) * patch.stride);
        for dy in 0..n {
            let row = ((y0 + dy) * w + x0) * c;
            let src_row = dy * n * c;
            for k in 0..n * c {
                grad[row + k] += local[src_row + k];
            }
        }
    }
    grad
}

/// Gradient of the RGB CoBi term with respect to the source pixels.
pub fn cobi_grad(src: &ImageBuffer, tgt: &ImageBuffer, cfg: &CobiConfig) -> Result<ImageBuffer> {
    let (_, _, grad) = cobi_rgb_value_and_grad(src, tgt, cfg, NeighborSearch::Exhaustive)?;
    let (h, w, c) = src.shape();
    ImageBuffer::new(
        h,
        w,
        c,
        grad.into_iter().map(|g| g as f32).collect(),
        ColorSpace::LinearRaw,
    )
}
