//! Bounded per-pixel depth updates from cost maps, plus the static and
//! evolving confidence weights that feed pose alignment.

use nalgebra::Vector2;

use crate::epipolar::{CandidateSet, CostMap, DepthLimits, DepthMap, SENTINEL_COST};
use crate::error::{CoreError, Result};
use crate::image::{bilinear_resize, FeatureMap, ImageGrid};
use crate::real::Real;
use crate::se3::{project, CameraIntrinsics, CoreErrorProjectExt, Se3Pose};

/// Per-pixel running statistics of the matching costs: EMA of the minimum
/// cost and EMA of the cost peakiness (second-best minus best).
#[derive(Clone, Debug)]
pub struct CostHistory<R: Real> {
    width: usize,
    height: usize,
    decay: R,
    initialized: bool,
    ema_min: Vec<R>,
    ema_peak: Vec<R>,
}

impl<R: Real> CostHistory<R> {
    /// Empty history; the first `updated` call adopts the cost statistics
    /// directly.
    pub fn uninitialized(width: usize, height: usize, decay: R) -> Self {
        Self {
            width,
            height,
            decay,
            initialized: false,
            ema_min: vec![R::zero(); width * height],
            ema_peak: vec![R::zero(); width * height],
        }
    }

    pub fn from_costs(costs: &CostMap<R>, decay: R) -> Self {
        let mut h = Self::uninitialized(costs.width(), costs.height(), decay);
        let (min, peak) = cost_statistics(costs);
        h.ema_min = min;
        h.ema_peak = peak;
        h.initialized = true;
        h
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn is_initialized(&self) -> bool {
        self.initialized
    }
    pub fn ema_min(&self) -> &[R] {
        &self.ema_min
    }
    pub fn ema_peak(&self) -> &[R] {
        &self.ema_peak
    }
}

fn cost_statistics<R: Real>(costs: &CostMap<R>) -> (Vec<R>, Vec<R>) {
    let (w, h) = (costs.width(), costs.height());
    let mut min = vec![R::zero(); w * h];
    let mut peak = vec![R::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let (best, second) = costs.best_two(x, y);
            match (best, second) {
                (Some(b), Some(s)) => {
                    min[y * w + x] = b;
                    peak[y * w + x] = s - b;
                }
                (Some(b), None) => {
                    min[y * w + x] = b;
                }
                (None, _) => {
                    min[y * w + x] = R::c(SENTINEL_COST);
                }
            }
        }
    }
    (min, peak)
}

/// EMA update of the cost history: `new = decay * old + (1 - decay) * current`.
pub fn update_history<R: Real>(history: &CostHistory<R>, costs: &CostMap<R>) -> Result<CostHistory<R>> {
    if history.width != costs.width() || history.height != costs.height() {
        return Err(CoreError::ShapeMismatch("history vs cost map size".into()));
    }
    if !history.initialized {
        return Ok(CostHistory::from_costs(costs, history.decay));
    }
    let (min, peak) = cost_statistics(costs);
    let a = history.decay;
    let b = R::one() - a;
    let ema_min = history.ema_min.iter().zip(&min).map(|(o, c)| *o * a + *c * b).collect();
    let ema_peak = history.ema_peak.iter().zip(&peak).map(|(o, c)| *o * a + *c * b).collect();
    Ok(CostHistory {
        width: history.width,
        height: history.height,
        decay: a,
        initialized: true,
        ema_min,
        ema_peak,
    })
}

/// Per-pixel weight in (0, 1].
#[derive(Clone, Debug)]
pub struct ConfidenceMap<R: Real> {
    width: usize,
    height: usize,
    data: Vec<R>,
}

impl<R: Real> ConfidenceMap<R> {
    pub fn uniform(width: usize, height: usize, value: R) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn new(width: usize, height: usize, data: Vec<R>) -> Result<Self> {
        if data.len() != width * height {
            return Err(CoreError::ShapeMismatch(format!(
                "weight length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !v.finite() || *v < R::zero() || *v > R::one()) {
            return Err(CoreError::InvalidArgument("weights must lie in [0, 1]".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[R] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> R {
        self.data[y * self.width + x]
    }

    /// Elementwise product, the combined weight `W = W_q * W_h`.
    pub fn product(&self, other: &ConfidenceMap<R>) -> Result<ConfidenceMap<R>> {
        if self.width != other.width || self.height != other.height {
            return Err(CoreError::ShapeMismatch("confidence map sizes".into()));
        }
        Ok(ConfidenceMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a * *b).collect(),
        })
    }

    pub fn scaled(&self, gamma: R) -> ConfidenceMap<R> {
        ConfidenceMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|w| *w * gamma).collect(),
        }
    }
}

/// Soft-argmin depth update, bounded by `r * c` per pixel via tanh.
pub fn depth_update<R: Real>(
    costs: &CostMap<R>,
    candidates: &CandidateSet<R>,
    depth: &DepthMap<R>,
    temperature: R,
    limits: &DepthLimits<R>,
) -> Result<DepthMap<R>> {
    if !(temperature > R::zero()) {
        return Err(CoreError::InvalidArgument("temperature must be positive".into()));
    }
    if costs.width() != depth.width()
        || costs.height() != depth.height()
        || candidates.width() != depth.width()
        || candidates.height() != depth.height()
    {
        return Err(CoreError::ShapeMismatch("costs/candidates/depth not aligned".into()));
    }
    let r = candidates.radius() as i64;
    let mut out = depth.clone();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            // only level-1 candidates drive the update; a pixel whose current
            // estimate does not itself project into the source view has no
            // evidence against that estimate (only one-sided re-entry
            // candidates), so it is left unchanged
            if !costs.is_valid(x, y, 1, 0) {
                continue;
            }
            let mut min_cost: Option<R> = None;
            for i in -r..=r {
                if costs.is_valid(x, y, 1, i) {
                    let c = costs.cost(x, y, 1, i);
                    min_cost = Some(min_cost.map_or(c, |m: R| m.min(c)));
                }
            }
            let Some(min_cost) = min_cost else { continue };
            let mut wsum = R::zero();
            let mut dsum = R::zero();
            for i in -r..=r {
                if !costs.is_valid(x, y, 1, i) {
                    continue;
                }
                let w = (-(costs.cost(x, y, 1, i) - min_cost) / temperature).exp();
                wsum += w;
                dsum += w * candidates.candidate(x, y, 1, i);
            }
            let target = dsum / wsum;
            let d = depth.get(x, y);
            let bound = R::c(candidates.radius() as f64) * d / candidates.range_scale();
            let delta = bound * ((target - d) / bound).tanh();
            out.set(x, y, limits.clamp_inside(d + delta));
        }
    }
    Ok(out)
}

/// Texture-driven confidence for one feature map:
/// `1 / (1 + kappa * max(0, g0 - |grad|))`.
fn texture_confidence<R: Real>(feats: &FeatureMap<R>, kappa: R, g0: R) -> ImageGrid<R> {
    let (w, h) = (feats.width(), feats.height());
    let mut out = ImageGrid::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let g = feats.gradient_magnitude(x, y);
            let v = R::one() / (R::one() + kappa * (g0 - g).max(R::zero()));
            out.set(x, y, 0, v);
        }
    }
    out
}

/// Static confidence `W_q`: product of the target texture confidence and the
/// source texture confidence warped into the target frame. Computed once per
/// image pair.
pub fn static_confidence<R: Real>(
    target_feats: &FeatureMap<R>,
    source_feats: &FeatureMap<R>,
    depth: &DepthMap<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
    kappa: R,
    g0: R,
) -> ConfidenceMap<R> {
    let (w, h) = (target_feats.width(), target_feats.height());
    let target_conf = texture_confidence(target_feats, kappa, g0);
    let source_conf = texture_confidence(source_feats, kappa, g0);
    let floor = R::one() / (R::one() + kappa * g0);
    let mut data = vec![floor; w * h];
    let mut buf = [R::zero(); 1];
    for y in 0..h {
        for x in 0..w {
            let wt = target_conf.get(x, y, 0);
            let u = Vector2::new(R::c(x as f64), R::c(y as f64));
            let ws = match project(&u, depth.get(x, y), pose, k).ok_behind() {
                Some(p) => {
                    source_conf.sample_clamped(p.pixel.x, p.pixel.y, &mut buf);
                    buf[0]
                }
                None => floor,
            };
            data[y * w + x] = wt * ws;
        }
    }
    ConfidenceMap { width: w, height: h, data }
}

const CONF_FLOOR: f64 = 1e-12;

/// Evolving confidence `W_h` from the cost history:
/// low accumulated minimum cost and high peakiness give weight near 1.
pub fn evolving_confidence<R: Real>(history: &CostHistory<R>, tau_w: R) -> Result<ConfidenceMap<R>> {
    if !(tau_w > R::zero()) {
        return Err(CoreError::InvalidArgument("tau_w must be positive".into()));
    }
    if !history.initialized {
        return Err(CoreError::InvalidArgument("cost history not initialized".into()));
    }
    let floor = R::c(CONF_FLOOR);
    let ceil = R::one() - floor;
    let data = history
        .ema_min
        .iter()
        .zip(&history.ema_peak)
        .map(|(m, p)| {
            let w = (-*m / tau_w).exp() * (R::one() - (-*p / tau_w).exp());
            w.clamp(floor, ceil)
        })
        .collect();
    Ok(ConfidenceMap { width: history.width, height: history.height, data })
}

/// Bilinear upsampling of the working-resolution depth to the input resolution.
pub fn upsample_depth<R: Real>(depth: &DepthMap<R>, full_w: usize, full_h: usize) -> DepthMap<R> {
    let grid = ImageGrid::from_fn(depth.width(), depth.height(), |x, y| depth.get(x, y));
    let up = bilinear_resize(&grid, full_w, full_h);
    DepthMap::new(full_w, full_h, up.data().to_vec()).expect("interpolation preserves positivity")
}
