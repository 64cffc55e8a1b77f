//! Depth maps, per-pixel depth candidates along epipolar lines, matching
//! costs, and the coarse depth search with its consistency mask.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::image::{FeatureMap, FeaturePyramid, FEAT_CHANNELS};
use crate::real::Real;
use crate::se3::{project, CameraIntrinsics, CoreErrorProjectExt, Se3Pose};

/// Valid depth range; candidates and updates are clamped strictly inside it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthLimits<R: Real> {
    pub min: R,
    pub max: R,
}

impl<R: Real> Default for DepthLimits<R> {
    fn default() -> Self {
        Self { min: R::c(0.1), max: R::c(1000.0) }
    }
}

impl<R: Real> DepthLimits<R> {
    /// Clamp strictly inside the open interval.
    pub fn clamp_inside(&self, d: R) -> R {
        let margin = (self.max - self.min) * R::c(1e-12);
        d.clamp(self.min + margin, self.max - margin)
    }

    pub fn contains(&self, d: R) -> bool {
        d > self.min && d < self.max
    }
}

/// Per-pixel positive depth grid at working resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap<R: Real> {
    width: usize,
    height: usize,
    data: Vec<R>,
}

impl<R: Real> DepthMap<R> {
    pub fn new(width: usize, height: usize, data: Vec<R>) -> Result<Self> {
        if data.len() != width * height {
            return Err(CoreError::ShapeMismatch(format!(
                "depth data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|d| !(d.finite() && *d > R::zero())) {
            return Err(CoreError::InvalidArgument("depth values must be positive finite".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn constant(width: usize, height: usize, value: R) -> Self {
        Self { width, height, data: vec![value; width * height] }
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

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: R) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> DepthMap<R> {
        DepthMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|d| f(*d)).collect(),
        }
    }
}

/// Per-pixel, per-level depth candidates `D[u] +- i * c * n` with `c = D[u]/C`.
#[derive(Clone, Debug)]
pub struct CandidateSet<R: Real> {
    width: usize,
    height: usize,
    radius: usize,
    levels: usize,
    range_scale: R,
    /// `((y*w + x)*levels + (n-1)) * (2r+1) + (i+r)`
    data: Vec<R>,
}

impl<R: Real> CandidateSet<R> {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn radius(&self) -> usize {
        self.radius
    }
    pub fn levels(&self) -> usize {
        self.levels
    }
    pub fn range_scale(&self) -> R {
        self.range_scale
    }

    pub fn per_level(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn per_pixel(&self) -> usize {
        self.levels * self.per_level()
    }

    /// Candidate depth for signed offset index `i` in `-r..=r` at level `n` (1-based).
    #[inline]
    pub fn candidate(&self, x: usize, y: usize, level: usize, i: i64) -> R {
        let idx = ((y * self.width + x) * self.levels + (level - 1)) * self.per_level()
            + (i + self.radius as i64) as usize;
        self.data[idx]
    }

    pub fn pixel_slice(&self, x: usize, y: usize) -> &[R] {
        let start = (y * self.width + x) * self.per_pixel();
        &self.data[start..start + self.per_pixel()]
    }
}

/// Build the candidate set around the current depth estimate.
pub fn depth_candidates<R: Real>(
    depth: &DepthMap<R>,
    radius: usize,
    range_scale: R,
    levels: usize,
    limits: &DepthLimits<R>,
) -> Result<CandidateSet<R>> {
    if radius < 1 {
        return Err(CoreError::InvalidArgument("radius must be at least 1".into()));
    }
    if !(range_scale > R::zero()) {
        return Err(CoreError::InvalidArgument("range scale must be positive".into()));
    }
    if levels < 1 {
        return Err(CoreError::InvalidArgument("need at least one level".into()));
    }
    let per_level = 2 * radius + 1;
    let mut data = Vec::with_capacity(depth.width * depth.height * levels * per_level);
    for d in &depth.data {
        let c = *d / range_scale;
        for n in 1..=levels {
            let step = c * R::c(n as f64);
            for i in -(radius as i64)..=(radius as i64) {
                data.push(limits.clamp_inside(*d + step * R::c(i as f64)));
            }
        }
    }
    Ok(CandidateSet {
        width: depth.width,
        height: depth.height,
        radius,
        levels,
        range_scale,
        data,
    })
}

/// Sentinel cost assigned to masked (behind-camera / out-of-bounds) entries.
pub const SENTINEL_COST: f64 = 1e9;

/// Per-pixel matching costs over all depth candidates.
#[derive(Clone, Debug)]
pub struct CostMap<R: Real> {
    width: usize,
    height: usize,
    radius: usize,
    levels: usize,
    costs: Vec<R>,
    valid: Vec<bool>,
}

impl<R: Real> CostMap<R> {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn radius(&self) -> usize {
        self.radius
    }
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn per_level(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn per_pixel(&self) -> usize {
        self.levels * self.per_level()
    }

    /// Assemble a cost map directly from raw entries (test scaffolding).
    #[cfg(test)]
    pub(crate) fn from_raw(
        width: usize,
        height: usize,
        radius: usize,
        levels: usize,
        costs: Vec<R>,
        valid: Vec<bool>,
    ) -> Self {
        assert_eq!(costs.len(), width * height * levels * (2 * radius + 1));
        assert_eq!(valid.len(), costs.len());
        Self { width, height, radius, levels, costs, valid }
    }

    #[inline]
    fn entry_index(&self, x: usize, y: usize, level: usize, i: i64) -> usize {
        ((y * self.width + x) * self.levels + (level - 1)) * self.per_level()
            + (i + self.radius as i64) as usize
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize, level: usize, i: i64) -> R {
        self.costs[self.entry_index(x, y, level, i)]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize, level: usize, i: i64) -> bool {
        self.valid[self.entry_index(x, y, level, i)]
    }

    pub fn pixel_costs(&self, x: usize, y: usize) -> (&[R], &[bool]) {
        let start = (y * self.width + x) * self.per_pixel();
        (&self.costs[start..start + self.per_pixel()], &self.valid[start..start + self.per_pixel()])
    }

    /// Smallest valid cost at a pixel, over all levels.
    pub fn min_valid_cost(&self, x: usize, y: usize) -> Option<R> {
        let (costs, valid) = self.pixel_costs(x, y);
        costs
            .iter()
            .zip(valid)
            .filter(|(_, v)| **v)
            .map(|(c, _)| *c)
            .fold(None, |acc: Option<R>, c| Some(acc.map_or(c, |a| a.min(c))))
    }

    /// Best and second-best valid costs at a pixel, over all levels.
    pub fn best_two(&self, x: usize, y: usize) -> (Option<R>, Option<R>) {
        let (costs, valid) = self.pixel_costs(x, y);
        let mut best: Option<R> = None;
        let mut second: Option<R> = None;
        for (c, v) in costs.iter().zip(valid) {
            if !*v {
                continue;
            }
            match best {
                None => best = Some(*c),
                Some(b) if *c < b => {
                    second = Some(b);
                    best = Some(*c);
                }
                Some(_) => match second {
                    None => second = Some(*c),
                    Some(s) if *c < s => second = Some(*c),
                    _ => {}
                },
            }
        }
        (best, second)
    }

    /// Mean over pixels of the per-pixel minimum valid cost.
    pub fn mean_min_cost(&self) -> R {
        let mut sum = R::zero();
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some(m) = self.min_valid_cost(x, y) {
                    sum += m;
                    n += 1;
                }
            }
        }
        if n == 0 {
            R::zero()
        } else {
            sum / R::c(n as f64)
        }
    }
}

/// Coordinate scale factor from level-1 pixels to level-`n` pixels, per axis,
/// consistent with the align-corners resize used to build the pyramid.
fn level_scale<R: Real>(l1: &FeatureMap<R>, ln: &FeatureMap<R>) -> (R, R) {
    let sx = if l1.width() > 1 {
        R::c((ln.width() - 1) as f64) / R::c((l1.width() - 1) as f64)
    } else {
        R::zero()
    };
    let sy = if l1.height() > 1 {
        R::c((ln.height() - 1) as f64) / R::c((l1.height() - 1) as f64)
    } else {
        R::zero()
    };
    (sx, sy)
}

/// Evaluate matching costs for every candidate: project the pixel at the
/// candidate depth under the current pose, sample the level-n source feature
/// map, and take the mean absolute difference with the level-1 target feature.
pub fn sample_cost_map<R: Real>(
    target_l1: &FeatureMap<R>,
    source: &FeaturePyramid<R>,
    candidates: &CandidateSet<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
) -> Result<CostMap<R>> {
    let (w, h) = (candidates.width, candidates.height);
    if target_l1.width() != w || target_l1.height() != h {
        return Err(CoreError::ShapeMismatch(format!(
            "target features {}x{} vs candidates {}x{}",
            target_l1.width(),
            target_l1.height(),
            w,
            h
        )));
    }
    if source.level(1).width() != w || source.level(1).height() != h {
        return Err(CoreError::ShapeMismatch("source pyramid not at working resolution".into()));
    }
    if k.width != w || k.height != h {
        return Err(CoreError::ShapeMismatch("intrinsics not at working resolution".into()));
    }
    if candidates.levels > source.num_levels() {
        return Err(CoreError::ShapeMismatch("more candidate levels than pyramid levels".into()));
    }
    let scales: Vec<(R, R)> = (1..=candidates.levels)
        .map(|n| level_scale(source.level(1), source.level(n)))
        .collect();
    let per_pixel = candidates.per_pixel();
    let sentinel = R::c(SENTINEL_COST);
    let inv_ch = R::one() / R::c(FEAT_CHANNELS as f64);

    let rows: Vec<(Vec<R>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut costs = Vec::with_capacity(w * per_pixel);
            let mut valid = Vec::with_capacity(w * per_pixel);
            let mut buf = [R::zero(); FEAT_CHANNELS];
            for x in 0..w {
                let u = Vector2::new(R::c(x as f64), R::c(y as f64));
                let mut target_feat = [R::zero(); FEAT_CHANNELS];
                for c in 0..FEAT_CHANNELS {
                    target_feat[c] = target_l1.grid.get(x, y, c);
                }
                for n in 1..=candidates.levels {
                    let (sx, sy) = scales[n - 1];
                    let level_grid = &source.level(n).grid;
                    for i in -(candidates.radius as i64)..=(candidates.radius as i64) {
                        let d = candidates.candidate(x, y, n, i);
                        match project(&u, d, pose, k).ok_behind() {
                            Some(p) => {
                                let in_bounds = level_grid.sample_clamped(
                                    p.pixel.x * sx,
                                    p.pixel.y * sy,
                                    &mut buf,
                                );
                                if in_bounds {
                                    let mut cost = R::zero();
                                    for c in 0..FEAT_CHANNELS {
                                        cost += (buf[c] - target_feat[c]).abs();
                                    }
                                    costs.push(cost * inv_ch);
                                    valid.push(true);
                                } else {
                                    costs.push(sentinel);
                                    valid.push(false);
                                }
                            }
                            None => {
                                costs.push(sentinel);
                                valid.push(false);
                            }
                        }
                    }
                }
            }
            (costs, valid)
        })
        .collect();

    let mut costs = Vec::with_capacity(w * h * per_pixel);
    let mut valid = Vec::with_capacity(w * h * per_pixel);
    for (rc, rv) in rows {
        costs.extend(rc);
        valid.extend(rv);
    }
    Ok(CostMap {
        width: w,
        height: h,
        radius: candidates.radius,
        levels: candidates.levels,
        costs,
        valid,
    })
}

/// Coarse depth from a widened level-1 candidate search around the teacher
/// depth, plus a consistency mask (true where coarse and teacher agree).
pub fn coarse_depth_and_mask<R: Real>(
    teacher_depth: &DepthMap<R>,
    target_l1: &FeatureMap<R>,
    source: &FeaturePyramid<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
    wide_radius: usize,
    range_scale: R,
    ratio: R,
    limits: &DepthLimits<R>,
) -> Result<(DepthMap<R>, Vec<bool>)> {
    let candidates = depth_candidates(teacher_depth, wide_radius, range_scale, 1, limits)?;
    let costs = sample_cost_map(target_l1, source, &candidates, pose, k)?;
    let (w, h) = (teacher_depth.width, teacher_depth.height);
    let mut coarse = teacher_depth.clone();
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<(R, R)> = None; // (cost, depth)
            for i in -(wide_radius as i64)..=(wide_radius as i64) {
                if !costs.is_valid(x, y, 1, i) {
                    continue;
                }
                let c = costs.cost(x, y, 1, i);
                let d = candidates.candidate(x, y, 1, i);
                if best.map_or(true, |(bc, _)| c < bc) {
                    best = Some((c, d));
                }
            }
            match best {
                Some((_, d)) => {
                    coarse.set(x, y, d);
                    let teacher = teacher_depth.get(x, y);
                    mask[y * w + x] = (d - teacher).abs() / teacher <= ratio;
                }
                None => {
                    // every candidate masked: flag as inconsistent
                    mask[y * w + x] = false;
                }
            }
        }
    }
    Ok((coarse, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::extract_features;
    use crate::se3::{exp_map, Twist};
    use crate::synth::{render_view, PlaneSpec, SceneSpec, TextureKind};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn wide_limits() -> DepthLimits<f64> {
        DepthLimits { min: 0.1, max: 1000.0 }
    }

    #[test]
    fn depth_map_rejects_bad_values() {
        assert!(DepthMap::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DepthMap::new(2, 1, vec![1.0, 0.0]).is_err());
        assert!(DepthMap::new(2, 1, vec![1.0, -3.0]).is_err());
        assert!(DepthMap::new(2, 1, vec![1.0, f64::NAN]).is_err());
        assert!(DepthMap::new(2, 1, vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn candidate_ladder_matches_hand_computation() {
        // D = 50, C = 50 -> c = 1; level-1 candidates are 42..=58
        let depth = DepthMap::constant(1, 1, 50.0);
        let set = depth_candidates(&depth, 8, 50.0, 3, &wide_limits()).unwrap();
        assert_eq!(set.per_level(), 17);
        assert_eq!(set.per_pixel(), 51);
        for i in -8i64..=8 {
            assert_relative_eq!(set.candidate(0, 0, 1, i), 50.0 + i as f64, epsilon = 1e-12);
            assert_relative_eq!(set.candidate(0, 0, 2, i), 50.0 + 2.0 * i as f64, epsilon = 1e-12);
            assert_relative_eq!(set.candidate(0, 0, 3, i), 50.0 + 3.0 * i as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn candidates_clamped_into_limits() {
        let depth = DepthMap::constant(1, 1, 0.12);
        let limits = wide_limits();
        // step = 0.12/2 = 0.06; i=-2 would give 0, i=-1 gives 0.06 < min
        let set = depth_candidates(&depth, 2, 2.0, 1, &limits).unwrap();
        for i in -2i64..=2 {
            let d = set.candidate(0, 0, 1, i);
            assert!(d >= limits.min && d <= limits.max, "candidate {d} escaped limits");
        }
        assert!(set.candidate(0, 0, 1, -2) >= limits.min);
        assert_relative_eq!(set.candidate(0, 0, 1, 2), 0.24, epsilon = 1e-12);
    }

    #[test]
    fn candidate_argument_validation() {
        let depth = DepthMap::constant(1, 1, 1.0);
        assert!(depth_candidates(&depth, 0, 50.0, 1, &wide_limits()).is_err());
        assert!(depth_candidates(&depth, 8, 0.0, 1, &wide_limits()).is_err());
        assert!(depth_candidates(&depth, 8, 50.0, 0, &wide_limits()).is_err());
    }

    fn test_scene() -> SceneSpec<f64> {
        SceneSpec {
            planes: vec![PlaneSpec::new(
                Vector3::new(0.0, (20f64).to_radians().sin(), (20f64).to_radians().cos()),
                6.0,
                TextureKind::Checker,
                1.0,
            )
            .unwrap()],
            background_depth: None,
            texture_seed: 9,
        }
    }

    /// Full-res intrinsics whose working (quarter) resolution is 64x48.
    fn test_intrinsics() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(120.0, 120.0, 128.0, 96.0, 256, 192).unwrap()
    }

    fn baseline_pose(b: f64) -> Se3Pose<f64> {
        // camera center moves right by b: world-to-camera translation is -b
        exp_map(&Twist::new(Vector3::zeros(), Vector3::new(-b, 0.0, 0.0))).unwrap()
    }

    #[test]
    fn identical_views_have_zero_cost_at_center_candidate() {
        let k = test_intrinsics();
        let view = render_view(&test_scene(), &Se3Pose::identity(), &k).unwrap();
        let pyr = extract_features(&view.image).unwrap();
        let kw = k.scaled(0.25);
        let candidates =
            depth_candidates(&view.depth_working, 2, 50.0, 1, &wide_limits()).unwrap();
        let costs =
            sample_cost_map(pyr.level(1), &pyr, &candidates, &Se3Pose::identity(), &kw).unwrap();
        // skip the border: exact-edge projections can tip out of bounds by
        // one ulp and get masked
        for y in 1..costs.height() - 1 {
            for x in 1..costs.width() - 1 {
                assert!(costs.is_valid(x, y, 1, 0), "invalid at ({x},{y})");
                assert!(costs.cost(x, y, 1, 0).abs() < 1e-12, "cost at ({x},{y})");
            }
        }
        assert!(costs.mean_min_cost().abs() < 1e-12);
    }

    #[test]
    fn all_behind_camera_yields_sentinels() {
        let k = test_intrinsics().scaled(0.25);
        let depth = DepthMap::constant(k.width, k.height, 5.0);
        let img = crate::image::ImageGrid::from_fn(k.width * 4, k.height * 4, |x, y| {
            ((x + y) % 3) as f64 / 3.0
        });
        let pyr = extract_features(&img).unwrap();
        let pose =
            exp_map(&Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -100.0))).unwrap();
        let candidates = depth_candidates(&depth, 2, 50.0, 1, &wide_limits()).unwrap();
        let costs = sample_cost_map(pyr.level(1), &pyr, &candidates, &pose, &k).unwrap();
        for i in -2i64..=2 {
            assert!(!costs.is_valid(3, 3, 1, i));
            assert_relative_eq!(costs.cost(3, 3, 1, i), SENTINEL_COST, epsilon = 1e-3);
        }
        assert_eq!(costs.min_valid_cost(3, 3), None);
        assert_relative_eq!(costs.mean_min_cost(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn best_two_ordering() {
        let k = test_intrinsics();
        let view_t = render_view(&test_scene(), &Se3Pose::identity(), &k).unwrap();
        let pose = baseline_pose(0.5);
        let view_s = render_view(&test_scene(), &pose, &k).unwrap();
        let pyr_t = extract_features(&view_t.image).unwrap();
        let pyr_s = extract_features(&view_s.image).unwrap();
        let kw = k.scaled(0.25);
        let candidates =
            depth_candidates(&view_t.depth_working, 4, 10.0, 2, &wide_limits()).unwrap();
        let costs = sample_cost_map(pyr_t.level(1), &pyr_s, &candidates, &pose, &kw).unwrap();
        for y in 0..costs.height() {
            for x in 0..costs.width() {
                let (best, second) = costs.best_two(x, y);
                if let (Some(b), Some(s)) = (best, second) {
                    assert!(b <= s);
                    assert_relative_eq!(costs.min_valid_cost(x, y).unwrap(), b, epsilon = 1e-15);
                }
            }
        }
    }

    /// With the exact pose, the cost argmin over a coarse ladder should land
    /// at (or next to) the true depth for most textured pixels, and an
    /// accurate pose should do no worse than a perturbed one.
    #[test]
    fn argmin_tracks_rendered_depth() {
        let k = test_intrinsics();
        let scene = test_scene();
        let view_t = render_view(&scene, &Se3Pose::identity(), &k).unwrap();
        let pose = baseline_pose(1.0);
        let view_s = render_view(&scene, &pose, &k).unwrap();
        let pyr_t = extract_features(&view_t.image).unwrap();
        let pyr_s = extract_features(&view_s.image).unwrap();
        let kw = k.scaled(0.25);
        let candidates =
            depth_candidates(&view_t.depth_working, 8, 10.0, 1, &wide_limits()).unwrap();

        let fraction_near = |pose_used: &Se3Pose<f64>| -> f64 {
            let costs =
                sample_cost_map(pyr_t.level(1), &pyr_s, &candidates, pose_used, &kw).unwrap();
            let mask = pyr_t.level(1).textured_mask(0.05);
            let mut near = 0usize;
            let mut total = 0usize;
            for y in 0..costs.height() {
                for x in 0..costs.width() {
                    if !mask[y * costs.width() + x] {
                        continue;
                    }
                    let mut best: Option<(f64, i64)> = None;
                    for i in -8i64..=8 {
                        if !costs.is_valid(x, y, 1, i) {
                            continue;
                        }
                        let c = costs.cost(x, y, 1, i);
                        if best.is_none_or(|(bc, _)| c < bc) {
                            best = Some((c, i));
                        }
                    }
                    if let Some((_, i)) = best {
                        total += 1;
                        if i.abs() <= 1 {
                            near += 1;
                        }
                    }
                }
            }
            assert!(total > 100, "too few textured pixels: {total}");
            near as f64 / total as f64
        };

        let exact = fraction_near(&pose);
        assert!(exact > 0.6, "argmin near truth only {exact:.3}");

        let bad_pose = exp_map(&Twist::new(
            Vector3::new(0.0, (2f64).to_radians(), 0.0),
            Vector3::zeros(),
        ))
        .unwrap()
        .compose(&pose);
        let perturbed = fraction_near(&bad_pose);
        assert!(
            exact >= perturbed - 0.05,
            "accurate pose lost to perturbed pose: {exact:.3} vs {perturbed:.3}"
        );
    }

    #[test]
    fn coarse_search_recovers_truth_from_corrupt_teacher() {
        let k = test_intrinsics();
        let scene = test_scene();
        let view_t = render_view(&scene, &Se3Pose::identity(), &k).unwrap();
        let pose = baseline_pose(1.0);
        let view_s = render_view(&scene, &pose, &k).unwrap();
        let pyr_t = extract_features(&view_t.image).unwrap();
        let pyr_s = extract_features(&view_s.image).unwrap();
        let kw = k.scaled(0.25);

        // honest teacher: coarse agrees, mask mostly true
        let (_, mask_good) = coarse_depth_and_mask(
            &view_t.depth_working,
            pyr_t.level(1),
            &pyr_s,
            &pose,
            &kw,
            24,
            50.0,
            0.15,
            &wide_limits(),
        )
        .unwrap();
        let frac_good =
            mask_good.iter().filter(|&&m| m).count() as f64 / mask_good.len() as f64;
        assert!(frac_good > 0.7, "honest teacher flagged: {frac_good:.3}");

        // teacher scaled by 1.6: argmin escapes toward the true surface,
        // disagreement exceeds the ratio and the mask drops
        let teacher_bad = view_t.depth_working.map(|d| d * 1.6);
        let (coarse, mask_bad) = coarse_depth_and_mask(
            &teacher_bad,
            pyr_t.level(1),
            &pyr_s,
            &pose,
            &kw,
            24,
            50.0,
            0.15,
            &wide_limits(),
        )
        .unwrap();
        let mask_t = pyr_t.level(1).textured_mask(0.05);
        let mut flagged = 0usize;
        let mut total = 0usize;
        let mut improved = 0usize;
        for (idx, &m) in mask_bad.iter().enumerate() {
            if !mask_t[idx] {
                continue;
            }
            total += 1;
            if !m {
                flagged += 1;
            }
            let (x, y) = (idx % coarse.width(), idx / coarse.width());
            let truth = view_t.depth_working.get(x, y);
            if (coarse.get(x, y) - truth).abs() < (teacher_bad.get(x, y) - truth).abs() {
                improved += 1;
            }
        }
        assert!(total > 100);
        assert!(
            flagged as f64 / total as f64 > 0.6,
            "corrupt teacher not flagged: {}/{}",
            flagged,
            total
        );
        assert!(
            improved as f64 / total as f64 > 0.6,
            "coarse search did not move toward truth: {}/{}",
            improved,
            total
        );
    }
}
