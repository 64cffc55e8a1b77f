//! Two-view synthetic scenes: textured planes rendered by ray-plane
//! intersection with analytic ground-truth depth, plus seeded noise injection
//! to create refinement problems with known answers.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::epipolar::{DepthLimits, DepthMap};
use crate::error::{CoreError, Result};
use crate::image::{
    decimate, extract_features, FeatureMap, FeaturePyramid, ImageGrid, FEAT_CHANNELS,
};
use crate::real::Real;
use crate::se3::{exp_map, CameraIntrinsics, Se3Pose, Twist};

/// Procedural texture families. All are deterministic functions of the
/// plane-local coordinates and a fixed lattice seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextureKind {
    /// Smooth two-axis sinusoidal checker.
    Checker,
    /// Two-octave value noise on a hashed integer lattice.
    ValueNoise,
    /// One-axis sinusoidal stripes.
    Stripes,
}

/// One textured plane `n . X = offset` in world coordinates.
#[derive(Clone, Debug)]
pub struct PlaneSpec<R: Real> {
    pub normal: Vector3<R>,
    pub offset: R,
    pub texture: TextureKind,
    /// Texture period in world units.
    pub texture_scale: R,
}

impl<R: Real> PlaneSpec<R> {
    pub fn new(normal: Vector3<R>, offset: R, texture: TextureKind, texture_scale: R) -> Result<Self> {
        let n = normal.norm();
        if !((n - R::one()).abs() < R::c(1e-6)) {
            return Err(CoreError::InvalidArgument("plane normal must be unit length".into()));
        }
        if !(texture_scale > R::zero()) {
            return Err(CoreError::InvalidArgument("texture scale must be positive".into()));
        }
        Ok(Self { normal, offset, texture, texture_scale })
    }
}

/// Scene description: a list of planes and an optional untextured background
/// at fixed camera depth.
#[derive(Clone, Debug)]
pub struct SceneSpec<R: Real> {
    pub planes: Vec<PlaneSpec<R>>,
    pub background_depth: Option<R>,
    pub texture_seed: u64,
}

fn lattice_hash(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    h = h.wrapping_add((ix as u64).wrapping_mul(0xff51_afd7_ed55_8ccd));
    h ^= h >> 33;
    h = h.wrapping_add((iy as u64).wrapping_mul(0xc4ce_b9fe_1a85_ec53));
    h ^= h >> 29;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 32;
    (h & 0x000f_ffff_ffff_ffff) as f64 / (0x0010_0000_0000_0000u64 as f64)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(a: f64, b: f64, seed: u64) -> f64 {
    let ix = a.floor();
    let iy = b.floor();
    let fx = smoothstep(a - ix);
    let fy = smoothstep(b - iy);
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = lattice_hash(ix, iy, seed);
    let v10 = lattice_hash(ix + 1, iy, seed);
    let v01 = lattice_hash(ix, iy + 1, seed);
    let v11 = lattice_hash(ix + 1, iy + 1, seed);
    (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy
}

fn texture_value(kind: TextureKind, scale: f64, a: f64, b: f64, seed: u64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    match kind {
        TextureKind::Checker => 0.5 + 0.45 * (tau * a / scale).sin() * (tau * b / scale).sin(),
        TextureKind::Stripes => 0.5 + 0.45 * (tau * a / scale).sin(),
        TextureKind::ValueNoise => {
            let base = value_noise(a / scale, b / scale, seed);
            let fine = value_noise(2.0 * a / scale, 2.0 * b / scale, seed ^ 0x5bd1_e995);
            (0.65 * base + 0.35 * fine).clamp(0.0, 1.0)
        }
    }
}

/// Orthonormal in-plane basis for texture coordinates.
fn plane_basis<R: Real>(normal: &Vector3<R>) -> (Vector3<R>, Vector3<R>) {
    let helper = if normal.x.abs() < R::c(0.9) {
        Vector3::new(R::one(), R::zero(), R::zero())
    } else {
        Vector3::new(R::zero(), R::one(), R::zero())
    };
    let e1 = normal.cross(&helper).normalize();
    let e2 = normal.cross(&e1);
    (e1, e2)
}

/// A rendered view: intensity image plus ground-truth depth at full and
/// working (quarter) resolution.
#[derive(Clone, Debug)]
pub struct RenderedView<R: Real> {
    pub image: ImageGrid<R>,
    pub depth_full: DepthMap<R>,
    pub depth_working: DepthMap<R>,
}

fn render_grid<R: Real>(
    scene: &SceneSpec<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
    with_image: bool,
) -> Result<(Option<ImageGrid<R>>, DepthMap<R>)> {
    let (w, h) = (k.width, k.height);
    let inv = pose.inverse();
    let origin = *inv.translation(); // camera center in world coordinates
    let bases: Vec<(Vector3<R>, Vector3<R>)> =
        scene.planes.iter().map(|p| plane_basis(&p.normal)).collect();

    let rows: std::result::Result<Vec<(Vec<R>, Vec<R>)>, CoreError> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut depth_row = Vec::with_capacity(w);
            let mut image_row = Vec::with_capacity(if with_image { w } else { 0 });
            for x in 0..w {
                let u = Vector2::new(R::c(x as f64), R::c(y as f64));
                let dir_cam = k.ray(&u); // unit z-component: ray parameter equals camera depth
                let dir_w = inv.rotation() * dir_cam;
                let mut hit: Option<(R, usize)> = None;
                for (pi, plane) in scene.planes.iter().enumerate() {
                    let denom = plane.normal.dot(&dir_w);
                    if denom.abs() < R::c(1e-12) {
                        continue;
                    }
                    let s = (plane.offset - plane.normal.dot(&origin)) / denom;
                    if s > R::c(1e-6) && hit.map_or(true, |(hs, _)| s < hs) {
                        hit = Some((s, pi));
                    }
                }
                match hit {
                    Some((s, pi)) => {
                        depth_row.push(s);
                        if with_image {
                            let plane = &scene.planes[pi];
                            let point = origin + dir_w * s;
                            let (e1, e2) = bases[pi];
                            let v = texture_value(
                                plane.texture,
                                plane.texture_scale.to_f64_lossy(),
                                point.dot(&e1).to_f64_lossy(),
                                point.dot(&e2).to_f64_lossy(),
                                scene.texture_seed,
                            );
                            image_row.push(R::c(v));
                        }
                    }
                    None => match scene.background_depth {
                        Some(bg) => {
                            depth_row.push(bg);
                            if with_image {
                                image_row.push(R::c(0.5));
                            }
                        }
                        None => return Err(CoreError::RendererGap),
                    },
                }
            }
            Ok((depth_row, image_row))
        })
        .collect();
    let rows = rows?;

    let mut depth_data = Vec::with_capacity(w * h);
    let mut image_data = Vec::with_capacity(if with_image { w * h } else { 0 });
    for (dr, ir) in rows {
        depth_data.extend(dr);
        image_data.extend(ir);
    }
    let depth = DepthMap::new(w, h, depth_data)?;
    let image = if with_image { Some(ImageGrid::new(w, h, 1, image_data)?) } else { None };
    Ok((image, depth))
}

/// Render a view of the scene from `pose` (world-to-camera). Depth is the
/// camera-frame z of the nearest positive ray-plane hit.
pub fn render_view<R: Real>(
    scene: &SceneSpec<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
) -> Result<RenderedView<R>> {
    if scene.planes.is_empty() && scene.background_depth.is_none() {
        return Err(CoreError::InvalidArgument("empty scene".into()));
    }
    let (image, depth_full) = render_grid(scene, pose, k, true)?;
    let kw = k.scaled(R::c(0.25));
    let (_, depth_working) = render_grid(scene, pose, &kw, false)?;
    Ok(RenderedView { image: image.unwrap(), depth_full, depth_working })
}

/// A complete two-view refinement problem at working resolution: images,
/// feature pyramids, intrinsics, and the ground-truth depth and relative pose.
pub struct TwoViewFixture<R: Real> {
    /// Target and source images downsampled to working resolution.
    pub target_image: ImageGrid<R>,
    pub source_image: ImageGrid<R>,
    pub target_feats: FeaturePyramid<R>,
    pub source_feats: FeaturePyramid<R>,
    /// Working-resolution intrinsics.
    pub intrinsics: CameraIntrinsics<R>,
    /// Ground-truth target depth at working resolution.
    pub depth_gt: DepthMap<R>,
    /// Ground-truth relative pose (target to source).
    pub pose_gt: Se3Pose<R>,
}

fn working_image<R: Real>(image: &ImageGrid<R>, _kw: &CameraIntrinsics<R>) -> Result<ImageGrid<R>> {
    Ok(decimate(&image.luminance()?, 4))
}

/// Render both views of the scene and extract features independently.
/// The target camera sits at the identity; `pose_gt` maps it into the source.
pub fn two_view_fixture<R: Real>(
    scene: &SceneSpec<R>,
    pose_gt: &Se3Pose<R>,
    k_full: &CameraIntrinsics<R>,
) -> Result<TwoViewFixture<R>> {
    let view_t = render_view(scene, &Se3Pose::identity(), k_full)?;
    let view_s = render_view(scene, pose_gt, k_full)?;
    let kw = k_full.scaled(R::c(0.25));
    Ok(TwoViewFixture {
        target_image: working_image(&view_t.image, &kw)?,
        source_image: working_image(&view_s.image, &kw)?,
        target_feats: extract_features(&view_t.image)?,
        source_feats: extract_features(&view_s.image)?,
        intrinsics: kw,
        depth_gt: view_t.depth_working,
        pose_gt: pose_gt.clone(),
    })
}

/// Like [`two_view_fixture`], but the target features and image are sampled
/// from the source view through the ground-truth geometry, so the matching
/// model is exact: residuals vanish identically at the true depth and pose.
pub fn model_exact_fixture<R: Real>(
    scene: &SceneSpec<R>,
    pose_gt: &Se3Pose<R>,
    k_full: &CameraIntrinsics<R>,
) -> Result<TwoViewFixture<R>> {
    let view_t = render_view(scene, &Se3Pose::identity(), k_full)?;
    let view_s = render_view(scene, pose_gt, k_full)?;
    let kw = k_full.scaled(R::c(0.25));
    let depth_gt = view_t.depth_working;
    let source_image = working_image(&view_s.image, &kw)?;
    let source_feats = extract_features(&view_s.image)?;
    let source_l1 = source_feats.level(1);

    let (w, h) = (kw.width, kw.height);
    let mut target_grid = ImageGrid::zeros(w, h, FEAT_CHANNELS);
    let mut target_image = ImageGrid::zeros(w, h, 1);
    let mut feat_buf = [R::zero(); FEAT_CHANNELS];
    let mut img_buf = [R::zero(); 1];
    for y in 0..h {
        for x in 0..w {
            let u = Vector2::new(R::c(x as f64), R::c(y as f64));
            match crate::se3::project(&u, depth_gt.get(x, y), pose_gt, &kw) {
                Ok(p) => {
                    source_l1.grid.sample_clamped(p.pixel.x, p.pixel.y, &mut feat_buf);
                    source_image.sample_clamped(p.pixel.x, p.pixel.y, &mut img_buf);
                }
                Err(CoreError::BehindCamera) => {
                    for (c, b) in feat_buf.iter_mut().enumerate() {
                        *b = source_l1.grid.get(x, y, c);
                    }
                    img_buf[0] = source_image.get(x, y, 0);
                }
                Err(e) => return Err(e),
            }
            for (c, b) in feat_buf.iter().enumerate() {
                target_grid.set(x, y, c, *b);
            }
            target_image.set(x, y, 0, img_buf[0]);
        }
    }
    let target_feats = FeaturePyramid::from_levels(vec![FeatureMap { grid: target_grid }])?;
    Ok(TwoViewFixture {
        target_image,
        source_image,
        target_feats,
        source_feats,
        intrinsics: kw,
        depth_gt,
        pose_gt: pose_gt.clone(),
    })
}

/// Noise magnitudes for constructing refinement problems.
#[derive(Clone, Copy, Debug)]
pub struct NoiseSpec<R: Real> {
    /// Sigma of the multiplicative log-normal depth noise.
    pub depth_sigma: R,
    /// Rotation perturbation magnitude in degrees.
    pub rot_deg: R,
    /// Translation perturbation magnitude in meters.
    pub trans_m: R,
    pub seed: u64,
}

impl<R: Real> NoiseSpec<R> {
    pub fn none(seed: u64) -> Self {
        Self { depth_sigma: R::zero(), rot_deg: R::zero(), trans_m: R::zero(), seed }
    }
}

fn standard_normal<R: Real>(rng: &mut ChaCha8Rng) -> R {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    R::c((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
}

fn random_unit<R: Real>(rng: &mut ChaCha8Rng) -> Vector3<R> {
    loop {
        let v = Vector3::new(
            standard_normal::<R>(rng),
            standard_normal::<R>(rng),
            standard_normal::<R>(rng),
        );
        let n = v.norm();
        if n > R::c(1e-6) {
            return v / n;
        }
    }
}

/// Deterministically perturb a depth map and pose. Returns the perturbed pair
/// and the fraction of depth pixels clamped back into the valid range.
pub fn perturb<R: Real>(
    depth: &DepthMap<R>,
    pose: &Se3Pose<R>,
    noise: &NoiseSpec<R>,
    limits: &DepthLimits<R>,
) -> Result<(DepthMap<R>, Se3Pose<R>, R)> {
    if noise.depth_sigma < R::zero() || noise.rot_deg < R::zero() || noise.trans_m < R::zero() {
        return Err(CoreError::InvalidArgument("noise magnitudes must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut clamped = 0usize;
    let data: Vec<R> = depth
        .data()
        .iter()
        .map(|d| {
            let factor = (noise.depth_sigma * standard_normal::<R>(&mut rng)).exp();
            let nd = *d * factor;
            if limits.contains(nd) {
                nd
            } else {
                clamped += 1;
                limits.clamp_inside(nd)
            }
        })
        .collect();
    let noisy_depth = DepthMap::new(depth.width(), depth.height(), data)?;

    let axis = random_unit::<R>(&mut rng);
    let dir = random_unit::<R>(&mut rng);
    let twist = Twist::new(
        axis * (noise.rot_deg * R::c(std::f64::consts::PI / 180.0)),
        dir * noise.trans_m,
    );
    let noisy_pose = exp_map(&twist)?.compose(pose);
    let frac = R::c(clamped as f64) / R::c((depth.width() * depth.height()) as f64);
    Ok((noisy_depth, noisy_pose, frac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::warp_image;
    use crate::se3::CameraIntrinsics;
    use approx::assert_relative_eq;

    fn k_test() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(320.0, 320.0, 320.0, 96.0, 640, 192).unwrap()
    }

    fn slanted_pair() -> SceneSpec<f64> {
        SceneSpec {
            planes: vec![
                PlaneSpec::new(
                    Vector3::new(0.0, (20f64).to_radians().sin(), (20f64).to_radians().cos()),
                    4.5,
                    TextureKind::Checker,
                    0.75,
                )
                .unwrap(),
                PlaneSpec::new(
                    Vector3::new(0.0, -(25f64).to_radians().sin(), (25f64).to_radians().cos()),
                    3.6,
                    TextureKind::Checker,
                    0.75,
                )
                .unwrap(),
            ],
            background_depth: None,
            texture_seed: 5,
        }
    }

    fn baseline_pose() -> Se3Pose<f64> {
        let rot = exp_map(&Twist::new(
            Vector3::new(0.0, (2f64).to_radians(), 0.0),
            Vector3::zeros(),
        ))
        .unwrap();
        let center = Vector3::new(0.3, 0.0, 0.0);
        let t = -(rot.rotation() * center);
        Se3Pose::new(*rot.rotation(), t).unwrap()
    }

    #[test]
    fn fronto_parallel_plane_renders_constant_depth() {
        let scene = SceneSpec {
            planes: vec![PlaneSpec::new(
                Vector3::new(0.0, 0.0, 1.0),
                10.0,
                TextureKind::Stripes,
                1.0,
            )
            .unwrap()],
            background_depth: None,
            texture_seed: 1,
        };
        let view = render_view(&scene, &Se3Pose::identity(), &k_test()).unwrap();
        for d in view.depth_full.data() {
            assert_relative_eq!(*d, 10.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn slanted_plane_matches_the_closed_form_intersection() {
        let theta = (18f64).to_radians();
        let n = Vector3::new(0.0, theta.sin(), theta.cos());
        let offset = 6.0;
        let scene = SceneSpec {
            planes: vec![PlaneSpec::new(n, offset, TextureKind::Checker, 1.0).unwrap()],
            background_depth: None,
            texture_seed: 1,
        };
        let k = k_test();
        let view = render_view(&scene, &Se3Pose::identity(), &k).unwrap();
        for y in 0..k.height {
            for x in 0..k.width {
                let dir = Vector3::new(
                    (x as f64 - k.cx) / k.fx,
                    (y as f64 - k.cy) / k.fy,
                    1.0,
                );
                let expected = offset / n.dot(&dir);
                assert_relative_eq!(view.depth_full.get(x, y), expected, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rendered_depth_satisfies_the_plane_equations() {
        let scene = slanted_pair();
        let k = k_test();
        let view = render_view(&scene, &Se3Pose::identity(), &k).unwrap();
        for y in (0..k.height).step_by(7) {
            for x in (0..k.width).step_by(11) {
                let s = view.depth_full.get(x, y);
                let dir = Vector3::new(
                    (x as f64 - k.cx) / k.fx,
                    (y as f64 - k.cy) / k.fy,
                    1.0,
                );
                let point = dir * s;
                let best: f64 = scene
                    .planes
                    .iter()
                    .map(|p| (p.normal.dot(&point) - p.offset).abs())
                    .fold(f64::INFINITY, f64::min);
                assert!(best < 1e-9, "pixel ({x},{y}): plane residual {best:.2e}");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = slanted_pair();
        let a = render_view(&scene, &baseline_pose(), &k_test()).unwrap();
        let b = render_view(&scene, &baseline_pose(), &k_test()).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.depth_full.data(), b.depth_full.data());
    }

    #[test]
    fn warping_the_source_through_the_truth_reproduces_the_target() {
        let f = two_view_fixture(&slanted_pair(), &baseline_pose(), &k_test()).unwrap();
        let (warped, mask) =
            warp_image(&f.source_image, &f.depth_gt, &f.pose_gt, &f.intrinsics).unwrap();
        let mut err = 0.0;
        let mut n = 0usize;
        for (i, ok) in mask.iter().enumerate() {
            if *ok {
                err += (warped.data()[i] - f.target_image.data()[i]).abs();
                n += 1;
            }
        }
        assert!(n > mask.len() / 2, "only {n} valid warped pixels");
        let mean = err / n as f64;
        assert!(mean < 0.02, "mean warp error {mean:.4}");
    }

    #[test]
    fn acceptance_scene_is_mostly_textured() {
        let f = two_view_fixture(&slanted_pair(), &baseline_pose(), &k_test()).unwrap();
        let img = &f.target_image;
        let (w, h) = (img.width(), img.height());
        let mut textured = 0usize;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let gx = (img.get(x + 1, y, 0) - img.get(x - 1, y, 0)) * 0.5;
                let gy = (img.get(x, y + 1, 0) - img.get(x, y - 1, 0)) * 0.5;
                if gx.abs() + gy.abs() > 0.05 {
                    textured += 1;
                }
            }
        }
        let frac = textured as f64 / ((w - 2) * (h - 2)) as f64;
        assert!(frac >= 0.7, "textured fraction {frac:.3}");
    }

    #[test]
    fn empty_scene_without_background_is_a_renderer_gap() {
        let scene = SceneSpec::<f64> {
            planes: vec![PlaneSpec::new(
                // plane parallel to every ray through the principal point's row
                Vector3::new(0.0, 1.0, 0.0),
                -5.0,
                TextureKind::Checker,
                1.0,
            )
            .unwrap()],
            background_depth: None,
            texture_seed: 0,
        };
        // rays pointing away from the plane hit nothing
        assert!(matches!(
            render_view(&scene, &Se3Pose::identity(), &k_test()),
            Err(CoreError::RendererGap)
        ));
    }

    #[test]
    fn zero_noise_is_the_identity_perturbation() {
        let f = two_view_fixture(&slanted_pair(), &baseline_pose(), &k_test()).unwrap();
        let limits = crate::epipolar::DepthLimits::default();
        let (d, p, frac) =
            perturb(&f.depth_gt, &f.pose_gt, &NoiseSpec::none(7), &limits).unwrap();
        assert_eq!(d.data(), f.depth_gt.data());
        assert_relative_eq!(
            crate::metrics::pose_distance(&p, &f.pose_gt),
            0.0,
            epsilon = 1e-15
        );
        assert_eq!(frac, 0.0);
    }

    #[test]
    fn same_seed_perturbs_identically() {
        let f = two_view_fixture(&slanted_pair(), &baseline_pose(), &k_test()).unwrap();
        let limits = crate::epipolar::DepthLimits::default();
        let noise = NoiseSpec { depth_sigma: 0.1, rot_deg: 1.0, trans_m: 0.1, seed: 42 };
        let (d1, p1, _) = perturb(&f.depth_gt, &f.pose_gt, &noise, &limits).unwrap();
        let (d2, p2, _) = perturb(&f.depth_gt, &f.pose_gt, &noise, &limits).unwrap();
        assert_eq!(d1.data(), d2.data());
        assert_eq!(p1.rotation(), p2.rotation());
        assert_eq!(p1.translation(), p2.translation());
    }

    #[test]
    fn log_ratio_spread_matches_the_requested_sigma() {
        let f = two_view_fixture(&slanted_pair(), &baseline_pose(), &k_test()).unwrap();
        let limits = crate::epipolar::DepthLimits::default();
        let noise = NoiseSpec { depth_sigma: 0.1, rot_deg: 0.0, trans_m: 0.0, seed: 11 };
        let (d, _, _) = perturb(&f.depth_gt, &f.pose_gt, &noise, &limits).unwrap();
        let logs: Vec<f64> = d
            .data()
            .iter()
            .zip(f.depth_gt.data())
            .map(|(n, o)| (n / o).ln())
            .collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logs.len() as f64;
        let std = var.sqrt();
        assert!((std - 0.1).abs() < 0.01, "empirical sigma {std:.4}");
    }

    #[test]
    fn negative_noise_magnitudes_are_rejected() {
        let f = two_view_fixture(&slanted_pair(), &baseline_pose(), &k_test()).unwrap();
        let limits = crate::epipolar::DepthLimits::default();
        let noise = NoiseSpec { depth_sigma: -0.1, rot_deg: 0.0, trans_m: 0.0, seed: 0 };
        assert!(perturb(&f.depth_gt, &f.pose_gt, &noise, &limits).is_err());
    }

    #[test]
    fn model_exact_fixture_has_zero_residuals_at_the_truth() {
        let f = model_exact_fixture(&slanted_pair(), &baseline_pose(), &k_test()).unwrap();
        let res = crate::pose::feature_residuals(
            f.target_feats.level(1),
            f.source_feats.level(1),
            &f.depth_gt,
            &f.pose_gt,
            &f.intrinsics,
        )
        .unwrap();
        let mut worst: f64 = 0.0;
        for y in 0..f.depth_gt.height() {
            for x in 0..f.depth_gt.width() {
                if res.is_valid(x, y) {
                    for r in res.residual(x, y) {
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
        assert!(worst < 1e-12, "worst residual {worst:.2e}");
    }
}
