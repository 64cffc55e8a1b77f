//! Depth evaluation metrics, KITTI-style odometry metrics, and the
//! photometric + smoothness loss used as a monitoring signal.

use nalgebra::Vector3;

use crate::epipolar::DepthMap;
use crate::error::{CoreError, Result};
use crate::image::ImageGrid;
use crate::real::Real;
use crate::se3::{log_map, umeyama_align, Se3Pose, Sim3Alignment};

/// Standard monocular depth error and threshold-accuracy metrics.
#[derive(Clone, Copy, Debug)]
pub struct DepthMetrics<R: Real> {
    pub abs_rel: R,
    pub sq_rel: R,
    pub rmse: R,
    pub rmse_log: R,
    pub delta1: R,
    pub delta2: R,
    pub delta3: R,
}

fn median<R: Real>(values: &mut [R]) -> R {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) * R::c(0.5)
    }
}

/// Depth metrics over valid ground-truth pixels, with optional median scaling
/// and clamping of both maps to `[1e-3, cap]`.
pub fn depth_metrics<R: Real>(
    pred: &DepthMap<R>,
    gt: &DepthMap<R>,
    cap: R,
    median_scale: bool,
) -> Result<DepthMetrics<R>> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(CoreError::ShapeMismatch("pred vs gt depth size".into()));
    }
    let pairs: Vec<(R, R)> = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(p, g)| g.finite() && **g > R::zero() && p.finite())
        .map(|(p, g)| (*p, *g))
        .collect();
    if pairs.is_empty() {
        return Err(CoreError::EmptyGroundTruth);
    }
    let scale = if median_scale {
        let mut ps: Vec<R> = pairs.iter().map(|(p, _)| *p).collect();
        let mut gs: Vec<R> = pairs.iter().map(|(_, g)| *g).collect();
        let mp = median(&mut ps);
        if !(mp > R::zero()) {
            return Err(CoreError::Degenerate("non-positive prediction median".into()));
        }
        median(&mut gs) / mp
    } else {
        R::one()
    };
    let lo = R::c(1e-3);
    let n = R::c(pairs.len() as f64);
    let mut abs_rel = R::zero();
    let mut sq_rel = R::zero();
    let mut sse = R::zero();
    let mut sse_log = R::zero();
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    let mut d3 = 0usize;
    let (t1, t2, t3) = (R::c(1.25), R::c(1.25 * 1.25), R::c(1.25 * 1.25 * 1.25));
    for (p, g) in &pairs {
        let p = (*p * scale).clamp(lo, cap);
        let g = (*g).clamp(lo, cap);
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sse += diff * diff;
        let dl = p.ln() - g.ln();
        sse_log += dl * dl;
        let ratio = (p / g).max(g / p);
        if ratio < t1 {
            d1 += 1;
        }
        if ratio < t2 {
            d2 += 1;
        }
        if ratio < t3 {
            d3 += 1;
        }
    }
    Ok(DepthMetrics {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sse / n).sqrt(),
        rmse_log: (sse_log / n).sqrt(),
        delta1: R::c(d1 as f64) / n,
        delta2: R::c(d2 as f64) / n,
        delta3: R::c(d3 as f64) / n,
    })
}

/// Odometry metrics: ATE after 7-DoF alignment, and KITTI segment-wise
/// translation (percent) and rotation (deg per 100 m) drift. The segment
/// metrics are absent for trajectories shorter than 100 m.
#[derive(Clone, Copy, Debug)]
pub struct OdomMetrics<R: Real> {
    pub ate: R,
    pub t_err: Option<R>,
    pub r_err: Option<R>,
}

pub const SEGMENT_LENGTHS_M: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

fn align_positions<R: Real>(est: &[Vector3<R>], gt: &[Vector3<R>]) -> Sim3Alignment<R> {
    match umeyama_align(est, gt) {
        Ok(a) => a,
        Err(_) => {
            // collinear or tiny trajectories: fall back to translation-only
            let n = R::c(est.len() as f64);
            let mu_e = est.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
            let mu_g = gt.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
            Sim3Alignment {
                scale: R::one(),
                rotation: nalgebra::Matrix3::identity(),
                translation: mu_g - mu_e,
            }
        }
    }
}

/// Evaluate an estimated camera-to-world trajectory against ground truth.
pub fn odometry_metrics<R: Real>(est: &[Se3Pose<R>], gt: &[Se3Pose<R>]) -> Result<OdomMetrics<R>> {
    if est.len() != gt.len() {
        return Err(CoreError::InvalidArgument("trajectory lengths differ".into()));
    }
    if est.len() < 2 {
        return Err(CoreError::InvalidArgument("need at least 2 poses".into()));
    }
    let est_pos: Vec<Vector3<R>> = est.iter().map(|p| *p.translation()).collect();
    let gt_pos: Vec<Vector3<R>> = gt.iter().map(|p| *p.translation()).collect();
    let align = align_positions(&est_pos, &gt_pos);

    // aligned estimate
    let est_aligned: Vec<Se3Pose<R>> = est
        .iter()
        .map(|p| {
            Se3Pose::from_parts_orthonormalized(
                align.rotation * p.rotation(),
                align.apply(p.translation()),
                R::c(1e-6),
            )
            .expect("aligned rotation stays orthonormal")
        })
        .collect();

    let mut sse = R::zero();
    for (e, g) in est_aligned.iter().zip(gt.iter()) {
        sse += (e.translation() - g.translation()).norm_squared();
    }
    let ate = (sse / R::c(est.len() as f64)).sqrt();

    // cumulative ground-truth path length
    let mut dist = Vec::with_capacity(gt.len());
    let mut acc = R::zero();
    dist.push(acc);
    for i in 1..gt.len() {
        acc += (gt_pos[i] - gt_pos[i - 1]).norm();
        dist.push(acc);
    }

    let mut t_sum = R::zero();
    let mut r_sum = R::zero();
    let mut count = 0usize;
    for (i, d0) in dist.iter().enumerate() {
        for len in SEGMENT_LENGTHS_M {
            let len_r = R::c(len);
            let Some(j) = dist[i..].iter().position(|d| *d - *d0 >= len_r).map(|p| p + i) else {
                continue;
            };
            let gt_rel = gt[i].inverse().compose(&gt[j]);
            let est_rel = est_aligned[i].inverse().compose(&est_aligned[j]);
            let err = gt_rel.inverse().compose(&est_rel);
            let seg = dist[j] - *d0;
            t_sum += err.translation().norm() / seg * R::c(100.0);
            r_sum += err.rotation_angle() / seg * R::c(180.0 / std::f64::consts::PI * 100.0);
            count += 1;
        }
    }
    let (t_err, r_err) = if count > 0 {
        let n = R::c(count as f64);
        (Some(t_sum / n), Some(r_sum / n))
    } else {
        (None, None)
    };
    Ok(OdomMetrics { ate, t_err, r_err })
}

/// Weights for the monitoring loss.
#[derive(Clone, Copy, Debug)]
pub struct LossConfig<R: Real> {
    pub lambda_p: R,
    pub lambda_s: R,
    pub alpha_ssim: R,
}

impl<R: Real> Default for LossConfig<R> {
    fn default() -> Self {
        Self { lambda_p: R::one(), lambda_s: R::c(1e-3), alpha_ssim: R::c(0.85) }
    }
}

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Local 3x3 box mean with clamped borders.
fn box3<R: Real>(img: &ImageGrid<R>, x: usize, y: usize, f: impl Fn(usize, usize) -> R) -> R {
    let w = img.width();
    let h = img.height();
    let x_lo = x.saturating_sub(1);
    let x_hi = (x + 1).min(w - 1);
    let y_lo = y.saturating_sub(1);
    let y_hi = (y + 1).min(h - 1);
    let mut sum = R::zero();
    let mut n = 0usize;
    for yy in y_lo..=y_hi {
        for xx in x_lo..=x_hi {
            sum += f(xx, yy);
            n += 1;
        }
    }
    sum / R::c(n as f64)
}

/// Per-pixel SSIM between two single-channel images with a 3x3 window.
fn ssim_at<R: Real>(a: &ImageGrid<R>, b: &ImageGrid<R>, x: usize, y: usize) -> R {
    let mu_a = box3(a, x, y, |xx, yy| a.get(xx, yy, 0));
    let mu_b = box3(b, x, y, |xx, yy| b.get(xx, yy, 0));
    let mu_aa = box3(a, x, y, |xx, yy| a.get(xx, yy, 0) * a.get(xx, yy, 0));
    let mu_bb = box3(b, x, y, |xx, yy| b.get(xx, yy, 0) * b.get(xx, yy, 0));
    let mu_ab = box3(a, x, y, |xx, yy| a.get(xx, yy, 0) * b.get(xx, yy, 0));
    let var_a = mu_aa - mu_a * mu_a;
    let var_b = mu_bb - mu_b * mu_b;
    let cov = mu_ab - mu_a * mu_b;
    let c1 = R::c(SSIM_C1);
    let c2 = R::c(SSIM_C2);
    let num = (mu_a * mu_b * R::c(2.0) + c1) * (cov * R::c(2.0) + c2);
    let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
    num / den
}

/// Photometric (SSIM + L1, minimum over sources) plus edge-aware smoothness
/// of the mean-normalized disparity.
pub fn photometric_loss<R: Real>(
    target: &ImageGrid<R>,
    warped_sources: &[(ImageGrid<R>, Vec<bool>)],
    disparity: &DepthMap<R>,
    cfg: &LossConfig<R>,
) -> Result<R> {
    if warped_sources.is_empty() {
        return Err(CoreError::InvalidArgument("need at least one warped source".into()));
    }
    let (w, h) = (target.width(), target.height());
    for (img, mask) in warped_sources {
        if img.width() != w || img.height() != h || mask.len() != w * h {
            return Err(CoreError::ShapeMismatch("warped source size".into()));
        }
    }
    if disparity.width() != w || disparity.height() != h {
        return Err(CoreError::ShapeMismatch("disparity size".into()));
    }

    let alpha = cfg.alpha_ssim;
    let mut pe_sum = R::zero();
    let mut pe_count = 0usize;
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<R> = None;
            for (img, mask) in warped_sources {
                if !mask[y * w + x] {
                    continue;
                }
                let l1 = (img.get(x, y, 0) - target.get(x, y, 0)).abs();
                let ssim = ssim_at(target, img, x, y);
                let pe = alpha * (R::one() - ssim) * R::c(0.5) + (R::one() - alpha) * l1;
                best = Some(best.map_or(pe, |b: R| b.min(pe)));
            }
            if let Some(pe) = best {
                pe_sum += pe;
                pe_count += 1;
            }
        }
    }
    if pe_count == 0 {
        return Err(CoreError::EmptyRegion);
    }
    let photo = pe_sum / R::c(pe_count as f64);

    // edge-aware smoothness of mean-normalized disparity
    let mean_disp = disparity.data().iter().copied().sum::<R>() / R::c((w * h) as f64);
    let mut smooth = R::zero();
    let mut smooth_n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                let dd = (disparity.get(x + 1, y) - disparity.get(x, y)) / mean_disp;
                let di = (target.get(x + 1, y, 0) - target.get(x, y, 0)).abs();
                smooth += dd.abs() * (-di).exp();
                smooth_n += 1;
            }
            if y + 1 < h {
                let dd = (disparity.get(x, y + 1) - disparity.get(x, y)) / mean_disp;
                let di = (target.get(x, y + 1, 0) - target.get(x, y, 0)).abs();
                smooth += dd.abs() * (-di).exp();
                smooth_n += 1;
            }
        }
    }
    let smooth = if smooth_n > 0 { smooth / R::c(smooth_n as f64) } else { R::zero() };
    Ok(cfg.lambda_p * photo + cfg.lambda_s * smooth)
}

/// Rotation angle between two poses, in degrees.
pub fn rotation_error_deg<R: Real>(a: &Se3Pose<R>, b: &Se3Pose<R>) -> R {
    a.inverse().compose(b).rotation_angle() * R::c(180.0 / std::f64::consts::PI)
}

/// Translation distance between two poses, in meters.
pub fn translation_error<R: Real>(a: &Se3Pose<R>, b: &Se3Pose<R>) -> R {
    (a.translation() - b.translation()).norm()
}

/// Twist-norm distance between two poses (used for convergence checks).
pub fn pose_distance<R: Real>(a: &Se3Pose<R>, b: &Se3Pose<R>) -> R {
    match log_map(&b.compose(&a.inverse())) {
        Ok(t) => t.norm(),
        Err(_) => R::pi(),
    }
}
