//! Feature-metric Gauss-Newton pose refinement with per-pixel confidence
//! weighting and Levenberg damping.

use nalgebra::{Matrix6, SMatrix, Vector2, Vector6};

use crate::depth::ConfidenceMap;
use crate::epipolar::DepthMap;
use crate::error::{CoreError, Result};
use crate::image::{FeatureMap, FEAT_CHANNELS};
use crate::real::Real;
use crate::se3::{
    exp_map, project, projection_jacobian, CameraIntrinsics, CoreErrorProjectExt, Se3Pose, Twist,
};

/// Minimum number of valid pixels for a well-posed 6-DoF solve.
pub const MIN_VALID_PIXELS: usize = 50;

/// Per-pixel feature residuals `m_s<u'> - m_t[u]` with the sampled source
/// feature gradients needed for the Gauss-Newton Jacobian.
#[derive(Clone, Debug)]
pub struct ResidualMap<R: Real> {
    width: usize,
    height: usize,
    /// `FEAT_CHANNELS` residual values per pixel.
    residuals: Vec<R>,
    /// `(d/dx, d/dy)` of each sampled source channel, `FEAT_CHANNELS * 2` per pixel.
    gradients: Vec<R>,
    valid: Vec<bool>,
}

impl<R: Real> ResidualMap<R> {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn residual(&self, x: usize, y: usize) -> &[R] {
        let i = (y * self.width + x) * FEAT_CHANNELS;
        &self.residuals[i..i + FEAT_CHANNELS]
    }

    pub fn gradient(&self, x: usize, y: usize) -> &[R] {
        let i = (y * self.width + x) * FEAT_CHANNELS * 2;
        &self.gradients[i..i + FEAT_CHANNELS * 2]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Mean absolute residual over valid pixels and channels.
    pub fn mean_abs_residual(&self) -> R {
        let mut sum = R::zero();
        let mut n = 0usize;
        for (i, ok) in self.valid.iter().enumerate() {
            if !ok {
                continue;
            }
            for c in 0..FEAT_CHANNELS {
                sum += self.residuals[i * FEAT_CHANNELS + c].abs();
                n += 1;
            }
        }
        if n == 0 {
            R::zero()
        } else {
            sum / R::c(n as f64)
        }
    }

    /// Confidence-weighted residual energy, averaged over valid pixels.
    pub fn weighted_energy(&self, weights: &ConfidenceMap<R>) -> R {
        let mut sum = R::zero();
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.is_valid(x, y) {
                    continue;
                }
                let w = weights.get(x, y);
                let r = self.residual(x, y);
                let mut e = R::zero();
                for c in 0..FEAT_CHANNELS {
                    e += r[c] * r[c];
                }
                sum += w * e;
                n += 1;
            }
        }
        if n == 0 {
            R::zero()
        } else {
            sum / R::c(n as f64)
        }
    }
}

/// Project every pixel at its current depth and subtract the target features
/// from the sampled source features.
pub fn feature_residuals<R: Real>(
    target: &FeatureMap<R>,
    source: &FeatureMap<R>,
    depth: &DepthMap<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
) -> Result<ResidualMap<R>> {
    let (w, h) = (target.width(), target.height());
    if source.width() != w
        || source.height() != h
        || depth.width() != w
        || depth.height() != h
        || k.width != w
        || k.height != h
    {
        return Err(CoreError::ShapeMismatch("residual inputs not aligned".into()));
    }
    let mut residuals = vec![R::zero(); w * h * FEAT_CHANNELS];
    let mut gradients = vec![R::zero(); w * h * FEAT_CHANNELS * 2];
    let mut valid = vec![false; w * h];
    let mut vals = [R::zero(); FEAT_CHANNELS];
    let mut grads = [R::zero(); FEAT_CHANNELS * 2];
    for y in 0..h {
        for x in 0..w {
            let u = Vector2::new(R::c(x as f64), R::c(y as f64));
            let Some(p) = project(&u, depth.get(x, y), pose, k).ok_behind() else { continue };
            let in_bounds = source.grid.sample_with_gradient(p.pixel.x, p.pixel.y, &mut vals, &mut grads);
            if !in_bounds {
                continue;
            }
            let i = y * w + x;
            for c in 0..FEAT_CHANNELS {
                residuals[i * FEAT_CHANNELS + c] = vals[c] - target.grid.get(x, y, c);
            }
            gradients[i * FEAT_CHANNELS * 2..(i + 1) * FEAT_CHANNELS * 2].copy_from_slice(&grads);
            valid[i] = true;
        }
    }
    Ok(ResidualMap { width: w, height: h, residuals, gradients, valid })
}

/// Accumulated Gauss-Newton normal equations `H delta = b`.
#[derive(Clone, Debug)]
pub struct NormalEquations<R: Real> {
    pub h: Matrix6<R>,
    pub b: Vector6<R>,
    pub valid_count: usize,
}

/// Build `H = J^T diag(W) J` and `b = -J^T diag(W) r` over valid pixels,
/// composing sampled source gradients with the projection Jacobian.
pub fn accumulate_normal_equations<R: Real>(
    residuals: &ResidualMap<R>,
    depth: &DepthMap<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
    weights: &ConfidenceMap<R>,
) -> Result<NormalEquations<R>> {
    let (w, h) = (residuals.width, residuals.height);
    if depth.width() != w || depth.height() != h || weights.width() != w || weights.height() != h {
        return Err(CoreError::ShapeMismatch("normal-equation inputs not aligned".into()));
    }
    let mut hm = Matrix6::<R>::zeros();
    let mut b = Vector6::<R>::zeros();
    let mut valid_count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !residuals.is_valid(x, y) {
                continue;
            }
            let u = Vector2::new(R::c(x as f64), R::c(y as f64));
            let Ok(jp) = projection_jacobian(&u, depth.get(x, y), pose, k) else { continue };
            let weight = weights.get(x, y);
            let r = residuals.residual(x, y);
            let g = residuals.gradient(x, y);
            for c in 0..FEAT_CHANNELS {
                let grad = SMatrix::<R, 1, 2>::new(g[2 * c], g[2 * c + 1]);
                let jc = grad * jp; // 1x6
                let jt = jc.transpose();
                hm += jt * jc * weight;
                b -= jt * (r[c] * weight);
            }
            valid_count += 1;
        }
    }
    // symmetrize against accumulation round-off
    hm = (hm + hm.transpose()) * R::c(0.5);
    Ok(NormalEquations { h: hm, b, valid_count })
}

fn solve_damped<R: Real>(ne: &NormalEquations<R>, lambda: R) -> Option<Vector6<R>> {
    let mut a = ne.h;
    for i in 0..6 {
        let d = a[(i, i)];
        a[(i, i)] = d + lambda * d + R::c(1e-15);
    }
    a.cholesky().map(|ch| ch.solve(&ne.b))
}

/// One damped Gauss-Newton step. Escalates the damping (x10, up to 5 times)
/// if the factorization fails.
pub fn gauss_newton_step<R: Real>(
    residuals: &ResidualMap<R>,
    depth: &DepthMap<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
    weights: &ConfidenceMap<R>,
    damping: R,
) -> Result<Twist<R>> {
    let ne = accumulate_normal_equations(residuals, depth, pose, k, weights)?;
    if ne.valid_count < MIN_VALID_PIXELS {
        return Err(CoreError::InsufficientOverlap {
            valid: ne.valid_count,
            required: MIN_VALID_PIXELS,
        });
    }
    let mut lambda = damping;
    for _ in 0..=5 {
        if let Some(delta) = solve_damped(&ne, lambda) {
            return Ok(Twist::new(
                nalgebra::Vector3::new(delta[0], delta[1], delta[2]),
                nalgebra::Vector3::new(delta[3], delta[4], delta[5]),
            ));
        }
        lambda *= R::c(10.0);
    }
    Err(CoreError::SingularSystem)
}

/// Left-compose the pose with `exp(delta^)`, re-orthonormalizing the rotation.
pub fn apply_pose_update<R: Real>(pose: &Se3Pose<R>, delta: &Twist<R>) -> Result<Se3Pose<R>> {
    Ok(exp_map(delta)?.compose(pose))
}

/// Outcome of an energy-checked damped pose step.
#[derive(Clone, Debug)]
pub struct PoseStep<R: Real> {
    pub pose: Se3Pose<R>,
    pub delta: Twist<R>,
    pub lambda: R,
    /// False when no damping level decreased the energy and the pose was kept.
    pub accepted: bool,
}

/// Damped Gauss-Newton step that recomputes the residual energy after the
/// update and escalates the damping (x10, up to 5 times) whenever the energy
/// increases. Falls back to the unchanged pose when no level helps.
pub fn damped_pose_step<R: Real>(
    target: &FeatureMap<R>,
    source: &FeatureMap<R>,
    depth: &DepthMap<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
    weights: &ConfidenceMap<R>,
    damping: R,
) -> Result<PoseStep<R>> {
    let residuals = feature_residuals(target, source, depth, pose, k)?;
    let ne = accumulate_normal_equations(&residuals, depth, pose, k, weights)?;
    if ne.valid_count < MIN_VALID_PIXELS {
        return Err(CoreError::InsufficientOverlap {
            valid: ne.valid_count,
            required: MIN_VALID_PIXELS,
        });
    }
    let energy0 = residuals.weighted_energy(weights);
    let mut lambda = damping;
    for _ in 0..=5 {
        let Some(delta_vec) = solve_damped(&ne, lambda) else {
            lambda *= R::c(10.0);
            continue;
        };
        let delta = Twist::new(
            nalgebra::Vector3::new(delta_vec[0], delta_vec[1], delta_vec[2]),
            nalgebra::Vector3::new(delta_vec[3], delta_vec[4], delta_vec[5]),
        );
        let candidate = apply_pose_update(pose, &delta)?;
        let cand_res = feature_residuals(target, source, depth, &candidate, k)?;
        let energy1 = cand_res.weighted_energy(weights);
        if cand_res.valid_count() >= MIN_VALID_PIXELS
            && energy1 <= energy0 * (R::one() + R::c(1e-12))
        {
            return Ok(PoseStep { pose: candidate, delta, lambda, accepted: true });
        }
        lambda *= R::c(10.0);
    }
    Ok(PoseStep { pose: pose.clone(), delta: Twist::zero(), lambda, accepted: false })
}
