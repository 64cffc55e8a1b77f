//! Camera model, SE(3) Lie-group algebra, pinhole projection with its pose
//! Jacobian, and Umeyama similarity alignment of point clouds.
//!
//! Conventions:
//! - Poses map target-camera points into the source camera: `X_s = R X_t + t`.
//! - Pose updates are left-multiplied: `T <- exp(delta^) T`, and the
//!   projection Jacobian is taken with respect to that left perturbation,
//!   column order `(w_x, w_y, w_z, v_x, v_y, v_z)`.

use nalgebra::{Matrix3, SMatrix, Vector2, Vector3};

use crate::error::{CoreError, Result};
use crate::real::Real;

pub type Matrix2x6<R> = SMatrix<R, 2, 6>;

/// Pinhole camera intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics<R: Real> {
    pub fx: R,
    pub fy: R,
    pub cx: R,
    pub cy: R,
    pub width: usize,
    pub height: usize,
}

impl<R: Real> CameraIntrinsics<R> {
    pub fn new(fx: R, fy: R, cx: R, cy: R, width: usize, height: usize) -> Result<Self> {
        if !(fx > R::zero() && fy > R::zero()) {
            return Err(CoreError::InvalidArgument("focal lengths must be positive".into()));
        }
        let (w, h) = (R::c(width as f64), R::c(height as f64));
        if !(cx >= R::zero() && cx < w && cy >= R::zero() && cy < h) {
            return Err(CoreError::InvalidArgument(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// Intrinsics for an image rescaled by `s` (dimensions rounded up).
    pub fn scaled(&self, s: R) -> Self {
        let sf = s.to_f64_lossy();
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: (self.width as f64 * sf).ceil() as usize,
            height: (self.height as f64 * sf).ceil() as usize,
        }
    }

    /// Back-project a pixel at the given depth into the camera frame.
    pub fn backproject(&self, u: &Vector2<R>, depth: R) -> Vector3<R> {
        Vector3::new(
            (u.x - self.cx) / self.fx * depth,
            (u.y - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Ray through a pixel with unit z-component.
    pub fn ray(&self, u: &Vector2<R>) -> Vector3<R> {
        Vector3::new((u.x - self.cx) / self.fx, (u.y - self.cy) / self.fy, R::one())
    }
}

/// Rigid transform: rotation matrix plus translation.
#[derive(Clone, Debug, PartialEq)]
pub struct Se3Pose<R: Real> {
    rotation: Matrix3<R>,
    translation: Vector3<R>,
}

impl<R: Real> Se3Pose<R> {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Construct from parts, validating orthonormality to the scalar's tolerance.
    pub fn new(rotation: Matrix3<R>, translation: Vector3<R>) -> Result<Self> {
        let err = orthonormality_error(&rotation);
        if err > R::geom_tol() {
            return Err(CoreError::InvalidArgument(format!(
                "rotation not orthonormal (error {:e})",
                err.to_f64_lossy()
            )));
        }
        if (rotation.determinant() - R::one()).abs() > R::geom_tol() {
            return Err(CoreError::InvalidArgument("rotation determinant != 1".into()));
        }
        Ok(Self { rotation, translation })
    }

    /// Construct from parts that may be slightly off the manifold, projecting
    /// the rotation back via polar decomposition. `tol` bounds how far from
    /// orthonormal the input may be.
    pub fn from_parts_orthonormalized(
        rotation: Matrix3<R>,
        translation: Vector3<R>,
        tol: R,
    ) -> Result<Self> {
        let err = orthonormality_error(&rotation);
        if err > tol {
            return Err(CoreError::InvalidArgument(format!(
                "rotation too far from orthonormal (error {:e} > tol {:e})",
                err.to_f64_lossy(),
                tol.to_f64_lossy()
            )));
        }
        Ok(Self { rotation: polar_rotation(&rotation), translation })
    }

    pub fn rotation(&self) -> &Matrix3<R> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<R> {
        &self.translation
    }

    pub fn transform(&self, p: &Vector3<R>) -> Vector3<R> {
        self.rotation * p + self.translation
    }

    /// `self * other`, re-orthonormalized to stop drift.
    pub fn compose(&self, other: &Se3Pose<R>) -> Se3Pose<R> {
        Se3Pose {
            rotation: polar_rotation(&(self.rotation * other.rotation)),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Se3Pose<R> {
        let rt = self.rotation.transpose();
        Se3Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Rotation angle in radians.
    pub fn rotation_angle(&self) -> R {
        let tr = self.rotation.trace();
        let c = ((tr - R::one()) / R::c(2.0)).clamp(-R::one(), R::one());
        c.acos()
    }
}

/// Element of se(3): rotational part `omega` (rad) and translational part `v` (m).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist<R: Real> {
    pub omega: Vector3<R>,
    pub v: Vector3<R>,
}

impl<R: Real> Twist<R> {
    pub fn zero() -> Self {
        Self { omega: Vector3::zeros(), v: Vector3::zeros() }
    }

    pub fn new(omega: Vector3<R>, v: Vector3<R>) -> Self {
        Self { omega, v }
    }

    pub fn norm(&self) -> R {
        (self.omega.norm_squared() + self.v.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.v.iter()).all(|x| x.finite())
    }
}

/// Similarity transform from a 7-DoF point-cloud alignment.
#[derive(Clone, Debug)]
pub struct Sim3Alignment<R: Real> {
    pub scale: R,
    pub rotation: Matrix3<R>,
    pub translation: Vector3<R>,
}

impl<R: Real> Sim3Alignment<R> {
    pub fn apply(&self, p: &Vector3<R>) -> Vector3<R> {
        self.rotation * p * self.scale + self.translation
    }
}

pub fn hat<R: Real>(w: &Vector3<R>) -> Matrix3<R> {
    Matrix3::new(
        R::zero(), -w.z, w.y,
        w.z, R::zero(), -w.x,
        -w.y, w.x, R::zero(),
    )
}

fn orthonormality_error<R: Real>(m: &Matrix3<R>) -> R {
    let e = m.transpose() * m - Matrix3::identity();
    e.iter().fold(R::zero(), |acc, x| acc.max(x.abs()))
}

/// Nearest rotation matrix in the Frobenius sense (polar decomposition).
pub fn polar_rotation<R: Real>(m: &Matrix3<R>) -> Matrix3<R> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut r = u * vt;
    if r.determinant() < R::zero() {
        // flip the axis of the smallest singular value
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * vt;
    }
    r
}

/// SE(3) exponential map (principal branch).
pub fn exp_map<R: Real>(twist: &Twist<R>) -> Result<Se3Pose<R>> {
    if !twist.is_finite() {
        return Err(CoreError::InvalidArgument("non-finite twist".into()));
    }
    let theta = twist.omega.norm();
    if theta >= R::pi() {
        return Err(CoreError::InvalidArgument(
            "rotation magnitude must be below pi (principal branch)".into(),
        ));
    }
    let wx = hat(&twist.omega);
    let wx2 = wx * wx;
    let t2 = theta * theta;
    // Rodrigues coefficients with series fallback near zero.
    let (a, b, c) = if theta > R::c(1e-5) {
        (
            theta.sin() / theta,
            (R::one() - theta.cos()) / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    } else {
        (
            R::one() - t2 / R::c(6.0),
            R::c(0.5) - t2 / R::c(24.0),
            R::c(1.0 / 6.0) - t2 / R::c(120.0),
        )
    };
    let rot = Matrix3::identity() + wx * a + wx2 * b;
    let v_mat = Matrix3::identity() + wx * b + wx2 * c;
    Ok(Se3Pose { rotation: polar_rotation(&rot), translation: v_mat * twist.v })
}

/// SE(3) logarithm; errors when the rotation angle is at or near pi.
pub fn log_map<R: Real>(pose: &Se3Pose<R>) -> Result<Twist<R>> {
    let theta = pose.rotation_angle();
    if theta >= R::pi() - R::c(1e-6) {
        return Err(CoreError::BranchAmbiguity);
    }
    let r = &pose.rotation;
    let skew = (r - r.transpose()) * R::c(0.5);
    let vee = Vector3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]);
    let omega = if theta > R::c(1e-5) {
        vee * (theta / theta.sin())
    } else {
        // vee already equals omega to second order
        vee
    };
    let wx = hat(&omega);
    let wx2 = wx * wx;
    let t2 = theta * theta;
    let k = if theta > R::c(1e-5) {
        (R::one() - theta * (R::one() + theta.cos()) / (R::c(2.0) * theta.sin())) / t2
    } else {
        R::c(1.0 / 12.0) + t2 / R::c(720.0)
    };
    let v_inv = Matrix3::identity() - wx * R::c(0.5) + wx2 * k;
    Ok(Twist { omega, v: v_inv * pose.translation })
}

/// Result of projecting a point into the source view.
#[derive(Clone, Copy, Debug)]
pub struct Projection<R: Real> {
    pub pixel: Vector2<R>,
    pub depth: R,
}

pub const BEHIND_CAMERA_EPS: f64 = 1e-6;

/// Project target pixel `u` at `depth` through `pose` into the source image.
pub fn project<R: Real>(
    u: &Vector2<R>,
    depth: R,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
) -> Result<Projection<R>> {
    if !(depth > R::zero()) {
        return Err(CoreError::InvalidArgument("depth must be positive".into()));
    }
    let xs = pose.transform(&k.backproject(u, depth));
    if xs.z <= R::c(BEHIND_CAMERA_EPS) {
        return Err(CoreError::BehindCamera);
    }
    Ok(Projection {
        pixel: Vector2::new(k.fx * xs.x / xs.z + k.cx, k.fy * xs.y / xs.z + k.cy),
        depth: xs.z,
    })
}

/// Jacobian of the projected pixel with respect to a left-multiplied pose
/// perturbation `exp(delta^) T`, evaluated at `delta = 0`.
pub fn projection_jacobian<R: Real>(
    u: &Vector2<R>,
    depth: R,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
) -> Result<Matrix2x6<R>> {
    if !(depth > R::zero()) {
        return Err(CoreError::InvalidArgument("depth must be positive".into()));
    }
    let xs = pose.transform(&k.backproject(u, depth));
    let z = xs.z;
    if z <= R::c(BEHIND_CAMERA_EPS) {
        return Err(CoreError::BehindCamera);
    }
    let iz = R::one() / z;
    // d(pixel)/d(X_s)
    let dpix = SMatrix::<R, 2, 3>::new(
        k.fx * iz, R::zero(), -k.fx * xs.x * iz * iz,
        R::zero(), k.fy * iz, -k.fy * xs.y * iz * iz,
    );
    // d(exp(delta^) X_s)/d(delta) at zero: [-hat(X_s) | I]
    let mut dxs = SMatrix::<R, 3, 6>::zeros();
    dxs.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-hat(&xs)));
    dxs.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    Ok(dpix * dxs)
}

/// Treat behind-camera projections as absent rather than hard errors.
pub trait CoreErrorProjectExt<R: Real> {
    fn ok_behind(self) -> Option<Projection<R>>;
}

impl<R: Real> CoreErrorProjectExt<R> for Result<Projection<R>> {
    fn ok_behind(self) -> Option<Projection<R>> {
        match self {
            Ok(p) => Some(p),
            Err(CoreError::BehindCamera) => None,
            Err(_) => None,
        }
    }
}

/// Least-squares similarity `gt ~ s R est + t` between paired point clouds.
pub fn umeyama_align<R: Real>(est: &[Vector3<R>], gt: &[Vector3<R>]) -> Result<Sim3Alignment<R>> {
    if est.len() != gt.len() {
        return Err(CoreError::InvalidArgument("point lists differ in length".into()));
    }
    let n = est.len();
    if n < 3 {
        return Err(CoreError::Degenerate("need at least 3 points".into()));
    }
    let nr = R::c(n as f64);
    let mu_e = est.iter().fold(Vector3::zeros(), |a, p| a + p) / nr;
    let mu_g = gt.iter().fold(Vector3::zeros(), |a, p| a + p) / nr;
    let mut cov = Matrix3::<R>::zeros();
    let mut var_e = R::zero();
    for (e, g) in est.iter().zip(gt.iter()) {
        let de = e - mu_e;
        let dg = g - mu_g;
        cov += dg * de.transpose();
        var_e += de.norm_squared();
    }
    cov /= nr;
    var_e /= nr;
    let svd = cov.svd(true, true);
    let mut sv = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sv[1] <= sv[0] * R::c(1e-9) || var_e <= R::zero() {
        return Err(CoreError::Degenerate("rank-deficient covariance".into()));
    }
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut s_diag = Vector3::from_element(R::one());
    if (u * vt).determinant() < R::zero() {
        s_diag.z = -R::one();
    }
    let rotation = u * Matrix3::from_diagonal(&s_diag) * vt;
    let trace_ds = svd.singular_values.dot(&s_diag);
    let scale = trace_ds / var_e;
    if !(scale > R::zero()) {
        return Err(CoreError::Degenerate("non-positive scale".into()));
    }
    let translation = mu_g - rotation * mu_e * scale;
    Ok(Sim3Alignment { scale, rotation, translation })
}
