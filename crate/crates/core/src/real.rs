//! Scalar abstraction: all numeric kernels are generic over [`Real`],
//! implemented for `f32` and `f64`.

use std::iter::Sum;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar for geometry, grids and solvers.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Sum<Self> + Default {
    /// Lift an `f64` constant into the scalar type.
    fn c(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("constant not representable")
    }

    fn finite(self) -> bool;

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance for orthonormality and other geometric identities,
    /// scaled to the precision of the type.
    fn geom_tol() -> Self;
}

impl Real for f32 {
    fn finite(self) -> bool {
        f32::is_finite(self)
    }
    fn geom_tol() -> Self {
        1e-4
    }
}

impl Real for f64 {
    fn finite(self) -> bool {
        f64::is_finite(self)
    }
    fn geom_tol() -> Self {
        1e-9
    }
}
