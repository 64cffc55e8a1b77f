//! Coupled two-view depth and pose refinement.
//!
//! Starting from an initial depth map and relative pose, the engine samples
//! matching costs along the current epipolar lines, applies bounded per-pixel
//! depth updates, and refines the pose by confidence-weighted feature-metric
//! Gauss-Newton alignment, iterating the combined state to a fixed point
//! (optionally Anderson-accelerated). A synthetic ray-plane renderer provides
//! analytic ground truth for verification, and standard depth and odometry
//! metrics are included for evaluation.
//!
//! All numeric kernels are generic over the scalar type via [`Real`]
//! (`f32` or `f64`); concrete aliases for the common types live at the crate
//! root.

pub mod depth;
pub mod epipolar;
pub mod error;
pub mod image;
pub mod metrics;
pub mod pose;
pub mod real;
pub mod se3;
pub mod solver;
pub mod synth;

pub use error::{CoreError, Result};
pub use real::Real;

// Concrete scalar aliases for the main domain types.
pub type CameraIntrinsics32 = se3::CameraIntrinsics<f32>;
pub type CameraIntrinsics64 = se3::CameraIntrinsics<f64>;
pub type Se3Pose32 = se3::Se3Pose<f32>;
pub type Se3Pose64 = se3::Se3Pose<f64>;
pub type Twist32 = se3::Twist<f32>;
pub type Twist64 = se3::Twist<f64>;
pub type ImageGrid32 = image::ImageGrid<f32>;
pub type ImageGrid64 = image::ImageGrid<f64>;
pub type DepthMap32 = epipolar::DepthMap<f32>;
pub type DepthMap64 = epipolar::DepthMap<f64>;
pub type RefineParams32 = solver::RefineParams<f32>;
pub type RefineParams64 = solver::RefineParams<f64>;
pub type RefinementState32 = solver::RefinementState<f32>;
pub type RefinementState64 = solver::RefinementState<f64>;
