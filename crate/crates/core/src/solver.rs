//! Fixed-point driver: alternating depth and pose updates over the
//! (cost history, depth, pose) state, with optional Anderson acceleration of
//! the depth field and independent fixed-point selection for depth and pose.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::depth::{
    depth_update, evolving_confidence, static_confidence, update_history, CostHistory,
};
use crate::epipolar::{depth_candidates, sample_cost_map, DepthLimits, DepthMap};
use crate::error::{CoreError, Result};
use crate::image::{warp_image, FeaturePyramid, ImageGrid};
use crate::metrics::{photometric_loss, pose_distance, LossConfig};
use crate::pose::damped_pose_step;
use crate::real::Real;
use crate::se3::{CameraIntrinsics, Se3Pose};

/// The iterated state `z = (h, D, T)`.
#[derive(Clone, Debug)]
pub struct RefinementState<R: Real> {
    pub history: CostHistory<R>,
    pub depth: DepthMap<R>,
    pub pose: Se3Pose<R>,
    pub iteration: usize,
}

impl<R: Real> RefinementState<R> {
    /// Fresh state; the history adopts the first iteration's cost statistics.
    pub fn new(depth: DepthMap<R>, pose: Se3Pose<R>, history_decay: R) -> Self {
        let history = CostHistory::uninitialized(depth.width(), depth.height(), history_decay);
        Self { history, depth, pose, iteration: 0 }
    }
}

/// Whether and where Anderson acceleration applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Acceleration {
    Off,
    DepthOnly,
}

/// Stopping rules and acceleration settings.
#[derive(Clone, Copy, Debug)]
pub struct SolverConfig<R: Real> {
    pub max_iters: usize,
    /// Median relative depth change below which depth has converged.
    pub tol_depth: R,
    /// Twist norm below which the pose has converged.
    pub tol_pose: R,
    pub anderson_m: usize,
    pub anderson_beta: R,
    pub acceleration: Acceleration,
}

impl<R: Real> Default for SolverConfig<R> {
    fn default() -> Self {
        Self {
            max_iters: 6,
            tol_depth: R::c(1e-3),
            tol_pose: R::c(1e-5),
            anderson_m: 3,
            anderson_beta: R::one(),
            acceleration: Acceleration::Off,
        }
    }
}

/// All engine tunables for one refinement run.
#[derive(Clone, Copy, Debug)]
pub struct RefineParams<R: Real> {
    pub radius: usize,
    pub range_scale: R,
    pub levels: usize,
    /// Soft-argmin temperature.
    pub temperature: R,
    /// Evolving-confidence temperature.
    pub tau_w: R,
    pub history_decay: R,
    /// Static-confidence slope.
    pub kappa: R,
    /// Static-confidence gradient floor.
    pub grad_floor: R,
    /// Initial Levenberg damping for pose steps.
    pub damping: R,
    pub limits: DepthLimits<R>,
    pub loss: LossConfig<R>,
    pub solver: SolverConfig<R>,
}

impl<R: Real> Default for RefineParams<R> {
    fn default() -> Self {
        Self {
            radius: 8,
            range_scale: R::c(180.0),
            levels: 3,
            temperature: R::c(0.0002),
            tau_w: R::c(0.1),
            history_decay: R::c(0.5),
            kappa: R::c(10.0),
            grad_floor: R::c(0.05),
            damping: R::c(1e-4),
            limits: DepthLimits::default(),
            loss: LossConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// Everything the solver observes about one image pair, at working resolution.
pub struct PairInputs<'a, R: Real> {
    pub target_image: &'a ImageGrid<R>,
    pub source_image: &'a ImageGrid<R>,
    pub target_feats: &'a FeaturePyramid<R>,
    pub source_feats: &'a FeaturePyramid<R>,
    pub intrinsics: CameraIntrinsics<R>,
}

/// Per-iteration monitoring record.
#[derive(Clone, Copy, Debug)]
pub struct IterationRecord<R: Real> {
    pub iter: usize,
    pub depth_rel: R,
    pub pose_norm: R,
    pub mean_min_cost: R,
    pub photo_loss: R,
    pub millis: f64,
    /// Pixels whose Anderson-accelerated update hit the 2*r*c clamp.
    pub anderson_clamped: usize,
}

/// Trace of a refinement run; `error` is set when the run aborted early.
#[derive(Clone, Debug, Default)]
pub struct IterationTrace<R: Real> {
    pub records: Vec<IterationRecord<R>>,
    pub error: Option<String>,
}

impl<R: Real> IterationTrace<R> {
    /// CSV with one row per iteration. Wall time is reported only when
    /// `include_timing` is set; otherwise the `ms` column is zero so that
    /// identical runs serialize identically.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("iter,depth_rel,pose_norm,mean_min_cost,photo_loss,ms\n");
        for r in &self.records {
            let ms = if include_timing { r.millis } else { 0.0 };
            let _ = writeln!(
                out,
                "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.3}",
                r.iter,
                r.depth_rel.to_f64_lossy(),
                r.pose_norm.to_f64_lossy(),
                r.mean_min_cost.to_f64_lossy(),
                r.photo_loss.to_f64_lossy(),
                ms
            );
        }
        if let Some(err) = &self.error {
            let _ = writeln!(out, "# error: {err}");
        }
        out
    }
}

/// Convergence measure between consecutive states: median relative depth
/// change and the twist norm of the pose change.
pub fn convergence_metric<R: Real>(
    prev: &RefinementState<R>,
    next: &RefinementState<R>,
) -> (R, R) {
    let mut rels: Vec<R> = prev
        .depth
        .data()
        .iter()
        .zip(next.depth.data())
        .map(|(a, b)| (*b - *a).abs() / *a)
        .collect();
    rels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = rels.len();
    let depth_rel = if n == 0 {
        R::zero()
    } else if n % 2 == 1 {
        rels[n / 2]
    } else {
        (rels[n / 2 - 1] + rels[n / 2]) * R::c(0.5)
    };
    (depth_rel, pose_distance(&next.pose, &prev.pose))
}

const ANDERSON_RIDGE: f64 = 1e-10;

/// One Anderson extrapolation step from histories of iterates `x_i` and
/// fixed-point residuals `g(x_i) - x_i`. Falls back to a damped Picard step
/// when the least-squares system is degenerate.
pub fn anderson_step<R: Real>(
    residual_history: &[Vec<R>],
    iterate_history: &[Vec<R>],
    m: usize,
    beta: R,
) -> Result<Vec<R>> {
    if residual_history.is_empty() || residual_history.len() != iterate_history.len() {
        return Err(CoreError::InvalidArgument(
            "histories must be non-empty and of equal length".into(),
        ));
    }
    let dim = iterate_history[0].len();
    if residual_history
        .iter()
        .chain(iterate_history.iter())
        .any(|v| v.len() != dim)
    {
        return Err(CoreError::InvalidArgument("history entries differ in dimension".into()));
    }
    let k = residual_history.len().min(m + 1);
    let start = residual_history.len() - k;
    let res = &residual_history[start..];
    let its = &iterate_history[start..];

    let picard = |x: &[R], g: &[R]| -> Vec<R> {
        x.iter().zip(g).map(|(xi, ri)| *xi + beta * *ri).collect()
    };
    if k == 1 || m == 0 {
        return Ok(picard(its.last().unwrap(), res.last().unwrap()));
    }

    // minimize |sum_i a_i res_i| subject to sum a_i = 1 via the KKT system
    let mut kkt = DMatrix::<R>::zeros(k + 1, k + 1);
    for i in 0..k {
        for j in 0..k {
            let mut dot = R::zero();
            for d in 0..dim {
                dot += res[i][d] * res[j][d];
            }
            kkt[(i, j)] = dot;
        }
        kkt[(i, i)] += R::c(ANDERSON_RIDGE);
        kkt[(i, k)] = R::one();
        kkt[(k, i)] = R::one();
    }
    let mut rhs = DVector::<R>::zeros(k + 1);
    rhs[k] = R::one();
    let alpha = match kkt.lu().solve(&rhs) {
        Some(sol) if sol.iter().take(k).all(|a| a.finite()) => sol,
        _ => return Ok(picard(its.last().unwrap(), res.last().unwrap())),
    };

    let mut next = vec![R::zero(); dim];
    for i in 0..k {
        let a = alpha[i];
        for d in 0..dim {
            next[d] += a * (its[i][d] + beta * res[i][d]);
        }
    }
    Ok(next)
}

/// Run the alternating refinement to a fixed point.
///
/// Each iteration: candidate generation under the current pose, cost
/// sampling, history update, bounded depth update (optionally
/// Anderson-accelerated), evolving confidence, then an energy-checked damped
/// Gauss-Newton pose step using the updated depth. The returned state carries
/// the depth and pose iterates with the smallest respective update norms.
pub fn refine<R: Real>(
    initial: RefinementState<R>,
    pair: &PairInputs<'_, R>,
    params: &RefineParams<R>,
) -> Result<(RefinementState<R>, IterationTrace<R>)> {
    if params.solver.max_iters < 1 {
        return Err(CoreError::InvalidArgument("max_iters must be at least 1".into()));
    }
    let k = &pair.intrinsics;
    let target_l1 = pair.target_feats.level(1);
    let source_l1 = pair.source_feats.level(1);
    if initial.depth.width() != k.width || initial.depth.height() != k.height {
        return Err(CoreError::ShapeMismatch("depth vs intrinsics size".into()));
    }
    if target_l1.width() != k.width || target_l1.height() != k.height {
        return Err(CoreError::ShapeMismatch("features vs intrinsics size".into()));
    }

    let w_q = static_confidence(
        target_l1,
        source_l1,
        &initial.depth,
        &initial.pose,
        k,
        params.kappa,
        params.grad_floor,
    );

    let mut state = initial;
    let mut trace = IterationTrace::default();
    let mut best_depth: Option<(R, DepthMap<R>)> = None;
    let mut best_pose: Option<(R, Se3Pose<R>)> = None;
    let mut res_hist: Vec<Vec<R>> = Vec::new();
    let mut x_hist: Vec<Vec<R>> = Vec::new();

    for _ in 0..params.solver.max_iters {
        let t0 = Instant::now();
        let cands = depth_candidates(
            &state.depth,
            params.radius,
            params.range_scale,
            params.levels,
            &params.limits,
        )?;
        let costs = sample_cost_map(target_l1, pair.source_feats, &cands, &state.pose, k)?;
        let history = update_history(&state.history, &costs)?;
        let mut new_depth =
            depth_update(&costs, &cands, &state.depth, params.temperature, &params.limits)?;

        let mut anderson_clamped = 0usize;
        if params.solver.acceleration == Acceleration::DepthOnly {
            let x: Vec<R> = state.depth.data().to_vec();
            let res: Vec<R> =
                new_depth.data().iter().zip(&x).map(|(g, xi)| *g - *xi).collect();
            x_hist.push(x);
            res_hist.push(res);
            let keep = params.solver.anderson_m + 1;
            if x_hist.len() > keep {
                x_hist.remove(0);
                res_hist.remove(0);
            }
            if x_hist.len() >= 2 {
                let mixed = anderson_step(
                    &res_hist,
                    &x_hist,
                    params.solver.anderson_m,
                    params.solver.anderson_beta,
                )?;
                let r = R::c(params.radius as f64);
                let two = R::c(2.0);
                let data: Vec<R> = state
                    .depth
                    .data()
                    .iter()
                    .zip(&mixed)
                    .map(|(d, md)| {
                        let bound = two * r * *d / params.range_scale;
                        let clamped = (*md).clamp(*d - bound, *d + bound);
                        if clamped != *md {
                            anderson_clamped += 1;
                        }
                        params.limits.clamp_inside(clamped)
                    })
                    .collect();
                new_depth = DepthMap::new(state.depth.width(), state.depth.height(), data)?;
            }
        }

        let w_h = evolving_confidence(&history, params.tau_w)?;
        let weights = w_q.product(&w_h)?;

        let step = match damped_pose_step(
            target_l1,
            source_l1,
            &new_depth,
            &state.pose,
            k,
            &weights,
            params.damping,
        ) {
            Ok(s) => s,
            Err(e @ CoreError::InsufficientOverlap { .. }) => {
                trace.error = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };

        let next = RefinementState {
            history,
            depth: new_depth,
            pose: step.pose,
            iteration: state.iteration + 1,
        };
        let (depth_rel, pose_norm) = convergence_metric(&state, &next);

        let (warped, mask) = warp_image(pair.source_image, &next.depth, &next.pose, k)?;
        let disparity = next.depth.map(|d| R::one() / d);
        let photo_loss = match photometric_loss(
            pair.target_image,
            &[(warped, mask)],
            &disparity,
            &params.loss,
        ) {
            Ok(l) => l,
            Err(CoreError::EmptyRegion) => R::zero(),
            Err(e) => return Err(e),
        };

        trace.records.push(IterationRecord {
            iter: next.iteration,
            depth_rel,
            pose_norm,
            mean_min_cost: costs.mean_min_cost(),
            photo_loss,
            millis: t0.elapsed().as_secs_f64() * 1e3,
            anderson_clamped,
        });

        if best_depth.as_ref().map_or(true, |(n, _)| depth_rel < *n) {
            best_depth = Some((depth_rel, next.depth.clone()));
        }
        if best_pose.as_ref().map_or(true, |(n, _)| pose_norm < *n) {
            best_pose = Some((pose_norm, next.pose.clone()));
        }
        state = next;
        if depth_rel < params.solver.tol_depth && pose_norm < params.solver.tol_pose {
            break;
        }
    }

    if let Some((_, d)) = best_depth {
        state.depth = d;
    }
    if let Some((_, p)) = best_pose {
        state.pose = p;
    }
    Ok((state, trace))
}
