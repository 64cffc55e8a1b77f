//! Built-in invariant checks, runnable in the field without test harnesses.

use epirefine_core::se3::{exp_map, log_map, project, projection_jacobian, Twist};
use epirefine_core::solver::anderson_step;
use epirefine_core::{CameraIntrinsics64, DepthMap64, Se3Pose64};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};

fn check(name: &str, ok: bool, detail: String) -> Result<()> {
    if ok {
        println!("ok {name}");
        Ok(())
    } else {
        Err(CliError::Data(format!("selftest failed: {name}: {detail}")))
    }
}

fn anderson_beats_picard() -> Result<()> {
    // x -> 0.5 x + 1, fixed point 2
    let g = |x: f64| 0.5 * x + 1.0;
    let tol = 1e-8;

    let mut x = 100.0;
    let mut picard_iters = 0;
    while (g(x) - x).abs() > tol && picard_iters < 1000 {
        x = g(x);
        picard_iters += 1;
    }

    let mut x = 100.0;
    let mut iterates: Vec<Vec<f64>> = Vec::new();
    let mut residuals: Vec<Vec<f64>> = Vec::new();
    let mut anderson_iters = 0;
    while (g(x) - x).abs() > tol && anderson_iters < 1000 {
        iterates.push(vec![x]);
        residuals.push(vec![g(x) - x]);
        x = anderson_step(&residuals, &iterates, 3, 1.0)?[0];
        anderson_iters += 1;
    }

    check(
        "anderson acceleration on the scalar contraction",
        anderson_iters <= 5 && picard_iters >= 25 && (x - 2.0).abs() < 1e-6,
        format!("anderson {anderson_iters} iters, picard {picard_iters}, x={x}"),
    )
}

fn depth_metric_oracle() -> Result<()> {
    let gt = DepthMap64::new(16, 8, (0..128).map(|i| 2.0 + (i % 13) as f64 * 0.5).collect())
        .unwrap();
    let pred = gt.map(|d| 1.1 * d);
    let m = epirefine_core::metrics::depth_metrics(&pred, &gt, 80.0, false)
        .map_err(CliError::Core)?;
    check(
        "abs_rel on a 10% biased prediction",
        (m.abs_rel - 0.1).abs() < 1e-9,
        format!("abs_rel={}", m.abs_rel),
    )
}

fn exp_log_roundtrip() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let w = Vector3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * 2.0;
        let v = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()) * 5.0;
        let twist = Twist::new(w, v);
        let back = log_map(&exp_map(&twist).map_err(CliError::Core)?).map_err(CliError::Core)?;
        worst = worst
            .max((back.omega - twist.omega).norm())
            .max((back.v - twist.v).norm());
    }
    check("exp/log roundtrip on random twists", worst < 1e-10, format!("worst {worst:.2e}"))
}

fn projection_jacobian_fd() -> Result<()> {
    let k = CameraIntrinsics64::new(320.0, 320.0, 320.0, 96.0, 640, 192).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pose = exp_map(&Twist::new(
            Vector3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * 0.1,
            Vector3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * 0.4,
        ))
        .map_err(CliError::Core)?;
        let u = Vector2::new(rng.gen::<f64>() * 600.0 + 20.0, rng.gen::<f64>() * 150.0 + 20.0);
        let d = 2.0 + rng.gen::<f64>() * 20.0;
        let jac = match projection_jacobian(&u, d, &pose, &k) {
            Ok(j) => j,
            Err(_) => continue,
        };
        let eps = 1e-6;
        for col in 0..6 {
            let mut delta = [0.0; 6];
            delta[col] = eps;
            let twist =
                Twist::new(Vector3::new(delta[0], delta[1], delta[2]), Vector3::new(delta[3], delta[4], delta[5]));
            let neg = Twist::new(-twist.omega, -twist.v);
            let plus = exp_map(&twist).map_err(CliError::Core)?.compose(&pose);
            let minus = exp_map(&neg).map_err(CliError::Core)?.compose(&pose);
            let (pp, pm) = match (project(&u, d, &plus, &k), project(&u, d, &minus, &k)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => continue,
            };
            let fd = (pp.pixel - pm.pixel) / (2.0 * eps);
            let analytic = Vector2::new(jac[(0, col)], jac[(1, col)]);
            let rel = (fd - analytic).norm() / analytic.norm().max(1.0);
            worst = worst.max(rel);
        }
    }
    check(
        "projection jacobian vs finite differences",
        worst < 1e-4,
        format!("worst rel err {worst:.2e}"),
    )
}

fn pose_line_roundtrip() -> Result<()> {
    let pose = exp_map(&Twist::new(
        Vector3::new(0.1, -0.2, 0.3),
        Vector3::new(1.5, -0.25, 4.0),
    ))
    .map_err(CliError::Core)?;
    let line = crate::posefile::format_pose_line(&pose);
    let back: Se3Pose64 =
        crate::posefile::parse_pose_line(&line).map_err(CliError::Data)?;
    let dr = (pose.rotation() - back.rotation()).norm();
    let dt = (pose.translation() - back.translation()).norm();
    check("pose line roundtrip", dr < 1e-14 && dt < 1e-14, format!("dr {dr:.2e} dt {dt:.2e}"))
}

pub fn run() -> Result<()> {
    anderson_beats_picard()?;
    depth_metric_oracle()?;
    exp_log_roundtrip()?;
    projection_jacobian_fd()?;
    pose_line_roundtrip()?;
    println!("selftest passed (5 checks)");
    Ok(())
}
