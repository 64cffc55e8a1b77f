//! Subcommand definitions and their implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use epirefine_core::image::{decimate, extract_features};
use epirefine_core::metrics::{depth_metrics, odometry_metrics};
use epirefine_core::solver::{refine, PairInputs, RefinementState};
use epirefine_core::synth::{perturb, render_view, two_view_fixture};
use epirefine_core::{CameraIntrinsics64, ImageGrid64, Se3Pose64};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::intrinsics::{read_intrinsics, write_intrinsics};
use crate::pfm::{read_pfm, write_pfm};
use crate::pnm::{read_image, write_pgm};
use crate::posefile::{read_poses, write_poses};
use crate::scene::load_scene;
use crate::selftest;

/// Two-view depth and pose refinement on synthetic or converted image pairs.
#[derive(Parser, Debug)]
#[command(name = "epirefine", version, disable_help_subcommand = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Refine an initial depth map and relative pose on an image pair.
    Refine {
        /// Target (reference) image, PGM or PPM.
        #[arg(long)]
        target: PathBuf,
        /// Source image; when omitted, the initial estimates are echoed.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Full-resolution intrinsics file.
        #[arg(long)]
        intrinsics: PathBuf,
        /// Initial depth at working (quarter) resolution, PFM.
        #[arg(long)]
        init_depth: PathBuf,
        /// Initial relative pose (first line of a trajectory file).
        #[arg(long)]
        init_pose: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the refined depth, pose, and trace.
        #[arg(long)]
        out: PathBuf,
        /// Record wall time per iteration in the trace CSV.
        #[arg(long)]
        timing: bool,
    },
    /// Depth error metrics between a predicted and a ground-truth PFM.
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Compare at absolute scale instead of median-scaling the prediction.
        #[arg(long)]
        no_median_scale: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Trajectory error metrics between estimated and ground-truth pose files.
    EvalOdom {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Render a synthetic two-view pair with ground truth and noisy initializations.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn apply_threads(cfg: &RunConfig) {
    if cfg.threads > 0 {
        // ignore failure: the global pool can only be configured once
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn working_dims(k: &CameraIntrinsics64) -> (usize, usize) {
    let kw = k.scaled(0.25);
    (kw.width, kw.height)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Refine {
            target,
            source,
            intrinsics,
            init_depth,
            init_pose,
            config,
            out,
            timing,
        } => cmd_refine(&target, source.as_deref(), &intrinsics, &init_depth, &init_pose, &config, &out, timing),
        Command::EvalDepth { pred, gt, no_median_scale, config } => {
            cmd_eval_depth(&pred, &gt, no_median_scale, &config)
        }
        Command::EvalOdom { est, gt } => cmd_eval_odom(&est, &gt),
        Command::Synth { scene, out, config } => cmd_synth(&scene, &out, &config),
        Command::Selftest => selftest::run(),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_refine(
    target: &Path,
    source: Option<&Path>,
    intrinsics: &Path,
    init_depth: &Path,
    init_pose: &Path,
    config: &Option<PathBuf>,
    out: &Path,
    timing: bool,
) -> Result<()> {
    let cfg = load_config(config)?;
    apply_threads(&cfg);
    let k = read_intrinsics(intrinsics)?;
    let depth0 = read_pfm(init_depth)?;
    let pose0 = read_poses(init_pose)?.remove(0);

    let (ww, wh) = working_dims(&k);
    if (depth0.width(), depth0.height()) != (ww, wh) {
        return Err(CliError::Data(format!(
            "initial depth is {}x{}, expected {ww}x{wh} (quarter of {}x{})",
            depth0.width(),
            depth0.height(),
            k.width,
            k.height
        )));
    }
    ensure_dir(out)?;

    let Some(source) = source else {
        // no second view: skip refinement and echo the initial estimates
        write_pfm(&out.join("depth_refined.pfm"), &depth0)?;
        write_poses(&out.join("pose_refined.txt"), &[pose0])?;
        fs::write(
            out.join("trace.csv"),
            "iter,depth_rel,pose_norm,mean_min_cost,photo_loss,ms\n",
        )
        .map_err(|e| CliError::io(out, e))?;
        println!("iters=0");
        return Ok(());
    };

    let load_view = |path: &Path| -> Result<(ImageGrid64, _)> {
        let full = read_image(path)?;
        if (full.width(), full.height()) != (k.width, k.height) {
            return Err(CliError::Data(format!(
                "{}: image is {}x{}, intrinsics say {}x{}",
                path.display(),
                full.width(),
                full.height(),
                k.width,
                k.height
            )));
        }
        let gray = full.luminance()?;
        let feats = extract_features(&full)?;
        Ok((decimate(&gray, 4), feats))
    };
    let (target_image, target_feats) = load_view(target)?;
    let (source_image, source_feats) = load_view(source)?;

    let params = cfg.params();
    let pair = PairInputs {
        target_image: &target_image,
        source_image: &source_image,
        target_feats: &target_feats,
        source_feats: &source_feats,
        intrinsics: k.scaled(0.25),
    };
    let state = RefinementState::new(depth0, pose0, params.history_decay);
    let (end, trace) = refine(state, &pair, &params)?;

    write_pfm(&out.join("depth_refined.pfm"), &end.depth)?;
    write_poses(&out.join("pose_refined.txt"), &[end.pose])?;
    fs::write(out.join("trace.csv"), trace.to_csv(timing)).map_err(|e| CliError::io(out, e))?;

    if let Some(err) = trace.error {
        return Err(CliError::Data(format!("refinement aborted: {err}")));
    }
    let last = trace.records.last();
    println!(
        "iters={} depth_rel={:.3e} pose_norm={:.3e}",
        trace.records.len(),
        last.map_or(0.0, |r| r.depth_rel),
        last.map_or(0.0, |r| r.pose_norm)
    );
    Ok(())
}

fn cmd_eval_depth(pred: &Path, gt: &Path, no_median_scale: bool, config: &Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let pred = read_pfm(pred)?;
    let gt = read_pfm(gt)?;
    let m = depth_metrics(&pred, &gt, cfg.metric_cap, cfg.median_scale && !no_median_scale)?;
    println!(
        "abs_rel={:.6} sq_rel={:.6} rmse={:.6} rmse_log={:.6} delta1={:.6} delta2={:.6} delta3={:.6}",
        m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3
    );
    Ok(())
}

fn cmd_eval_odom(est: &Path, gt: &Path) -> Result<()> {
    let est = read_poses(est)?;
    let gt = read_poses(gt)?;
    if est.len() != gt.len() {
        return Err(CliError::Data(format!(
            "trajectory lengths differ: {} estimated vs {} ground truth",
            est.len(),
            gt.len()
        )));
    }
    let m = odometry_metrics(&est, &gt)?;
    let mut line = format!("ate={:.6}", m.ate);
    if let Some(t) = m.t_err {
        line.push_str(&format!(" t_err={t:.6}"));
    }
    if let Some(r) = m.r_err {
        line.push_str(&format!(" r_err={r:.6}"));
    }
    println!("{line}");
    Ok(())
}

fn cmd_synth(scene: &Path, out: &Path, config: &Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    apply_threads(&cfg);
    let sf = load_scene(scene)?;
    ensure_dir(out)?;

    let view_t = render_view(&sf.scene, &Se3Pose64::identity(), &sf.intrinsics)?;
    let view_s = render_view(&sf.scene, &sf.pose, &sf.intrinsics)?;
    write_pgm(&out.join("target.pgm"), &view_t.image)?;
    write_pgm(&out.join("source.pgm"), &view_s.image)?;
    write_intrinsics(&out.join("intrinsics.txt"), &sf.intrinsics)?;
    write_pfm(&out.join("depth_gt.pfm"), &view_t.depth_working)?;
    write_poses(&out.join("pose_gt.txt"), &[sf.pose.clone()])?;

    // noisy initializations for a follow-up `refine` run
    let params = cfg.params();
    let (depth0, pose0, _) =
        perturb(&view_t.depth_working, &sf.pose, &cfg.noise(), &params.limits)?;
    write_pfm(&out.join("init_depth.pfm"), &depth0)?;
    write_poses(&out.join("init_pose.txt"), &[pose0])?;

    // sanity: the rendered pair must actually form a usable fixture
    let _ = two_view_fixture(&sf.scene, &sf.pose, &sf.intrinsics)?;
    println!("scene={} out={}", scene.display(), out.display());
    Ok(())
}
