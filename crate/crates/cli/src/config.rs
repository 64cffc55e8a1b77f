//! Run configuration as `key = value` text. Every engine tunable is exposed;
//! unknown keys are rejected and values are type-checked on load. Dumping a
//! loaded config reproduces it byte-for-byte after one normalization pass.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use epirefine_core::epipolar::DepthLimits;
use epirefine_core::metrics::LossConfig;
use epirefine_core::solver::{Acceleration, SolverConfig};
use epirefine_core::synth::NoiseSpec;
use epirefine_core::RefineParams64;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    // candidate sampling
    pub radius: usize,
    pub range_scale: f64,
    pub levels: usize,
    // depth update and confidences
    pub temperature: f64,
    pub tau_w: f64,
    pub history_decay: f64,
    pub kappa: f64,
    pub grad_floor: f64,
    // pose step
    pub damping: f64,
    // depth limits
    pub d_min: f64,
    pub d_max: f64,
    // solver
    pub max_iters: usize,
    pub tol_depth: f64,
    pub tol_pose: f64,
    pub anderson_m: usize,
    pub anderson_beta: f64,
    pub acceleration: Acceleration,
    // consistency mask
    pub wide_radius: usize,
    pub mask_ratio: f64,
    // synthetic perturbation
    pub noise_depth_sigma: f64,
    pub noise_rot_deg: f64,
    pub noise_trans_m: f64,
    pub seed: u64,
    // loss and metrics
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub alpha_ssim: f64,
    pub metric_cap: f64,
    pub median_scale: bool,
    // 0 = auto
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = RefineParams64::default();
        let loss = LossConfig::<f64>::default();
        Self {
            radius: p.radius,
            range_scale: p.range_scale,
            levels: p.levels,
            temperature: p.temperature,
            tau_w: p.tau_w,
            history_decay: p.history_decay,
            kappa: p.kappa,
            grad_floor: p.grad_floor,
            damping: p.damping,
            d_min: p.limits.min,
            d_max: p.limits.max,
            max_iters: p.solver.max_iters,
            tol_depth: p.solver.tol_depth,
            tol_pose: p.solver.tol_pose,
            anderson_m: p.solver.anderson_m,
            anderson_beta: p.solver.anderson_beta,
            acceleration: p.solver.acceleration,
            wide_radius: 90,
            mask_ratio: 0.15,
            noise_depth_sigma: 0.1,
            noise_rot_deg: 1.0,
            noise_trans_m: 0.1,
            seed: 33,
            lambda_p: loss.lambda_p,
            lambda_s: loss.lambda_s,
            alpha_ssim: loss.alpha_ssim,
            metric_cap: 80.0,
            median_scale: true,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let p = path.display().to_string();
        Self::parse(&text).map_err(|msg| CliError::parse(p, msg))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|msg| format!("line {}: {msg}", i + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value.parse().map_err(|_| format!("bad value `{value}` for key `{key}`"))
        }
        match key {
            "radius" => self.radius = num(key, value)?,
            "range_scale" => self.range_scale = num(key, value)?,
            "levels" => self.levels = num(key, value)?,
            "temperature" => self.temperature = num(key, value)?,
            "tau_w" => self.tau_w = num(key, value)?,
            "history_decay" => self.history_decay = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "grad_floor" => self.grad_floor = num(key, value)?,
            "damping" => self.damping = num(key, value)?,
            "d_min" => self.d_min = num(key, value)?,
            "d_max" => self.d_max = num(key, value)?,
            "max_iters" => self.max_iters = num(key, value)?,
            "tol_depth" => self.tol_depth = num(key, value)?,
            "tol_pose" => self.tol_pose = num(key, value)?,
            "anderson_m" => self.anderson_m = num(key, value)?,
            "anderson_beta" => self.anderson_beta = num(key, value)?,
            "acceleration" => {
                self.acceleration = match value {
                    "off" => Acceleration::Off,
                    "depth-only" => Acceleration::DepthOnly,
                    other => {
                        return Err(format!(
                            "bad value `{other}` for key `acceleration` (off | depth-only)"
                        ))
                    }
                }
            }
            "wide_radius" => self.wide_radius = num(key, value)?,
            "mask_ratio" => self.mask_ratio = num(key, value)?,
            "noise_depth_sigma" => self.noise_depth_sigma = num(key, value)?,
            "noise_rot_deg" => self.noise_rot_deg = num(key, value)?,
            "noise_trans_m" => self.noise_trans_m = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "lambda_p" => self.lambda_p = num(key, value)?,
            "lambda_s" => self.lambda_s = num(key, value)?,
            "alpha_ssim" => self.alpha_ssim = num(key, value)?,
            "metric_cap" => self.metric_cap = num(key, value)?,
            "median_scale" => {
                self.median_scale = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(format!("bad value `{other}` for key `median_scale`"))
                    }
                }
            }
            "threads" => self.threads = num(key, value)?,
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.radius == 0 || self.levels == 0 || self.max_iters == 0 {
            return Err("radius, levels, and max_iters must be at least 1".into());
        }
        if !(self.range_scale > 0.0 && self.temperature > 0.0 && self.tau_w > 0.0) {
            return Err("range_scale, temperature, and tau_w must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.history_decay) {
            return Err("history_decay must lie in [0, 1]".into());
        }
        if !(self.d_min > 0.0 && self.d_max > self.d_min) {
            return Err("need 0 < d_min < d_max".into());
        }
        if self.wide_radius < self.radius {
            return Err("wide_radius must be at least radius".into());
        }
        Ok(())
    }

    /// Normalized text form; `parse(dump(c)) == c` and dumping again is
    /// byte-identical.
    pub fn dump(&self) -> String {
        let accel = match self.acceleration {
            Acceleration::Off => "off",
            Acceleration::DepthOnly => "depth-only",
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("radius", self.radius.to_string());
        kv("range_scale", self.range_scale.to_string());
        kv("levels", self.levels.to_string());
        kv("temperature", self.temperature.to_string());
        kv("tau_w", self.tau_w.to_string());
        kv("history_decay", self.history_decay.to_string());
        kv("kappa", self.kappa.to_string());
        kv("grad_floor", self.grad_floor.to_string());
        kv("damping", self.damping.to_string());
        kv("d_min", self.d_min.to_string());
        kv("d_max", self.d_max.to_string());
        kv("max_iters", self.max_iters.to_string());
        kv("tol_depth", self.tol_depth.to_string());
        kv("tol_pose", self.tol_pose.to_string());
        kv("anderson_m", self.anderson_m.to_string());
        kv("anderson_beta", self.anderson_beta.to_string());
        kv("acceleration", accel.to_string());
        kv("wide_radius", self.wide_radius.to_string());
        kv("mask_ratio", self.mask_ratio.to_string());
        kv("noise_depth_sigma", self.noise_depth_sigma.to_string());
        kv("noise_rot_deg", self.noise_rot_deg.to_string());
        kv("noise_trans_m", self.noise_trans_m.to_string());
        kv("seed", self.seed.to_string());
        kv("lambda_p", self.lambda_p.to_string());
        kv("lambda_s", self.lambda_s.to_string());
        kv("alpha_ssim", self.alpha_ssim.to_string());
        kv("metric_cap", self.metric_cap.to_string());
        kv("median_scale", self.median_scale.to_string());
        kv("threads", self.threads.to_string());
        out
    }

    pub fn params(&self) -> RefineParams64 {
        RefineParams64 {
            radius: self.radius,
            range_scale: self.range_scale,
            levels: self.levels,
            temperature: self.temperature,
            tau_w: self.tau_w,
            history_decay: self.history_decay,
            kappa: self.kappa,
            grad_floor: self.grad_floor,
            damping: self.damping,
            limits: DepthLimits { min: self.d_min, max: self.d_max },
            loss: LossConfig {
                lambda_p: self.lambda_p,
                lambda_s: self.lambda_s,
                alpha_ssim: self.alpha_ssim,
            },
            solver: SolverConfig {
                max_iters: self.max_iters,
                tol_depth: self.tol_depth,
                tol_pose: self.tol_pose,
                anderson_m: self.anderson_m,
                anderson_beta: self.anderson_beta,
                acceleration: self.acceleration,
            },
        }
    }

    pub fn noise(&self) -> NoiseSpec<f64> {
        NoiseSpec {
            depth_sigma: self.noise_depth_sigma,
            rot_deg: self.noise_rot_deg,
            trans_m: self.noise_trans_m,
            seed: self.seed,
        }
    }
}
