//! Trajectory files: one pose per line as 12 whitespace-separated reals, the
//! row-major 3x4 [R|t] matrix (KITTI odometry convention). Numbers are
//! written with 17 significant digits so a roundtrip is exact for f64.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use epirefine_core::Se3Pose64;
use nalgebra::{Matrix3, Vector3};

use crate::error::{CliError, Result};

/// Orthonormality slack accepted when parsing rotations from text.
const ROTATION_TOL: f64 = 1e-3;

pub fn parse_pose_line(line: &str) -> std::result::Result<Se3Pose64, String> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    if vals.len() != 12 {
        return Err(format!("expected 12 values, got {}", vals.len()));
    }
    let rotation = Matrix3::new(
        vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
    );
    let translation = Vector3::new(vals[3], vals[7], vals[11]);
    Se3Pose64::from_parts_orthonormalized(rotation, translation, ROTATION_TOL)
        .map_err(|e| e.to_string())
}

pub fn format_pose_line(pose: &Se3Pose64) -> String {
    let r = pose.rotation();
    let t = pose.translation();
    let mut line = String::new();
    for row in 0..3 {
        for col in 0..3 {
            let _ = write!(line, "{:.16e} ", r[(row, col)]);
        }
        let _ = write!(line, "{:.16e}", t[row]);
        if row < 2 {
            line.push(' ');
        }
    }
    line
}

pub fn read_poses(path: &Path) -> Result<Vec<Se3Pose64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let p = path.display().to_string();
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pose = parse_pose_line(line)
            .map_err(|msg| CliError::parse(&p, format!("line {}: {msg}", i + 1)))?;
        poses.push(pose);
    }
    if poses.is_empty() {
        return Err(CliError::parse(p, "no poses in file"));
    }
    Ok(poses)
}

pub fn write_poses(path: &Path, poses: &[Se3Pose64]) -> Result<()> {
    let mut out = String::new();
    for pose in poses {
        out.push_str(&format_pose_line(pose));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn identity_line_parses() {
        let pose = parse_pose_line("1 0 0 0 0 1 0 0 0 0 1 0").unwrap();
        assert_eq!(pose.rotation(), &Matrix3::identity());
        assert_eq!(pose.translation(), &Vector3::zeros());
    }

    #[test]
    fn roundtrip_of_random_poses_is_exact() {
        use epirefine_core::se3::{exp_map, Twist};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let dir = tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        let poses: Vec<Se3Pose64> = (0..100)
            .map(|_| {
                let w = Vector3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                let v = Vector3::new(rng.gen::<f64>() * 4.0, rng.gen(), rng.gen());
                exp_map(&Twist::new(w, v)).unwrap()
            })
            .collect();
        write_poses(&path, &poses).unwrap();
        let back = read_poses(&path).unwrap();
        assert_eq!(back.len(), poses.len());
        for (a, b) in poses.iter().zip(&back) {
            let dr = (a.rotation() - b.rotation()).abs().max();
            let dt = (a.translation() - b.translation()).abs().max();
            assert!(dr < 1e-15 && dt < 1e-15, "dr {dr:.2e} dt {dt:.2e}");
        }
    }

    #[test]
    fn wrong_token_count_names_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        let good = "1 0 0 0 0 1 0 0 0 0 1 0\n";
        let text = good.repeat(6) + "1 0 0 0 0 1 0 0 0 0 1\n";
        std::fs::write(&path, text).unwrap();
        let err = read_poses(&path).unwrap_err().to_string();
        assert!(err.contains("line 7"), "{err}");
        assert!(err.contains("expected 12"), "{err}");
    }

    #[test]
    fn non_orthonormal_rotation_is_rejected() {
        let err = parse_pose_line("2 0 0 0 0 1 0 0 0 0 1 0").unwrap_err();
        assert!(err.contains("orthonormal"), "{err}");
    }
}
