//! Scene description files for the synthetic renderer: `key = value` lines
//! with one repeated `plane` key per plane. A minimal file is just a couple
//! of `plane` lines; camera and motion keys default to the standard
//! two-view setup (0.3 m sideways baseline, 2 degree yaw).

use std::fs;
use std::path::Path;

use epirefine_core::se3::{exp_map, Twist};
use epirefine_core::synth::{PlaneSpec, SceneSpec, TextureKind};
use epirefine_core::{CameraIntrinsics64, Se3Pose64};
use nalgebra::Vector3;

use crate::error::{CliError, Result};
use crate::intrinsics::parse_intrinsics;

/// A parsed scene file: world content plus the camera pair observing it.
#[derive(Clone, Debug)]
pub struct SceneFile {
    pub scene: SceneSpec<f64>,
    pub intrinsics: CameraIntrinsics64,
    /// Relative pose mapping the target camera into the source camera.
    pub pose: Se3Pose64,
}

fn parse_floats(value: &str, n: usize, what: &str) -> std::result::Result<Vec<f64>, String> {
    let vals: Vec<f64> = value
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("{what}: `{t}` is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    if vals.len() != n {
        return Err(format!("{what}: expected {n} values, got {}", vals.len()));
    }
    Ok(vals)
}

fn parse_plane(value: &str) -> std::result::Result<PlaneSpec<f64>, String> {
    // nx ny nz offset texture scale
    let tokens: Vec<&str> = value.split_whitespace().collect();
    if tokens.len() != 6 {
        return Err(format!(
            "plane: expected `nx ny nz offset texture scale`, got {} tokens",
            tokens.len()
        ));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        tokens[i].parse().map_err(|_| format!("plane: `{}` is not a number", tokens[i]))
    };
    let normal = Vector3::new(num(0)?, num(1)?, num(2)?);
    let n = normal.norm();
    if n < 1e-9 {
        return Err("plane: zero normal".into());
    }
    let texture = match tokens[4] {
        "checker" => TextureKind::Checker,
        "noise" => TextureKind::ValueNoise,
        "stripes" => TextureKind::Stripes,
        other => {
            return Err(format!("plane: unknown texture `{other}` (checker | noise | stripes)"))
        }
    };
    PlaneSpec::new(normal / n, num(3)?, texture, num(5)?).map_err(|e| e.to_string())
}

pub fn load_scene(path: &Path) -> Result<SceneFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let p = path.display().to_string();
    parse_scene(&text).map_err(|msg| CliError::parse(p, msg))
}

pub fn parse_scene(text: &str) -> std::result::Result<SceneFile, String> {
    let mut planes = Vec::new();
    let mut background_depth = None;
    let mut texture_seed = 5u64;
    let mut intrinsics =
        CameraIntrinsics64::new(320.0, 320.0, 320.0, 96.0, 640, 192).unwrap();
    let mut yaw_deg: f64 = 2.0;
    let mut center = Vector3::new(0.3, 0.0, 0.0);

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let lined = |msg: String| format!("line {}: {msg}", i + 1);
        match key {
            "plane" => planes.push(parse_plane(value).map_err(lined)?),
            "background_depth" => {
                background_depth = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| lined(format!("bad depth `{value}`")))?,
                )
            }
            "texture_seed" => {
                texture_seed =
                    value.parse().map_err(|_| lined(format!("bad seed `{value}`")))?
            }
            "intrinsics" => intrinsics = parse_intrinsics(value).map_err(lined)?,
            "yaw_deg" => {
                yaw_deg = value.parse().map_err(|_| lined(format!("bad angle `{value}`")))?
            }
            "baseline" => {
                let v = parse_floats(value, 3, "baseline").map_err(lined)?;
                center = Vector3::new(v[0], v[1], v[2]);
            }
            other => return Err(format!("line {}: unknown scene key `{other}`", i + 1)),
        }
    }
    if planes.is_empty() && background_depth.is_none() {
        return Err("scene needs at least one plane or a background_depth".into());
    }

    // source camera: yawed about +y, centered at `baseline` in world units
    let rot = exp_map(&Twist::new(
        Vector3::new(0.0, yaw_deg.to_radians(), 0.0),
        Vector3::zeros(),
    ))
    .map_err(|e| e.to_string())?;
    let t = -(rot.rotation() * center);
    let pose = Se3Pose64::new(*rot.rotation(), t).map_err(|e| e.to_string())?;

    Ok(SceneFile {
        scene: SceneSpec { planes, background_depth, texture_seed },
        intrinsics,
        pose,
    })
}

/// The slanted-checker plane pair used by the acceptance suite.
pub fn default_scene_text() -> String {
    let up = (20f64).to_radians();
    let dn = (25f64).to_radians();
    format!(
        "plane = 0 {:.17} {:.17} 4.5 checker 0.75\n\
         plane = 0 {:.17} {:.17} 3.6 checker 0.75\n\
         texture_seed = 5\n\
         intrinsics = 320 320 320 96 640 192\n\
         yaw_deg = 2\n\
         baseline = 0.3 0 0\n",
        up.sin(),
        up.cos(),
        -dn.sin(),
        dn.cos()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scene_text_parses() {
        let sf = parse_scene(&default_scene_text()).unwrap();
        assert_eq!(sf.scene.planes.len(), 2);
        assert_eq!(sf.intrinsics.width, 640);
        // yaw 2 degrees about y
        let r = sf.pose.rotation();
        assert!((r[(0, 0)] - (2f64).to_radians().cos()).abs() < 1e-12);
        // translation encodes the 0.3 m baseline
        assert!((sf.pose.translation().norm() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn plane_normals_are_normalized() {
        let sf = parse_scene("plane = 0 0 5 10 stripes 1\n").unwrap();
        assert!((sf.scene.planes[0].normal.norm() - 1.0).abs() < 1e-12);
        assert_eq!(sf.scene.planes[0].offset, 10.0);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_scene("plane = 0 0 1 10 checker 1\nfog = 3\n").unwrap_err();
        assert!(err.contains("line 2") && err.contains("fog"), "{err}");
    }

    #[test]
    fn empty_scene_is_rejected() {
        assert!(parse_scene("yaw_deg = 1\n").is_err());
    }

    #[test]
    fn bad_texture_name_is_rejected() {
        let err = parse_scene("plane = 0 0 1 10 plaid 1\n").unwrap_err();
        assert!(err.contains("plaid"), "{err}");
    }
}
