//! Pinhole intrinsics file: six whitespace-separated values,
//! `fx fy cx cy width height`, in any line layout.

use std::fs;
use std::path::Path;

use epirefine_core::CameraIntrinsics64;

use crate::error::{CliError, Result};

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics64> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let p = path.display().to_string();
    parse_intrinsics(&text).map_err(|msg| CliError::parse(p, msg))
}

pub fn parse_intrinsics(text: &str) -> std::result::Result<CameraIntrinsics64, String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 6 {
        return Err(format!("expected 6 values (fx fy cx cy width height), got {}", tokens.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        tokens[i].parse().map_err(|_| format!("`{}` is not a number", tokens[i]))
    };
    let dim = |i: usize| -> std::result::Result<usize, String> {
        tokens[i].parse().map_err(|_| format!("`{}` is not a positive integer", tokens[i]))
    };
    CameraIntrinsics64::new(num(0)?, num(1)?, num(2)?, num(3)?, dim(4)?, dim(5)?)
        .map_err(|e| e.to_string())
}

pub fn write_intrinsics(path: &Path, k: &CameraIntrinsics64) -> Result<()> {
    let text = format!("{} {} {} {}\n{} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height);
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
