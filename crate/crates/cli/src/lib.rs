//! File formats, configuration, and command dispatch for the refinement
//! engine. Images travel as PGM/PPM, depth as single-channel PFM, and
//! trajectories as 12-number [R|t] lines; everything tunable lives in a
//! `key = value` run configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod intrinsics;
pub mod pfm;
pub mod pnm;
pub mod posefile;
pub mod scene;
pub mod selftest;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
