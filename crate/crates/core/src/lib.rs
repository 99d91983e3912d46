//! Planning library and benchmark simulator for a two-agent bottleneck:
//! a robot and a pedestrian pass through a door from opposite sides.
//!
//! Three planning strategies are implemented over the same scenario and
//! safety model:
//!
//! - `ptp`: predict the pedestrian first, then plan the robot around the
//!   fixed prediction;
//! - `tsc`: jointly optimize both agents' waypoints under fixed
//!   preference distributions;
//! - `dsc`: jointly optimize both agents' per-step preference
//!   distributions (means and covariances), so flexibility itself
//!   evolves during the interaction.
//!
//! The crate also ships the episode runner (single-shot and receding
//! horizon), metrics, file formats, and an SVG renderer.

pub mod artifacts;
pub mod error;
pub mod gaussian;
pub mod optimizer;
pub mod planner;
pub mod quadrature;
pub mod safety;
pub mod scenario;
pub mod selfcheck;
pub mod sim;
pub mod traj;

pub use error::{Error, Result};

// re-exported so downstream crates share the same linear algebra types
pub use nalgebra;

/// The repository's frozen bottleneck configuration; all episode-level
/// regression thresholds were calibrated against it.
pub const CANONICAL_CONFIG: &str = include_str!("../../../configs/canonical.toml");
