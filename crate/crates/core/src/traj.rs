//! Trajectory containers shared by the planners and the simulator.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::gaussian::Gaussian2;

/// A horizon-length sequence of 2D waypoints with a fixed time step.
/// Index 0 is the agent's current position.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vector2<f64>>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Vector2<f64>>, dt: f64) -> Self {
        Self { points, dt }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Total polyline length in meters.
    pub fn path_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    /// Per-step displacement magnitudes (length = points - 1).
    pub fn step_lengths(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
    }

    /// Per-step speeds in m/s.
    pub fn speeds(&self) -> Vec<f64> {
        self.step_lengths().iter().map(|d| d / self.dt).collect()
    }

    /// True when every step displacement is within `v_max * dt` plus a
    /// small tolerance.
    pub fn is_kinematically_feasible(&self, v_max: f64, tol: f64) -> bool {
        self.step_lengths().iter().all(|&d| d <= v_max * self.dt + tol)
    }

    /// Largest pointwise deviation from another trajectory of equal length.
    pub fn max_deviation(&self, other: &Trajectory) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// A horizon-length sequence of preference distributions, one Gaussian
/// per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceTrajectory {
    pub steps: Vec<Gaussian2>,
    pub dt: f64,
}

impl PreferenceTrajectory {
    pub fn new(steps: Vec<Gaussian2>, dt: f64) -> Self {
        Self { steps, dt }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The mean sequence as a plain trajectory.
    pub fn means(&self) -> Trajectory {
        Trajectory::new(self.steps.iter().map(|g| g.mean()).collect(), self.dt)
    }

    /// Summed per-step KL divergence from `prior`; zero iff identical.
    pub fn kl_cost(&self, prior: &PreferenceTrajectory) -> Result<f64> {
        if self.len() != prior.len() {
            return Err(Error::Contract(format!(
                "preference length {} does not match prior length {}",
                self.len(),
                prior.len()
            )));
        }
        Ok(self
            .steps
            .iter()
            .zip(&prior.steps)
            .map(|(p, q)| p.kl_divergence(q))
            .sum())
    }

    /// Smallest per-step flexibility (covariance trace) over the horizon.
    pub fn min_flexibility(&self) -> f64 {
        self.steps
            .iter()
            .map(|g| g.flexibility())
            .fold(f64::INFINITY, f64::min)
    }
}
