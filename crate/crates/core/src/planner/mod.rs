//! The three planning strategies over the shared scenario and safety model.
//!
//! All planners minimize deviation from the agents' prior preferences
//! subject to safety and kinematic constraints, differing in what they
//! treat as fixed:
//!
//! - [`ptp`]: the pedestrian is predicted first (as its intent) and held
//!   fixed while the robot plans around it;
//! - [`tsc`]: both agents' waypoints are optimized jointly, with the
//!   preference distributions themselves fixed at the priors;
//! - [`dsc`]: both agents' per-step preference distributions (means and
//!   covariances) are optimized jointly, so flexibility evolves.
//!
//! Decision vectors are offsets from the deterministic initializer (the
//! intents / priors), which keeps positions and log-Cholesky entries on
//! comparable scales for the solver.

pub mod dsc;
pub mod ptp;
pub mod tsc;

pub use dsc::{plan_dsc, DscPlanResult};
pub use ptp::{plan_ptp, predict_pedestrian_open_loop};
pub use tsc::plan_tsc;

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::optimizer::SolveReport;
use crate::traj::Trajectory;

/// Planner selector; the names appear verbatim in the CLI and artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ptp,
    Tsc,
    Dsc,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Ptp, Strategy::Tsc, Strategy::Dsc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Ptp => "ptp",
            Strategy::Tsc => "tsc",
            Strategy::Dsc => "dsc",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "ptp" => Ok(Strategy::Ptp),
            "tsc" => Ok(Strategy::Tsc),
            "dsc" => Ok(Strategy::Dsc),
            other => Err(Error::Contract(format!(
                "unknown strategy '{other}' (expected ptp, tsc or dsc)"
            ))),
        }
    }
}

/// A point-trajectory plan: the robot's plan plus the pedestrian
/// trajectory it was planned against (fixed prediction for ptp, jointly
/// optimized for tsc).
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub robot: Trajectory,
    pub pedestrian: Trajectory,
    pub report: SolveReport,
}

/// Reads the step-`t` position of an agent whose offsets start at `base`
/// in the decision vector; step 0 is anchored to the intent start.
#[inline]
pub(crate) fn decode_position(
    z: &[f64],
    intent: &[Vector2<f64>],
    base: usize,
    t: usize,
) -> Vector2<f64> {
    if t == 0 {
        intent[0]
    } else {
        let i = base + 2 * (t - 1);
        Vector2::new(intent[t].x + z[i], intent[t].y + z[i + 1])
    }
}

/// Rebuilds the full waypoint sequence for an agent block.
pub(crate) fn decode_trajectory(
    z: &[f64],
    intent: &[Vector2<f64>],
    base: usize,
    dt: f64,
) -> Trajectory {
    let points = (0..intent.len())
        .map(|t| decode_position(z, intent, base, t))
        .collect();
    Trajectory::new(points, dt)
}

/// Checks every analytic gradient of the named strategy's optimization
/// problem (objective and each constraint) against central differences
/// at a seeded point near the initializer; returns the worst relative
/// error. The probe point is perturbed away from the initializer so that
/// clamped kernels and kinematic norms are in their generic regime.
pub fn check_planner_gradients(
    strategy: Strategy,
    scenario: &crate::scenario::Scenario,
    safety: &crate::safety::SafetyConfig,
    seed: u64,
) -> crate::error::Result<f64> {
    use crate::optimizer::{check_gradient, gradient_fd};
    use rand::Rng;
    use rand::SeedableRng;

    let check_problem = |problem: &crate::optimizer::NlpProblem| -> crate::error::Result<f64> {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let z: Vec<f64> = problem
            .initial_point
            .iter()
            .map(|v| v + rng.random_range(-0.05..0.05))
            .collect();
        let h = 1e-6;
        let mut worst = 0.0f64;
        if let Some(grad) = &problem.objective_grad {
            let analytic = |p: &[f64]| {
                let mut out = vec![0.0; p.len()];
                grad(p, &mut out);
                out
            };
            worst = worst.max(check_gradient(&problem.objective, analytic, &z, h)?);
        }
        let mut buf = Vec::new();
        for c in &problem.constraints {
            if let Some(grad) = &c.grad {
                buf.clear();
                grad(&z, &mut buf);
                let mut dense = vec![0.0; z.len()];
                for &(i, v) in &buf {
                    dense[i] += v;
                }
                let fd = gradient_fd(&c.eval, &z, h)?;
                for (a, d) in dense.iter().zip(&fd) {
                    worst = worst.max((a - d).abs() / d.abs().max(1.0));
                }
            }
        }
        Ok(worst)
    };

    match strategy {
        Strategy::Ptp => {
            let ctx = ptp::PtpContext::new(scenario, safety);
            let problem = ctx.build_problem();
            check_problem(&problem)
        }
        Strategy::Tsc => {
            let ctx = tsc::TscContext::new(scenario, safety);
            let problem = ctx.build_problem();
            check_problem(&problem)
        }
        Strategy::Dsc => {
            let ctx = dsc::DscContext::new(scenario, safety)?;
            let problem = ctx.build_problem();
            check_problem(&problem)
        }
    }
}

/// Appends the per-step kinematic constraints
/// `v_max dt - |x_{t+1} - x_t| >= 0` for one agent block.
pub(crate) fn push_kinematic_constraints<'a>(
    constraints: &mut Vec<crate::optimizer::Constraint<'a>>,
    intent: &'a [Vector2<f64>],
    base: usize,
    step_budget: f64,
) {
    for t in 0..intent.len() - 1 {
        constraints.push(crate::optimizer::Constraint::with_grad(
            move |z: &[f64]| {
                let a = decode_position(z, intent, base, t);
                let b = decode_position(z, intent, base, t + 1);
                step_budget - (b - a).norm()
            },
            move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                let a = decode_position(z, intent, base, t);
                let b = decode_position(z, intent, base, t + 1);
                let diff = b - a;
                let norm = diff.norm();
                if norm < 1e-12 {
                    return; // flat spot; constraint is slack by step_budget
                }
                let u = diff / norm;
                if t >= 1 {
                    let i = base + 2 * (t - 1);
                    buf.push((i, u.x));
                    buf.push((i + 1, u.y));
                }
                let j = base + 2 * t;
                buf.push((j, -u.x));
                buf.push((j + 1, -u.y));
            },
        ));
    }
}
