//! Episode orchestration: single-shot planning episodes and
//! receding-horizon closed-loop runs, plus metric computation.

use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::SolverConfig;
use crate::planner::{plan_dsc, plan_ptp, plan_tsc, DscPlanResult, PlanResult, Strategy};
use crate::safety::{s_pair, wall_distance, SafetyConfig};
use crate::scenario::{intent, Agent, Scenario};
use crate::traj::{PreferenceTrajectory, Trajectory};

/// An agent counts as arrived when within this distance of its goal.
pub const GOAL_TOL: f64 = 0.1;

/// How the ground-truth pedestrian advances in closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PedestrianModel {
    /// The pedestrian runs its own planner of the same strategy with the
    /// roles swapped.
    Mirror,
    /// The pedestrian follows its intent path with a local reactive
    /// slow-down: speed scaled by the pair safety to the robot's current
    /// position.
    Scripted,
}

impl FromStr for PedestrianModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mirror" => Ok(PedestrianModel::Mirror),
            "scripted" => Ok(PedestrianModel::Scripted),
            other => Err(Error::Contract(format!(
                "unknown pedestrian model '{other}' (expected mirror or scripted)"
            ))),
        }
    }
}

impl std::fmt::Display for PedestrianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PedestrianModel::Mirror => "mirror",
            PedestrianModel::Scripted => "scripted",
        })
    }
}

/// One planner invocation, in point or distributional form.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanRecord {
    Point(PlanResult),
    Distribution(DscPlanResult),
}

impl PlanRecord {
    pub fn robot_plan(&self) -> &Trajectory {
        match self {
            PlanRecord::Point(p) => &p.robot,
            PlanRecord::Distribution(d) => &d.robot_traj,
        }
    }

    pub fn pedestrian_plan(&self) -> &Trajectory {
        match self {
            PlanRecord::Point(p) => &p.pedestrian,
            PlanRecord::Distribution(d) => &d.pedestrian_traj,
        }
    }

    pub fn converged(&self) -> bool {
        self.report().converged
    }

    pub fn report(&self) -> &crate::optimizer::SolveReport {
        match self {
            PlanRecord::Point(p) => &p.report,
            PlanRecord::Distribution(d) => &d.report,
        }
    }
}

/// Quantitative summary of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// First step index whose segment crosses the wall line, per agent.
    pub robot_cross_step: Option<usize>,
    pub pedestrian_cross_step: Option<usize>,
    /// |robot - pedestrian| crossing difference in seconds.
    pub simultaneity_gap: Option<f64>,
    /// Completion-adjusted executed length over intent length (the
    /// straight-line remainder to the goal counts for unfinished runs).
    pub path_ratio_robot: f64,
    pub path_ratio_pedestrian: f64,
    /// Smallest center-to-center distance between the agents.
    pub min_pair_distance: f64,
    /// Smallest center clearance to walls or room boundary, both agents.
    pub min_wall_distance: f64,
    /// Smallest robot speed over steps strictly before goal arrival.
    pub min_speed_robot: f64,
    /// Smallest preference covariance trace over the plans (dsc only).
    pub flexibility_min_robot: Option<f64>,
    pub flexibility_min_pedestrian: Option<f64>,
    /// Summed KL cost over all recorded plans (dsc only).
    pub kl_total: Option<f64>,
}

/// Everything produced by one episode run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub strategy: Strategy,
    pub scenario: Scenario,
    pub robot_executed: Trajectory,
    pub pedestrian_executed: Trajectory,
    /// Per-step executed preference distributions (dsc only): the plan's
    /// own preferences in single-shot mode, the executed prefixes of each
    /// replan in closed loop.
    pub robot_pref_executed: Option<PreferenceTrajectory>,
    pub pedestrian_pref_executed: Option<PreferenceTrajectory>,
    pub per_replan_plans: Vec<PlanRecord>,
    pub timed_out: bool,
    pub metrics: MetricsReport,
}

impl EpisodeResult {
    /// True when every recorded plan converged.
    pub fn all_converged(&self) -> bool {
        self.per_replan_plans.iter().all(|p| p.converged())
    }
}

fn plan_once(
    scenario: &Scenario,
    strategy: Strategy,
    safety: &SafetyConfig,
    solver: &SolverConfig,
) -> Result<PlanRecord> {
    Ok(match strategy {
        Strategy::Ptp => PlanRecord::Point(plan_ptp(scenario, safety, solver)?),
        Strategy::Tsc => PlanRecord::Point(plan_tsc(scenario, safety, solver)?),
        Strategy::Dsc => PlanRecord::Distribution(plan_dsc(scenario, safety, solver)?),
    })
}

/// Runs the selected planner once over the full horizon; the plans are
/// the executed trajectories.
pub fn run_single_shot(
    scenario: &Scenario,
    strategy: Strategy,
    safety: &SafetyConfig,
    solver: &SolverConfig,
) -> Result<EpisodeResult> {
    let plan = plan_once(scenario, strategy, safety, solver)?;
    let robot_executed = plan.robot_plan().clone();
    let pedestrian_executed = plan.pedestrian_plan().clone();
    let (robot_pref, ped_pref) = match &plan {
        PlanRecord::Distribution(d) => {
            (Some(d.robot_pref.clone()), Some(d.pedestrian_pref.clone()))
        }
        PlanRecord::Point(_) => (None, None),
    };
    let mut episode = EpisodeResult {
        strategy,
        scenario: scenario.clone(),
        robot_executed,
        pedestrian_executed,
        robot_pref_executed: robot_pref,
        pedestrian_pref_executed: ped_pref,
        per_replan_plans: vec![plan],
        timed_out: false,
        metrics: empty_metrics(),
    };
    episode.metrics = compute_metrics(&episode, scenario);
    Ok(episode)
}

/// Closed-loop run: the robot replans every `replan_every` steps from its
/// current state while the ground-truth pedestrian advances per
/// `pedestrian_model`. Stops when both agents reach their goals or the
/// step budget (4x horizon) expires, which flags the episode as timed
/// out rather than failing it.
pub fn run_receding_horizon(
    scenario: &Scenario,
    strategy: Strategy,
    safety: &SafetyConfig,
    solver: &SolverConfig,
    replan_every: usize,
    pedestrian_model: PedestrianModel,
) -> Result<EpisodeResult> {
    if replan_every == 0 {
        return Err(Error::Contract("replan_every must be at least 1".into()));
    }
    let budget = 4 * scenario.horizon_steps;
    let mut robot_pos = scenario.robot.start;
    let mut ped_pos = scenario.pedestrian.start;
    let mut robot_executed = vec![robot_pos];
    let mut ped_executed = vec![ped_pos];
    let mut robot_pref_steps: Vec<crate::gaussian::Gaussian2> = Vec::new();
    let mut ped_pref_steps: Vec<crate::gaussian::Gaussian2> = Vec::new();
    let mut plans = Vec::new();

    // the scripted pedestrian walks its original intent path by arc length
    let ped_intent_full = intent(&scenario.pedestrian, scenario);
    let mut ped_arc = 0.0f64;

    let arrived = |robot: Vector2<f64>, ped: Vector2<f64>| {
        (robot - scenario.robot.goal).norm() <= GOAL_TOL
            && (ped - scenario.pedestrian.goal).norm() <= GOAL_TOL
    };

    let mut executed = 0usize;
    while executed < budget && !arrived(robot_pos, ped_pos) {
        let mut now = scenario.clone();
        now.robot.start = robot_pos;
        now.pedestrian.start = ped_pos;
        let robot_plan = plan_once(&now, strategy, safety, solver)?;
        let ped_plan = match pedestrian_model {
            PedestrianModel::Mirror => Some(plan_once(&now.swapped(), strategy, safety, solver)?),
            PedestrianModel::Scripted => None,
        };

        for k in 1..=replan_every {
            if executed >= budget {
                break;
            }
            let plan_points = &robot_plan.robot_plan().points;
            robot_pos = plan_points[k.min(plan_points.len() - 1)];
            match (&ped_plan, pedestrian_model) {
                (Some(p), PedestrianModel::Mirror) => {
                    // in the swapped scenario the pedestrian occupies the
                    // robot slot of its own plan
                    let pts = &p.robot_plan().points;
                    ped_pos = pts[k.min(pts.len() - 1)];
                }
                (_, PedestrianModel::Scripted) => {
                    let factor = s_pair(
                        ped_pos,
                        robot_pos,
                        safety,
                        scenario.robot.radius + scenario.pedestrian.radius,
                    );
                    ped_arc += scenario.pedestrian.v_pref * scenario.dt * factor.max(0.0);
                    ped_pos = point_at_arc(&ped_intent_full, ped_arc);
                }
                _ => unreachable!(),
            }
            robot_executed.push(robot_pos);
            ped_executed.push(ped_pos);
            if let PlanRecord::Distribution(d) = &robot_plan {
                let idx = k.min(d.robot_pref.steps.len() - 1);
                robot_pref_steps.push(d.robot_pref.steps[idx]);
                match &ped_plan {
                    Some(PlanRecord::Distribution(pd)) => {
                        let j = k.min(pd.robot_pref.steps.len() - 1);
                        ped_pref_steps.push(pd.robot_pref.steps[j]);
                    }
                    _ => ped_pref_steps.push(d.pedestrian_pref.steps[idx]),
                }
            }
            executed += 1;
        }
        plans.push(robot_plan);
    }
    let timed_out = !arrived(robot_pos, ped_pos);

    let dt = scenario.dt;
    let prefs = if strategy == Strategy::Dsc {
        let prior_r =
            crate::gaussian::Gaussian2::isotropic(scenario.robot.start, scenario.robot.prior_sigma)?;
        let prior_p = crate::gaussian::Gaussian2::isotropic(
            scenario.pedestrian.start,
            scenario.pedestrian.prior_sigma,
        )?;
        let mut r = vec![prior_r];
        r.extend(robot_pref_steps);
        let mut p = vec![prior_p];
        p.extend(ped_pref_steps);
        (
            Some(PreferenceTrajectory::new(r, dt)),
            Some(PreferenceTrajectory::new(p, dt)),
        )
    } else {
        (None, None)
    };

    let mut episode = EpisodeResult {
        strategy,
        scenario: scenario.clone(),
        robot_executed: Trajectory::new(robot_executed, dt),
        pedestrian_executed: Trajectory::new(ped_executed, dt),
        robot_pref_executed: prefs.0,
        pedestrian_pref_executed: prefs.1,
        per_replan_plans: plans,
        timed_out,
        metrics: empty_metrics(),
    };
    episode.metrics = compute_metrics(&episode, scenario);
    Ok(episode)
}

/// Position on a polyline at the given arc length, clamped at the end.
fn point_at_arc(path: &Trajectory, arc: f64) -> Vector2<f64> {
    let mut remaining = arc;
    for w in path.points.windows(2) {
        let seg = (w[1] - w[0]).norm();
        if remaining <= seg {
            if seg == 0.0 {
                return w[0];
            }
            return w[0] + (w[1] - w[0]) * (remaining / seg);
        }
        remaining -= seg;
    }
    *path.points.last().expect("non-empty path")
}

/// First step index whose segment crosses the wall line, judged against
/// the agent's own starting side.
pub fn cross_step(traj: &Trajectory, wall_y: f64) -> Option<usize> {
    let start_side = traj.points.first()?.y - wall_y;
    (1..traj.len()).find(|&t| (traj.points[t].y - wall_y) * start_side <= 0.0)
}

fn empty_metrics() -> MetricsReport {
    MetricsReport {
        robot_cross_step: None,
        pedestrian_cross_step: None,
        simultaneity_gap: None,
        path_ratio_robot: 1.0,
        path_ratio_pedestrian: 1.0,
        min_pair_distance: f64::INFINITY,
        min_wall_distance: f64::INFINITY,
        min_speed_robot: 0.0,
        flexibility_min_robot: None,
        flexibility_min_pedestrian: None,
        kl_total: None,
    }
}

/// Derives the metrics report from executed trajectories and recorded
/// plans; deterministic.
pub fn compute_metrics(episode: &EpisodeResult, scenario: &Scenario) -> MetricsReport {
    let robot = &episode.robot_executed;
    let ped = &episode.pedestrian_executed;
    let robot_cross = cross_step(robot, scenario.wall_y);
    let ped_cross = cross_step(ped, scenario.wall_y);
    let gap = robot_cross
        .zip(ped_cross)
        .map(|(a, b)| (a as f64 - b as f64).abs() * scenario.dt);

    let ratio = |executed: &Trajectory, agent: Agent| {
        let spec = scenario.spec(agent);
        let reference = intent(spec, scenario);
        let completed = |t: &Trajectory| {
            t.path_length() + (t.points.last().expect("non-empty") - spec.goal).norm()
        };
        completed(executed) / completed(&reference)
    };

    let min_pair = robot
        .points
        .iter()
        .zip(&ped.points)
        .map(|(a, b)| (a - b).norm())
        .fold(f64::INFINITY, f64::min);
    let min_wall = robot
        .points
        .iter()
        .chain(&ped.points)
        .map(|p| wall_distance(*p, scenario))
        .fold(f64::INFINITY, f64::min);

    // speeds over steps strictly before goal arrival (the arrival step
    // itself is a partial step)
    let arrival = robot
        .points
        .iter()
        .position(|p| (p - scenario.robot.goal).norm() <= GOAL_TOL);
    let speeds = robot.speeds();
    let considered = match arrival {
        Some(a) if a >= 1 => &speeds[..a - 1],
        Some(_) => &speeds[..0],
        None => &speeds[..],
    };
    let min_speed = considered.iter().fold(f64::INFINITY, |m, s| m.min(*s));
    let min_speed = if min_speed.is_finite() { min_speed } else { 0.0 };

    let mut flexibility_min_robot = None;
    let mut flexibility_min_pedestrian = None;
    let mut kl_total = None;
    for plan in &episode.per_replan_plans {
        if let PlanRecord::Distribution(d) = plan {
            let fr = d.robot_pref.min_flexibility();
            let fp = d.pedestrian_pref.min_flexibility();
            flexibility_min_robot = Some(flexibility_min_robot.unwrap_or(f64::INFINITY).min(fr));
            flexibility_min_pedestrian =
                Some(flexibility_min_pedestrian.unwrap_or(f64::INFINITY).min(fp));
            kl_total = Some(kl_total.unwrap_or(0.0) + d.kl_cost_robot + d.kl_cost_pedestrian);
        }
    }

    MetricsReport {
        robot_cross_step: robot_cross,
        pedestrian_cross_step: ped_cross,
        simultaneity_gap: gap,
        path_ratio_robot: ratio(robot, Agent::Robot),
        path_ratio_pedestrian: ratio(ped, Agent::Pedestrian),
        min_pair_distance: min_pair,
        min_wall_distance: min_wall,
        min_speed_robot: min_speed,
        flexibility_min_robot,
        flexibility_min_pedestrian,
        kl_total,
    }
}
