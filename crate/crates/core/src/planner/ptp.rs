//! Prediction-then-planning: the pedestrian is predicted as its intent
//! (the argmax of each per-step preference Gaussian is its mean) and the
//! robot plans around that fixed prediction.

use std::f64::consts::PI;

use nalgebra::Vector2;

use crate::error::Result;
use crate::optimizer::{solve, Constraint, NlpProblem, SolveReport, SolverConfig};
use crate::planner::{decode_position, decode_trajectory, push_kinematic_constraints, PlanResult};
use crate::safety::{
    s_door_smooth, s_door_smooth_grad, s_pair_signed, s_pair_signed_grad, SafetyConfig,
};
use crate::scenario::{intent, Scenario};
use crate::traj::Trajectory;

/// The open-loop pedestrian prediction: exactly the pedestrian's intent.
/// It does not depend on anything about the robot; that blindness is the
/// defining property of this paradigm.
pub fn predict_pedestrian_open_loop(scenario: &Scenario) -> Trajectory {
    intent(&scenario.pedestrian, scenario)
}

/// Owned inputs of the robot-side optimization problem.
pub(crate) struct PtpContext<'s> {
    scenario: &'s Scenario,
    safety: &'s SafetyConfig,
    pub(crate) prediction: Trajectory,
    pub(crate) robot_intent: Trajectory,
    sigma2: f64,
    radii_sum: f64,
}

impl<'s> PtpContext<'s> {
    pub(crate) fn new(scenario: &'s Scenario, safety: &'s SafetyConfig) -> Self {
        Self {
            scenario,
            safety,
            prediction: predict_pedestrian_open_loop(scenario),
            robot_intent: intent(&scenario.robot, scenario),
            sigma2: scenario.robot.prior_sigma * scenario.robot.prior_sigma,
            radii_sum: scenario.robot.radius + scenario.pedestrian.radius,
        }
    }

    /// Decision variables: per-step offsets of the robot waypoints from
    /// its intent (step 0 anchored to the start by construction).
    pub(crate) fn build_problem(&self) -> NlpProblem<'_> {
        let horizon = self.scenario.horizon_steps;
        let dim = 2 * (horizon - 1);
        let sigma2 = self.sigma2;
        let radius = self.scenario.robot.radius;
        let radii_sum = self.radii_sum;
        let scenario = self.scenario;
        let safety = self.safety;
        let intent_pts = &self.robot_intent.points;
        let pred_pts = &self.prediction.points;

        // -sum_t ln N(x_t; intent_t, sigma^2 I) minus its additive
        // constant (restored in the report); offsets are exactly the
        // deviations from the prior means
        let objective = move |z: &[f64]| {
            let mut cost = 0.0;
            for v in z {
                cost += 0.5 * v * v / sigma2;
            }
            cost
        };
        let objective_grad = move |z: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(z) {
                *o = v / sigma2;
            }
        };

        let mut constraints: Vec<Constraint> = Vec::new();
        for t in 1..horizon {
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| {
                    let x = decode_position(z, intent_pts, 0, t);
                    s_door_smooth(x, scenario, safety, radius)
                        + s_pair_signed(x, pred_pts[t], safety, radii_sum)
                        - safety.gamma
                },
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    let x = decode_position(z, intent_pts, 0, t);
                    let g = s_door_smooth_grad(x, scenario, safety, radius)
                        + s_pair_signed_grad(x, pred_pts[t], safety, radii_sum);
                    let i = 2 * (t - 1);
                    buf.push((i, g.x));
                    buf.push((i + 1, g.y));
                },
            ));
        }
        push_kinematic_constraints(
            &mut constraints,
            intent_pts,
            0,
            self.scenario.robot.v_max * self.scenario.dt,
        );

        NlpProblem {
            dim,
            objective: Box::new(objective),
            objective_grad: Some(Box::new(objective_grad)),
            constraints,
            initial_point: vec![0.0; dim],
        }
    }
}

/// Plans the robot against the fixed pedestrian prediction: maximize the
/// robot's own preference (minimize negative log-density) subject to the
/// combined door+pair safety threshold per step.
pub fn plan_ptp(
    scenario: &Scenario,
    safety_cfg: &SafetyConfig,
    solver_cfg: &SolverConfig,
) -> Result<PlanResult> {
    let ctx = PtpContext::new(scenario, safety_cfg);
    let horizon = scenario.horizon_steps;
    let mut problem = ctx.build_problem();

    // The problem is bimodal (pass before or after the prediction);
    // descent from a single start can land in an infeasible stationary
    // point between the modes. Solve from both documented initializers
    // and keep the better result.
    let go = solve(&problem, solver_cfg)?;
    problem.initial_point = yield_initializer(
        &ctx.robot_intent.points,
        &ctx.prediction.points,
        ctx.radii_sum,
        safety_cfg.r_agent,
    );
    // the yield basin is shallow until multipliers build up; a stiffer
    // initial penalty keeps the feasible initializer from being dragged
    // back into the conflict before that happens
    let hold_cfg = SolverConfig {
        penalty_init: solver_cfg.penalty_init.max(1e4),
        ..*solver_cfg
    };
    let hold = solve(&problem, &hold_cfg)?;
    drop(problem);
    let mut report = pick_candidate(go, hold, solver_cfg.tol_constraint);
    let log_norm = (2.0 * PI).ln() + ctx.sigma2.ln();
    report.objective_value += horizon as f64 * log_norm;

    let robot = decode_trajectory(&report.solution, &ctx.robot_intent.points, 0, scenario.dt);
    Ok(PlanResult {
        robot,
        pedestrian: ctx.prediction,
        report,
    })
}

/// Prefers a feasible solve with the lower objective; among infeasible
/// ones, the smaller violation. Ties keep the first (intent) candidate.
fn pick_candidate(a: SolveReport, b: SolveReport, tol: f64) -> SolveReport {
    let a_feasible = a.max_violation <= tol;
    let b_feasible = b.max_violation <= tol;
    match (a_feasible, b_feasible) {
        (true, false) => a,
        (false, true) => b,
        (true, true) => {
            if b.objective_value < a.objective_value {
                b
            } else {
                a
            }
        }
        (false, false) => {
            if b.max_violation < a.max_violation {
                b
            } else {
                a
            }
        }
    }
}

/// Deterministic initializer that resolves the planner's bimodality
/// (pass before vs. after the prediction) without leaving the intent's
/// homotopy class: the robot advances along its intent polyline but holds
/// in place while the next waypoint lies inside the prediction's
/// remaining sweep corridor. Far from the prediction this reproduces the
/// intent exactly, so degenerate scenarios still initialize at the prior
/// optimum.
fn yield_initializer(
    intent_pts: &[Vector2<f64>],
    pred_pts: &[Vector2<f64>],
    radii_sum: f64,
    r_agent: f64,
) -> Vec<f64> {
    let horizon = intent_pts.len();
    let hold_distance = radii_sum + 3.0 * r_agent;
    // a parked prediction (reached its goal) no longer sweeps; only the
    // moving prefix gates the robot's advance
    let arrival = pred_pts
        .iter()
        .position(|p| *p == pred_pts[horizon - 1])
        .unwrap_or(horizon);
    let remaining_sweep = |p: Vector2<f64>, t: usize| {
        pred_pts[t..arrival.max(t)]
            .iter()
            .map(|q| (p - q).norm())
            .fold(f64::INFINITY, f64::min)
    };
    let mut points = Vec::with_capacity(horizon);
    points.push(intent_pts[0]);
    let mut next = 1usize;
    for t in 1..horizon {
        let candidate = intent_pts[next];
        if remaining_sweep(candidate, t) < hold_distance
            && remaining_sweep(candidate, t) < remaining_sweep(points[t - 1], t)
        {
            points.push(points[t - 1]);
        } else {
            points.push(candidate);
            next = (next + 1).min(horizon - 1);
        }
    }
    let mut z = vec![0.0; 2 * (horizon - 1)];
    for t in 1..horizon {
        z[2 * (t - 1)] = points[t].x - intent_pts[t].x;
        z[2 * (t - 1) + 1] = points[t].y - intent_pts[t].y;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_config;

    fn canonical() -> crate::scenario::Config {
        load_config(crate::CANONICAL_CONFIG).unwrap()
    }

    #[test]
    fn prediction_equals_pedestrian_intent() {
        let cfg = canonical();
        let pred = predict_pedestrian_open_loop(&cfg.scenario);
        let ped_intent = intent(&cfg.scenario.pedestrian, &cfg.scenario);
        assert_eq!(pred, ped_intent);
    }

    #[test]
    fn prediction_ignores_the_robot() {
        let cfg = canonical();
        let pred_a = predict_pedestrian_open_loop(&cfg.scenario);
        let mut changed = cfg.scenario.clone();
        changed.robot.start = Vector2::new(4.6, 1.2);
        changed.robot.goal = Vector2::new(7.5, 8.8);
        changed.robot.v_pref = 0.7;
        let pred_b = predict_pedestrian_open_loop(&changed);
        // bitwise identical: the prediction cannot see the robot
        assert_eq!(pred_a, pred_b);
    }

    #[test]
    fn stationary_pedestrian_prediction() {
        let cfg = canonical();
        let mut sc = cfg.scenario.clone();
        sc.pedestrian.goal = sc.pedestrian.start;
        let pred = predict_pedestrian_open_loop(&sc);
        assert!(pred.points.iter().all(|p| *p == sc.pedestrian.start));
    }

    #[test]
    fn yield_initializer_is_identity_without_conflict() {
        let cfg = canonical();
        let sc = &cfg.scenario;
        let ri = intent(&sc.robot, sc);
        // prediction pinned far away: no holds, offsets all zero
        let far: Vec<Vector2<f64>> = (0..sc.horizon_steps)
            .map(|_| Vector2::new(1000.0, 1000.0))
            .collect();
        let z = yield_initializer(&ri.points, &far, 0.6, cfg.safety.r_agent);
        assert!(z.iter().all(|v| *v == 0.0));
    }
}
