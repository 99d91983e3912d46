//! Trajectory-space coupling: both agents' waypoints are optimized
//! jointly under their fixed prior preference distributions. Each agent
//! trades staying near its own timed intent against the door reward,
//! subject to the shared pair-safety constraint per step.
//!
//! The preference distributions are fixed a priori and never change
//! during the interaction; that static-preference assumption is the
//! phenomenon this planner exists to exhibit.

use std::f64::consts::PI;

use crate::error::Result;
use crate::optimizer::{solve, Constraint, NlpProblem, SolverConfig};
use crate::planner::{decode_position, decode_trajectory, push_kinematic_constraints, PlanResult};
use crate::safety::{
    s_door_smooth, s_door_smooth_grad, s_pair_signed, s_pair_signed_grad, SafetyConfig,
};
use crate::scenario::{intent, Scenario};
use crate::traj::Trajectory;

#[derive(Clone, Copy)]
struct AgentBlock<'s> {
    base: usize,
    intent: &'s [nalgebra::Vector2<f64>],
    sigma2: f64,
    radius: f64,
    v_max: f64,
}

/// Owned inputs of the joint two-agent optimization problem.
pub(crate) struct TscContext<'s> {
    scenario: &'s Scenario,
    safety: &'s SafetyConfig,
    pub(crate) robot_intent: Trajectory,
    pub(crate) ped_intent: Trajectory,
}

impl<'s> TscContext<'s> {
    pub(crate) fn new(scenario: &'s Scenario, safety: &'s SafetyConfig) -> Self {
        Self {
            scenario,
            safety,
            robot_intent: intent(&scenario.robot, scenario),
            ped_intent: intent(&scenario.pedestrian, scenario),
        }
    }

    fn blocks(&self) -> [AgentBlock<'_>; 2] {
        let block = 2 * (self.scenario.horizon_steps - 1);
        [
            AgentBlock {
                base: 0,
                intent: &self.robot_intent.points,
                sigma2: self.scenario.robot.prior_sigma.powi(2),
                radius: self.scenario.robot.radius,
                v_max: self.scenario.robot.v_max,
            },
            AgentBlock {
                base: block,
                intent: &self.ped_intent.points,
                sigma2: self.scenario.pedestrian.prior_sigma.powi(2),
                radius: self.scenario.pedestrian.radius,
                v_max: self.scenario.pedestrian.v_max,
            },
        ]
    }

    /// The additive log-normalizer constant kept out of the solver
    /// objective for float-resolution reasons.
    pub(crate) fn log_norm(&self) -> f64 {
        let horizon = self.scenario.horizon_steps as f64;
        self.blocks()
            .iter()
            .map(|a| horizon * ((2.0 * PI).ln() + a.sigma2.ln()))
            .sum()
    }

    pub(crate) fn build_problem(&self) -> NlpProblem<'_> {
        let horizon = self.scenario.horizon_steps;
        let dim = 4 * (horizon - 1);
        let radii_sum = self.scenario.robot.radius + self.scenario.pedestrian.radius;
        let scenario = self.scenario;
        let safety = self.safety;
        let [robot, ped] = self.blocks();

        let objective = move |z: &[f64]| {
            let mut cost = 0.0;
            for a in [robot, ped] {
                // per-agent partial accumulated separately, then combined,
                // so exchanging the agents commutes with the arithmetic
                let mut agent_cost = 0.0;
                for t in 0..horizon {
                    let x = decode_position(z, a.intent, a.base, t);
                    if t >= 1 {
                        let i = a.base + 2 * (t - 1);
                        agent_cost += 0.5 * (z[i] * z[i] + z[i + 1] * z[i + 1]) / a.sigma2;
                    }
                    agent_cost -= safety.w_door * s_door_smooth(x, scenario, safety, a.radius);
                }
                cost += agent_cost;
            }
            cost
        };
        let objective_grad = move |z: &[f64], out: &mut [f64]| {
            for a in [robot, ped] {
                for t in 1..horizon {
                    let i = a.base + 2 * (t - 1);
                    let x = decode_position(z, a.intent, a.base, t);
                    let g = s_door_smooth_grad(x, scenario, safety, a.radius);
                    out[i] = z[i] / a.sigma2 - safety.w_door * g.x;
                    out[i + 1] = z[i + 1] / a.sigma2 - safety.w_door * g.y;
                }
            }
        };

        let mut constraints: Vec<Constraint> = Vec::new();
        for t in 1..horizon {
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| {
                    let xr = decode_position(z, robot.intent, robot.base, t);
                    let xh = decode_position(z, ped.intent, ped.base, t);
                    s_pair_signed(xr, xh, safety, radii_sum) - safety.gamma_pair
                },
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    let xr = decode_position(z, robot.intent, robot.base, t);
                    let xh = decode_position(z, ped.intent, ped.base, t);
                    let g = s_pair_signed_grad(xr, xh, safety, radii_sum);
                    let i = robot.base + 2 * (t - 1);
                    let j = ped.base + 2 * (t - 1);
                    buf.push((i, g.x));
                    buf.push((i + 1, g.y));
                    buf.push((j, -g.x));
                    buf.push((j + 1, -g.y));
                },
            ));
        }
        for a in [robot, ped] {
            push_kinematic_constraints(
                &mut constraints,
                a.intent,
                a.base,
                a.v_max * self.scenario.dt,
            );
        }

        NlpProblem {
            dim,
            objective: Box::new(objective),
            objective_grad: Some(Box::new(objective_grad)),
            constraints,
            initial_point: vec![0.0; dim],
        }
    }
}

/// Jointly plans robot and pedestrian waypoints. The objective sums, per
/// agent and step, the negative preference log-density and a weighted
/// door-safety reward; the constraint couples the two agents through
/// `s_pair >= gamma_pair` at every step.
///
/// The formulation is symmetric in the two agents; internally they are
/// ordered by a reflection-invariant key so that exchanging the roles
/// runs the identical computation and returns the exactly exchanged
/// solution.
pub fn plan_tsc(
    scenario: &Scenario,
    safety_cfg: &SafetyConfig,
    solver_cfg: &SolverConfig,
) -> Result<PlanResult> {
    if !robot_orders_first(scenario) {
        let result = plan_tsc_ordered(&scenario.swapped(), safety_cfg, solver_cfg)?;
        return Ok(PlanResult {
            robot: result.pedestrian,
            pedestrian: result.robot,
            report: result.report,
        });
    }
    plan_tsc_ordered(scenario, safety_cfg, solver_cfg)
}

/// Orders the agents by fields a reflection across the door axis cannot
/// change, so the canonical ordering commutes with mirroring.
fn robot_orders_first(scenario: &Scenario) -> bool {
    let key = |s: &crate::scenario::AgentSpec| {
        [
            s.start.y,
            s.goal.y,
            s.radius,
            s.v_pref,
            s.v_max,
            s.prior_sigma,
            (s.start.x - scenario.door_center_x).abs(),
            (s.goal.x - scenario.door_center_x).abs(),
        ]
    };
    let a = key(&scenario.robot);
    let b = key(&scenario.pedestrian);
    for (x, y) in a.iter().zip(&b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    true
}

fn plan_tsc_ordered(
    scenario: &Scenario,
    safety_cfg: &SafetyConfig,
    solver_cfg: &SolverConfig,
) -> Result<PlanResult> {
    let ctx = TscContext::new(scenario, safety_cfg);
    let problem = ctx.build_problem();
    let mut report = solve(&problem, solver_cfg)?;
    drop(problem);
    report.objective_value += ctx.log_norm();
    let block = 2 * (scenario.horizon_steps - 1);
    let robot = decode_trajectory(&report.solution, &ctx.robot_intent.points, 0, scenario.dt);
    let pedestrian = decode_trajectory(&report.solution, &ctx.ped_intent.points, block, scenario.dt);
    Ok(PlanResult {
        robot,
        pedestrian,
        report,
    })
}
