//! Distribution-space coupling: both agents' per-step preference
//! Gaussians are decision variables — means and covariances — so the
//! planner can trade flexibility against safety instead of only moving
//! waypoints.
//!
//! Objective: summed KL(P_i,t || prior_i,t), minimized. Constraints per
//! step: the density inner product of the two agents' preferences stays
//! below `epsilon_overlap`; each agent's expected door safety stays above
//! `gamma_door_exp`; means respect kinematics; covariance eigenvalues
//! stay inside [sigma_min^2, sigma_max^2]. Covariances move through the
//! unconstrained log-Cholesky map, so every iterate is SPD by
//! construction. The first step is anchored: its mean is the agent's
//! current position and its covariance the prior's (the present-time
//! flexibility is an observation, not a decision).

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::gaussian::{hermite_rule, Gaussian2};
use crate::optimizer::{solve, Constraint, NlpProblem, SolveReport, SolverConfig};
use crate::safety::{s_door, s_door_grad, SafetyConfig};
use crate::scenario::{intent, prior_preference, Scenario};
use crate::traj::{PreferenceTrajectory, Trajectory};

/// A distribution-space plan: per-step preference Gaussians for both
/// agents plus the mean sequences as plain trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct DscPlanResult {
    pub robot_pref: PreferenceTrajectory,
    pub pedestrian_pref: PreferenceTrajectory,
    pub robot_traj: Trajectory,
    pub pedestrian_traj: Trajectory,
    pub report: SolveReport,
    pub kl_cost_robot: f64,
    pub kl_cost_pedestrian: f64,
}

/// One agent's slice of the decision vector.
#[derive(Clone, Copy)]
struct Block<'s> {
    mean_base: usize,
    cov_base: usize,
    intent: &'s [Vector2<f64>],
    sigma: f64,
    sigma2: f64,
    log_sigma: f64,
    radius: f64,
    v_max: f64,
    eig_floor: f64,
    eig_ceil: f64,
}

/// Mean and lower Cholesky factor of one step's preference Gaussian.
#[derive(Clone, Copy)]
struct Step {
    mean: Vector2<f64>,
    l11: f64,
    l21: f64,
    l22: f64,
}

impl Step {
    #[inline]
    fn cov(&self) -> (f64, f64, f64) {
        (
            self.l11 * self.l11,
            self.l11 * self.l21,
            self.l21 * self.l21 + self.l22 * self.l22,
        )
    }
}

impl Block<'_> {
    #[inline]
    fn step(&self, z: &[f64], t: usize) -> Step {
        if t == 0 {
            return Step {
                mean: self.intent[0],
                l11: self.sigma,
                l21: 0.0,
                l22: self.sigma,
            };
        }
        let mi = self.mean_base + 2 * (t - 1);
        let ci = self.cov_base + 3 * (t - 1);
        Step {
            mean: Vector2::new(self.intent[t].x + z[mi], self.intent[t].y + z[mi + 1]),
            l11: (self.log_sigma + z[ci]).exp(),
            l21: z[ci + 1],
            l22: (self.log_sigma + z[ci + 2]).exp(),
        }
    }
}

/// KL(N(mu, LL^T) || N(intent_t, sigma^2 I)) expressed in the offset
/// parameterization; zero at the prior.
#[inline]
fn kl_step(z: &[f64], block: &Block, t: usize) -> f64 {
    let mi = block.mean_base + 2 * (t - 1);
    let ci = block.cov_base + 3 * (t - 1);
    let (da, db, dc) = (z[ci], z[ci + 1], z[ci + 2]);
    let mean_sq = z[mi] * z[mi] + z[mi + 1] * z[mi + 1];
    0.5 * ((2.0 * da).exp() + db * db / block.sigma2 + (2.0 * dc).exp() + mean_sq / block.sigma2
        - 2.0
        - 2.0 * (da + dc))
}

/// Density inner product of two steps and its partials. Returns
/// (value, w = S^{-1} delta, M = d o / d S).
#[inline]
fn overlap_parts(a: &Step, b: &Step) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let (a00, a01, a11) = a.cov();
    let (b00, b01, b11) = b.cov();
    let s00 = a00 + b00;
    let s01 = a01 + b01;
    let s11 = a11 + b11;
    let det = s00 * s11 - s01 * s01;
    let delta = a.mean - b.mean;
    // S^{-1} delta
    let w = Vector2::new(
        (s11 * delta.x - s01 * delta.y) / det,
        (-s01 * delta.x + s00 * delta.y) / det,
    );
    let q = delta.dot(&w);
    let o = (-0.5 * q).exp() / (2.0 * PI * det.sqrt());
    let sinv = Matrix2::new(s11 / det, -s01 / det, -s01 / det, s00 / det);
    let m = (Matrix2::new(w.x * w.x, w.x * w.y, w.x * w.y, w.y * w.y) - sinv) * (0.5 * o);
    (o, w, m)
}

/// Frobenius inner product of a symmetric matrix with dSigma/dtheta for
/// the three log-Cholesky offsets of `step`.
#[inline]
fn chain_cov(m: &Matrix2<f64>, step: &Step) -> (f64, f64, f64) {
    let (s00, s01, _) = step.cov();
    let d_da = 2.0 * m[(0, 0)] * s00 + 2.0 * m[(0, 1)] * s01;
    let d_db = 2.0 * m[(0, 1)] * step.l11 + 2.0 * m[(1, 1)] * step.l21;
    let d_dc = 2.0 * m[(1, 1)] * step.l22 * step.l22;
    (d_da, d_db, d_dc)
}

/// Expected door safety of one step by Gauss-Hermite quadrature, with
/// optional gradient accumulation into (mean, da, db, dc) slots.
/// First-axis nodes are accumulated in opposite pairs so the result is
/// exactly equivariant under world reflections.
fn door_expectation(
    step: &Step,
    scenario: &Scenario,
    cfg: &SafetyConfig,
    radius: f64,
    mut grad: Option<&mut [f64; 5]>,
) -> f64 {
    let rule = hermite_rule(crate::gaussian::DEFAULT_QUAD_NODES);
    let nodes = rule.nodes();
    let weights = rule.weights();
    let k = nodes.len();
    let sqrt2 = std::f64::consts::SQRT_2;
    let node_point = |zi: f64, zj: f64| {
        Vector2::new(
            step.mean.x + sqrt2 * step.l11 * zi,
            step.mean.y + sqrt2 * (step.l21 * zi + step.l22 * zj),
        )
    };
    let want_grad = grad.is_some();
    let term = |zi: f64, wi: f64, zj: f64, wj: f64| -> (f64, [f64; 5]) {
        let w = wi * wj;
        let x = node_point(zi, zj);
        let mut g = [0.0; 5];
        if want_grad {
            let ds = s_door_grad(x, scenario, cfg, radius);
            g = [
                w * ds.x,
                w * ds.y,
                w * ds.x * sqrt2 * step.l11 * zi,
                w * ds.y * sqrt2 * zi,
                w * ds.y * sqrt2 * step.l22 * zj,
            ];
        }
        (w * s_door(x, scenario, cfg, radius), g)
    };
    let mut acc = 0.0;
    let mut add = |value: f64, g: [f64; 5], grad: &mut Option<&mut [f64; 5]>| {
        acc += value;
        if let Some(out) = grad.as_deref_mut() {
            for s in 0..5 {
                out[s] += g[s];
            }
        }
    };
    for (j, &zj) in nodes.iter().enumerate() {
        let wj = weights[j];
        for i in 0..k / 2 {
            let (va, ga) = term(nodes[i], weights[i], zj, wj);
            let (vb, gb) = term(nodes[k - 1 - i], weights[k - 1 - i], zj, wj);
            let mut pg = [0.0; 5];
            for s in 0..5 {
                pg[s] = ga[s] + gb[s];
            }
            add(va + vb, pg, &mut grad);
        }
        if k % 2 == 1 {
            let (v, g) = term(0.0, weights[k / 2], zj, wj);
            add(v, g, &mut grad);
        }
    }
    acc
}

/// Owned inputs of the joint distribution-space problem.
pub(crate) struct DscContext<'s> {
    scenario: &'s Scenario,
    safety: &'s SafetyConfig,
    robot_intent: crate::traj::Trajectory,
    ped_intent: crate::traj::Trajectory,
}

impl<'s> DscContext<'s> {
    pub(crate) fn new(scenario: &'s Scenario, safety: &'s SafetyConfig) -> Result<Self> {
        for spec in [&scenario.robot, &scenario.pedestrian] {
            let ceil = safety.sigma_max_for(spec.prior_sigma);
            if spec.prior_sigma <= safety.sigma_min || spec.prior_sigma >= ceil {
                return Err(Error::Validation(format!(
                    "prior sigma {} must lie strictly inside the covariance bounds ({}, {})",
                    spec.prior_sigma, safety.sigma_min, ceil
                )));
            }
        }
        Ok(Self {
            scenario,
            safety,
            robot_intent: intent(&scenario.robot, scenario),
            ped_intent: intent(&scenario.pedestrian, scenario),
        })
    }

    fn blocks(&self) -> [Block<'_>; 2] {
        let scenario = self.scenario;
        let safety_cfg = self.safety;
        let n = scenario.horizon_steps - 1;
        let robot_intent = &self.robot_intent;
        let ped_intent = &self.ped_intent;
        [
        Block {
            mean_base: 0,
            cov_base: 2 * n,
            intent: &robot_intent.points,
            sigma: scenario.robot.prior_sigma,
            sigma2: scenario.robot.prior_sigma.powi(2),
            log_sigma: scenario.robot.prior_sigma.ln(),
            radius: scenario.robot.radius,
            v_max: scenario.robot.v_max,
            eig_floor: safety_cfg.sigma_min.powi(2),
            eig_ceil: safety_cfg.sigma_max_for(scenario.robot.prior_sigma).powi(2),
        },
        Block {
            mean_base: 5 * n,
            cov_base: 5 * n + 2 * n,
            intent: &ped_intent.points,
            sigma: scenario.pedestrian.prior_sigma,
            sigma2: scenario.pedestrian.prior_sigma.powi(2),
            log_sigma: scenario.pedestrian.prior_sigma.ln(),
            radius: scenario.pedestrian.radius,
            v_max: scenario.pedestrian.v_max,
            eig_floor: safety_cfg.sigma_min.powi(2),
            eig_ceil: safety_cfg
                .sigma_max_for(scenario.pedestrian.prior_sigma)
                .powi(2),
        },
    ]
    }

    pub(crate) fn build_problem(&self) -> NlpProblem<'_> {
        let scenario = self.scenario;
        let safety_cfg = self.safety;
        let horizon = scenario.horizon_steps;
        let n = horizon - 1;
        let dim = 10 * n;
        let blocks = self.blocks();

    let objective = move |z: &[f64]| {
        let mut cost = 0.0;
        for b in &blocks {
            for t in 1..horizon {
                cost += kl_step(z, b, t);
            }
        }
        cost
    };
    let objective_grad = move |z: &[f64], out: &mut [f64]| {
        for b in &blocks {
            for t in 1..horizon {
                let mi = b.mean_base + 2 * (t - 1);
                let ci = b.cov_base + 3 * (t - 1);
                out[mi] = z[mi] / b.sigma2;
                out[mi + 1] = z[mi + 1] / b.sigma2;
                out[ci] = (2.0 * z[ci]).exp() - 1.0;
                out[ci + 1] = z[ci + 1] / b.sigma2;
                out[ci + 2] = (2.0 * z[ci + 2]).exp() - 1.0;
            }
        }
    };

    let mut constraints: Vec<Constraint> = Vec::new();

    // (a) per-step overlap cap between the two agents' preferences
    let [rb, hb] = blocks;
    for t in 1..horizon {
        constraints.push(Constraint::with_grad(
            move |z: &[f64]| {
                let (o, _, _) = overlap_parts(&rb.step(z, t), &hb.step(z, t));
                safety_cfg.epsilon_overlap - o
            },
            move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                let r = rb.step(z, t);
                let h = hb.step(z, t);
                let (o, w, m) = overlap_parts(&r, &h);
                // d o / d mu_r = -o w, d o / d mu_h = +o w; g = eps - o
                let mi_r = rb.mean_base + 2 * (t - 1);
                let mi_h = hb.mean_base + 2 * (t - 1);
                buf.push((mi_r, o * w.x));
                buf.push((mi_r + 1, o * w.y));
                buf.push((mi_h, -o * w.x));
                buf.push((mi_h + 1, -o * w.y));
                let ci_r = rb.cov_base + 3 * (t - 1);
                let (da, db, dc) = chain_cov(&m, &r);
                buf.push((ci_r, -da));
                buf.push((ci_r + 1, -db));
                buf.push((ci_r + 2, -dc));
                let ci_h = hb.cov_base + 3 * (t - 1);
                let (da, db, dc) = chain_cov(&m, &h);
                buf.push((ci_h, -da));
                buf.push((ci_h + 1, -db));
                buf.push((ci_h + 2, -dc));
            },
        ));
    }

    // (b) per-step expected door safety for each agent
    for b in blocks {
        for t in 1..horizon {
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| {
                    door_expectation(&b.step(z, t), scenario, safety_cfg, b.radius, None)
                        - safety_cfg.gamma_door_exp
                },
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    let step = b.step(z, t);
                    let mut g = [0.0; 5];
                    door_expectation(&step, scenario, safety_cfg, b.radius, Some(&mut g));
                    let mi = b.mean_base + 2 * (t - 1);
                    let ci = b.cov_base + 3 * (t - 1);
                    buf.push((mi, g[0]));
                    buf.push((mi + 1, g[1]));
                    buf.push((ci, g[2]));
                    buf.push((ci + 1, g[3]));
                    buf.push((ci + 2, g[4]));
                },
            ));
        }
    }

    // (c) kinematic constraints on the mean sequences
    for b in blocks {
        let budget = b.v_max * scenario.dt;
        for t in 0..horizon - 1 {
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| budget - (b.step(z, t + 1).mean - b.step(z, t).mean).norm(),
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    let diff = b.step(z, t + 1).mean - b.step(z, t).mean;
                    let norm = diff.norm();
                    if norm < 1e-12 {
                        return;
                    }
                    let u = diff / norm;
                    if t >= 1 {
                        let i = b.mean_base + 2 * (t - 1);
                        buf.push((i, u.x));
                        buf.push((i + 1, u.y));
                    }
                    let j = b.mean_base + 2 * t;
                    buf.push((j, -u.x));
                    buf.push((j + 1, -u.y));
                },
            ));
        }
    }

    // (d) covariance eigenvalue floor and ceiling, expressed as the
    // positive-semidefiniteness of (Sigma - floor I) and (ceil I - Sigma):
    // both diagonal entries and the determinant must be non-negative,
    // which is exact for symmetric 2x2 matrices and smooth in the
    // log-Cholesky offsets.
    for b in blocks {
        for t in 1..horizon {
            let ci = b.cov_base + 3 * (t - 1);
            let lo = b.eig_floor;
            let hi = b.eig_ceil;
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| b.step(z, t).cov().0 - lo,
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    buf.push((ci, 2.0 * b.step(z, t).cov().0));
                },
            ));
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| b.step(z, t).cov().2 - lo,
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    let s = b.step(z, t);
                    buf.push((ci + 1, 2.0 * s.l21));
                    buf.push((ci + 2, 2.0 * s.l22 * s.l22));
                },
            ));
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| {
                    let (s00, s01, s11) = b.step(z, t).cov();
                    (s00 - lo) * (s11 - lo) - s01 * s01
                },
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    let s = b.step(z, t);
                    let (s00, s01, s11) = s.cov();
                    let e2c = s.l22 * s.l22;
                    buf.push((ci, (s11 - lo) * 2.0 * s00 - 2.0 * s01 * s01));
                    buf.push((ci + 1, (s00 - lo) * 2.0 * s.l21 - 2.0 * s01 * s.l11));
                    buf.push((ci + 2, (s00 - lo) * 2.0 * e2c));
                },
            ));
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| hi - b.step(z, t).cov().0,
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    buf.push((ci, -2.0 * b.step(z, t).cov().0));
                },
            ));
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| hi - b.step(z, t).cov().2,
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    let s = b.step(z, t);
                    buf.push((ci + 1, -2.0 * s.l21));
                    buf.push((ci + 2, -2.0 * s.l22 * s.l22));
                },
            ));
            constraints.push(Constraint::with_grad(
                move |z: &[f64]| {
                    let (s00, s01, s11) = b.step(z, t).cov();
                    (hi - s00) * (hi - s11) - s01 * s01
                },
                move |z: &[f64], buf: &mut Vec<(usize, f64)>| {
                    let s = b.step(z, t);
                    let (s00, s01, s11) = s.cov();
                    let e2c = s.l22 * s.l22;
                    buf.push((ci, -(hi - s11) * 2.0 * s00 - 2.0 * s01 * s01));
                    buf.push((ci + 1, -(hi - s00) * 2.0 * s.l21 - 2.0 * s01 * s.l11));
                    buf.push((ci + 2, -(hi - s00) * 2.0 * e2c));
                },
            ));
        }
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

/// Jointly optimizes both agents' preference trajectories.
pub fn plan_dsc(
    scenario: &Scenario,
    safety_cfg: &SafetyConfig,
    solver_cfg: &SolverConfig,
) -> Result<DscPlanResult> {
    let horizon = scenario.horizon_steps;
    let ctx = DscContext::new(scenario, safety_cfg)?;
    let problem = ctx.build_problem();
    let report = solve(&problem, solver_cfg)?;
    drop(problem);
    let blocks = ctx.blocks();

    let build_pref = |b: &Block| -> Result<PreferenceTrajectory> {
        let mut steps = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let s = b.step(&report.solution, t);
            let (s00, s01, s11) = s.cov();
            steps.push(Gaussian2::new(s.mean, Matrix2::new(s00, s01, s01, s11))?);
        }
        Ok(PreferenceTrajectory::new(steps, scenario.dt))
    };
    let robot_pref = build_pref(&blocks[0])?;
    let pedestrian_pref = build_pref(&blocks[1])?;
    let kl_cost_robot = robot_pref.kl_cost(&prior_preference(&scenario.robot, scenario))?;
    let kl_cost_pedestrian =
        pedestrian_pref.kl_cost(&prior_preference(&scenario.pedestrian, scenario))?;
    Ok(DscPlanResult {
        robot_traj: robot_pref.means(),
        pedestrian_traj: pedestrian_pref.means(),
        robot_pref,
        pedestrian_pref,
        report,
        kl_cost_robot,
        kl_cost_pedestrian,
    })
}
