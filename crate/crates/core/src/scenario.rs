//! The bottleneck world: a rectangular room split by a wall with a door
//! gap, two agents that have to swap sides, and the config file schema.
//!
//! All lengths are meters, all times seconds; config keys carry their
//! unit as a suffix (`door_width_m`, `dt_s`, ...).

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian2;
use crate::optimizer::SolverConfig;
use crate::safety::SafetyConfig;
use crate::traj::{PreferenceTrajectory, Trajectory};

/// Minimum slack required between the door width and the combined agent
/// diameters ("wide enough for both to pass simultaneously").
pub const DOOR_CLEARANCE_MIN: f64 = 0.2;

/// Per-agent start, goal and motion limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSpec {
    pub start: Vector2<f64>,
    pub goal: Vector2<f64>,
    pub radius: f64,
    pub v_pref: f64,
    pub v_max: f64,
    /// Isotropic prior preference spread; prior covariance is
    /// `prior_sigma^2 * I` at every step.
    pub prior_sigma: f64,
}

/// Axis-aligned rectangle, used for the wall segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Rect {
    pub fn contains(&self, p: Vector2<f64>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Euclidean distance from `p` to this rectangle (zero inside).
    pub fn distance(&self, p: Vector2<f64>) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        (dx * dx + dy * dy).sqrt()
    }

    /// Closest rectangle point to `p` (equals `p` when inside).
    pub fn closest_point(&self, p: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }
}

/// A validated bottleneck scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub room_width: f64,
    pub room_height: f64,
    pub wall_y: f64,
    pub door_center_x: f64,
    pub door_width: f64,
    pub wall_thickness: f64,
    pub horizon_steps: usize,
    pub dt: f64,
    pub robot: AgentSpec,
    pub pedestrian: AgentSpec,
}

/// Which of the two agents a computation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    Robot,
    Pedestrian,
}

impl Agent {
    pub fn other(self) -> Agent {
        match self {
            Agent::Robot => Agent::Pedestrian,
            Agent::Pedestrian => Agent::Robot,
        }
    }
}

impl Scenario {
    pub fn spec(&self, agent: Agent) -> &AgentSpec {
        match agent {
            Agent::Robot => &self.robot,
            Agent::Pedestrian => &self.pedestrian,
        }
    }

    /// The two wall rectangles flanking the door gap.
    pub fn wall_rects(&self) -> [Rect; 2] {
        let half_t = 0.5 * self.wall_thickness;
        let left_end = self.door_center_x - 0.5 * self.door_width;
        let right_start = self.door_center_x + 0.5 * self.door_width;
        [
            Rect {
                min: Vector2::new(0.0, self.wall_y - half_t),
                max: Vector2::new(left_end, self.wall_y + half_t),
            },
            Rect {
                min: Vector2::new(right_start, self.wall_y - half_t),
                max: Vector2::new(self.room_width, self.wall_y + half_t),
            },
        ]
    }

    pub fn door_center(&self) -> Vector2<f64> {
        Vector2::new(self.door_center_x, self.wall_y)
    }

    /// Signed margin to the room boundary: positive inside, negative outside.
    pub fn room_margin(&self, p: Vector2<f64>) -> f64 {
        p.x.min(self.room_width - p.x)
            .min(p.y)
            .min(self.room_height - p.y)
    }

    /// The scenario reflected across the vertical door axis.
    pub fn mirrored(&self) -> Scenario {
        let flip = |v: Vector2<f64>| Vector2::new(2.0 * self.door_center_x - v.x, v.y);
        let flip_spec = |s: &AgentSpec| AgentSpec {
            start: flip(s.start),
            goal: flip(s.goal),
            ..*s
        };
        Scenario {
            robot: flip_spec(&self.robot),
            pedestrian: flip_spec(&self.pedestrian),
            ..self.clone()
        }
    }

    /// The scenario with the two agents' roles exchanged.
    pub fn swapped(&self) -> Scenario {
        Scenario {
            robot: self.pedestrian,
            pedestrian: self.robot,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.room_width <= 0.0 || self.room_height <= 0.0 {
            return fail("room dimensions must be positive".into());
        }
        if self.wall_thickness <= 0.0 {
            return fail("wall thickness must be positive".into());
        }
        if self.wall_y <= 0.0 || self.wall_y >= self.room_height {
            return fail("wall must lie strictly inside the room".into());
        }
        if self.door_width >= self.room_width {
            return fail(format!(
                "door width {} must be smaller than the room width {}",
                self.door_width, self.room_width
            ));
        }
        let min_door = self.robot.radius + self.pedestrian.radius + DOOR_CLEARANCE_MIN;
        if self.door_width < min_door {
            return fail(format!(
                "door narrower than combined agent widths: {} < {}",
                self.door_width, min_door
            ));
        }
        let half_w = 0.5 * self.door_width;
        if self.door_center_x - half_w <= 0.0 || self.door_center_x + half_w >= self.room_width {
            return fail("door gap must lie strictly inside the room".into());
        }
        if self.horizon_steps < 2 {
            return fail("horizon_steps must be at least 2".into());
        }
        if self.dt <= 0.0 {
            return fail("dt must be positive".into());
        }
        for (name, spec) in [("robot", &self.robot), ("pedestrian", &self.pedestrian)] {
            if spec.radius <= 0.0 {
                return fail(format!("{name}: radius must be positive"));
            }
            if !(spec.v_pref > 0.0 && spec.v_pref <= spec.v_max) {
                return fail(format!("{name}: need 0 < v_pref <= v_max"));
            }
            if spec.prior_sigma <= 0.0 {
                return fail(format!("{name}: prior_sigma must be positive"));
            }
            for (kind, p) in [("start", spec.start), ("goal", spec.goal)] {
                if self.room_margin(p) <= 0.0 {
                    return fail(format!("{name}: {kind} lies outside the room"));
                }
                for rect in self.wall_rects() {
                    if rect.distance(p) < spec.radius {
                        return fail(format!("{name}: {kind} overlaps the wall region"));
                    }
                }
            }
            let start_side = spec.start.y - self.wall_y;
            let goal_side = spec.goal.y - self.wall_y;
            if start_side * goal_side >= 0.0 {
                return fail(format!(
                    "{name}: start and goal must lie on opposite sides of the wall"
                ));
            }
        }
        Ok(())
    }
}

/// The obstacle-free preferred trajectory: straight toward the goal if the
/// chord clears the wall, otherwise routed through the door center, marched
/// at `v_pref` and clamped at the goal.
pub fn intent(spec: &AgentSpec, scenario: &Scenario) -> Trajectory {
    let mut polyline = vec![spec.start];
    if !chord_clears_wall(spec, scenario) {
        polyline.push(scenario.door_center());
    }
    polyline.push(spec.goal);

    let step = spec.v_pref * scenario.dt;
    let mut points = Vec::with_capacity(scenario.horizon_steps);
    points.push(spec.start);
    let mut seg = 0usize; // current polyline segment
    let mut pos = spec.start;
    for _ in 1..scenario.horizon_steps {
        let mut remaining = step;
        while remaining > 0.0 && seg + 1 < polyline.len() {
            let target = polyline[seg + 1];
            let to_target = target - pos;
            let dist = to_target.norm();
            if dist <= remaining {
                pos = target;
                remaining -= dist;
                seg += 1;
            } else {
                pos += to_target * (remaining / dist);
                remaining = 0.0;
            }
        }
        points.push(pos);
    }
    Trajectory::new(points, scenario.dt)
}

/// The prior preference: an isotropic Gaussian centered on the intent at
/// every step.
pub fn prior_preference(spec: &AgentSpec, scenario: &Scenario) -> PreferenceTrajectory {
    let path = intent(spec, scenario);
    let steps = path
        .points
        .iter()
        .map(|&mean| {
            Gaussian2::isotropic(mean, spec.prior_sigma)
                .expect("validated prior_sigma yields a valid Gaussian")
        })
        .collect();
    PreferenceTrajectory::new(steps, scenario.dt)
}

fn chord_clears_wall(spec: &AgentSpec, scenario: &Scenario) -> bool {
    scenario
        .wall_rects()
        .iter()
        .all(|rect| segment_rect_distance(spec.start, spec.goal, rect) >= spec.radius)
}

/// Minimum distance between the segment [a, b] and a rectangle.
fn segment_rect_distance(a: Vector2<f64>, b: Vector2<f64>, rect: &Rect) -> f64 {
    if rect.contains(a) || rect.contains(b) {
        return 0.0;
    }
    let corners = [
        rect.min,
        Vector2::new(rect.max.x, rect.min.y),
        rect.max,
        Vector2::new(rect.min.x, rect.max.y),
    ];
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let d = segment_segment_distance(a, b, corners[i], corners[(i + 1) % 4]);
        if d == 0.0 {
            return 0.0;
        }
        best = best.min(d);
    }
    best
}

fn segment_point_distance(a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn segment_segment_distance(
    a: Vector2<f64>,
    b: Vector2<f64>,
    c: Vector2<f64>,
    d: Vector2<f64>,
) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    segment_point_distance(a, b, c)
        .min(segment_point_distance(a, b, d))
        .min(segment_point_distance(c, d, a))
        .min(segment_point_distance(c, d, b))
}

fn segments_intersect(
    a: Vector2<f64>,
    b: Vector2<f64>,
    c: Vector2<f64>,
    d: Vector2<f64>,
) -> bool {
    let cross = |o: Vector2<f64>, p: Vector2<f64>, q: Vector2<f64>| {
        (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x)
    };
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

// --- config file schema ------------------------------------------------

#[derive(Debug, Deserialize, Serialize)]
struct RawConfig {
    room: RawRoom,
    wall: RawWall,
    time: RawTime,
    robot: RawAgent,
    pedestrian: RawAgent,
    #[serde(default)]
    safety: RawSafety,
    #[serde(default)]
    solver: RawSolver,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRoom {
    width_m: f64,
    height_m: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawWall {
    y_m: f64,
    door_center_x_m: f64,
    door_width_m: f64,
    thickness_m: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawTime {
    horizon_steps: usize,
    dt_s: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawAgent {
    start_m: [f64; 2],
    goal_m: [f64; 2],
    radius_m: f64,
    v_pref_mps: f64,
    v_max_mps: f64,
    prior_sigma_m: f64,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default)]
struct RawSafety {
    r_wall_m: Option<f64>,
    r_agent_m: Option<f64>,
    gamma: Option<f64>,
    gamma_pair: Option<f64>,
    w_door: Option<f64>,
    epsilon_overlap: Option<f64>,
    gamma_door_exp: Option<f64>,
    sigma_min_m: Option<f64>,
    sigma_max_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default)]
struct RawSolver {
    max_outer_iters: Option<usize>,
    max_inner_iters: Option<usize>,
    tol_grad: Option<f64>,
    tol_constraint: Option<f64>,
    penalty_init: Option<f64>,
    penalty_growth: Option<f64>,
    fd_step: Option<f64>,
    seed: Option<u64>,
}

impl From<&RawAgent> for AgentSpec {
    fn from(raw: &RawAgent) -> Self {
        AgentSpec {
            start: Vector2::new(raw.start_m[0], raw.start_m[1]),
            goal: Vector2::new(raw.goal_m[0], raw.goal_m[1]),
            radius: raw.radius_m,
            v_pref: raw.v_pref_mps,
            v_max: raw.v_max_mps,
            prior_sigma: raw.prior_sigma_m,
        }
    }
}

/// Everything a planning run needs, parsed from one config document.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub safety: SafetyConfig,
    pub solver: SolverConfig,
}

/// Parses and validates a full config document (scenario + safety + solver).
pub fn load_config(text: &str) -> Result<Config> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let scenario = Scenario {
        room_width: raw.room.width_m,
        room_height: raw.room.height_m,
        wall_y: raw.wall.y_m,
        door_center_x: raw.wall.door_center_x_m,
        door_width: raw.wall.door_width_m,
        wall_thickness: raw.wall.thickness_m,
        horizon_steps: raw.time.horizon_steps,
        dt: raw.time.dt_s,
        robot: (&raw.robot).into(),
        pedestrian: (&raw.pedestrian).into(),
    };
    scenario.validate()?;

    let d = SafetyConfig::default();
    let safety = SafetyConfig {
        r_wall: raw.safety.r_wall_m.unwrap_or(d.r_wall),
        r_agent: raw.safety.r_agent_m.unwrap_or(d.r_agent),
        gamma: raw.safety.gamma.unwrap_or(d.gamma),
        gamma_pair: raw.safety.gamma_pair.unwrap_or(d.gamma_pair),
        w_door: raw.safety.w_door.unwrap_or(d.w_door),
        epsilon_overlap: raw.safety.epsilon_overlap.unwrap_or(d.epsilon_overlap),
        gamma_door_exp: raw.safety.gamma_door_exp.unwrap_or(d.gamma_door_exp),
        sigma_min: raw.safety.sigma_min_m.unwrap_or(d.sigma_min),
        sigma_max: raw.safety.sigma_max_m,
    };
    safety.validate()?;

    let ds = SolverConfig::default();
    let solver = SolverConfig {
        max_outer_iters: raw.solver.max_outer_iters.unwrap_or(ds.max_outer_iters),
        max_inner_iters: raw.solver.max_inner_iters.unwrap_or(ds.max_inner_iters),
        tol_grad: raw.solver.tol_grad.unwrap_or(ds.tol_grad),
        tol_constraint: raw.solver.tol_constraint.unwrap_or(ds.tol_constraint),
        penalty_init: raw.solver.penalty_init.unwrap_or(ds.penalty_init),
        penalty_growth: raw.solver.penalty_growth.unwrap_or(ds.penalty_growth),
        fd_step: raw.solver.fd_step.unwrap_or(ds.fd_step),
        seed: raw.solver.seed.unwrap_or(ds.seed),
    };
    solver.validate()?;

    Ok(Config {
        scenario,
        safety,
        solver,
    })
}

/// Parses a config document and returns just the validated scenario.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    Ok(load_config(text)?.scenario)
}
