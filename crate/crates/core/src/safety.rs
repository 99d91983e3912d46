//! Smooth safety kernels for wall clearance and inter-agent separation,
//! in pointwise and expected (distributional) form.
//!
//! Both kernels share the saturating form 1 - exp(-d^2 / (2 r^2)): zero at
//! contact, monotone in clearance, bounded below one, and smooth in the
//! position (the max(0, .) clamp keeps the derivative continuous because
//! the factor d vanishes at the clamp).

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::gaussian::Gaussian2;
use crate::scenario::Scenario;

/// Thresholds and length scales for all three planners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyConfig {
    /// Wall safety length scale (m).
    pub r_wall: f64,
    /// Inter-agent safety length scale (m).
    pub r_agent: f64,
    /// Combined door+pair threshold used by the prediction-then-planning
    /// constraint, in (0, 2).
    pub gamma: f64,
    /// Pair-only threshold used by the trajectory-space constraint, in (0, 1).
    pub gamma_pair: f64,
    /// Door-safety reward weight in the trajectory-space objective.
    pub w_door: f64,
    /// Maximum permitted distributional overlap per step (1/m^2).
    pub epsilon_overlap: f64,
    /// Minimum expected door safety per agent per step, in (0, 1).
    pub gamma_door_exp: f64,
    /// Preference covariance eigenvalue floor, as a standard deviation (m).
    pub sigma_min: f64,
    /// Eigenvalue ceiling as a standard deviation; defaults to three times
    /// the agent's prior sigma when absent.
    pub sigma_max: Option<f64>,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            r_wall: 0.3,
            r_agent: 0.45,
            gamma: 1.4,
            gamma_pair: 0.35,
            w_door: 2.0,
            epsilon_overlap: 0.02,
            gamma_door_exp: 0.3,
            sigma_min: 0.05,
            sigma_max: None,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Validation(m.into()));
        if self.r_wall <= 0.0 || self.r_agent <= 0.0 {
            return fail("safety length scales must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 2.0) {
            return fail("gamma must lie in (0, 2)");
        }
        if !(self.gamma_pair > 0.0 && self.gamma_pair < 1.0) {
            return fail("gamma_pair must lie in (0, 1)");
        }
        if self.w_door < 0.0 {
            return fail("w_door must be non-negative");
        }
        if self.epsilon_overlap <= 0.0 {
            return fail("epsilon_overlap must be positive");
        }
        if !(self.gamma_door_exp > 0.0 && self.gamma_door_exp < 1.0) {
            return fail("gamma_door_exp must lie in (0, 1)");
        }
        if self.sigma_min <= 0.0 {
            return fail("sigma_min must be positive");
        }
        if let Some(hi) = self.sigma_max {
            if hi <= self.sigma_min {
                return fail("sigma_max must exceed sigma_min");
            }
        }
        Ok(())
    }

    /// Eigenvalue ceiling (as a standard deviation) for an agent with the
    /// given prior sigma.
    pub fn sigma_max_for(&self, prior_sigma: f64) -> f64 {
        self.sigma_max.unwrap_or(3.0 * prior_sigma)
    }
}

/// Distance from `p` to the nearest obstacle: the wall rectangles or the
/// room boundary (signed; negative outside the room, zero inside a wall).
pub fn wall_distance(p: Vector2<f64>, scenario: &Scenario) -> f64 {
    let mut d = scenario.room_margin(p);
    for rect in scenario.wall_rects() {
        d = d.min(rect.distance(p));
    }
    d
}

/// Gradient of [`wall_distance`]; piecewise smooth, zero inside a wall.
pub fn wall_distance_grad(p: Vector2<f64>, scenario: &Scenario) -> Vector2<f64> {
    let mut best = scenario.room_margin(p);
    // room boundary term: unit step along the binding coordinate
    let candidates = [
        (p.x, Vector2::new(1.0, 0.0)),
        (scenario.room_width - p.x, Vector2::new(-1.0, 0.0)),
        (p.y, Vector2::new(0.0, 1.0)),
        (scenario.room_height - p.y, Vector2::new(0.0, -1.0)),
    ];
    let mut grad = candidates
        .iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap()
        .1;
    for rect in scenario.wall_rects() {
        let d = rect.distance(p);
        if d < best {
            best = d;
            if d > 0.0 {
                grad = (p - rect.closest_point(p)) / d;
            } else {
                grad = Vector2::zeros();
            }
        }
    }
    grad
}

/// Safety of a disc of the given radius with respect to walls: zero at
/// contact, saturating towards one far away.
pub fn s_door(p: Vector2<f64>, scenario: &Scenario, cfg: &SafetyConfig, radius: f64) -> f64 {
    let d = (wall_distance(p, scenario) - radius).max(0.0);
    1.0 - (-d * d / (2.0 * cfg.r_wall * cfg.r_wall)).exp()
}

/// Gradient of [`s_door`] with respect to `p`.
pub fn s_door_grad(
    p: Vector2<f64>,
    scenario: &Scenario,
    cfg: &SafetyConfig,
    radius: f64,
) -> Vector2<f64> {
    let d = (wall_distance(p, scenario) - radius).max(0.0);
    if d == 0.0 {
        return Vector2::zeros();
    }
    let r2 = cfg.r_wall * cfg.r_wall;
    let factor = (d / r2) * (-d * d / (2.0 * r2)).exp();
    wall_distance_grad(p, scenario) * factor
}

/// Joint safety of two discs with combined radius `radius_sum`; symmetric
/// in its position arguments.
pub fn s_pair(p: Vector2<f64>, q: Vector2<f64>, cfg: &SafetyConfig, radius_sum: f64) -> f64 {
    let d = ((p - q).norm() - radius_sum).max(0.0);
    1.0 - (-d * d / (2.0 * cfg.r_agent * cfg.r_agent)).exp()
}

/// Gradient of [`s_pair`] with respect to `p`; negate for the gradient
/// with respect to `q`.
pub fn s_pair_grad(
    p: Vector2<f64>,
    q: Vector2<f64>,
    cfg: &SafetyConfig,
    radius_sum: f64,
) -> Vector2<f64> {
    let sep = p - q;
    let dist = sep.norm();
    let d = (dist - radius_sum).max(0.0);
    if d == 0.0 || dist == 0.0 {
        return Vector2::zeros();
    }
    let r2 = cfg.r_agent * cfg.r_agent;
    let factor = (d / r2) * (-d * d / (2.0 * r2)).exp();
    sep * (factor / dist)
}

/// Signed clearance to one wall rectangle: positive outside, negative
/// (depth) inside.
fn rect_signed_distance(rect: &crate::scenario::Rect, p: Vector2<f64>) -> f64 {
    let outside = rect.distance(p);
    if outside > 0.0 {
        outside
    } else {
        -(p.x - rect.min.x)
            .min(rect.max.x - p.x)
            .min(p.y - rect.min.y)
            .min(rect.max.y - p.y)
    }
}

fn rect_signed_distance_grad(rect: &crate::scenario::Rect, p: Vector2<f64>) -> Vector2<f64> {
    let outside = rect.distance(p);
    if outside > 0.0 {
        return (p - rect.closest_point(p)) / outside;
    }
    // inside: point towards the nearest face
    let margins = [
        (p.x - rect.min.x, Vector2::new(-1.0, 0.0)),
        (rect.max.x - p.x, Vector2::new(1.0, 0.0)),
        (p.y - rect.min.y, Vector2::new(0.0, -1.0)),
        (rect.max.y - p.y, Vector2::new(0.0, 1.0)),
    ];
    margins
        .iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap()
        .1
}

/// Solver-facing door kernel: the product of per-obstacle safety factors
/// (the two wall rectangles and the room boundary), each the sign-extended
/// saturating exponential. The composite is smooth across the
/// equal-distance ridges where the pointwise [`s_door`] has gradient
/// jumps, keeps a usable gradient inside contact, and is never larger
/// than the nearest obstacle's own factor. Values match [`s_door`] when
/// a single obstacle dominates; where several are close this kernel is
/// the more conservative one. The planners pose their door terms with
/// this kernel; [`s_door`] remains the reporting and expectation kernel.
pub fn s_door_smooth(
    p: Vector2<f64>,
    scenario: &Scenario,
    cfg: &SafetyConfig,
    radius: f64,
) -> f64 {
    let mut value = 1.0;
    for_each_obstacle(p, scenario, |d, _| {
        value *= factor(d - radius, cfg.r_wall);
    });
    value
}

/// Gradient of [`s_door_smooth`] with respect to `p`.
pub fn s_door_smooth_grad(
    p: Vector2<f64>,
    scenario: &Scenario,
    cfg: &SafetyConfig,
    radius: f64,
) -> Vector2<f64> {
    let mut factors = [0.0f64; 3];
    let mut grads = [Vector2::zeros(); 3];
    let mut k = 0;
    for_each_obstacle(p, scenario, |d, dir| {
        let dd = d - radius;
        factors[k] = factor(dd, cfg.r_wall);
        grads[k] = dir * factor_deriv(dd, cfg.r_wall);
        k += 1;
    });
    let mut grad = Vector2::zeros();
    for i in 0..3 {
        let others: f64 = (0..3).filter(|&j| j != i).map(|j| factors[j]).product();
        grad += grads[i] * others;
    }
    grad
}

/// Sign-extended single-obstacle safety factor: 1 - exp(-d|d| / 2 r^2).
#[inline]
fn factor(d: f64, r: f64) -> f64 {
    1.0 - (-d * d.abs() / (2.0 * r * r)).exp()
}

#[inline]
fn factor_deriv(d: f64, r: f64) -> f64 {
    let r2 = r * r;
    (d.abs() / r2) * (-d * d.abs() / (2.0 * r2)).exp()
}

/// Visits (signed clearance, outward direction) for each of the three
/// obstacles: the two wall rectangles and the room boundary.
fn for_each_obstacle(
    p: Vector2<f64>,
    scenario: &Scenario,
    mut visit: impl FnMut(f64, Vector2<f64>),
) {
    for rect in scenario.wall_rects() {
        visit(
            rect_signed_distance(&rect, p),
            rect_signed_distance_grad(&rect, p),
        );
    }
    let candidates = [
        (p.x, Vector2::new(1.0, 0.0)),
        (scenario.room_width - p.x, Vector2::new(-1.0, 0.0)),
        (p.y, Vector2::new(0.0, 1.0)),
        (scenario.room_height - p.y, Vector2::new(0.0, -1.0)),
    ];
    let (margin, dir) = candidates
        .iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .copied()
        .unwrap();
    visit(margin, dir);
}

/// Sign-extended pair kernel used inside the solvers: identical to
/// [`s_pair`] outside contact, continuing below zero inside it so the
/// augmented Lagrangian keeps a gradient there. For any threshold c > 0
/// the feasible set {s >= c} is unchanged.
pub fn s_pair_signed(
    p: Vector2<f64>,
    q: Vector2<f64>,
    cfg: &SafetyConfig,
    radius_sum: f64,
) -> f64 {
    let d = (p - q).norm() - radius_sum;
    1.0 - (-d * d.abs() / (2.0 * cfg.r_agent * cfg.r_agent)).exp()
}

/// Gradient of [`s_pair_signed`] with respect to `p`; negate for `q`.
pub fn s_pair_signed_grad(
    p: Vector2<f64>,
    q: Vector2<f64>,
    cfg: &SafetyConfig,
    radius_sum: f64,
) -> Vector2<f64> {
    let sep = p - q;
    let dist = sep.norm();
    if dist < 1e-12 {
        return Vector2::zeros();
    }
    let d = dist - radius_sum;
    let r2 = cfg.r_agent * cfg.r_agent;
    let factor = (d.abs() / r2) * (-d * d.abs() / (2.0 * r2)).exp();
    sep * (factor / dist)
}

/// Expected door safety under a preference distribution, by Gauss-Hermite
/// quadrature.
pub fn expected_door_safety(
    g: &Gaussian2,
    scenario: &Scenario,
    cfg: &SafetyConfig,
    radius: f64,
) -> f64 {
    g.expect(|x| s_door(x, scenario, cfg, radius))
}

/// Per-step distributional collision measure; re-export of the Gaussian
/// density inner product for the planners' constraint assembly.
pub fn step_overlap(p: &Gaussian2, q: &Gaussian2) -> f64 {
    p.overlap(q)
}
