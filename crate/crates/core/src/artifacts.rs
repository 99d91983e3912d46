//! Serialization of episodes to structured records and rendering of
//! publication-style vector figures.
//!
//! The episode document is a TOML file (schema_version 1) holding the
//! scenario snapshot, the executed trajectories, all recorded plans
//! (with per-step preference Gaussians for distribution-space plans),
//! the solver reports, and the metrics. Numbers round-trip bitwise
//! through [`read_episode`]. The metrics table is plain CSV, one row per
//! episode, with "none" for absent values. Figures are standalone
//! SVG 1.1 documents with deterministic byte output.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{sym_eigenvalues, Gaussian2};
use crate::optimizer::SolveReport;
use crate::planner::{DscPlanResult, PlanResult, Strategy};
use crate::scenario::{AgentSpec, Scenario};
use crate::sim::{EpisodeResult, MetricsReport, PlanRecord};
use crate::traj::{PreferenceTrajectory, Trajectory};

const SCHEMA_VERSION: u32 = 1;

// --- episode document ---------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeDoc {
    schema_version: u32,
    strategy: Strategy,
    timed_out: bool,
    scenario: ScenarioDoc,
    robot_executed: Vec<[f64; 2]>,
    pedestrian_executed: Vec<[f64; 2]>,
    robot_pref_executed: Option<Vec<GaussianDoc>>,
    pedestrian_pref_executed: Option<Vec<GaussianDoc>>,
    metrics: MetricsReport,
    plans: Vec<PlanDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioDoc {
    room_width_m: f64,
    room_height_m: f64,
    wall_y_m: f64,
    door_center_x_m: f64,
    door_width_m: f64,
    wall_thickness_m: f64,
    horizon_steps: usize,
    dt_s: f64,
    robot: AgentDoc,
    pedestrian: AgentDoc,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentDoc {
    start_m: [f64; 2],
    goal_m: [f64; 2],
    radius_m: f64,
    v_pref_mps: f64,
    v_max_mps: f64,
    prior_sigma_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GaussianDoc {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct SolveReportDoc {
    objective_value: f64,
    max_violation: f64,
    outer_iters: usize,
    inner_iters_total: usize,
    converged: bool,
    violation_history: Vec<f64>,
    solution: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PlanDoc {
    Point {
        robot: Vec<[f64; 2]>,
        pedestrian: Vec<[f64; 2]>,
        report: SolveReportDoc,
    },
    Distribution {
        robot_pref: Vec<GaussianDoc>,
        pedestrian_pref: Vec<GaussianDoc>,
        kl_cost_robot: f64,
        kl_cost_pedestrian: f64,
        report: SolveReportDoc,
    },
}

fn points_doc(t: &Trajectory) -> Vec<[f64; 2]> {
    t.points.iter().map(|p| [p.x, p.y]).collect()
}

fn points_from_doc(points: &[[f64; 2]], dt: f64) -> Trajectory {
    Trajectory::new(
        points.iter().map(|p| Vector2::new(p[0], p[1])).collect(),
        dt,
    )
}

fn gaussians_doc(p: &PreferenceTrajectory) -> Vec<GaussianDoc> {
    p.steps
        .iter()
        .map(|g| GaussianDoc {
            mean: [g.mean().x, g.mean().y],
            cov: [
                [g.cov()[(0, 0)], g.cov()[(0, 1)]],
                [g.cov()[(1, 0)], g.cov()[(1, 1)]],
            ],
        })
        .collect()
}

fn gaussians_from_doc(docs: &[GaussianDoc], dt: f64) -> Result<PreferenceTrajectory> {
    let steps = docs
        .iter()
        .map(|d| {
            Gaussian2::new(
                Vector2::new(d.mean[0], d.mean[1]),
                Matrix2::new(d.cov[0][0], d.cov[0][1], d.cov[1][0], d.cov[1][1]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreferenceTrajectory::new(steps, dt))
}

fn report_doc(r: &SolveReport) -> SolveReportDoc {
    SolveReportDoc {
        objective_value: r.objective_value,
        max_violation: r.max_violation,
        outer_iters: r.outer_iters,
        inner_iters_total: r.inner_iters_total,
        converged: r.converged,
        violation_history: r.violation_history.clone(),
        solution: r.solution.clone(),
    }
}

fn report_from_doc(d: SolveReportDoc) -> SolveReport {
    SolveReport {
        objective_value: d.objective_value,
        max_violation: d.max_violation,
        outer_iters: d.outer_iters,
        inner_iters_total: d.inner_iters_total,
        converged: d.converged,
        violation_history: d.violation_history,
        solution: d.solution,
    }
}

fn scenario_doc(s: &Scenario) -> ScenarioDoc {
    let agent = |a: &AgentSpec| AgentDoc {
        start_m: [a.start.x, a.start.y],
        goal_m: [a.goal.x, a.goal.y],
        radius_m: a.radius,
        v_pref_mps: a.v_pref,
        v_max_mps: a.v_max,
        prior_sigma_m: a.prior_sigma,
    };
    ScenarioDoc {
        room_width_m: s.room_width,
        room_height_m: s.room_height,
        wall_y_m: s.wall_y,
        door_center_x_m: s.door_center_x,
        door_width_m: s.door_width,
        wall_thickness_m: s.wall_thickness,
        horizon_steps: s.horizon_steps,
        dt_s: s.dt,
        robot: agent(&s.robot),
        pedestrian: agent(&s.pedestrian),
    }
}

fn scenario_from_doc(d: &ScenarioDoc) -> Scenario {
    let agent = |a: &AgentDoc| AgentSpec {
        start: Vector2::new(a.start_m[0], a.start_m[1]),
        goal: Vector2::new(a.goal_m[0], a.goal_m[1]),
        radius: a.radius_m,
        v_pref: a.v_pref_mps,
        v_max: a.v_max_mps,
        prior_sigma: a.prior_sigma_m,
    };
    Scenario {
        room_width: d.room_width_m,
        room_height: d.room_height_m,
        wall_y: d.wall_y_m,
        door_center_x: d.door_center_x_m,
        door_width: d.door_width_m,
        wall_thickness: d.wall_thickness_m,
        horizon_steps: d.horizon_steps,
        dt: d.dt_s,
        robot: agent(&d.robot),
        pedestrian: agent(&d.pedestrian),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes one episode to a TOML document at `path`.
pub fn write_episode(episode: &EpisodeResult, path: &Path) -> Result<()> {
    let text = episode_to_string(episode)?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// The episode document as a string (used by [`write_episode`]).
pub fn episode_to_string(episode: &EpisodeResult) -> Result<String> {
    let dt = episode.scenario.dt;
    let _ = dt;
    let doc = EpisodeDoc {
        schema_version: SCHEMA_VERSION,
        strategy: episode.strategy,
        timed_out: episode.timed_out,
        scenario: scenario_doc(&episode.scenario),
        robot_executed: points_doc(&episode.robot_executed),
        pedestrian_executed: points_doc(&episode.pedestrian_executed),
        robot_pref_executed: episode.robot_pref_executed.as_ref().map(gaussians_doc),
        pedestrian_pref_executed: episode.pedestrian_pref_executed.as_ref().map(gaussians_doc),
        metrics: episode.metrics.clone(),
        plans: episode
            .per_replan_plans
            .iter()
            .map(|p| match p {
                PlanRecord::Point(p) => PlanDoc::Point {
                    robot: points_doc(&p.robot),
                    pedestrian: points_doc(&p.pedestrian),
                    report: report_doc(&p.report),
                },
                PlanRecord::Distribution(d) => PlanDoc::Distribution {
                    robot_pref: gaussians_doc(&d.robot_pref),
                    pedestrian_pref: gaussians_doc(&d.pedestrian_pref),
                    kl_cost_robot: d.kl_cost_robot,
                    kl_cost_pedestrian: d.kl_cost_pedestrian,
                    report: report_doc(&d.report),
                },
            })
            .collect(),
    };
    toml::to_string(&doc).map_err(|e| Error::Parse(format!("episode serialization: {e}")))
}

/// Reads an episode document back; numeric fields are bitwise equal to
/// what [`write_episode`] emitted.
pub fn read_episode(path: &Path) -> Result<EpisodeResult> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    episode_from_str(&text)
}

pub fn episode_from_str(text: &str) -> Result<EpisodeResult> {
    let doc: EpisodeDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported schema_version {}",
            doc.schema_version
        )));
    }
    let scenario = scenario_from_doc(&doc.scenario);
    let dt = scenario.dt;
    let plans = doc
        .plans
        .into_iter()
        .map(|p| -> Result<PlanRecord> {
            Ok(match p {
                PlanDoc::Point {
                    robot,
                    pedestrian,
                    report,
                } => PlanRecord::Point(PlanResult {
                    robot: points_from_doc(&robot, dt),
                    pedestrian: points_from_doc(&pedestrian, dt),
                    report: report_from_doc(report),
                }),
                PlanDoc::Distribution {
                    robot_pref,
                    pedestrian_pref,
                    kl_cost_robot,
                    kl_cost_pedestrian,
                    report,
                } => {
                    let robot_pref = gaussians_from_doc(&robot_pref, dt)?;
                    let pedestrian_pref = gaussians_from_doc(&pedestrian_pref, dt)?;
                    PlanRecord::Distribution(DscPlanResult {
                        robot_traj: robot_pref.means(),
                        pedestrian_traj: pedestrian_pref.means(),
                        robot_pref,
                        pedestrian_pref,
                        report: report_from_doc(report),
                        kl_cost_robot,
                        kl_cost_pedestrian,
                    })
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EpisodeResult {
        strategy: doc.strategy,
        robot_executed: points_from_doc(&doc.robot_executed, dt),
        pedestrian_executed: points_from_doc(&doc.pedestrian_executed, dt),
        robot_pref_executed: doc
            .robot_pref_executed
            .as_deref()
            .map(|g| gaussians_from_doc(g, dt))
            .transpose()?,
        pedestrian_pref_executed: doc
            .pedestrian_pref_executed
            .as_deref()
            .map(|g| gaussians_from_doc(g, dt))
            .transpose()?,
        per_replan_plans: plans,
        timed_out: doc.timed_out,
        metrics: doc.metrics,
        scenario,
    })
}

// --- metrics table -------------------------------------------------------

/// Column order of the metrics table; the header row is mandatory.
pub const METRICS_COLUMNS: &str = "strategy,robot_cross_step,pedestrian_cross_step,\
simultaneity_gap,path_ratio_robot,path_ratio_pedestrian,min_pair_distance,\
min_wall_distance,min_speed_robot,flexibility_min_robot,flexibility_min_pedestrian,kl_total";

/// Emits a comma-delimited table (UTF-8, LF) with one row per episode.
pub fn write_metrics_table(episodes: &[EpisodeResult], path: &Path) -> Result<()> {
    let text = metrics_table_to_string(episodes)?;
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn metrics_table_to_string(episodes: &[EpisodeResult]) -> Result<String> {
    if episodes.is_empty() {
        return Err(Error::Contract(
            "refusing to write a metrics table for zero episodes".into(),
        ));
    }
    let mut out = String::new();
    out.push_str(METRICS_COLUMNS);
    out.push('\n');
    for e in episodes {
        let m = &e.metrics;
        let opt_usize = |v: Option<usize>| v.map_or("none".to_string(), |x| x.to_string());
        let opt_f64 = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            e.strategy,
            opt_usize(m.robot_cross_step),
            opt_usize(m.pedestrian_cross_step),
            opt_f64(m.simultaneity_gap),
            m.path_ratio_robot,
            m.path_ratio_pedestrian,
            m.min_pair_distance,
            m.min_wall_distance,
            m.min_speed_robot,
            opt_f64(m.flexibility_min_robot),
            opt_f64(m.flexibility_min_pedestrian),
            opt_f64(m.kl_total),
        )
        .expect("string write cannot fail");
    }
    Ok(out)
}

// --- SVG rendering -------------------------------------------------------

const SCALE: f64 = 60.0; // px per meter
const MARGIN: f64 = 30.0; // px

struct Frame {
    min: Vector2<f64>,
    max_y: f64,
}

impl Frame {
    fn to_px(&self, p: Vector2<f64>) -> (f64, f64) {
        (
            MARGIN + SCALE * (p.x - self.min.x),
            MARGIN + SCALE * (self.max_y - p.y),
        )
    }
}

/// Renders one episode as a standalone SVG 1.1 document: room and wall
/// rectangles, dashed intent polylines, solid executed polylines with
/// arrowheads, start dots, and (for distribution-space episodes) one
/// one-standard-deviation ellipse per step per agent plus dashed envelope
/// polylines. Identical inputs produce byte-identical files.
pub fn render_episode(episode: &EpisodeResult, scenario: &Scenario, path: &Path) -> Result<()> {
    let svg = render_episode_string(episode, scenario);
    std::fs::write(path, svg).map_err(io_err(path))
}

pub fn render_episode_string(episode: &EpisodeResult, scenario: &Scenario) -> String {
    // frame covers the room plus everything drawn
    let mut min: Vector2<f64> = Vector2::new(0.0, 0.0);
    let mut max = Vector2::new(scenario.room_width, scenario.room_height);
    let mut include = |p: Vector2<f64>, pad: f64| {
        min.x = min.x.min(p.x - pad);
        min.y = min.y.min(p.y - pad);
        max.x = max.x.max(p.x + pad);
        max.y = max.y.max(p.y + pad);
    };
    for t in [&episode.robot_executed, &episode.pedestrian_executed] {
        for p in &t.points {
            include(*p, 0.2);
        }
    }
    for pref in [&episode.robot_pref_executed, &episode.pedestrian_pref_executed]
        .into_iter()
        .flatten()
    {
        for g in &pref.steps {
            let (_, hi) = sym_eigenvalues(&g.cov());
            include(g.mean(), hi.sqrt() + 0.2);
        }
    }

    let frame = Frame { min, max_y: max.y };
    let width = MARGIN * 2.0 + SCALE * (max.x - min.x);
    let height = MARGIN * 2.0 + SCALE * (max.y - min.y);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        "<!-- world-to-px: x_px = {MARGIN} + {SCALE} * (x_m - {}), y_px = {MARGIN} + {SCALE} * ({} - y_m) -->",
        frame.min.x, frame.max_y
    );
    let _ = writeln!(
        svg,
        r##"<defs><marker id="arrow-robot" viewBox="0 0 10 10" refX="8" refY="5" markerWidth="7" markerHeight="7" orient="auto-start-reverse"><path d="M 0 0 L 10 5 L 0 10 z" fill="#2166ac"/></marker><marker id="arrow-ped" viewBox="0 0 10 10" refX="8" refY="5" markerWidth="7" markerHeight="7" orient="auto-start-reverse"><path d="M 0 0 L 10 5 L 0 10 z" fill="#b2182b"/></marker></defs>"##
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);

    // room
    let (rx, ry) = frame.to_px(Vector2::new(0.0, scenario.room_height));
    let _ = writeln!(
        svg,
        r##"<rect x="{rx}" y="{ry}" width="{}" height="{}" fill="none" stroke="#333333" stroke-width="2"/>"##,
        SCALE * scenario.room_width,
        SCALE * scenario.room_height
    );
    // wall rectangles
    for rect in scenario.wall_rects() {
        let (wx, wy) = frame.to_px(Vector2::new(rect.min.x, rect.max.y));
        let _ = writeln!(
            svg,
            r##"<rect x="{wx}" y="{wy}" width="{}" height="{}" fill="#555555"/>"##,
            SCALE * (rect.max.x - rect.min.x),
            SCALE * (rect.max.y - rect.min.y)
        );
    }

    let polyline = |points: &[Vector2<f64>], style: &str| -> String {
        let coords: Vec<String> = points
            .iter()
            .map(|p| {
                let (x, y) = frame.to_px(*p);
                format!("{x},{y}")
            })
            .collect();
        format!(r#"<polyline points="{}" fill="none" {style}/>"#, coords.join(" "))
    };

    // dashed intents
    let robot_intent = crate::scenario::intent(&scenario.robot, scenario);
    let ped_intent = crate::scenario::intent(&scenario.pedestrian, scenario);
    let _ = writeln!(
        svg,
        "{}",
        polyline(
            &robot_intent.points,
            r##"stroke="#92c5de" stroke-width="1.5" stroke-dasharray="6 4" class="intent-robot""##
        )
    );
    let _ = writeln!(
        svg,
        "{}",
        polyline(
            &ped_intent.points,
            r##"stroke="#f4a582" stroke-width="1.5" stroke-dasharray="6 4" class="intent-ped""##
        )
    );

    // preference ellipses and envelopes (distribution-space episodes)
    for (pref, class, stroke) in [
        (&episode.robot_pref_executed, "pref-robot", "#2166ac"),
        (&episode.pedestrian_pref_executed, "pref-ped", "#b2182b"),
    ] {
        if let Some(pref) = pref {
            for g in &pref.steps {
                let (cx, cy) = frame.to_px(g.mean());
                let cov = g.cov();
                let (lo, hi) = sym_eigenvalues(&cov);
                // principal axis angle; world y is flipped in px space
                let angle = if cov[(0, 1)].abs() < 1e-15 && (cov[(0, 0)] >= cov[(1, 1)]) {
                    0.0
                } else if cov[(0, 1)].abs() < 1e-15 {
                    90.0
                } else {
                    (hi - cov[(0, 0)]).atan2(cov[(0, 1)]).to_degrees()
                };
                let _ = writeln!(
                    svg,
                    r##"<ellipse cx="0" cy="0" rx="{}" ry="{}" transform="translate({cx},{cy}) rotate({})" fill="none" stroke="{stroke}" stroke-opacity="0.35" stroke-width="1" class="{class}"/>"##,
                    SCALE * hi.sqrt(),
                    SCALE * lo.sqrt(),
                    -angle
                );
            }
            // envelope: one-standard-deviation offsets along the path normal
            let means = pref.means();
            for side in [1.0, -1.0] {
                let mut offset_pts = Vec::with_capacity(pref.len());
                for (i, g) in pref.steps.iter().enumerate() {
                    let dir = path_direction(&means.points, i);
                    let normal = Vector2::new(-dir.y, dir.x);
                    let sigma = (normal.transpose() * g.cov() * normal)[(0, 0)].sqrt();
                    offset_pts.push(g.mean() + normal * (side * sigma));
                }
                let _ = writeln!(
                    svg,
                    "{}",
                    polyline(
                        &offset_pts,
                        &format!(
                            r##"stroke="{stroke}" stroke-width="1" stroke-dasharray="3 3" stroke-opacity="0.7" class="envelope {class}""##
                        )
                    )
                );
            }
        }
    }

    // executed trajectories with terminal arrowheads
    let _ = writeln!(
        svg,
        "{}",
        polyline(
            &episode.robot_executed.points,
            r##"stroke="#2166ac" stroke-width="2.5" marker-end="url(#arrow-robot)" class="executed-robot""##
        )
    );
    let _ = writeln!(
        svg,
        "{}",
        polyline(
            &episode.pedestrian_executed.points,
            r##"stroke="#b2182b" stroke-width="2.5" marker-end="url(#arrow-ped)" class="executed-ped""##
        )
    );

    // start dots
    for (p, fill) in [
        (scenario.robot.start, "#2166ac"),
        (scenario.pedestrian.start, "#b2182b"),
    ] {
        let (x, y) = frame.to_px(p);
        let _ = writeln!(svg, r##"<circle cx="{x}" cy="{y}" r="5" fill="{fill}"/>"##);
    }

    svg.push_str("</svg>\n");
    svg
}

/// Unit direction of the polyline at index `i` (central where possible).
fn path_direction(points: &[Vector2<f64>], i: usize) -> Vector2<f64> {
    let n = points.len();
    let (a, b) = if n < 2 {
        return Vector2::new(1.0, 0.0);
    } else if i == 0 {
        (points[0], points[1])
    } else if i + 1 >= n {
        (points[n - 2], points[n - 1])
    } else {
        (points[i - 1], points[i + 1])
    };
    let d = b - a;
    let norm = d.norm();
    if norm < 1e-12 {
        Vector2::new(1.0, 0.0)
    } else {
        d / norm
    }
}
