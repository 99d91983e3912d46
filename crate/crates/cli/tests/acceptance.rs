//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `--nocapture` to see them all).
//!
//! The episode-level criteria run against the canonical scenario in
//! `configs/canonical.toml`; its thresholds are frozen alongside that
//! calibration.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use pacenav_core::gaussian::Gaussian2;
use pacenav_core::optimizer::gradient_fd;
use pacenav_core::planner::{
    check_planner_gradients, plan_dsc, plan_ptp, plan_tsc, Strategy,
};
use pacenav_core::safety::{
    expected_door_safety, s_door_smooth, s_pair_signed, step_overlap,
};
use pacenav_core::scenario::{intent, load_config, Config, Scenario};
use pacenav_core::selfcheck::{check_kl_against_quadrature, check_overlap_against_monte_carlo};
use pacenav_core::sim::{run_single_shot, EpisodeResult, PlanRecord};
use pacenav_core::traj::Trajectory;

fn canonical() -> &'static Config {
    static CONFIG: OnceLock<Config> = OnceLock::new();
    CONFIG.get_or_init(|| load_config(pacenav_core::CANONICAL_CONFIG).expect("canonical config"))
}

/// The three canonical single-shot episodes, computed once.
fn episodes() -> &'static [EpisodeResult; 3] {
    static EPISODES: OnceLock<[EpisodeResult; 3]> = OnceLock::new();
    EPISODES.get_or_init(|| {
        let cfg = canonical();
        Strategy::ALL.map(|s| {
            run_single_shot(&cfg.scenario, s, &cfg.safety, &cfg.solver)
                .expect("canonical episode")
        })
    })
}

fn episode(strategy: Strategy) -> &'static EpisodeResult {
    episodes()
        .iter()
        .find(|e| e.strategy == strategy)
        .expect("episode for strategy")
}

/// Pedestrian displaced 100 m away in a widened room; the door is wide
/// so that no term of any strategy's problem is active along the intents.
fn degenerate_scenario() -> Scenario {
    let mut sc = canonical().scenario.clone();
    sc.room_width = 220.0;
    sc.door_width = 8.0;
    sc.pedestrian.start = pacenav_core::nalgebra::Vector2::new(106.0, 8.8);
    sc.pedestrian.goal = pacenav_core::nalgebra::Vector2::new(104.0, 1.0);
    sc
}

fn pass(line: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    assert!(
        elapsed <= budget,
        "runtime {elapsed:?} exceeded the stated budget {budget:?}"
    );
    println!("criterion {line} [{elapsed:.2?}]");
}

#[test]
fn criterion_01_kernel_oracles() {
    let started = Instant::now();
    let kl_err = check_kl_against_quadrature(|p, q| p.kl_divergence(q), 42, 20);
    assert!(kl_err <= 1e-5, "kl vs quadrature error {kl_err:e}");
    let overlap_err =
        check_overlap_against_monte_carlo(|p, q| p.overlap(q), 42, 20, 1_000_000);
    assert!(overlap_err <= 0.01, "overlap vs monte carlo error {overlap_err:e}");
    pass(
        &format!("1: PASS kernel oracles (kl {kl_err:.2e}, overlap {overlap_err:.2e})"),
        started,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_02_gradient_integrity() {
    let started = Instant::now();
    let cfg = canonical();
    let mut worst = 0.0f64;
    for strategy in Strategy::ALL {
        let err = check_planner_gradients(strategy, &cfg.scenario, &cfg.safety, 42)
            .expect("gradient check");
        assert!(err <= 1e-4, "{strategy}: analytic gradient error {err:e}");
        worst = worst.max(err);
    }
    // central differences must lose error quadratically in the step
    let f = |z: &[f64]| (z[0]).exp() * (z[1]).sin();
    let z = [0.3f64, 0.9];
    let exact = [z[0].exp() * z[1].sin(), z[0].exp() * z[1].cos()];
    let err_at = |h: f64| {
        let g = gradient_fd(f, &z, h).unwrap();
        g.iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let reduction = err_at(1e-3) / err_at(1e-4);
    assert!(reduction > 20.0, "fd error reduction only {reduction}");
    pass(
        &format!("2: PASS gradient integrity (worst {worst:.2e}, fd reduction {reduction:.0}x)"),
        started,
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_03_degenerate_identity() {
    let started = Instant::now();
    let cfg = canonical();
    let sc = degenerate_scenario();
    let reference = intent(&sc.robot, &sc);

    let ptp = plan_ptp(&sc, &cfg.safety, &cfg.solver).unwrap();
    let tsc = plan_tsc(&sc, &cfg.safety, &cfg.solver).unwrap();
    let dsc = plan_dsc(&sc, &cfg.safety, &cfg.solver).unwrap();
    let devs = [
        ("ptp", ptp.robot.max_deviation(&reference)),
        ("tsc", tsc.robot.max_deviation(&reference)),
        ("dsc", dsc.robot_traj.max_deviation(&reference)),
    ];
    for (name, dev) in devs {
        assert!(dev <= 1e-3, "{name}: robot deviates {dev:e} from intent");
    }
    let kl = dsc.kl_cost_robot + dsc.kl_cost_pedestrian;
    assert!(kl <= 1e-4, "dsc total KL {kl:e}");
    pass(
        &format!(
            "3: PASS degenerate identity (max dev {:.2e}, dsc KL {kl:.2e})",
            devs.iter().map(|d| d.1).fold(0.0, f64::max)
        ),
        started,
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_04_single_shot_signatures() {
    let started = Instant::now();
    let cfg = canonical();
    let sc = &cfg.scenario;
    let dt = sc.dt;

    // (a) the ptp prediction is exactly the pedestrian intent
    let ptp = episode(Strategy::Ptp);
    assert_eq!(
        ptp.pedestrian_executed,
        intent(&sc.pedestrian, sc),
        "ptp prediction must equal the pedestrian intent exactly"
    );

    // (b) ptp dodge signature: crossing gap >= 3 steps or path ratio >= 1.15
    let gap_steps = |e: &EpisodeResult| {
        e.metrics
            .robot_cross_step
            .zip(e.metrics.pedestrian_cross_step)
            .map(|(a, b)| (a as i64 - b as i64).unsigned_abs() as usize)
    };
    let ptp_gap = gap_steps(ptp).expect("ptp crossings");
    assert!(
        ptp_gap >= 3 || ptp.metrics.path_ratio_robot >= 1.15,
        "ptp dodge signature absent: gap {ptp_gap}, ratio {}",
        ptp.metrics.path_ratio_robot
    );

    // (c) tsc static-preference signature on the pedestrian speed profile
    let tsc = episode(Strategy::Tsc);
    let speeds = tsc.pedestrian_executed.speeds();
    let v_pref = sc.pedestrian.v_pref;
    let max_speed = speeds.iter().cloned().fold(0.0, f64::max);
    let dip_then_spike = speeds.iter().enumerate().any(|(i, &s)| {
        s < 0.5 * v_pref && speeds[i + 1..(i + 6).min(speeds.len())].iter().any(|&x| x > v_pref)
    });
    assert!(
        max_speed > 1.2 * v_pref || dip_then_spike,
        "tsc signature absent: max speed {max_speed}, dip-then-spike {dip_then_spike}"
    );

    // (d) dsc simultaneity with safe separation and a near-unity path
    let dsc = episode(Strategy::Dsc);
    let gap = dsc.metrics.simultaneity_gap.expect("dsc crossings");
    assert!(gap <= 2.0 * dt + 1e-12, "dsc simultaneity gap {gap}");
    let radii = sc.robot.radius + sc.pedestrian.radius;
    assert!(
        dsc.metrics.min_pair_distance >= radii,
        "dsc min pair distance {} under radii sum {radii}",
        dsc.metrics.min_pair_distance
    );
    assert!(
        dsc.metrics.path_ratio_robot <= 1.2,
        "dsc path ratio {}",
        dsc.metrics.path_ratio_robot
    );
    for e in episodes() {
        assert!(e.all_converged(), "{} did not converge", e.strategy);
    }
    pass(
        &format!(
            "4: PASS single-shot signatures (ptp gap {ptp_gap}, tsc max speed {:.2}, dsc gap {gap:.2}s)",
            max_speed / v_pref
        ),
        started,
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_05_flexibility_adaptation() {
    let started = Instant::now();
    let cfg = canonical();
    let dsc = episode(Strategy::Dsc);
    let cross = [
        dsc.metrics.robot_cross_step.expect("robot crossing"),
        dsc.metrics.pedestrian_cross_step.expect("ped crossing"),
    ];
    let prefs = [
        dsc.robot_pref_executed.as_ref().unwrap(),
        dsc.pedestrian_pref_executed.as_ref().unwrap(),
    ];
    let priors = [
        2.0 * cfg.scenario.robot.prior_sigma.powi(2),
        2.0 * cfg.scenario.pedestrian.prior_sigma.powi(2),
    ];
    let mut summary = Vec::new();
    for i in 0..2 {
        let traces: Vec<f64> = prefs[i].steps.iter().map(|g| g.flexibility()).collect();
        let (argmin, &min_trace) = traces
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let offset = (argmin as i64 - cross[i] as i64).abs();
        assert!(
            offset <= 3,
            "agent {i}: flexibility minimum at step {argmin}, crossing {}",
            cross[i]
        );
        assert!(
            min_trace <= 0.8 * priors[i],
            "agent {i}: min trace {min_trace} not 20% below prior {}",
            priors[i]
        );
        summary.push(format!(
            "agent{i} min {min_trace:.3} at {argmin} (cross {})",
            cross[i]
        ));
    }
    pass(
        &format!("5: PASS flexibility adaptation ({})", summary.join("; ")),
        started,
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_06_strategy_ordering() {
    let started = Instant::now();
    let gap = |s: Strategy| episode(s).metrics.simultaneity_gap.expect("crossings");
    let ratio = |s: Strategy| episode(s).metrics.path_ratio_robot;
    assert!(
        gap(Strategy::Dsc) < gap(Strategy::Ptp),
        "dsc gap {} not below ptp gap {}",
        gap(Strategy::Dsc),
        gap(Strategy::Ptp)
    );
    let bound = ratio(Strategy::Ptp).min(ratio(Strategy::Tsc)) + 0.02;
    assert!(
        ratio(Strategy::Dsc) <= bound,
        "dsc ratio {} above min(ptp, tsc) + 0.02 = {bound}",
        ratio(Strategy::Dsc)
    );
    pass(
        &format!(
            "6: PASS ordering (gaps dsc {:.2} < ptp {:.2}; ratios dsc {:.3} <= {bound:.3})",
            gap(Strategy::Dsc),
            gap(Strategy::Ptp),
            ratio(Strategy::Dsc)
        ),
        started,
        Duration::from_secs(60),
    );
}

/// Re-evaluates a strategy's posed constraints on its returned plan,
/// independently of the solver's own bookkeeping.
fn max_constraint_violation(e: &EpisodeResult, cfg: &Config) -> f64 {
    let sc = &cfg.scenario;
    let safety = &cfg.safety;
    let radii = sc.robot.radius + sc.pedestrian.radius;
    let mut worst = 0.0f64;
    let mut check = |g: f64| worst = worst.max(-g);
    let kinematics = |t: &Trajectory, v_max: f64, check: &mut dyn FnMut(f64)| {
        for d in t.step_lengths() {
            check(v_max * sc.dt - d);
        }
    };
    match &e.per_replan_plans[0] {
        PlanRecord::Point(p) if e.strategy == Strategy::Ptp => {
            assert_eq!(p.robot.points[0], sc.robot.start, "start anchoring");
            for t in 1..sc.horizon_steps {
                check(
                    s_door_smooth(p.robot.points[t], sc, safety, sc.robot.radius)
                        + s_pair_signed(p.robot.points[t], p.pedestrian.points[t], safety, radii)
                        - safety.gamma,
                );
            }
            kinematics(&p.robot, sc.robot.v_max, &mut check);
        }
        PlanRecord::Point(p) => {
            assert_eq!(p.robot.points[0], sc.robot.start, "start anchoring");
            assert_eq!(p.pedestrian.points[0], sc.pedestrian.start, "start anchoring");
            for t in 1..sc.horizon_steps {
                check(
                    s_pair_signed(p.robot.points[t], p.pedestrian.points[t], safety, radii)
                        - safety.gamma_pair,
                );
            }
            kinematics(&p.robot, sc.robot.v_max, &mut check);
            kinematics(&p.pedestrian, sc.pedestrian.v_max, &mut check);
        }
        PlanRecord::Distribution(d) => {
            assert_eq!(d.robot_pref.steps[0].mean(), sc.robot.start, "start anchoring");
            let eig_lo = safety.sigma_min.powi(2);
            for t in 1..sc.horizon_steps {
                let r = &d.robot_pref.steps[t];
                let h = &d.pedestrian_pref.steps[t];
                check(safety.epsilon_overlap - step_overlap(r, h));
                check(expected_door_safety(r, sc, safety, sc.robot.radius) - safety.gamma_door_exp);
                check(
                    expected_door_safety(h, sc, safety, sc.pedestrian.radius)
                        - safety.gamma_door_exp,
                );
                for (g, spec) in [(r, &sc.robot), (h, &sc.pedestrian)] {
                    let (lo, hi) = pacenav_core::gaussian::sym_eigenvalues(&g.cov());
                    check(lo - eig_lo);
                    check(safety.sigma_max_for(spec.prior_sigma).powi(2) - hi);
                }
            }
            kinematics(&d.robot_traj, sc.robot.v_max, &mut check);
            kinematics(&d.pedestrian_traj, sc.pedestrian.v_max, &mut check);
        }
    }
    worst
}

#[test]
fn criterion_07_constraint_satisfaction() {
    let started = Instant::now();
    let cfg = canonical();
    let mut worst = 0.0f64;
    for e in episodes() {
        assert!(e.all_converged(), "{}: plan did not converge", e.strategy);
        let v = max_constraint_violation(e, cfg);
        assert!(v <= 1e-3, "{}: re-evaluated violation {v:e}", e.strategy);
        worst = worst.max(v);
    }
    pass(
        &format!("7: PASS constraint satisfaction (worst re-evaluated violation {worst:.2e})"),
        started,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_08_symmetry_suite() {
    let started = Instant::now();
    let cfg = canonical();
    let sc = &cfg.scenario;
    let mirrored = sc.mirrored();
    let cx = sc.door_center_x;
    let mirror_err = |a: &Trajectory, b: &Trajectory| {
        a.points
            .iter()
            .zip(&b.points)
            .map(|(p, q)| ((2.0 * cx - p.x) - q.x).abs().max((p.y - q.y).abs()))
            .fold(0.0f64, f64::max)
    };

    let mut worst = 0.0f64;
    // ptp
    let a = plan_ptp(sc, &cfg.safety, &cfg.solver).unwrap();
    let b = plan_ptp(&mirrored, &cfg.safety, &cfg.solver).unwrap();
    worst = worst.max(mirror_err(&a.robot, &b.robot));
    // tsc mirror and role swap
    let a = plan_tsc(sc, &cfg.safety, &cfg.solver).unwrap();
    let b = plan_tsc(&mirrored, &cfg.safety, &cfg.solver).unwrap();
    worst = worst.max(mirror_err(&a.robot, &b.robot));
    worst = worst.max(mirror_err(&a.pedestrian, &b.pedestrian));
    let swapped = plan_tsc(&sc.swapped(), &cfg.safety, &cfg.solver).unwrap();
    worst = worst.max(a.robot.max_deviation(&swapped.pedestrian));
    worst = worst.max(a.pedestrian.max_deviation(&swapped.robot));
    // dsc, including covariances (mirroring negates the off-diagonal)
    let a = plan_dsc(sc, &cfg.safety, &cfg.solver).unwrap();
    let b = plan_dsc(&mirrored, &cfg.safety, &cfg.solver).unwrap();
    worst = worst.max(mirror_err(&a.robot_traj, &b.robot_traj));
    worst = worst.max(mirror_err(&a.pedestrian_traj, &b.pedestrian_traj));
    for (p, q) in a
        .robot_pref
        .steps
        .iter()
        .zip(&b.robot_pref.steps)
        .chain(a.pedestrian_pref.steps.iter().zip(&b.pedestrian_pref.steps))
    {
        let (cp, cq) = (p.cov(), q.cov());
        worst = worst
            .max((cp[(0, 0)] - cq[(0, 0)]).abs())
            .max((cp[(1, 1)] - cq[(1, 1)]).abs())
            .max((cp[(0, 1)] + cq[(0, 1)]).abs());
    }
    assert!(worst <= 1e-6, "symmetry error {worst:e}");
    pass(
        &format!("8: PASS symmetry suite (worst mirror/swap error {worst:.2e})"),
        started,
        Duration::from_secs(300),
    );
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pacenav"))
        .args(args)
        .output()
        .expect("spawn pacenav")
}

fn canonical_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/canonical.toml")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn criterion_09_artifact_determinism() {
    let started = Instant::now();
    let scenario = canonical_path();
    let tmp = std::env::temp_dir().join("pacenav-acceptance-determinism");
    let (out_a, out_b) = (tmp.join("a"), tmp.join("b"));
    for out in [&out_a, &out_b] {
        let _ = std::fs::remove_dir_all(out);
        let output = run_cli(&[
            "compare",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            output.status.success(),
            "compare failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    let a = read_dir_sorted(&out_a);
    let b = read_dir_sorted(&out_b);
    assert_eq!(a.len(), 7, "expected 3 episodes + 3 figures + metrics table");
    assert_eq!(a, b, "artifact bytes differ between identical runs");
    pass(
        &format!("9: PASS determinism ({} byte-identical artifacts)", a.len()),
        started,
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_10_closed_loop() {
    let started = Instant::now();
    let scenario = canonical_path();
    let out = std::env::temp_dir().join("pacenav-acceptance-closed-loop");
    let _ = std::fs::remove_dir_all(&out);
    let output = run_cli(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--strategy",
        "dsc",
        "--pedestrian",
        "mirror",
        "--replan-every",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "simulate exited {:?}: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("timed_out=false"), "unexpected: {stdout}");
    // the episode must carry safe distances all the way through
    let episode = pacenav_core::artifacts::read_episode(&out.join("episode_dsc.toml")).unwrap();
    let cfg = canonical();
    let radii = cfg.scenario.robot.radius + cfg.scenario.pedestrian.radius;
    assert!(episode.metrics.min_pair_distance >= radii);
    pass(
        &format!(
            "10: PASS closed loop (min pair distance {:.3} m)",
            episode.metrics.min_pair_distance
        ),
        started,
        Duration::from_secs(600),
    );
}

// keep the unused-import lint honest about Gaussian2 (used through the
// episode documents)
#[allow(dead_code)]
fn _types(_: Gaussian2) {}
