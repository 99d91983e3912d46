//! Command-line runner: single plans, three-way comparisons, closed-loop
//! simulation, parameter sweeps, and numerical self-checks.
//!
//! Exit codes: 0 success, 1 runtime error, 2 plan did not converge,
//! 3 closed-loop timeout, 64 usage error, 65 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use pacenav_core::artifacts::{render_episode, write_episode, write_metrics_table};
use pacenav_core::planner::Strategy;
use pacenav_core::scenario::{load_config, Config};
use pacenav_core::selfcheck::run_selfcheck;
use pacenav_core::sim::{run_receding_horizon, run_single_shot, EpisodeResult, PedestrianModel};
use pacenav_core::Error;

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_CONFIG: u8 = 65;

#[derive(Parser)]
#[command(
    name = "pacenav",
    about = "Coupled prediction/planning benchmark on the bottleneck-door scenario",
    after_help = "Exit codes: 0 success, 1 runtime error, 2 plan did not converge, \
                  3 simulation timeout, 64 usage error, 65 configuration error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArg {
    /// Path to a scenario config file (see configs/canonical.toml)
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one single-shot planning episode and write its artifacts
    Plan {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Planning strategy: ptp, tsc or dsc
        #[arg(long)]
        strategy: String,
        /// Output directory (created if absent)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all three strategies single-shot on the same scenario
    Compare {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop receding-horizon simulation
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        strategy: String,
        /// Ground-truth pedestrian model: mirror or scripted
        #[arg(long)]
        pedestrian: String,
        /// Execute this many steps between replans
        #[arg(long, default_value_t = 2)]
        replan_every: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one single-shot episode per value of a swept parameter
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Swept parameter: door_width_m, gamma, prior_sigma or epsilon_overlap
        #[arg(long)]
        param: String,
        /// Comma-separated list of values
        #[arg(long)]
        values: String,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the numerical self-check suite and print a pass/fail table
    Selfcheck {
        /// Seed for the Monte Carlo oracles
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit 0
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::from(EXIT_OK);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

/// An error paired with the exit code it maps to.
struct CliFailure {
    code: u8,
    error: Error,
}

impl From<Error> for CliFailure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Parse(_) | Error::Validation(_) => EXIT_CONFIG,
            Error::Contract(_) => EXIT_USAGE,
            _ => EXIT_ERROR,
        };
        CliFailure { code, error }
    }
}

/// Loads the scenario config; any failure here (including a missing
/// file) is a configuration error.
fn load(path: &Path) -> Result<Config, CliFailure> {
    let result = std::fs::read_to_string(path)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
        .and_then(|text| load_config(&text));
    result.map_err(|error| CliFailure {
        code: EXIT_CONFIG,
        error,
    })
}

fn prepare_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn summary_line(episode: &EpisodeResult) -> String {
    let m = &episode.metrics;
    let gap = m
        .simultaneity_gap
        .map_or("none".to_string(), |g| format!("{g:.2}s"));
    format!(
        "{}: converged={} cross_gap={} path_ratio_robot={:.3} min_pair={:.3}m{}",
        episode.strategy,
        episode.all_converged(),
        gap,
        m.path_ratio_robot,
        m.min_pair_distance,
        m.flexibility_min_robot
            .map_or(String::new(), |f| format!(" min_flexibility={f:.3}m^2")),
    )
}

fn write_episode_artifacts(episode: &EpisodeResult, out: &Path) -> Result<(), Error> {
    let name = episode.strategy.to_string();
    write_episode(episode, &out.join(format!("episode_{name}.toml")))?;
    render_episode(episode, &episode.scenario, &out.join(format!("episode_{name}.svg")))?;
    Ok(())
}

fn run(command: Command) -> Result<u8, CliFailure> {
    match command {
        Command::Plan {
            scenario,
            strategy,
            out,
        } => {
            let strategy = Strategy::from_str(&strategy)?;
            let cfg = load(&scenario.scenario)?;
            prepare_out(&out)?;
            let episode = run_single_shot(&cfg.scenario, strategy, &cfg.safety, &cfg.solver)?;
            write_episode_artifacts(&episode, &out)?;
            write_metrics_table(std::slice::from_ref(&episode), &out.join("metrics.csv"))?;
            println!("{}", summary_line(&episode));
            Ok(if episode.all_converged() {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            })
        }
        Command::Compare { scenario, out } => {
            let cfg = load(&scenario.scenario)?;
            prepare_out(&out)?;
            let mut episodes = Vec::new();
            for strategy in Strategy::ALL {
                let episode = run_single_shot(&cfg.scenario, strategy, &cfg.safety, &cfg.solver)?;
                write_episode_artifacts(&episode, &out)?;
                println!("{}", summary_line(&episode));
                episodes.push(episode);
            }
            write_metrics_table(&episodes, &out.join("metrics.csv"))?;
            Ok(if episodes.iter().all(|e| e.all_converged()) {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            })
        }
        Command::Simulate {
            scenario,
            strategy,
            pedestrian,
            replan_every,
            out,
        } => {
            let strategy = Strategy::from_str(&strategy)?;
            let pedestrian = PedestrianModel::from_str(&pedestrian)?;
            if replan_every == 0 {
                return Err(Error::Contract("--replan-every must be at least 1".into()).into());
            }
            let cfg = load(&scenario.scenario)?;
            prepare_out(&out)?;
            let episode = run_receding_horizon(
                &cfg.scenario,
                strategy,
                &cfg.safety,
                &cfg.solver,
                replan_every,
                pedestrian,
            )?;
            write_episode_artifacts(&episode, &out)?;
            write_metrics_table(std::slice::from_ref(&episode), &out.join("metrics.csv"))?;
            println!(
                "{} (pedestrian={pedestrian}, replan_every={replan_every}, timed_out={})",
                summary_line(&episode),
                episode.timed_out
            );
            Ok(if episode.timed_out { EXIT_TIMEOUT } else { EXIT_OK })
        }
        Command::Sweep {
            scenario,
            param,
            values,
            strategy,
            out,
        } => {
            let strategy = Strategy::from_str(&strategy)?;
            let cfg = load(&scenario.scenario)?;
            let parsed: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        Error::Contract(format!("non-numeric sweep value '{}'", v.trim()))
                    })
                })
                .collect::<Result<_, _>>()?;
            if parsed.is_empty() {
                return Err(Error::Contract("empty sweep value list".into()).into());
            }
            prepare_out(&out)?;
            let mut episodes = Vec::new();
            for value in &parsed {
                let mut c = cfg.clone();
                match param.as_str() {
                    "door_width_m" => c.scenario.door_width = *value,
                    "gamma" => c.safety.gamma = *value,
                    "prior_sigma" => {
                        c.scenario.robot.prior_sigma = *value;
                        c.scenario.pedestrian.prior_sigma = *value;
                    }
                    "epsilon_overlap" => c.safety.epsilon_overlap = *value,
                    other => {
                        return Err(Error::Contract(format!(
                            "unknown sweep parameter '{other}' (expected door_width_m, gamma, \
                             prior_sigma or epsilon_overlap)"
                        ))
                        .into())
                    }
                }
                let episode = run_single_shot(&c.scenario, strategy, &c.safety, &c.solver)?;
                println!("{param}={value}: {}", summary_line(&episode));
                episodes.push(episode);
            }
            write_metrics_table(&episodes, &out.join("metrics.csv"))?;
            Ok(EXIT_OK)
        }
        Command::Selfcheck { seed } => {
            let results = run_selfcheck(seed)?;
            let mut all_ok = true;
            println!(
                "{:<36} {:>12} {:>12} {:>6}",
                "check", "measured", "threshold", "state"
            );
            for r in &results {
                all_ok &= r.passed();
                println!(
                    "{:<36} {:>12.3e} {:>12.3e} {:>6}",
                    r.name,
                    r.measured,
                    r.threshold,
                    if r.passed() { "pass" } else { "FAIL" }
                );
            }
            Ok(if all_ok { EXIT_OK } else { EXIT_ERROR })
        }
    }
}
