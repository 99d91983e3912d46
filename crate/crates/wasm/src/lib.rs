//! Browser bindings for the planning library: run a strategy on a
//! variant of the canonical scenario and get back the rendered SVG and
//! the metrics, straight from the same code paths the CLI uses.
//!
//! Build with `wasm-pack build --target web crates/wasm` (or
//! `cargo build --target wasm32-unknown-unknown` plus `wasm-bindgen`);
//! the static page in `www/` loads the generated module.

#![cfg(target_arch = "wasm32")]

use wasm_bindgen::prelude::*;

use pacenav_core::artifacts::{metrics_table_to_string, render_episode_string};
use pacenav_core::planner::Strategy;
use pacenav_core::scenario::{load_config, Config};
use pacenav_core::sim::run_single_shot;

fn config_with(door_width_m: f64, prior_sigma_m: f64, epsilon_overlap: f64) -> Result<Config, JsValue> {
    let mut cfg = load_config(pacenav_core::CANONICAL_CONFIG)
        .map_err(|e| JsValue::from_str(&e.to_string()))?;
    cfg.scenario.door_width = door_width_m;
    cfg.scenario.robot.prior_sigma = prior_sigma_m;
    cfg.scenario.pedestrian.prior_sigma = prior_sigma_m;
    cfg.safety.epsilon_overlap = epsilon_overlap;
    Ok(cfg)
}

/// Runs one single-shot episode on the adjusted canonical scenario and
/// returns the rendered SVG document.
#[wasm_bindgen]
pub fn plan_svg(
    strategy: &str,
    door_width_m: f64,
    prior_sigma_m: f64,
    epsilon_overlap: f64,
) -> Result<String, JsValue> {
    let strategy: Strategy = strategy
        .parse()
        .map_err(|e: pacenav_core::Error| JsValue::from_str(&e.to_string()))?;
    let cfg = config_with(door_width_m, prior_sigma_m, epsilon_overlap)?;
    let episode = run_single_shot(&cfg.scenario, strategy, &cfg.safety, &cfg.solver)
        .map_err(|e| JsValue::from_str(&e.to_string()))?;
    Ok(render_episode_string(&episode, &cfg.scenario))
}

/// Runs all three strategies on the adjusted canonical scenario and
/// returns the combined metrics table (CSV).
#[wasm_bindgen]
pub fn compare_metrics_csv(
    door_width_m: f64,
    prior_sigma_m: f64,
    epsilon_overlap: f64,
) -> Result<String, JsValue> {
    let cfg = config_with(door_width_m, prior_sigma_m, epsilon_overlap)?;
    let mut episodes = Vec::new();
    for strategy in Strategy::ALL {
        episodes.push(
            run_single_shot(&cfg.scenario, strategy, &cfg.safety, &cfg.solver)
                .map_err(|e| JsValue::from_str(&e.to_string()))?,
        );
    }
    metrics_table_to_string(&episodes).map_err(|e| JsValue::from_str(&e.to_string()))
}

/// The canonical scenario config text, for display in the page.
#[wasm_bindgen]
pub fn canonical_config() -> String {
    pacenav_core::CANONICAL_CONFIG.to_string()
}
