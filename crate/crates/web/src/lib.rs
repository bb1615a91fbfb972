//! Browser bindings for the demo page in `www/`.
//!
//! Three operations: generate an instance, solve one approach on it, and score a hand-picked
//! selection zone by zone. Each has a plain Rust version returning JSON (tested natively) and
//! a thin `wasm_bindgen` wrapper.

use std::time::Duration;

use robust_capture::adversary::{mixture_sets, AdversaryOptions};
use robust_capture::bench::{solve_approach, Approach, ApproachConfig, SolverChoice};
use robust_capture::instance::{generate, GeneratedModel, GeneratorConfig, Instance, EXPERIMENT_MU};
use robust_capture::objective::{capture, eval_mixed, eval_worst_case, indicator, support, CaptureObjective, DeterministicObjective};
use robust_capture::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Sample sizes and limits are kept small so the page stays responsive.
const SA_SCORING_SAMPLES: usize = 200;
const OA_TIME_LIMIT: Duration = Duration::from_secs(20);

#[derive(Serialize)]
pub struct SolveResult {
    pub approach: String,
    pub solver: String,
    /// 1-based.
    pub selected: Vec<usize>,
    /// Value of the criterion the approach optimizes.
    pub objective: f64,
    pub worst_case: f64,
    pub milliseconds: f64,
}

#[derive(Serialize)]
pub struct ZoneScore {
    pub demand: f64,
    pub nominal: f64,
    pub worst_case: f64,
    pub tau_hat: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Serialize)]
pub struct Evaluation {
    pub selected: Vec<usize>,
    pub nominal: f64,
    pub mixed: f64,
    pub worst_case: f64,
    pub zones: Vec<ZoneScore>,
}

pub fn generate_json(zones: usize, locations: usize, capacity: usize, types: usize, nested: bool, seed: u64) -> Result<String> {
    let model = if nested { GeneratedModel::Nested { mu: EXPERIMENT_MU.to_vec() } } else { GeneratedModel::Mnl };
    let config = GeneratorConfig { num_zones: zones, m: locations, capacity, num_types: types, model, seed, ..GeneratorConfig::default() };
    generate(&config)?.to_json()
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)?)
}

pub fn solve_json(instance: &str, epsilon: f64, approach: &str, solver: &str) -> Result<String> {
    let instance = Instance::from_json(instance)?;
    let approach: Approach = approach.parse()?;
    let mut config = ApproachConfig::new(approach, epsilon, 0);
    config.solver = solver.parse::<SolverChoice>()?;
    config.sa_worstcase_samples = SA_SCORING_SAMPLES;
    config.oa.time_limit = Some(OA_TIME_LIMIT);
    let sets = mixture_sets(instance.num_zones(), epsilon)?;
    let (solution, seconds) = solve_approach(&instance, &sets, &config)?;
    let worst_case = eval_worst_case(&instance, &sets, &solution.x, &AdversaryOptions::default())?.value;
    to_json(&SolveResult {
        approach: approach.name().into(),
        solver: solution.solver.name().into(),
        selected: support(&solution.x).iter().map(|j| j + 1).collect(),
        objective: solution.value,
        worst_case,
        milliseconds: seconds * 1e3,
    })
}

/// `selected` is 1-based.
pub fn evaluate_json(instance: &str, epsilon: f64, selected: &[usize]) -> Result<String> {
    let instance = Instance::from_json(instance)?;
    if let Some(&j) = selected.iter().find(|&&j| j == 0 || j > instance.m) {
        return Err(Error::InvalidArgument(format!("location {j} is outside 1..={}", instance.m)));
    }
    let zero_based: Vec<usize> = selected.iter().map(|j| j - 1).collect();
    let x = indicator(instance.m, &zero_based);
    let sets = mixture_sets(instance.num_zones(), epsilon)?;
    let worst = eval_worst_case(&instance, &sets, &x, &AdversaryOptions::default())?;
    let nominal = DeterministicObjective::mean_utilities(&instance);
    let zones = instance
        .zones
        .iter()
        .zip(&worst.per_zone)
        .enumerate()
        .map(|(i, (zone, cert))| {
            Ok(ZoneScore {
                demand: zone.q,
                nominal: nominal.zone_capture(i, &x, None)?,
                worst_case: capture(zone.q, cert.phi),
                tau_hat: zone.tau_hat.clone(),
                eta: cert.eta.clone().unwrap_or_default(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    to_json(&Evaluation {
        selected: support(&x).iter().map(|j| j + 1).collect(),
        nominal: nominal.value(&x)?,
        mixed: eval_mixed(&instance, &x)?,
        worst_case: worst.value,
        zones,
    })
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = generateInstance)]
pub fn generate_instance(zones: u32, locations: u32, capacity: u32, types: u32, nested: bool, seed: u32) -> std::result::Result<String, JsError> {
    generate_json(zones as usize, locations as usize, capacity as usize, types as usize, nested, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn solve(instance: &str, epsilon: f64, approach: &str, solver: &str) -> std::result::Result<String, JsError> {
    solve_json(instance, epsilon, approach, solver).map_err(js)
}

#[wasm_bindgen]
pub fn evaluate(instance: &str, epsilon: f64, selected: Vec<u32>) -> std::result::Result<String, JsError> {
    let selected: Vec<usize> = selected.into_iter().map(|j| j as usize).collect();
    evaluate_json(instance, epsilon, &selected).map_err(js)
}
