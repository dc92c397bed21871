//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each binding takes and returns JSON strings; the `*_json` functions hold
//! the logic so it can be tested natively.

use std::collections::HashMap;

use agentplan::orchestrator::{route, waves, RewardScorer, RoutingConfig, SimilaritySource};
use agentplan::planner::{parse_plan, AgentDescriptor, Roster};
use agentplan::reward::synthetic::{planted_dataset, PlantedConfig};
use agentplan::reward::{train_features, RewardModel, TrainConfig};
use agentplan::works::Witness;
use ndarray::Array1;
use serde::Serialize;
use wasm_bindgen::prelude::*;

struct TableScorer(HashMap<String, f64>);

impl RewardScorer for TableScorer {
    fn score(&self, _: &str, agent: &AgentDescriptor) -> agentplan::Result<f64> {
        Ok(self.0.get(&agent.name).copied().unwrap_or(0.0))
    }
}

struct Nearest(Option<f64>);

impl SimilaritySource for Nearest {
    fn nearest(&self, _: &str, _: &Roster) -> agentplan::Result<Option<Witness>> {
        Ok(self.0.map(|sim| Witness {
            agent_name: "search_agent".into(),
            task_text: "Determine the population of China in 2022.".into(),
            sim,
        }))
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// The standard roster as `[{name, description}]`.
pub fn agents_json() -> String {
    let list: Vec<_> = Roster::standard()
        .iter()
        .map(|a| serde_json::json!({ "name": a.name, "description": a.description }))
        .collect();
    serde_json::Value::Array(list).to_string()
}

/// Routes one sub-task given every agent's score (`{"name": score}`) and the
/// similarity of the closest stored work. A negative similarity means the
/// store is empty.
pub fn route_json(scores: &str, assigned: &str, sim: f64, allow_redescribe: bool) -> Result<String, String> {
    let scores: HashMap<String, f64> = serde_json::from_str(scores).map_err(|e| format!("scores: {e}"))?;
    let roster = Roster::standard();
    let task = agentplan::planner::SubTask::new(1, "Demo sub-task.", assigned, vec![]);
    let nearest = Nearest((sim >= 0.0).then_some(sim));
    let d = route(
        &task,
        &roster,
        &TableScorer(scores),
        &nearest,
        &RoutingConfig::default(),
        allow_redescribe,
    )
    .map_err(|e| e.to_string())?;
    to_json(&d)
}

#[derive(Serialize)]
struct PlanView {
    subtasks: Vec<agentplan::planner::SubTask>,
    order: Vec<u32>,
    waves: Vec<Vec<u32>>,
}

/// Parses planner output and returns the plan with its execution order.
pub fn plan_json(text: &str) -> Result<String, String> {
    let plan = parse_plan(text, "demo", &Roster::standard()).map_err(|e| e.to_string())?;
    to_json(&PlanView {
        subtasks: plan.subtasks().to_vec(),
        order: plan.topological_order(),
        waves: waves(&plan),
    })
}

/// Trains a fresh regressor on planted data and returns the per-epoch
/// history.
pub fn loss_curve_json(examples: usize, dim: usize, epochs: usize, lr: f64, seed: u64) -> Result<String, String> {
    let pc = PlantedConfig {
        examples,
        dim,
        seed,
        ..Default::default()
    };
    let data = planted_dataset(&pc);
    let model = RewardModel::new(&[2 * dim, 64, 32, 1], seed).map_err(|e| e.to_string())?;
    let w = Array1::from_elem(examples, 1.0 / examples.max(1) as f64);
    let tc = TrainConfig {
        epochs,
        learning_rate: lr,
        seed,
        ..Default::default()
    };
    let report =
        train_features(model, data.features.view(), data.targets.view(), w.view(), &tc).map_err(|e| e.to_string())?;
    to_json(&report.history)
}

#[wasm_bindgen]
pub fn agents() -> String {
    agents_json()
}

#[wasm_bindgen]
pub fn route_subtask(scores: &str, assigned: &str, sim: f64, allow_redescribe: bool) -> Result<String, JsError> {
    route_json(scores, assigned, sim, allow_redescribe).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn inspect_plan(text: &str) -> Result<String, JsError> {
    plan_json(text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn loss_curve(examples: usize, dim: usize, epochs: usize, lr: f64, seed: u64) -> Result<String, JsError> {
    loss_curve_json(examples, dim, epochs, lr, seed).map_err(|e| JsError::new(&e))
}
