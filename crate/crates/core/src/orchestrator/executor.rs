//! Dependency-ordered plan execution with history threading.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::agents::AgentPool;
use crate::planner::Plan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Failed,
}

/// Intermediate products kept for auditing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifacts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_output: Option<String>,
    /// The extracted final value, when the agent separates it from its
    /// reasoning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub subtask_id: u32,
    pub task: String,
    pub agent_name: String,
    pub response: String,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub artifacts: Artifacts,
}

impl ExecutionRecord {
    /// The value passed downstream: the extracted answer if there is one,
    /// otherwise the full response.
    pub fn answer(&self) -> &str {
        self.artifacts.answer.as_deref().unwrap_or(&self.response)
    }

    pub fn is_ok(&self) -> bool {
        self.status == RecordStatus::Ok
    }
}

/// Renders `(task, answer)` pairs as the History slot of agent prompts, or
/// `None` when there are none.
pub fn format_history(items: &[(&str, &str)]) -> String {
    if items.is_empty() {
        return "None".into();
    }
    items
        .iter()
        .map(|(task, answer)| {
            let task = task.trim().trim_end_matches('.');
            let answer = answer.trim();
            let stop = if answer.ends_with(['.', '!', '?']) { "" } else { "." };
            format!("The answer of '{task}' is {answer}{stop}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Groups sub-task ids into waves: each wave depends only on earlier ones.
/// Within a wave, ids keep plan order.
pub fn waves(plan: &Plan) -> Vec<Vec<u32>> {
    let mut level: HashMap<u32, usize> = HashMap::new();
    for id in plan.topological_order() {
        let s = plan.get(id).expect("ordered ids exist");
        let l = s.deps.iter().map(|d| level[d] + 1).max().unwrap_or(0);
        level.insert(id, l);
    }
    let depth = level.values().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); depth];
    for s in plan.subtasks() {
        out[level[&s.id]].push(s.id);
    }
    out
}

/// Executes every sub-task once, in waves of mutually independent
/// sub-tasks with at most `width` running at a time. A sub-task whose
/// dependency failed is marked failed without calling its agent. Records
/// are returned in execution order.
pub fn execute_plan(plan: &Plan, pool: &AgentPool, width: usize) -> Vec<ExecutionRecord> {
    let width = width.max(1);
    let mut done: HashMap<u32, ExecutionRecord> = HashMap::new();
    let mut records = Vec::with_capacity(plan.len());
    for wave in waves(plan) {
        for chunk in wave.chunks(width) {
            let results: Vec<ExecutionRecord> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&id| {
                        let subtask = plan.get(id).expect("wave ids exist");
                        let blocked = subtask.deps.iter().find(|d| !done[d].is_ok()).copied();
                        let history_items: Vec<(String, String)> = plan
                            .ancestors(id)
                            .into_iter()
                            .filter_map(|a| done.get(&a).filter(|r| r.is_ok()))
                            .map(|r| (plan.get(r.subtask_id).unwrap().task.clone(), r.answer().to_string()))
                            .collect();
                        scope.spawn(move || {
                            if let Some(dep) = blocked {
                                return ExecutionRecord {
                                    subtask_id: id,
                                    task: subtask.task.clone(),
                                    agent_name: subtask.agent_name.clone(),
                                    response: String::new(),
                                    status: RecordStatus::Failed,
                                    error: Some(format!("dependency {dep} failed")),
                                    artifacts: Artifacts::default(),
                                };
                            }
                            let pairs: Vec<(&str, &str)> =
                                history_items.iter().map(|(t, a)| (t.as_str(), a.as_str())).collect();
                            pool.run(subtask, &format_history(&pairs))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("agent thread panicked"))
                    .collect()
            });
            for r in results {
                if !r.is_ok() {
                    log::warn!(
                        "sub-task {} failed: {}",
                        r.subtask_id,
                        r.error.as_deref().unwrap_or("unknown")
                    );
                }
                done.insert(r.subtask_id, r.clone());
                records.push(r);
            }
        }
    }
    records
}
