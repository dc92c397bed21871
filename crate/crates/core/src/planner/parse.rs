//! Strict parsing of the meta-agent's JSON plan output.
//!
//! The model output may wrap the array in prose or code fences; the first
//! well-formed JSON array of objects is taken as the plan.

use serde_json::Value;

use super::plan::{Plan, Roster, SubTask};
use crate::error::{Error, Result};

/// Finds the first well-formed JSON array whose elements are all objects.
pub fn extract_json_array(raw: &str) -> Option<Vec<Value>> {
    for (i, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            if items.iter().all(Value::is_object) {
                return Some(items);
            }
        }
    }
    None
}

fn as_id(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn subtask_from_value(i: usize, v: &Value) -> Result<SubTask> {
    let field = |name: &str| {
        v.get(name)
            .ok_or_else(|| Error::PlanParse(format!("entry {i} is missing `{name}`")))
    };
    let text = |name: &str| -> Result<String> {
        field(name)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::PlanParse(format!("entry {i}: `{name}` must be a string")))
    };
    let id = as_id(field("id")?)
        .ok_or_else(|| Error::PlanParse(format!("entry {i}: `id` must be a non-negative integer")))?;
    let deps = match field("dep")? {
        Value::Null => Vec::new(),
        Value::Array(items) => items
            .iter()
            .map(|d| as_id(d).ok_or_else(|| Error::PlanParse(format!("entry {i}: bad dependency {d}"))))
            .collect::<Result<Vec<_>>>()?,
        single => vec![as_id(single).ok_or_else(|| Error::PlanParse(format!("entry {i}: bad dependency {single}")))?],
    };
    let reason = match v.get("reason") {
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    };
    Ok(SubTask {
        id,
        task: text("task")?,
        agent_name: text("name")?,
        reason,
        deps,
    })
}

/// Parses sub-tasks without validating them as a plan.
pub fn parse_subtasks(raw: &str) -> Result<Vec<SubTask>> {
    let items =
        extract_json_array(raw).ok_or_else(|| Error::PlanParse("no JSON array of sub-task objects found".into()))?;
    items
        .iter()
        .enumerate()
        .map(|(i, v)| subtask_from_value(i, v))
        .collect()
}

/// Parses and validates a complete plan.
pub fn parse_plan(raw: &str, query_id: &str, roster: &Roster) -> Result<Plan> {
    Plan::new(query_id, parse_subtasks(raw)?, roster)
}
