use std::collections::HashMap;

use super::plan::{validate, Plan, Roster, SubTask};
use crate::error::{Error, PlanViolation, Result};

/// Replaces sub-task `original` with `replacements`.
///
/// Replacement ids are response-local: they are remapped to fresh ids above
/// the plan's current maximum. A dependency naming another replacement's
/// local id refers to that replacement; any other dependency must name a
/// sub-task of the existing plan.
///
/// Wiring rules:
/// - the first replacement inherits the original's dependencies;
/// - a later replacement without explicit dependencies follows the previous
///   replacement (linear chain);
/// - sub-tasks that depended on the original now depend on the last
///   replacement.
pub fn splice(plan: &Plan, original: u32, replacements: Vec<SubTask>, roster: &Roster) -> Result<(Plan, Vec<SubTask>)> {
    let position = plan
        .subtasks()
        .iter()
        .position(|s| s.id == original)
        .ok_or_else(|| Error::precondition(format!("no sub-task {original} in plan")))?;
    if replacements.is_empty() {
        return Err(Error::PlanParse("plan-in-detail returned no sub-tasks".into()));
    }
    let removed = &plan.subtasks()[position];

    let mut fresh: HashMap<u32, u32> = HashMap::new();
    for (next, r) in (plan.max_id() + 1..).zip(&replacements) {
        if fresh.insert(r.id, next).is_some() {
            return Err(Error::Splice(PlanViolation::DuplicateId(r.id)));
        }
    }

    let map_dep = |owner: u32, d: u32| -> Result<u32> {
        if let Some(&id) = fresh.get(&d) {
            return Ok(id);
        }
        if d != original && plan.get(d).is_some() {
            return Ok(d);
        }
        Err(Error::Splice(PlanViolation::MissingDependency { id: owner, dep: d }))
    };

    let mut new_tasks: Vec<SubTask> = Vec::with_capacity(replacements.len());
    for (i, r) in replacements.iter().enumerate() {
        let id = fresh[&r.id];
        let mut deps = Vec::new();
        if i == 0 {
            deps.extend(removed.deps.iter().copied());
        }
        let explicit = r.deps.iter().map(|&d| map_dep(id, d)).collect::<Result<Vec<_>>>()?;
        if i > 0 && explicit.is_empty() {
            deps.push(new_tasks[i - 1].id);
        }
        for d in explicit {
            if !deps.contains(&d) {
                deps.push(d);
            }
        }
        new_tasks.push(SubTask {
            id,
            task: r.task.clone(),
            agent_name: r.agent_name.clone(),
            reason: r.reason.clone(),
            deps,
        });
    }
    let sink = new_tasks.last().expect("non-empty").id;

    let mut subtasks = Vec::with_capacity(plan.len() + new_tasks.len() - 1);
    for (i, s) in plan.subtasks().iter().enumerate() {
        if i == position {
            subtasks.extend(new_tasks.iter().cloned());
            continue;
        }
        let mut s = s.clone();
        if s.deps.contains(&original) {
            let mut deps = Vec::with_capacity(s.deps.len());
            for d in s.deps.iter().map(|&d| if d == original { sink } else { d }) {
                if !deps.contains(&d) {
                    deps.push(d);
                }
            }
            s.deps = deps;
        }
        subtasks.push(s);
    }

    match validate(&subtasks, Some(roster)) {
        Ok(()) => {}
        Err(v @ PlanViolation::Cycle(_)) => return Err(Error::Splice(v)),
        Err(v) => return Err(Error::PlanValidation(v)),
    }
    let spliced = Plan::new(plan.query_id(), subtasks, roster)?;
    Ok((spliced, new_tasks))
}
