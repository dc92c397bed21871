use std::collections::{HashSet, VecDeque};

use super::routing::{route, RewardScorer, RoutingConfig, SimilaritySource, Verdict};
use super::trace::RunTrace;
use crate::error::{Error, Result};
use crate::planner::{MetaPlanner, Plan, Query, SubTask};

/// Routes every sub-task and applies the resulting modifications until each
/// sub-task is accepted (possibly after reassignment).
///
/// Re-described and newly detailed sub-tasks are routed again before the
/// rest of the queue; a replan restarts routing on the new plan. Replan,
/// re-describe and plan-in-detail each consume one unit of
/// `max_modifications`, which bounds the loop for any backend behaviour.
pub fn stabilize(
    planner: &MetaPlanner,
    scorer: &dyn RewardScorer,
    works: &dyn SimilaritySource,
    cfg: &RoutingConfig,
    query: &Query,
    initial: Plan,
    trace: &mut RunTrace,
) -> Result<Plan> {
    let roster = planner.roster();
    let mut plan = initial;
    let mut queue: VecDeque<u32> = plan.topological_order().into();
    let mut redescribed: HashSet<u32> = HashSet::new();
    let mut modifications = 0u32;
    let exhausted = |reason: String, best: &Plan| Error::StabilizationBudgetExhausted {
        reason,
        best: Box::new(best.clone()),
    };

    while let Some(id) = queue.pop_front() {
        let Some(subtask) = plan.get(id).cloned() else { continue };
        let decision = route(&subtask, roster, scorer, works, cfg, !redescribed.contains(&id))?;
        let verdict = decision.verdict.clone();
        trace.decisions.push(decision);
        if !matches!(verdict, Verdict::Accept | Verdict::Reassign { .. }) {
            if modifications >= cfg.max_modifications {
                return Err(exhausted(
                    format!("{} plan modifications used", cfg.max_modifications),
                    &plan,
                ));
            }
            modifications += 1;
        }
        match verdict {
            Verdict::Accept => {}
            Verdict::Reassign { agent } => {
                plan = plan.with_subtask(
                    SubTask {
                        agent_name: agent,
                        ..subtask
                    },
                    roster,
                )?;
                trace.push_plan("reassign", &plan);
            }
            Verdict::Replan => {
                plan = match planner.replan(query, &plan, id) {
                    Ok(p) => p,
                    Err(e @ Error::ReplanBudgetExhausted { .. }) => return Err(exhausted(e.to_string(), &plan)),
                    Err(e) => return Err(e),
                };
                trace.push_plan("replan", &plan);
                redescribed.clear();
                queue = plan.topological_order().into();
            }
            Verdict::ReDescribe { agent, witness_work } => {
                let mut rewritten = planner.re_describe(&subtask, &witness_work)?;
                if cfg.redescribe_reassigns {
                    rewritten.agent_name = agent;
                }
                plan = plan.with_subtask(rewritten, roster)?;
                trace.push_plan("re_describe", &plan);
                redescribed.insert(id);
                queue.push_front(id);
            }
            Verdict::PlanInDetail => {
                let detailed = planner.plan_in_detail(query, &plan, id)?;
                plan = detailed.plan;
                trace.push_plan("plan_in_detail", &plan);
                for r in detailed.replacements.iter().rev() {
                    queue.push_front(r.id);
                }
            }
        }
    }
    Ok(plan)
}
