//! The meta-agent: fast decomposition and allocation, replanning,
//! plan-in-detail, re-description, and detector-driven revision.

mod parse;
mod plan;
mod splice;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use regex::Regex;

use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::prompts::{ask_parsed, Prompts, ONE_SHOT_PLAN};

pub use parse::{extract_json_array, parse_plan, parse_subtasks};
pub use plan::{validate, AgentDescriptor, AgentKind, Plan, Query, Roster, SubTask};
pub use splice::splice;

pub const DEFAULT_MAX_REPLANS: u32 = 2;

const JSON_RETRY_HINT: &str = "Output only the JSON array.";
const REWRITE_RETRY_HINT: &str = "Output the rewritten sentence in the form ***rewritten***.";
const REPLAN_REASON: &str = "cannot be completely resolved by any single available agent. \
Replan the query so that every sub-task can be resolved by one of the agents.";

/// Result of a plan-in-detail request.
#[derive(Debug, Clone, PartialEq)]
pub struct Detailed {
    pub plan: Plan,
    pub replacements: Vec<SubTask>,
}

pub struct MetaPlanner {
    gateway: Arc<Gateway>,
    roster: Roster,
    prompts: Arc<Prompts>,
    max_replans: u32,
    replans: Mutex<HashMap<String, u32>>,
}

fn is_parse_error(e: &Error) -> bool {
    matches!(e, Error::PlanParse(_))
}

impl MetaPlanner {
    pub fn new(gateway: Arc<Gateway>, roster: Roster, prompts: Arc<Prompts>) -> Self {
        Self {
            gateway,
            roster,
            prompts,
            max_replans: DEFAULT_MAX_REPLANS,
            replans: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_max_replans(mut self, max: u32) -> Self {
        self.max_replans = max;
        self
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn replans_used(&self, query_id: &str) -> u32 {
        self.replans.lock().unwrap().get(query_id).copied().unwrap_or(0)
    }

    /// Gives `query_id` a fresh replan budget.
    pub fn reset_replans(&self, query_id: &str) {
        self.replans.lock().unwrap().remove(query_id);
    }

    fn fast_plan_prompt(&self, query: &Query) -> Result<String> {
        self.prompts.render(
            "fast_plan",
            &[
                ("roster", &self.roster.prompt_listing()),
                ("example", ONE_SHOT_PLAN.trim_end()),
                ("query", &query.text),
            ],
        )
    }

    /// Single-shot decomposition and allocation.
    pub fn fast_plan(&self, query: &Query) -> Result<Plan> {
        let prompt = self.fast_plan_prompt(query)?;
        ask_parsed(
            &self.gateway,
            "fast_plan",
            prompt,
            JSON_RETRY_HINT,
            is_parse_error,
            |raw| parse_plan(raw, &query.id, &self.roster),
        )
    }

    /// Asks for a full replacement plan because `failing_id` cannot be
    /// resolved by any agent. Each call consumes one unit of the query's
    /// replan budget.
    pub fn replan(&self, query: &Query, plan: &Plan, failing_id: u32) -> Result<Plan> {
        let failing = plan
            .get(failing_id)
            .ok_or_else(|| Error::precondition(format!("sub-task {failing_id} is not in the plan")))?;
        {
            let mut counts = self.replans.lock().unwrap();
            let used = counts.entry(query.id.clone()).or_insert(0);
            if *used >= self.max_replans {
                return Err(Error::ReplanBudgetExhausted {
                    query_id: query.id.clone(),
                    max: self.max_replans,
                });
            }
            *used += 1;
        }
        let prompt = self.prompts.render(
            "replan",
            &[
                ("roster", &self.roster.prompt_listing()),
                ("query", &query.text),
                ("plan", &plan.to_json_string()),
                ("subtask", &failing.task),
                ("reason", REPLAN_REASON),
            ],
        )?;
        ask_parsed(
            &self.gateway,
            "replan",
            prompt,
            JSON_RETRY_HINT,
            is_parse_error,
            |raw| parse_plan(raw, &query.id, &self.roster),
        )
    }

    /// Decomposes one sub-task further and splices the result into the plan.
    pub fn plan_in_detail(&self, query: &Query, plan: &Plan, subtask_id: u32) -> Result<Detailed> {
        let target = plan
            .get(subtask_id)
            .ok_or_else(|| Error::precondition(format!("sub-task {subtask_id} is not in the plan")))?;
        let prompt = self.prompts.render(
            "plan_in_detail",
            &[
                ("roster", &self.roster.prompt_listing()),
                ("query", &query.text),
                ("plan", &plan.to_json_string()),
                ("subtask", &target.task),
            ],
        )?;
        let replacements = ask_parsed(
            &self.gateway,
            "plan_in_detail",
            prompt,
            JSON_RETRY_HINT,
            is_parse_error,
            parse_subtasks,
        )?;
        let (plan, replacements) = splice(plan, subtask_id, replacements, &self.roster)?;
        Ok(Detailed { plan, replacements })
    }

    /// Rewrites a sub-task in the style of a representative work. Only the
    /// task text changes.
    pub fn re_describe(&self, subtask: &SubTask, example_work: &str) -> Result<SubTask> {
        if example_work.trim().is_empty() {
            return Err(Error::precondition("re-describe needs a non-empty example"));
        }
        let prompt = self
            .prompts
            .render("re_describe", &[("example", example_work), ("sentence", &subtask.task)])?;
        let rewritten = ask_parsed(
            &self.gateway,
            "re_describe",
            prompt,
            REWRITE_RETRY_HINT,
            |e| matches!(e, Error::RewriteParse(_)),
            extract_rewritten,
        )?;
        Ok(SubTask {
            task: rewritten,
            ..subtask.clone()
        })
    }

    /// Re-runs fast planning with a detector's findings attached.
    pub fn revise(&self, query: &Query, plan: &Plan, analysis: &str, suggestions: &str) -> Result<Plan> {
        let mut prompt = self.fast_plan_prompt(query)?;
        prompt.push('\n');
        prompt.push_str(&self.prompts.render(
            "revise",
            &[
                ("plan", &plan.to_json_string()),
                ("analysis", analysis),
                ("suggestions", suggestions),
            ],
        )?);
        ask_parsed(
            &self.gateway,
            "revise",
            prompt,
            JSON_RETRY_HINT,
            is_parse_error,
            |raw| parse_plan(raw, &query.id, &self.roster),
        )
    }
}

/// Pulls the text between the first pair of `***` markers, without
/// surrounding quotes.
pub fn extract_rewritten(raw: &str) -> Result<String> {
    static_regex()
        .captures(raw)
        .map(|c| {
            c[1].trim()
                .trim_matches(|ch| matches!(ch, '\'' | '"' | '`'))
                .trim()
                .to_string()
        })
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::RewriteParse(raw.chars().take(200).collect()))
}

fn static_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)\*\*\*(.+?)\*\*\*").unwrap())
}
