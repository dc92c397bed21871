//! The end-to-end pipeline: plan, route and repair, detect, execute,
//! synthesize, judge, and feed resolved sub-tasks back into the works store.

mod agents;
mod executor;
mod routing;
mod stabilize;
mod trace;

use std::sync::Arc;

use chrono::Utc;

#[cfg(feature = "sandbox")]
pub use agents::ProcessSandbox;
pub use agents::{
    extract_boxed, extract_code, AgentPool, CodeExecutor, FixtureSearch, SearchClient, Snippet, StubExecutor,
    DEFAULT_CODE_TIMEOUT,
};
#[cfg(feature = "http")]
pub use agents::{WebSearch, WebSearchConfig};
pub use executor::{execute_plan, format_history, waves, Artifacts, ExecutionRecord, RecordStatus};
pub use routing::{
    route, FixedScorer, RewardScorer, RoutingConfig, RoutingDecision, ScoreRule, SimilaritySource, Verdict,
};
pub use stabilize::stabilize;
pub use trace::{PlanVersion, RunStatus, RunTrace, StageError, TRACE_VERSION};

use crate::detector::PlanDetector;
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway};
use crate::planner::{MetaPlanner, Plan, Query, Roster};
use crate::prompts::{Prompts, SYSTEM_PROMPT};
use crate::works::WorksStore;

/// Combines sub-task answers into the final answer. A single-sub-task plan
/// passes its response through without another call.
pub fn synthesize_answer(
    gateway: &Gateway,
    prompts: &Prompts,
    query: &Query,
    plan: &Plan,
    records: &[ExecutionRecord],
) -> Result<String> {
    let ok: Vec<&ExecutionRecord> = records.iter().filter(|r| r.is_ok()).collect();
    if ok.is_empty() {
        return Err(Error::precondition("no sub-task produced an answer"));
    }
    if plan.len() == 1 && ok.len() == 1 {
        return Ok(ok[0].response.clone());
    }
    let answers = ok
        .iter()
        .map(|r| format!("- {}: {}", r.task.trim(), r.answer().trim()))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = prompts.render("synthesize", &[("query", &query.text), ("answers", &answers)])?;
    Ok(gateway
        .ask(&ChatRequest::new("synthesize", SYSTEM_PROMPT, prompt))?
        .trim()
        .to_string())
}

/// Asks the judge whether `prediction` answers `question` per the ground
/// truth. Only a leading yes or no is accepted.
pub fn evaluate(
    gateway: &Gateway,
    prompts: &Prompts,
    question: &str,
    ground_truth: &str,
    prediction: &str,
) -> Result<bool> {
    let prompt = prompts.render(
        "evaluate",
        &[
            ("question", question),
            ("ground_truth", ground_truth),
            ("prediction", prediction),
        ],
    )?;
    let raw = gateway.ask(&ChatRequest::new("evaluate", SYSTEM_PROMPT, prompt))?;
    let first = raw
        .split_whitespace()
        .next()
        .unwrap_or_default()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    match first.as_str() {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(Error::JudgeParse(raw.chars().take(80).collect())),
    }
}

#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub answer: Option<String>,
    pub status: RunStatus,
    pub trace: RunTrace,
}

/// Every component the pipeline needs, wired together.
pub struct Engine {
    pub gateway: Arc<Gateway>,
    pub prompts: Arc<Prompts>,
    pub planner: MetaPlanner,
    pub detector: PlanDetector,
    pub scorer: Arc<dyn RewardScorer>,
    pub works: Arc<WorksStore>,
    pub pool: AgentPool,
    pub cfg: RoutingConfig,
}

impl Engine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gateway: Arc<Gateway>,
        prompts: Arc<Prompts>,
        roster: Roster,
        scorer: Arc<dyn RewardScorer>,
        works: Arc<WorksStore>,
        code: Arc<dyn CodeExecutor>,
        search: Arc<dyn SearchClient>,
        cfg: RoutingConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let planner =
            MetaPlanner::new(gateway.clone(), roster.clone(), prompts.clone()).with_max_replans(cfg.max_replans);
        let detector = PlanDetector::new(gateway.clone(), prompts.clone()).with_max_rounds(cfg.max_detector_rounds);
        let pool = AgentPool::new(gateway.clone(), prompts.clone(), roster, code, search);
        Ok(Self {
            gateway,
            prompts,
            planner,
            detector,
            scorer,
            works,
            pool,
            cfg,
        })
    }

    pub fn roster(&self) -> &Roster {
        self.planner.roster()
    }

    /// Runs the whole pipeline for one query. Stage failures are recorded
    /// in the trace instead of aborting; the outcome carries whatever answer
    /// was reached. With a ground truth the answer is also judged.
    pub fn answer_query(&self, query: &Query, ground_truth: Option<&str>) -> QueryOutcome {
        self.planner.reset_replans(&query.id);
        let before = self.gateway.usage_report();
        let mut trace = RunTrace::new(query.clone());
        trace.status = self.run_stages(query, ground_truth, &mut trace);
        trace.usage = self.gateway.usage_report().since(&before);
        trace.finished_at = Some(Utc::now());
        QueryOutcome {
            answer: trace.final_answer.clone(),
            status: trace.status,
            trace,
        }
    }

    fn refine(&self, query: &Query, plan: Plan, trace: &mut RunTrace) -> Plan {
        if self.cfg.max_detector_rounds == 0 {
            return plan;
        }
        match self.detector.refine(&self.planner, query, plan.clone()) {
            Ok(refined) => {
                trace.detections.extend(refined.reports);
                for p in &refined.revisions {
                    trace.push_plan("detector", p);
                }
                if refined.unresolved {
                    trace.warn(format!(
                        "plan still flagged by the detector after {} round(s)",
                        self.cfg.max_detector_rounds
                    ));
                }
                refined.plan
            }
            Err(e) => {
                trace.error("detector", e);
                plan
            }
        }
    }

    fn run_stages(&self, query: &Query, ground_truth: Option<&str>, trace: &mut RunTrace) -> RunStatus {
        let mut degraded = false;
        let mut plan = match self.planner.fast_plan(query) {
            Ok(p) => p,
            Err(e) => {
                trace.error("fast_plan", e);
                return RunStatus::Failed;
            }
        };
        trace.push_plan("fast_plan", &plan);
        if self.cfg.detector_pre_routing {
            plan = self.refine(query, plan, trace);
        }

        plan = match stabilize(
            &self.planner,
            self.scorer.as_ref(),
            self.works.as_ref(),
            &self.cfg,
            query,
            plan,
            trace,
        ) {
            Ok(p) => p,
            Err(Error::StabilizationBudgetExhausted { reason, best }) => {
                trace.warn(format!(
                    "stabilization budget exhausted ({reason}); continuing with the best plan"
                ));
                degraded = true;
                *best
            }
            Err(e) => {
                trace.error("stabilize", e);
                return RunStatus::Failed;
            }
        };
        plan = self.refine(query, plan, trace);
        if trace.final_plan() != Some(&plan) {
            trace.push_plan("final", &plan);
        }

        trace.records = execute_plan(&plan, &self.pool, self.cfg.concurrency);
        let all_ok = trace.records.iter().all(ExecutionRecord::is_ok);
        if !all_ok {
            degraded = true;
        }
        let answer = match synthesize_answer(&self.gateway, &self.prompts, query, &plan, &trace.records) {
            Ok(a) => a,
            Err(e) => {
                trace.error("synthesize", e);
                return RunStatus::Failed;
            }
        };
        trace.final_answer = Some(answer.clone());

        if let Some(gt) = ground_truth {
            match evaluate(&self.gateway, &self.prompts, &query.text, gt, &answer) {
                Ok(v) => trace.judged_correct = Some(v),
                Err(e) => trace.error("evaluate", e),
            }
        }
        let resolved = all_ok && ground_truth.is_none_or(|_| trace.judged_correct == Some(true));
        if resolved {
            match self.works.record_success(&plan, &trace.records) {
                Ok(n) => trace.works_added = n,
                Err(e) => trace.error("feedback", e),
            }
        }
        if degraded {
            RunStatus::BestEffort
        } else {
            RunStatus::Success
        }
    }
}
