//! The per-sub-task routing decision: accept, reassign, replan, re-describe
//! or plan in detail, driven by predicted scores and work similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{AgentDescriptor, Roster, SubTask};
use crate::reward::{argmax, RewardPredictor};
use crate::works::{Witness, WorksStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingConfig {
    /// Scores at or above this accept an assignment.
    pub tau_high: f64,
    /// A best score at or below this means no agent can solve the sub-task.
    pub tau_low: f64,
    /// Similarity to a representative work at or above this triggers
    /// re-description.
    pub tau_sim: f64,
    pub max_replans: u32,
    pub max_detector_rounds: u32,
    /// Fraction of the roster scored per sub-task when building datasets.
    pub l_fraction: f64,
    /// Round predicted scores to integers before comparing with thresholds.
    pub round_scores: bool,
    /// A re-described sub-task moves to the agent owning the witness work.
    pub redescribe_reassigns: bool,
    /// Cap on replan, re-describe and plan-in-detail calls per query.
    pub max_modifications: u32,
    /// Also run the detector on the initial plan, before routing.
    pub detector_pre_routing: bool,
    /// Independent sub-tasks executed at once.
    pub concurrency: usize,
    pub dedup_threshold: f64,
    /// Training examples at or above this level seed representative works.
    pub accept_threshold: u8,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            tau_high: 7.0,
            tau_low: 1.0,
            tau_sim: 0.80,
            max_replans: 2,
            max_detector_rounds: 2,
            l_fraction: 0.5,
            round_scores: false,
            redescribe_reassigns: true,
            max_modifications: 8,
            detector_pre_routing: false,
            concurrency: 4,
            dedup_threshold: 0.95,
            accept_threshold: 7,
        }
    }
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::precondition(format!("routing config: {m}")));
        if self.tau_low.partial_cmp(&self.tau_high) != Some(std::cmp::Ordering::Less) {
            return bad("tau_low must be below tau_high");
        }
        if !(self.tau_sim > 0.0 && self.tau_sim <= 1.0) {
            return bad("tau_sim must lie in (0, 1]");
        }
        if !(self.l_fraction > 0.0 && self.l_fraction <= 1.0) {
            return bad("l_fraction must lie in (0, 1]");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1");
        }
        if !(self.dedup_threshold > -1.0 && self.dedup_threshold <= 1.0) {
            return bad("dedup_threshold must lie in (-1, 1]");
        }
        if self.accept_threshold > 8 {
            return bad("accept_threshold must lie in 0..=8");
        }
        Ok(())
    }

    /// Agents scored per sub-task for a roster of `n`.
    pub fn l_for(&self, n: usize) -> usize {
        ((n as f64 * self.l_fraction).floor() as usize).clamp(1, n.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reassign { agent: String },
    Replan,
    ReDescribe { agent: String, witness_work: String },
    PlanInDetail,
}

/// A verdict with the numbers that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub subtask_id: u32,
    pub assigned_agent: String,
    pub verdict: Verdict,
    pub assigned_score: f64,
    /// All agents' scores in roster order; empty when the assigned score
    /// alone decided.
    pub scores: Vec<(String, f64)>,
    pub best_agent: Option<String>,
    pub best_score: Option<f64>,
    pub best_sim: Option<f64>,
}

/// Predicted response quality of an agent on a sub-task.
pub trait RewardScorer: Send + Sync {
    fn score(&self, subtask: &str, agent: &AgentDescriptor) -> Result<f64>;

    /// Scores for every roster agent, in roster order.
    fn score_all(&self, subtask: &str, roster: &Roster) -> Result<Vec<(String, f64)>> {
        roster
            .iter()
            .map(|a| Ok((a.name.clone(), self.score(subtask, a)?)))
            .collect()
    }
}

impl RewardScorer for RewardPredictor {
    fn score(&self, subtask: &str, agent: &AgentDescriptor) -> Result<f64> {
        self.predict(subtask, &agent.description)
    }

    fn score_all(&self, subtask: &str, roster: &Roster) -> Result<Vec<(String, f64)>> {
        self.predict_all(subtask, roster)
    }
}

/// One override in a [`FixedScorer`]. Unset fields match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRule {
    #[serde(default)]
    pub agent: Option<String>,
    /// Case-insensitive substring of the sub-task text.
    #[serde(default)]
    pub task_contains: Option<String>,
    pub score: f64,
}

/// Table-driven scores for scripted runs and demos, standing in for a
/// trained model. The first matching rule wins, otherwise `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedScorer {
    pub default: f64,
    #[serde(default)]
    pub rules: Vec<ScoreRule>,
}

impl FixedScorer {
    pub fn constant(score: f64) -> Self {
        Self {
            default: score,
            rules: Vec::new(),
        }
    }
}

impl RewardScorer for FixedScorer {
    fn score(&self, subtask: &str, agent: &AgentDescriptor) -> Result<f64> {
        let task = subtask.to_lowercase();
        let hit = self.rules.iter().find(|r| {
            r.agent.as_ref().is_none_or(|a| *a == agent.name)
                && r.task_contains
                    .as_ref()
                    .is_none_or(|t| task.contains(&t.to_lowercase()))
        });
        Ok(hit.map_or(self.default, |r| r.score))
    }
}

/// The work most similar to a sub-task across all agents.
pub trait SimilaritySource: Send + Sync {
    fn nearest(&self, subtask: &str, roster: &Roster) -> Result<Option<Witness>>;
}

impl SimilaritySource for WorksStore {
    fn nearest(&self, subtask: &str, roster: &Roster) -> Result<Option<Witness>> {
        Ok(self.best_match(subtask, roster)?.global_best)
    }
}

/// Decides what to do with one sub-task.
///
/// 1. The assigned agent's score `s0` at or above `tau_high` accepts.
/// 2. Otherwise every agent is scored; `j*` is the first best and `s*` its
///    score.
/// 3. `s* <= tau_low`: replan.
/// 4. `s* >= tau_high`: accept if `j*` is the assigned agent, else reassign.
/// 5. In between: re-describe towards the nearest work if its similarity
///    reaches `tau_sim` and re-description is still allowed, otherwise plan
///    in detail.
pub fn route(
    subtask: &SubTask,
    roster: &Roster,
    scorer: &dyn RewardScorer,
    works: &dyn SimilaritySource,
    cfg: &RoutingConfig,
    allow_redescribe: bool,
) -> Result<RoutingDecision> {
    let assigned = roster
        .get(&subtask.agent_name)
        .ok_or_else(|| Error::UnknownAgent(subtask.agent_name.clone()))?;
    let band = |s: f64| if cfg.round_scores { s.round() } else { s };
    let s0 = scorer.score(&subtask.task, assigned)?;
    let mut decision = RoutingDecision {
        subtask_id: subtask.id,
        assigned_agent: assigned.name.clone(),
        verdict: Verdict::Accept,
        assigned_score: s0,
        scores: Vec::new(),
        best_agent: None,
        best_score: None,
        best_sim: None,
    };
    if band(s0) >= cfg.tau_high {
        return Ok(decision);
    }

    let scores = scorer.score_all(&subtask.task, roster)?;
    let values: Vec<f64> = scores.iter().map(|(_, s)| band(*s)).collect();
    let j = argmax(&values).expect("roster is non-empty");
    let (best_agent, best_raw) = scores[j].clone();
    let s_star = values[j];
    decision.best_agent = Some(best_agent.clone());
    decision.best_score = Some(best_raw);
    decision.scores = scores;

    decision.verdict = if s_star <= cfg.tau_low {
        Verdict::Replan
    } else if s_star >= cfg.tau_high {
        if best_agent == assigned.name {
            Verdict::Accept
        } else {
            Verdict::Reassign { agent: best_agent }
        }
    } else {
        let witness = works.nearest(&subtask.task, roster)?;
        decision.best_sim = witness.as_ref().map(|w| w.sim);
        match witness {
            Some(w) if allow_redescribe && w.sim >= cfg.tau_sim => Verdict::ReDescribe {
                agent: w.agent_name,
                witness_work: w.task_text,
            },
            _ => Verdict::PlanInDetail,
        }
    };
    Ok(decision)
}
