use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::executor::ExecutionRecord;
use super::routing::RoutingDecision;
use crate::detector::DetectionReport;
use crate::error::Result;
use crate::gateway::UsageReport;
use crate::planner::{Plan, Query};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Every stage succeeded.
    Success,
    /// An answer was produced, but a budget ran out or a sub-task failed.
    BestEffort,
    /// No answer.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanVersion {
    /// What produced this version: `fast_plan`, `replan`, `reassign`,
    /// `re_describe`, `plan_in_detail` or `detector`.
    pub cause: String,
    pub plan: Plan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

/// Append-only record of one query's run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub version: u32,
    pub query: Query,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub plans: Vec<PlanVersion>,
    pub decisions: Vec<RoutingDecision>,
    pub detections: Vec<DetectionReport>,
    pub records: Vec<ExecutionRecord>,
    pub final_answer: Option<String>,
    pub judged_correct: Option<bool>,
    pub works_added: usize,
    pub errors: Vec<StageError>,
    pub warnings: Vec<String>,
    pub usage: UsageReport,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn new(query: Query) -> Self {
        Self {
            version: TRACE_VERSION,
            query,
            started_at: Utc::now(),
            finished_at: None,
            plans: Vec::new(),
            decisions: Vec::new(),
            detections: Vec::new(),
            records: Vec::new(),
            final_answer: None,
            judged_correct: None,
            works_added: 0,
            errors: Vec::new(),
            warnings: Vec::new(),
            usage: UsageReport::default(),
            status: RunStatus::Failed,
        }
    }

    pub fn push_plan(&mut self, cause: &str, plan: &Plan) {
        self.plans.push(PlanVersion {
            cause: cause.to_string(),
            plan: plan.clone(),
        });
    }

    pub fn error(&mut self, stage: &str, e: impl std::fmt::Display) {
        log::error!("query `{}`: {stage} failed: {e}", self.query.id);
        self.errors.push(StageError {
            stage: stage.to_string(),
            message: e.to_string(),
        });
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("query `{}`: {message}", self.query.id);
        self.warnings.push(message);
    }

    pub fn final_plan(&self) -> Option<&Plan> {
        self.plans.last().map(|v| &v.plan)
    }

    /// Hash of the trace with timestamps and timings removed. Two runs over
    /// the same script agree on it.
    pub fn fingerprint(&self) -> String {
        let mut stripped = self.clone();
        stripped.started_at = DateTime::<Utc>::UNIX_EPOCH;
        stripped.finished_at = None;
        stripped.usage = stripped.usage.without_timing();
        let json = serde_json::to_vec(&stripped).expect("trace serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Writes `<dir>/<query id>.trace.json` and returns the path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let name: String = self
            .query
            .id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        let path = dir.join(format!("{name}.trace.json"));
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
