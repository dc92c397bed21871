//! Query files and the accuracy/cost report.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use agentplan::orchestrator::{Engine, RunStatus, RunTrace};
use agentplan::planner::Query;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// One line of a query file. `ground_truth` is required for evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLine {
    #[serde(default)]
    pub id: Option<String>,
    pub question: String,
    #[serde(default)]
    pub ground_truth: Option<String>,
}

impl QueryLine {
    pub fn query(&self, index: usize) -> Result<Query> {
        let id = self.id.clone().unwrap_or_else(|| format!("q{}", index + 1));
        Ok(Query::new(id, self.question.clone())?)
    }
}

pub fn read_queries(path: &Path) -> Result<Vec<QueryLine>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryLine =
            serde_json::from_str(line).with_context(|| format!("{}:{}: bad query line", path.display(), i + 1))?;
        out.push(q);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub id: String,
    pub status: RunStatus,
    pub correct: bool,
    pub answer: Option<String>,
    pub trace_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    /// Percentage of queries judged correct.
    pub accuracy: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub calls: u64,
    /// Summed wall time of model calls, as recorded by the gateway.
    pub llm_time_ms: u64,
    /// Wall time of the whole evaluation.
    pub wall_time_ms: u64,
    pub queries: Vec<QueryResult>,
}

impl EvalReport {
    /// The report with wall-clock fields zeroed.
    pub fn without_timing(&self) -> EvalReport {
        EvalReport {
            llm_time_ms: 0,
            wall_time_ms: 0,
            ..self.clone()
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in &self.queries {
            let verdict = if q.correct { "correct" } else { "incorrect" };
            writeln!(
                f,
                "{:<12} {:<11} {verdict}",
                q.id,
                format!("{:?}", q.status).to_lowercase()
            )?;
        }
        writeln!(
            f,
            "accuracy          {:.1}% ({}/{})",
            self.accuracy, self.correct, self.total
        )?;
        writeln!(f, "prompt tokens     {}", self.prompt_tokens)?;
        writeln!(f, "completion tokens {}", self.completion_tokens)?;
        writeln!(f, "calls             {}", self.calls)?;
        writeln!(f, "llm time          {:.3} s", self.llm_time_ms as f64 / 1000.0)?;
        write!(f, "wall time         {:.3} s", self.wall_time_ms as f64 / 1000.0)
    }
}

/// Answers and judges every query in order. Failed runs count as incorrect.
/// Usage is what the engine's gateway recorded during the evaluation.
pub fn evaluate_suite(engine: &Engine, items: &[QueryLine]) -> Result<(EvalReport, Vec<RunTrace>)> {
    let start = Instant::now();
    let before = engine.gateway.usage_report();
    let mut queries = Vec::with_capacity(items.len());
    let mut traces = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let Some(gt) = item.ground_truth.as_deref() else {
            bail!("query {} has no ground_truth", i + 1);
        };
        let q = item.query(i)?;
        let out = engine.answer_query(&q, Some(gt));
        let correct = out.status != RunStatus::Failed && out.trace.judged_correct == Some(true);
        if !correct {
            log::warn!("query `{}` counted incorrect ({:?})", q.id, out.status);
        }
        queries.push(QueryResult {
            id: q.id.clone(),
            status: out.status,
            correct,
            answer: out.answer.clone(),
            trace_fingerprint: out.trace.fingerprint(),
        });
        traces.push(out.trace);
    }
    let usage = engine.gateway.usage_report().since(&before).totals();
    let correct = queries.iter().filter(|q| q.correct).count();
    let total = queries.len();
    Ok((
        EvalReport {
            total,
            correct,
            accuracy: if total == 0 {
                0.0
            } else {
                100.0 * correct as f64 / total as f64
            },
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            calls: usage.calls,
            llm_time_ms: usage.wall_time_ms,
            wall_time_ms: start.elapsed().as_millis() as u64,
            queries,
        },
        traces,
    ))
}
