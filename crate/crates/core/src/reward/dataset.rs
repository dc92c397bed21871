//! Reward-model training data: construction from planned and executed
//! queries, line-delimited storage, and per-example objective weights.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::embed::Embedder;
use super::model::RewardModel;
use super::score::{level_score, LlmScorer};
use super::train::{train_features, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::orchestrator::format_history;
use crate::planner::{AgentDescriptor, MetaPlanner, Query, Roster, SubTask};

/// One (sub-task, agent) pair with the level score of that agent's response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub subtask: String,
    pub agent_description: String,
    pub score: u8,
    /// Groups examples by originating query for the objective weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
}

impl TrainingExample {
    pub fn validate(&self) -> Result<()> {
        if self.subtask.trim().is_empty() || self.agent_description.trim().is_empty() {
            return Err(Error::precondition("training example texts must be non-empty"));
        }
        if self.score > 8 {
            return Err(Error::precondition(format!("score {} is outside 0..=8", self.score)));
        }
        Ok(())
    }
}

pub fn write_examples(path: &Path, examples: &[TrainingExample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in examples {
        writeln!(out, "{}", serde_json::to_string(e)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_examples(path: &Path) -> Result<Vec<TrainingExample>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: TrainingExample = serde_json::from_str(&line)
            .map_err(|err| Error::precondition(format!("{}:{}: {err}", path.display(), i + 1)))?;
        e.validate()?;
        examples.push(e);
    }
    Ok(examples)
}

/// Weights that make the flattened mean equal the nested objective: the
/// average over queries of the average over sub-tasks of the average over
/// scored agents. Each example gets `1 / (K · m_k · l_{k,i})`, where `K` is
/// the number of queries, `m_k` the sub-tasks of query `k`, and `l_{k,i}`
/// the agents scored on sub-task `i`.
///
/// Examples without a query id cannot be grouped; if any is missing every
/// example weighs `1 / N`.
pub fn objective_weights(examples: &[TrainingExample]) -> Vec<f64> {
    if examples.iter().any(|e| e.query_id.is_none()) {
        return vec![1.0 / examples.len() as f64; examples.len()];
    }
    let mut per_subtask: HashMap<(&str, &str), usize> = HashMap::new();
    for e in examples {
        *per_subtask
            .entry((e.query_id.as_deref().unwrap(), &e.subtask))
            .or_default() += 1;
    }
    let mut per_query: HashMap<&str, usize> = HashMap::new();
    for (q, _) in per_subtask.keys() {
        *per_query.entry(q).or_default() += 1;
    }
    let k = per_query.len() as f64;
    examples
        .iter()
        .map(|e| {
            let q = e.query_id.as_deref().unwrap();
            let m = per_query[q] as f64;
            let l = per_subtask[&(q, e.subtask.as_str())] as f64;
            1.0 / (k * m * l)
        })
        .collect()
}

/// Half the roster, rounded down, but at least one agent.
pub fn default_l(roster_len: usize) -> usize {
    (roster_len / 2).max(1)
}

/// Runs one sub-task on a chosen agent.
pub trait SubtaskRunner: Send + Sync {
    fn run(&self, subtask: &SubTask, agent: &AgentDescriptor, history: &str) -> Result<String>;
}

#[derive(Debug, Clone, Default)]
pub struct DatasetBuild {
    pub examples: Vec<TrainingExample>,
    /// Queries dropped because some stage failed, with the error text.
    pub skipped: Vec<(String, String)>,
}

/// The `l` agents scored for a sub-task: its assigned agent first, then the
/// rest of the roster in order.
pub fn candidate_agents<'r>(roster: &'r Roster, assigned: &str, l: usize) -> Vec<&'r AgentDescriptor> {
    roster
        .get(assigned)
        .into_iter()
        .chain(roster.iter().filter(|a| a.name != assigned))
        .take(l)
        .collect()
}

/// Plans every query, runs each sub-task on `l` agents and scores every
/// response. Downstream histories use the assigned agent's answers. A query
/// that fails at any stage is skipped whole.
pub fn build_dataset(
    queries: &[Query],
    planner: &MetaPlanner,
    runner: &dyn SubtaskRunner,
    scorer: &LlmScorer,
    l: Option<usize>,
) -> Result<DatasetBuild> {
    let roster = planner.roster();
    let l = l.unwrap_or_else(|| default_l(roster.len()));
    if l == 0 || l > roster.len() {
        return Err(Error::precondition(format!(
            "l must lie in 1..={}, got {l}",
            roster.len()
        )));
    }
    let mut build = DatasetBuild::default();
    for query in queries {
        match examples_for_query(query, planner, runner, scorer, l) {
            Ok(mut ex) => build.examples.append(&mut ex),
            Err(e) => {
                log::warn!("skipping query `{}`: {e}", query.id);
                build.skipped.push((query.id.clone(), e.to_string()));
            }
        }
    }
    Ok(build)
}

fn examples_for_query(
    query: &Query,
    planner: &MetaPlanner,
    runner: &dyn SubtaskRunner,
    scorer: &LlmScorer,
    l: usize,
) -> Result<Vec<TrainingExample>> {
    let plan = planner.fast_plan(query)?;
    let mut answers: HashMap<u32, String> = HashMap::new();
    let mut out = Vec::new();
    for id in plan.topological_order() {
        let subtask = plan.get(id).expect("ordered ids exist");
        let history_items: Vec<(&str, &str)> = plan
            .ancestors(id)
            .into_iter()
            .map(|a| (plan.get(a).unwrap().task.as_str(), answers[&a].as_str()))
            .collect();
        let history = format_history(&history_items);
        for (rank, agent) in candidate_agents(planner.roster(), &subtask.agent_name, l)
            .into_iter()
            .enumerate()
        {
            let response = runner.run(subtask, agent, &history)?;
            let score = level_score(scorer.llm_score(&subtask.task, &response)?);
            if rank == 0 {
                answers.insert(id, response);
            }
            out.push(TrainingExample {
                subtask: subtask.task.clone(),
                agent_description: agent.description.clone(),
                score,
                query_id: Some(query.id.clone()),
            });
        }
    }
    Ok(out)
}

/// Embeds the examples into a feature matrix, sub-task first.
pub fn features(examples: &[TrainingExample], embedder: &dyn Embedder) -> Result<(Array2<f64>, Array1<f64>)> {
    let dim = embedder.dim();
    let mut x = Array2::zeros((examples.len(), 2 * dim));
    let mut t = Array1::zeros(examples.len());
    for (i, e) in examples.iter().enumerate() {
        e.validate()?;
        let q = embedder.embed(&e.subtask)?;
        let d = embedder.embed(&e.agent_description)?;
        if q.dim() != dim || d.dim() != dim {
            return Err(Error::EmbeddingUnavailable(format!("expected {dim}-d embeddings")));
        }
        let mut row = x.row_mut(i);
        for (slot, v) in row.iter_mut().zip(q.as_slice().iter().chain(d.as_slice())) {
            *slot = *v;
        }
        t[i] = e.score as f64;
    }
    Ok((x, t))
}

/// Trains a fresh model with hidden widths `hidden` on the examples.
pub fn train(
    examples: &[TrainingExample],
    embedder: Arc<dyn Embedder>,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if examples.is_empty() {
        return Err(Error::precondition("training set is empty"));
    }
    let (x, t) = features(examples, embedder.as_ref())?;
    let w = Array1::from(objective_weights(examples));
    let mut sizes = vec![x.ncols()];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let model = RewardModel::new(&sizes, cfg.seed)?;
    train_features(model, x.view(), t.view(), w.view(), cfg)
}
