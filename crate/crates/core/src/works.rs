//! Per-agent representative works: sub-tasks each agent has fully resolved,
//! with cached embeddings for nearest-neighbour similarity.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::{ExecutionRecord, RecordStatus};
use crate::planner::{Plan, Roster};
use crate::reward::{cosine, Embedder, Embedding, TrainingExample};

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.95;
pub const DEFAULT_ACCEPT_THRESHOLD: u8 = 7;
const STORE_FORMAT: &str = "agentplan-works";
const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkSource {
    TrainingInit,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeWork {
    pub agent_name: String,
    pub task_text: String,
    pub embedding: Embedding,
    pub source: WorkSource,
    pub added_at: DateTime<Utc>,
}

/// The closest work found for a query text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub agent_name: String,
    pub task_text: String,
    pub sim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// One entry per roster agent, in roster order; `None` when the agent
    /// has no works.
    pub per_agent: Vec<(String, Option<Witness>)>,
    pub global_best: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreHeader {
    format: String,
    version: u32,
    provider_id: String,
    dims: usize,
}

#[derive(Default)]
struct Inner {
    works: BTreeMap<String, Vec<RepresentativeWork>>,
    stale: bool,
}

/// Concurrent readers, single writer. Every agent named at construction (or
/// later via [`WorksStore::add_agent`]) has a possibly empty work list.
pub struct WorksStore {
    embedder: Arc<dyn Embedder>,
    dedup_threshold: f64,
    inner: RwLock<Inner>,
}

impl WorksStore {
    pub fn new(embedder: Arc<dyn Embedder>, roster: &Roster) -> Self {
        let works = roster.iter().map(|a| (a.name.clone(), Vec::new())).collect();
        Self {
            embedder,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            inner: RwLock::new(Inner { works, stale: false }),
        }
    }

    pub fn with_dedup_threshold(mut self, threshold: f64) -> Self {
        self.dedup_threshold = threshold;
        self
    }

    pub fn dedup_threshold(&self) -> f64 {
        self.dedup_threshold
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn add_agent(&self, name: &str) {
        self.inner.write().unwrap().works.entry(name.to_string()).or_default();
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().works.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn agent_names(&self) -> Vec<String> {
        self.inner.read().unwrap().works.keys().cloned().collect()
    }

    /// A copy of one agent's works.
    pub fn works_of(&self, agent: &str) -> Result<Vec<RepresentativeWork>> {
        self.refresh()?;
        self.inner
            .read()
            .unwrap()
            .works
            .get(agent)
            .cloned()
            .ok_or_else(|| Error::UnknownAgent(agent.to_string()))
    }

    /// A copy of all works, grouped by agent name.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Vec<RepresentativeWork>>> {
        self.refresh()?;
        Ok(self.inner.read().unwrap().works.clone())
    }

    /// Re-embeds every work after a load under a different provider.
    fn refresh(&self) -> Result<()> {
        if !self.inner.read().unwrap().stale {
            return Ok(());
        }
        let mut inner = self.inner.write().unwrap();
        if !inner.stale {
            return Ok(());
        }
        for works in inner.works.values_mut() {
            for w in works.iter_mut() {
                w.embedding = self.embedder.embed(&w.task_text)?;
            }
        }
        inner.stale = false;
        Ok(())
    }

    fn best_in(works: &[RepresentativeWork], q: &Embedding) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, w) in works.iter().enumerate() {
            let s = q.cosine(&w.embedding);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best
    }

    /// Maximum cosine similarity between `text` and the agent's works, or
    /// `None` when the agent has none.
    pub fn similarity(&self, text: &str, agent: &str) -> Result<Option<f64>> {
        let q = self.embedder.embed(text)?;
        self.similarity_to(&q, agent)
    }

    pub fn similarity_to(&self, q: &Embedding, agent: &str) -> Result<Option<f64>> {
        self.refresh()?;
        let inner = self.inner.read().unwrap();
        let works = inner
            .works
            .get(agent)
            .ok_or_else(|| Error::UnknownAgent(agent.to_string()))?;
        Ok(Self::best_in(works, q).map(|(_, s)| s))
    }

    /// Per-agent and overall nearest works. Ties go to the earlier roster
    /// agent, then to the earlier work. Agents absent from the store count
    /// as having no works.
    pub fn best_match(&self, text: &str, roster: &Roster) -> Result<SimilarityReport> {
        let q = self.embedder.embed(text)?;
        self.refresh()?;
        let inner = self.inner.read().unwrap();
        let mut per_agent = Vec::with_capacity(roster.len());
        let mut global_best: Option<Witness> = None;
        for agent in roster.iter() {
            let witness = inner.works.get(&agent.name).and_then(|works| {
                Self::best_in(works, &q).map(|(i, sim)| Witness {
                    agent_name: agent.name.clone(),
                    task_text: works[i].task_text.clone(),
                    sim,
                })
            });
            if let Some(w) = &witness {
                if global_best.as_ref().is_none_or(|g| w.sim > g.sim) {
                    global_best = Some(w.clone());
                }
            }
            per_agent.push((agent.name.clone(), witness));
        }
        Ok(SimilarityReport { per_agent, global_best })
    }

    /// Adds `text` to `agent`'s works unless it is within the dedup
    /// threshold of one already there.
    fn admit(&self, inner: &mut Inner, agent: &str, text: &str, source: WorkSource) -> Result<bool> {
        let embedding = self.embedder.embed(text)?;
        let works = inner
            .works
            .get_mut(agent)
            .ok_or_else(|| Error::UnknownAgent(agent.to_string()))?;
        if Self::best_in(works, &embedding).is_some_and(|(_, s)| s >= self.dedup_threshold) {
            return Ok(false);
        }
        works.push(RepresentativeWork {
            agent_name: agent.to_string(),
            task_text: text.to_string(),
            embedding,
            source,
            added_at: Utc::now(),
        });
        Ok(true)
    }

    /// Seeds works from training examples scoring at least
    /// `accept_threshold`, attributing each to the agent whose description
    /// it was scored against.
    pub fn init_from_training(
        &self,
        examples: &[TrainingExample],
        roster: &Roster,
        accept_threshold: u8,
    ) -> Result<usize> {
        self.refresh()?;
        let mut inner = self.inner.write().unwrap();
        let mut added = 0;
        for e in examples.iter().filter(|e| e.score >= accept_threshold) {
            let agent = roster
                .by_description(&e.agent_description)
                .ok_or_else(|| Error::UnknownAgent(e.agent_description.clone()))?;
            inner.works.entry(agent.name.clone()).or_default();
            if self.admit(&mut inner, &agent.name, &e.subtask, WorkSource::TrainingInit)? {
                added += 1;
            }
        }
        Ok(added)
    }

    /// Adds every successfully executed sub-task of a resolved query to its
    /// executing agent's works, subject to deduplication.
    pub fn record_success(&self, plan: &Plan, records: &[ExecutionRecord]) -> Result<usize> {
        self.refresh()?;
        let mut inner = self.inner.write().unwrap();
        let mut added = 0;
        for r in records.iter().filter(|r| r.status == RecordStatus::Ok) {
            let task = plan.get(r.subtask_id).map_or(r.task.as_str(), |s| s.task.as_str());
            if self.admit(&mut inner, &r.agent_name, task, WorkSource::Feedback)? {
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.refresh()?;
        let inner = self.inner.read().unwrap();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = StoreHeader {
            format: STORE_FORMAT.into(),
            version: STORE_VERSION,
            provider_id: self.embedder.provider_id(),
            dims: self.embedder.dim(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for (name, works) in &inner.works {
            if works.is_empty() {
                writeln!(out, "{}", serde_json::json!({ "agent": name }))?;
            }
            for w in works {
                writeln!(out, "{}", serde_json::to_string(w)?)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Replaces the store's contents with the file's. Record index 0 is the
    /// header. A file written under another embedding provider is accepted
    /// with a warning and re-embedded on first use.
    pub fn load(&self, path: &Path) -> Result<usize> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let corrupt = |index: usize, reason: String| Error::StoreCorrupt { index, reason };
        let mut lines = reader.lines();
        let header: StoreHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?).map_err(|e| corrupt(0, e.to_string()))?,
            None => return Err(corrupt(0, "missing header".into())),
        };
        if header.format != STORE_FORMAT || header.version != STORE_VERSION {
            return Err(corrupt(
                0,
                format!("unsupported format {} v{}", header.format, header.version),
            ));
        }
        let mut works: BTreeMap<String, Vec<RepresentativeWork>> = BTreeMap::new();
        let mut count = 0;
        for (i, line) in lines.enumerate() {
            let index = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| corrupt(index, e.to_string()))?;
            if let Some(agent) = value.as_object().filter(|o| o.len() == 1).and_then(|o| o.get("agent")) {
                let name = agent
                    .as_str()
                    .ok_or_else(|| corrupt(index, "agent name must be text".into()))?;
                works.entry(name.to_string()).or_default();
                continue;
            }
            let w: RepresentativeWork = serde_json::from_value(value).map_err(|e| corrupt(index, e.to_string()))?;
            if w.embedding.dim() != header.dims {
                return Err(corrupt(
                    index,
                    format!("embedding has {} dims, header says {}", w.embedding.dim(), header.dims),
                ));
            }
            works.entry(w.agent_name.clone()).or_default().push(w);
            count += 1;
        }
        let stale = header.provider_id != self.embedder.provider_id() || header.dims != self.embedder.dim();
        if stale {
            log::warn!(
                "works store {} was embedded by `{}`; re-embedding with `{}`",
                path.display(),
                header.provider_id,
                self.embedder.provider_id()
            );
        }
        let mut inner = self.inner.write().unwrap();
        inner.works = works;
        inner.stale = stale;
        Ok(count)
    }

    /// Mean cosine similarity over all pairs of an agent's works; `None`
    /// with fewer than two works.
    pub fn mean_pairwise_similarity(&self, agent: &str) -> Result<Option<f64>> {
        let works = self.works_of(agent)?;
        if works.len() < 2 {
            return Ok(None);
        }
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..works.len() {
            for j in i + 1..works.len() {
                total += cosine(works[i].embedding.as_slice(), works[j].embedding.as_slice());
                pairs += 1;
            }
        }
        Ok(Some(total / pairs as f64))
    }
}
