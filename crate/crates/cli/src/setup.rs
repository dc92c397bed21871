//! Builds engine components from a [`RunConfig`].

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use agentplan::gateway::{
    ChatBackend, Gateway, OpenAiBackend, OpenAiConfig, RecordingBackend, ReplayBackend, RetryPolicy, ScriptedBackend,
};
use agentplan::orchestrator::{
    CodeExecutor, Engine, FixtureSearch, ProcessSandbox, RewardScorer, SearchClient, StubExecutor, WebSearch,
    WebSearchConfig,
};
use agentplan::planner::Roster;
use agentplan::prompts::Prompts;
use agentplan::reward::{
    CachedEmbedder, Embedder, HashEmbedder, HttpEmbedder, HttpEmbedderConfig, RewardModel, RewardPredictor,
};
use agentplan::works::WorksStore;
use anyhow::{bail, Context, Result};

use crate::config::{CodeKind, EmbedderKind, Mode, RunConfig, SearchKind};

/// Command-line flags that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub script: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub works: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.script {
            cfg.mode = Mode::Scripted;
            cfg.gateway.script = Some(s.clone());
        }
        if let Some(r) = &self.replay {
            cfg.mode = Mode::Replay;
            cfg.gateway.replay = Some(r.clone());
        }
        if self.record.is_some() {
            cfg.gateway.record.clone_from(&self.record);
        }
        if self.trace_dir.is_some() {
            cfg.paths.traces.clone_from(&self.trace_dir);
        }
        if self.params.is_some() {
            cfg.reward.params.clone_from(&self.params);
        }
        if self.works.is_some() {
            cfg.paths.works.clone_from(&self.works);
        }
    }
}

pub fn gateway(cfg: &RunConfig) -> Result<Arc<Gateway>> {
    let (backend, retry): (Arc<dyn ChatBackend>, RetryPolicy) = match cfg.mode {
        Mode::Live => {
            let mut retry = RetryPolicy::default();
            if let Some(n) = cfg.gateway.max_retries {
                retry.max_retries = n;
            }
            (Arc::new(OpenAiBackend::new(OpenAiConfig::from_env()?)), retry)
        }
        Mode::Scripted => {
            let path = cfg
                .gateway
                .script
                .as_ref()
                .context("scripted mode needs gateway.script")?;
            let b = ScriptedBackend::from_file(path).with_context(|| format!("loading script {}", path.display()))?;
            (Arc::new(b), RetryPolicy::none())
        }
        Mode::Replay => {
            let path = cfg
                .gateway
                .replay
                .as_ref()
                .context("replay mode needs gateway.replay")?;
            let b = ReplayBackend::from_file(path).with_context(|| format!("loading recording {}", path.display()))?;
            (Arc::new(b), RetryPolicy::none())
        }
    };
    let backend: Arc<dyn ChatBackend> = match &cfg.gateway.record {
        Some(path) => Arc::new(
            RecordingBackend::new(backend, path).with_context(|| format!("opening recording {}", path.display()))?,
        ),
        None => backend,
    };
    Ok(Arc::new(Gateway::with_retry(backend, retry)))
}

pub fn prompts(cfg: &RunConfig) -> Result<Arc<Prompts>> {
    Ok(Arc::new(match &cfg.gateway.prompts {
        Some(dir) => Prompts::with_overrides(dir)?,
        None => Prompts::builtin(),
    }))
}

/// The configured embedder, wrapped in a cache when one is configured.
pub struct Embedding {
    pub embedder: Arc<dyn Embedder>,
    cache: Option<(Arc<CachedEmbedder>, PathBuf)>,
}

impl Embedding {
    pub fn save_cache(&self) -> Result<()> {
        if let Some((c, path)) = &self.cache {
            c.save(path)
                .with_context(|| format!("writing embedding cache {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn embedder(cfg: &RunConfig) -> Result<Embedding> {
    let e = &cfg.embedder;
    let base: Arc<dyn Embedder> = match e.kind {
        EmbedderKind::Hash => Arc::new(HashEmbedder::with_dim(e.seed, e.dim)),
        EmbedderKind::Http => {
            let mut c = HttpEmbedderConfig::from_env()?;
            c.dim = e.dim;
            Arc::new(HttpEmbedder::new(c))
        }
    };
    match &e.cache {
        Some(path) => {
            let cached = Arc::new(CachedEmbedder::new(base));
            if path.exists() {
                let n = cached.load(path)?;
                log::info!("loaded {n} cached embeddings from {}", path.display());
            }
            Ok(Embedding {
                embedder: cached.clone(),
                cache: Some((cached, path.clone())),
            })
        }
        None => Ok(Embedding {
            embedder: base,
            cache: None,
        }),
    }
}

pub fn scorer(cfg: &RunConfig, embedder: Arc<dyn Embedder>) -> Result<Arc<dyn RewardScorer>> {
    if let Some(path) = &cfg.reward.params {
        let model = RewardModel::load(path).with_context(|| format!("loading reward parameters {}", path.display()))?;
        return Ok(Arc::new(RewardPredictor::new(Arc::new(model), embedder)?));
    }
    if let Some(fixed) = &cfg.reward.fixed {
        return Ok(Arc::new(fixed.clone()));
    }
    bail!("no reward model configured: set reward.params (or --params) or a reward.fixed table")
}

pub fn works(cfg: &RunConfig, embedder: Arc<dyn Embedder>, roster: &Roster) -> Result<Arc<WorksStore>> {
    let store = WorksStore::new(embedder, roster).with_dedup_threshold(cfg.routing.dedup_threshold);
    if let Some(path) = &cfg.paths.works {
        if path.exists() {
            let n = store
                .load(path)
                .with_context(|| format!("loading works store {}", path.display()))?;
            log::info!("loaded {n} representative works from {}", path.display());
        }
    }
    Ok(Arc::new(store))
}

pub fn code_executor(cfg: &RunConfig) -> Arc<dyn CodeExecutor> {
    match cfg.code.kind {
        CodeKind::Sandbox => Arc::new(match &cfg.code.interpreter {
            Some(i) => ProcessSandbox::with_interpreter(i.clone()),
            None => ProcessSandbox::default(),
        }),
        CodeKind::Stub => Arc::new(StubExecutor::new(
            cfg.code
                .stub
                .iter()
                .map(|s| (s.contains.clone(), s.stdout.clone()))
                .collect(),
        )),
    }
}

pub fn search(cfg: &RunConfig) -> Result<Arc<dyn SearchClient>> {
    Ok(match cfg.search.kind {
        SearchKind::Web => Arc::new(WebSearch::new(WebSearchConfig::from_env()?)),
        SearchKind::Fixture => {
            let path = cfg
                .search
                .fixtures
                .as_ref()
                .context("fixture search needs search.fixtures")?;
            Arc::new(
                FixtureSearch::from_file(path)
                    .with_context(|| format!("loading search fixtures {}", path.display()))?,
            )
        }
    })
}

/// A ready engine plus what must be written back after a run.
pub struct Runtime {
    pub engine: Engine,
    pub embedding: Embedding,
    pub works_path: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
}

impl Runtime {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Self::with_gateway(cfg, gateway(cfg)?)
    }

    /// Builds everything from `cfg` except the gateway, which is given.
    pub fn with_gateway(cfg: &RunConfig, gateway: Arc<Gateway>) -> Result<Self> {
        cfg.validate()?;
        let roster = cfg.roster()?;
        let embedding = embedder(cfg)?;
        let scorer = scorer(cfg, embedding.embedder.clone())?;
        let works = works(cfg, embedding.embedder.clone(), &roster)?;
        let mut engine = Engine::new(
            gateway,
            prompts(cfg)?,
            roster,
            scorer,
            works,
            code_executor(cfg),
            search(cfg)?,
            cfg.routing.clone(),
        )?;
        engine.pool = engine
            .pool
            .clone()
            .with_code_timeout(Duration::from_secs_f64(cfg.code.timeout_secs));
        Ok(Self {
            engine,
            embedding,
            works_path: cfg.paths.works.clone(),
            trace_dir: cfg.paths.traces.clone(),
        })
    }

    /// Writes the works store and embedding cache back to disk.
    pub fn persist(&self) -> Result<()> {
        if let Some(path) = &self.works_path {
            self.engine
                .works
                .save(path)
                .with_context(|| format!("writing works store {}", path.display()))?;
        }
        self.embedding.save_cache()
    }
}
