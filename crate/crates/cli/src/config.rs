//! The run configuration file.

use std::path::{Path, PathBuf};

use agentplan::orchestrator::{FixedScorer, RoutingConfig};
use agentplan::planner::{AgentDescriptor, Roster};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Live,
    Scripted,
    Replay,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    /// Script file for scripted mode.
    pub script: Option<PathBuf>,
    /// Recording to replay in replay mode.
    pub replay: Option<PathBuf>,
    /// Append every exchange to this file.
    pub record: Option<PathBuf>,
    pub max_retries: Option<u32>,
    /// Directory of prompt template overrides.
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    /// Trained regressor parameters.
    pub params: Option<PathBuf>,
    /// Fixed score table, used when no parameters are given.
    pub fixed: Option<FixedScorer>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSection {
    pub kind: EmbedderKind,
    pub seed: u64,
    pub dim: usize,
    /// On-disk embedding cache.
    pub cache: Option<PathBuf>,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hash,
            seed: 0,
            dim: agentplan::reward::EMBEDDING_DIM,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    #[default]
    Web,
    Fixture,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub kind: SearchKind,
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeKind {
    #[default]
    Sandbox,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubOutput {
    pub contains: String,
    pub stdout: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeSection {
    pub kind: CodeKind,
    pub interpreter: Option<String>,
    pub timeout_secs: f64,
    pub stub: Vec<StubOutput>,
}

impl Default for CodeSection {
    fn default() -> Self {
        Self {
            kind: CodeKind::Sandbox,
            interpreter: None,
            timeout_secs: agentplan::orchestrator::DEFAULT_CODE_TIMEOUT.as_secs_f64(),
            stub: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub works: Option<PathBuf>,
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Empty means the standard four agents.
    pub roster: Vec<AgentDescriptor>,
    pub routing: RoutingConfig,
    pub gateway: GatewaySection,
    pub reward: RewardSection,
    pub embedder: EmbedderSection,
    pub search: SearchSection,
    pub code: CodeSection,
    pub paths: PathsSection,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a TOML config. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.gateway.script,
            &mut cfg.gateway.replay,
            &mut cfg.gateway.record,
            &mut cfg.gateway.prompts,
            &mut cfg.reward.params,
            &mut cfg.embedder.cache,
            &mut cfg.search.fixtures,
            &mut cfg.paths.works,
            &mut cfg.paths.traces,
        ] {
            rebase(base, p);
        }
        Ok(cfg)
    }

    pub fn roster(&self) -> Result<Roster> {
        if self.roster.is_empty() {
            return Ok(Roster::standard());
        }
        Ok(Roster::new(self.roster.clone())?)
    }

    /// Checks the config is usable for its mode.
    pub fn validate(&self) -> Result<()> {
        self.routing.validate()?;
        self.roster()?;
        match self.mode {
            Mode::Scripted => {
                let Some(script) = &self.gateway.script else {
                    bail!("scripted mode needs gateway.script");
                };
                if !script.exists() {
                    bail!("script file {} does not exist", script.display());
                }
            }
            Mode::Replay => {
                let Some(rec) = &self.gateway.replay else {
                    bail!("replay mode needs gateway.replay");
                };
                if !rec.exists() {
                    bail!("replay file {} does not exist", rec.display());
                }
            }
            Mode::Live => {}
        }
        if self.search.kind == SearchKind::Fixture && self.search.fixtures.is_none() {
            bail!("fixture search needs search.fixtures");
        }
        if let Some(p) = &self.reward.params {
            if !p.exists() {
                bail!("reward parameters {} do not exist", p.display());
            }
        }
        if self.code.timeout_secs <= 0.0 || !self.code.timeout_secs.is_finite() {
            bail!("code.timeout_secs must be positive");
        }
        Ok(())
    }
}
