use thiserror::Error;

use crate::planner::Plan;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a plan failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanViolation {
    #[error("plan has no sub-tasks")]
    Empty,
    #[error("sub-task id must be positive")]
    ZeroId,
    #[error("duplicate sub-task id {0}")]
    DuplicateId(u32),
    #[error("unknown agent `{name}` on sub-task {id}")]
    UnknownAgent { id: u32, name: String },
    #[error("sub-task {id} depends on missing sub-task {dep}")]
    MissingDependency { id: u32, dep: u32 },
    #[error("sub-task {0} depends on itself")]
    SelfDependency(u32),
    #[error("dependency cycle through sub-tasks {0:?}")]
    Cycle(Vec<u32>),
    #[error("sub-task {0} has an empty task description")]
    EmptyTask(u32),
}

/// Failure modes of the code-execution sandbox.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeFailure {
    #[error("timed out after {0} ms")]
    Timeout(u64),
    #[error("exited with status {code:?}: {stderr}")]
    NonZeroExit { code: Option<i32>, stderr: String },
    #[error("produced no output")]
    EmptyStdout,
    #[error("could not launch interpreter: {0}")]
    Launch(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error("no script entry matches prompt (tag `{tag}`): {excerpt}")]
    ScriptMiss { tag: String, excerpt: String },
    #[error("no recorded response for request {hash} (tag `{tag}`)")]
    ReplayMiss { tag: String, hash: String },

    #[error("could not parse plan: {0}")]
    PlanParse(String),
    #[error("invalid plan: {0}")]
    PlanValidation(#[from] PlanViolation),
    #[error("replan budget of {max} exhausted for query `{query_id}`")]
    ReplanBudgetExhausted { query_id: String, max: u32 },
    #[error("splice rejected: {0}")]
    Splice(PlanViolation),
    #[error("no ***rewritten*** span in response: {0}")]
    RewriteParse(String),

    #[error("embedding provider unavailable: {0}")]
    EmbeddingUnavailable(String),
    #[error("no score summary line in scorer response: {0}")]
    ScoreParse(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    NumericalDivergence { epoch: usize, loss: f64 },

    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("store corrupt at record {index}: {reason}")]
    StoreCorrupt { index: usize, reason: String },

    #[error("detector response has neither pass phrase nor analysis: {0}")]
    DetectParse(String),

    #[error("stabilization budget exhausted: {reason}")]
    StabilizationBudgetExhausted { reason: String, best: Box<Plan> },
    #[error("agent failed on sub-task {subtask_id}: {message}")]
    AgentFailure { subtask_id: u32, message: String },
    #[error("no fenced code block in response")]
    CodeExtraction,
    #[error("code execution failed: {0}")]
    CodeExecution(CodeFailure),
    #[error("no \\boxed{{...}} answer in response")]
    BoxedAnswerMissing,
    #[error("search unavailable: {0}")]
    SearchUnavailable(String),
    #[error("search returned no results for `{0}`")]
    EmptyResults(String),
    #[error("judge answered neither yes nor no: {0}")]
    JudgeParse(String),

    #[error("template `{template}`: {reason}")]
    Template { template: String, reason: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
