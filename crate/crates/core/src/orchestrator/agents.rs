//! Agent adapters: code, math, search, commonsense and custom agents, plus
//! the code-execution and web-search hooks they rely on.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::executor::{Artifacts, ExecutionRecord, RecordStatus};
use crate::error::{CodeFailure, Error, Result};
use crate::gateway::{ChatRequest, Gateway};
use crate::planner::{AgentDescriptor, AgentKind, Roster, SubTask};
use crate::prompts::{ask_parsed, Prompts, SYSTEM_PROMPT};
use crate::reward::SubtaskRunner;

pub const DEFAULT_CODE_TIMEOUT: Duration = Duration::from_secs(10);
const SEARCH_TOP_K: usize = 5;

/// Runs generated Python and returns its standard output.
pub trait CodeExecutor: Send + Sync {
    fn execute(&self, code: &str, timeout: Duration) -> std::result::Result<String, CodeFailure>;
}

/// Canned standard output keyed by a substring of the code; first match
/// wins. Nothing is executed.
#[derive(Debug, Clone, Default)]
pub struct StubExecutor {
    outputs: Vec<(String, String)>,
}

impl StubExecutor {
    pub fn new(outputs: Vec<(String, String)>) -> Self {
        Self { outputs }
    }

    pub fn always(stdout: impl Into<String>) -> Self {
        Self::new(vec![(String::new(), stdout.into())])
    }
}

impl CodeExecutor for StubExecutor {
    fn execute(&self, code: &str, _timeout: Duration) -> std::result::Result<String, CodeFailure> {
        self.outputs
            .iter()
            .find(|(k, _)| code.contains(k.as_str()))
            .map(|(_, out)| out.clone())
            .ok_or_else(|| CodeFailure::Launch("no canned output for this code".into()))
    }
}

#[cfg(feature = "sandbox")]
pub use self::sandbox::ProcessSandbox;

#[cfg(feature = "sandbox")]
mod sandbox {
    use std::io::Read;
    use std::process::{Command, Stdio};
    use std::time::{Duration, Instant};

    use super::CodeExecutor;
    use crate::error::CodeFailure;

    /// Runs code with `python3 -I` in a fresh temporary directory, with an
    /// empty environment and a wall-clock limit. This isolates the working
    /// directory and configuration, not the network or filesystem.
    #[derive(Debug, Clone)]
    pub struct ProcessSandbox {
        interpreter: String,
    }

    impl Default for ProcessSandbox {
        fn default() -> Self {
            Self {
                interpreter: "python3".into(),
            }
        }
    }

    impl ProcessSandbox {
        pub fn with_interpreter(interpreter: impl Into<String>) -> Self {
            Self {
                interpreter: interpreter.into(),
            }
        }
    }

    impl CodeExecutor for ProcessSandbox {
        fn execute(&self, code: &str, timeout: Duration) -> Result<String, CodeFailure> {
            let dir = tempfile::tempdir().map_err(|e| CodeFailure::Launch(e.to_string()))?;
            let script = dir.path().join("main.py");
            std::fs::write(&script, code).map_err(|e| CodeFailure::Launch(e.to_string()))?;
            let mut child = Command::new(&self.interpreter)
                .arg("-I")
                .arg(&script)
                .current_dir(dir.path())
                .env_clear()
                .env("PATH", "/usr/local/bin:/usr/bin:/bin")
                .stdin(Stdio::null())
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .map_err(|e| CodeFailure::Launch(format!("{}: {e}", self.interpreter)))?;
            let mut stdout = child.stdout.take().expect("piped");
            let mut stderr = child.stderr.take().expect("piped");
            let out = std::thread::spawn(move || {
                let mut s = String::new();
                let _ = stdout.read_to_string(&mut s);
                s
            });
            let err = std::thread::spawn(move || {
                let mut s = String::new();
                let _ = stderr.read_to_string(&mut s);
                s
            });
            let start = Instant::now();
            let status = loop {
                match child.try_wait().map_err(|e| CodeFailure::Launch(e.to_string()))? {
                    Some(status) => break status,
                    None if start.elapsed() >= timeout => {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(CodeFailure::Timeout(timeout.as_millis() as u64));
                    }
                    None => std::thread::sleep(Duration::from_millis(10)),
                }
            };
            let stdout = out.join().unwrap_or_default();
            let stderr = err.join().unwrap_or_default();
            if !status.success() {
                return Err(CodeFailure::NonZeroExit {
                    code: status.code(),
                    stderr: stderr.trim().chars().take(2000).collect(),
                });
            }
            if stdout.trim().is_empty() {
                return Err(CodeFailure::EmptyStdout);
            }
            Ok(stdout.trim_end().to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub title: String,
    pub snippet: String,
    pub url: String,
}

/// A web search: query string in, ranked snippets out.
pub trait SearchClient: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<Snippet>>;
}

/// Canned results keyed by query, matched case-insensitively after
/// trimming. Unknown queries return no results.
#[derive(Debug, Clone, Default)]
pub struct FixtureSearch {
    results: HashMap<String, Vec<Snippet>>,
}

fn normalize_query(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl FixtureSearch {
    pub fn new(results: impl IntoIterator<Item = (String, Vec<Snippet>)>) -> Self {
        Self {
            results: results.into_iter().map(|(k, v)| (normalize_query(&k), v)).collect(),
        }
    }

    /// Reads a JSON object mapping query strings to snippet lists.
    pub fn from_file(path: &Path) -> Result<Self> {
        let map: HashMap<String, Vec<Snippet>> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(Self::new(map))
    }
}

impl SearchClient for FixtureSearch {
    fn search(&self, query: &str) -> Result<Vec<Snippet>> {
        Ok(self.results.get(&normalize_query(query)).cloned().unwrap_or_default())
    }
}

#[cfg(feature = "http")]
pub use self::web::{WebSearch, WebSearchConfig};

#[cfg(feature = "http")]
mod web {
    use std::time::Duration;

    use serde::Deserialize;

    use super::{SearchClient, Snippet, SEARCH_TOP_K};
    use crate::error::{Error, Result};

    /// A Bing-style web search endpoint.
    #[derive(Debug, Clone, PartialEq)]
    pub struct WebSearchConfig {
        pub endpoint: String,
        pub api_key: String,
    }

    impl WebSearchConfig {
        /// Reads `SEARCH_API_KEY` and optionally `SEARCH_API_BASE`.
        pub fn from_env() -> Result<Self> {
            let api_key = std::env::var("SEARCH_API_KEY")
                .map_err(|_| Error::SearchUnavailable("SEARCH_API_KEY is not set".into()))?;
            Ok(Self {
                endpoint: std::env::var("SEARCH_API_BASE")
                    .unwrap_or_else(|_| "https://api.bing.microsoft.com/v7.0/search".into()),
                api_key,
            })
        }
    }

    pub struct WebSearch {
        config: WebSearchConfig,
        agent: ureq::Agent,
    }

    #[derive(Deserialize)]
    struct Body {
        #[serde(rename = "webPages")]
        web_pages: Option<Pages>,
    }

    #[derive(Deserialize)]
    struct Pages {
        value: Vec<Page>,
    }

    #[derive(Deserialize)]
    struct Page {
        name: String,
        snippet: String,
        url: String,
    }

    impl WebSearch {
        pub fn new(config: WebSearchConfig) -> Self {
            Self {
                agent: crate::gateway::http_agent(Duration::from_secs(30)),
                config,
            }
        }
    }

    impl SearchClient for WebSearch {
        fn search(&self, query: &str) -> Result<Vec<Snippet>> {
            let unavailable = |e: String| Error::SearchUnavailable(e);
            let mut resp = self
                .agent
                .get(&self.config.endpoint)
                .query("q", query)
                .query("count", SEARCH_TOP_K.to_string())
                .header("Ocp-Apim-Subscription-Key", &self.config.api_key)
                .call()
                .map_err(|e| unavailable(e.to_string()))?;
            if !resp.status().is_success() {
                return Err(unavailable(format!("HTTP {}", resp.status().as_u16())));
            }
            let body: Body = resp.body_mut().read_json().map_err(|e| unavailable(e.to_string()))?;
            Ok(body
                .web_pages
                .map(|p| p.value)
                .unwrap_or_default()
                .into_iter()
                .take(SEARCH_TOP_K)
                .map(|p| Snippet {
                    title: p.name,
                    snippet: p.snippet,
                    url: p.url,
                })
                .collect())
        }
    }

}

fn code_block_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[ \t]*(?:python3?|py)?[ \t]*\r?\n(.*?)```").unwrap())
}

/// The first fenced code block's body.
pub fn extract_code(raw: &str) -> Result<String> {
    code_block_regex()
        .captures(raw)
        .map(|c| c[1].trim_end().to_string())
        .filter(|c| !c.trim().is_empty())
        .ok_or(Error::CodeExtraction)
}

/// The contents of the last `\boxed{...}`, honouring nested braces.
pub fn extract_boxed(raw: &str) -> Result<String> {
    let start = raw.rfind("\\boxed{").ok_or(Error::BoxedAnswerMissing)? + "\\boxed{".len();
    let mut depth = 1;
    for (i, ch) in raw[start..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    let ans = raw[start..start + i].trim();
                    return if ans.is_empty() {
                        Err(Error::BoxedAnswerMissing)
                    } else {
                        Ok(ans.to_string())
                    };
                }
            }
            _ => {}
        }
    }
    Err(Error::BoxedAnswerMissing)
}

/// Everything an agent needs besides its own prompt.
#[derive(Clone)]
pub struct AgentPool {
    gateway: Arc<Gateway>,
    prompts: Arc<Prompts>,
    roster: Roster,
    code: Arc<dyn CodeExecutor>,
    search: Arc<dyn SearchClient>,
    code_timeout: Duration,
}

impl AgentPool {
    pub fn new(
        gateway: Arc<Gateway>,
        prompts: Arc<Prompts>,
        roster: Roster,
        code: Arc<dyn CodeExecutor>,
        search: Arc<dyn SearchClient>,
    ) -> Self {
        Self {
            gateway,
            prompts,
            roster,
            code,
            search,
            code_timeout: DEFAULT_CODE_TIMEOUT,
        }
    }

    pub fn with_code_timeout(mut self, timeout: Duration) -> Self {
        self.code_timeout = timeout;
        self
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    fn ask(&self, tag: &str, prompt: String) -> Result<String> {
        self.gateway.ask(&ChatRequest::new(tag, SYSTEM_PROMPT, prompt))
    }

    /// Runs `subtask` on its assigned agent. Agent errors become a failed
    /// record rather than an `Err`.
    pub fn run(&self, subtask: &SubTask, history: &str) -> ExecutionRecord {
        match self.roster.get(&subtask.agent_name) {
            Some(agent) => self.run_as(subtask, agent, history),
            None => failed(
                subtask,
                &subtask.agent_name,
                Artifacts::default(),
                Error::UnknownAgent(subtask.agent_name.clone()),
            ),
        }
    }

    pub fn run_as(&self, subtask: &SubTask, agent: &AgentDescriptor, history: &str) -> ExecutionRecord {
        let mut artifacts = Artifacts::default();
        let result = match agent.kind {
            AgentKind::Code => self.run_code_agent(subtask, history, &mut artifacts),
            AgentKind::Math => self.run_math_agent(subtask, history, &mut artifacts),
            AgentKind::Search => self.run_search_agent(subtask, history, &mut artifacts),
            AgentKind::Commonsense => self.run_commonsense_agent(subtask, history),
            AgentKind::Custom => self.run_custom_agent(subtask, agent, history),
        };
        match result {
            Ok(response) if !response.trim().is_empty() => ExecutionRecord {
                subtask_id: subtask.id,
                task: subtask.task.clone(),
                agent_name: agent.name.clone(),
                response,
                status: RecordStatus::Ok,
                error: None,
                artifacts,
            },
            Ok(_) => failed(
                subtask,
                &agent.name,
                artifacts,
                Error::precondition("agent returned an empty response"),
            ),
            Err(e) => failed(subtask, &agent.name, artifacts, e),
        }
    }

    pub fn run_code_agent(&self, subtask: &SubTask, history: &str, artifacts: &mut Artifacts) -> Result<String> {
        let prompt = self
            .prompts
            .render("code_agent", &[("task", &subtask.task), ("history", history)])?;
        let code = extract_code(&self.ask("code_agent", prompt)?)?;
        artifacts.code = Some(code.clone());
        let output = self
            .code
            .execute(&code, self.code_timeout)
            .map_err(Error::CodeExecution)?;
        artifacts.tool_output = Some(output.clone());
        let prompt = self.prompts.render(
            "code_rewrite",
            &[("task", &subtask.task), ("code", &code), ("output", &output)],
        )?;
        Ok(self.ask("code_rewrite", prompt)?.trim().to_string())
    }

    pub fn run_math_agent(&self, subtask: &SubTask, history: &str, artifacts: &mut Artifacts) -> Result<String> {
        let prompt = self
            .prompts
            .render("math_agent", &[("task", &subtask.task), ("history", history)])?;
        let (reasoning, ans) = ask_parsed(
            &self.gateway,
            "math_agent",
            prompt,
            "End with the sentence 'The answer is \\boxed{ANS}.'",
            |e| matches!(e, Error::BoxedAnswerMissing),
            |raw| extract_boxed(raw).map(|ans| (raw.trim().to_string(), ans)),
        )?;
        artifacts.answer = Some(ans);
        Ok(reasoning)
    }

    pub fn run_search_agent(&self, subtask: &SubTask, history: &str, artifacts: &mut Artifacts) -> Result<String> {
        let prompt = self
            .prompts
            .render("search_agent", &[("task", &subtask.task), ("history", history)])?;
        let raw = self.ask("search_agent", prompt)?;
        let query = raw
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or_default()
            .trim_start_matches("Search query:")
            .trim()
            .trim_matches(|c| matches!(c, '"' | '\'' | '`'))
            .to_string();
        if query.is_empty() {
            return Err(Error::SearchUnavailable("empty search query".into()));
        }
        artifacts.search_query = Some(query.clone());
        let hits = self.search.search(&query)?;
        if hits.is_empty() {
            return Err(Error::EmptyResults(query));
        }
        let snippets = hits
            .iter()
            .take(SEARCH_TOP_K)
            .map(|h| format!("{}: {}", h.title, h.snippet))
            .collect::<Vec<_>>()
            .join("\n");
        artifacts.tool_output = Some(snippets.clone());
        let prompt = self
            .prompts
            .render("search_rewrite", &[("task", &subtask.task), ("snippets", &snippets)])?;
        Ok(self.ask("search_rewrite", prompt)?.trim().to_string())
    }

    pub fn run_commonsense_agent(&self, subtask: &SubTask, history: &str) -> Result<String> {
        let prompt = self
            .prompts
            .render("commonsense_agent", &[("task", &subtask.task), ("history", history)])?;
        Ok(self.ask("commonsense_agent", prompt)?.trim().to_string())
    }

    pub fn run_custom_agent(&self, subtask: &SubTask, agent: &AgentDescriptor, history: &str) -> Result<String> {
        let prompt = self.prompts.render(
            "custom_agent",
            &[
                ("name", &agent.name),
                ("description", &agent.description),
                ("task", &subtask.task),
                ("history", history),
            ],
        )?;
        Ok(self
            .ask(&format!("custom_agent.{}", agent.name), prompt)?
            .trim()
            .to_string())
    }
}

fn failed(subtask: &SubTask, agent: &str, artifacts: Artifacts, e: Error) -> ExecutionRecord {
    ExecutionRecord {
        subtask_id: subtask.id,
        task: subtask.task.clone(),
        agent_name: agent.to_string(),
        response: String::new(),
        status: RecordStatus::Failed,
        error: Some(e.to_string()),
        artifacts,
    }
}

impl SubtaskRunner for AgentPool {
    fn run(&self, subtask: &SubTask, agent: &AgentDescriptor, history: &str) -> Result<String> {
        let record = self.run_as(subtask, agent, history);
        match record.status {
            RecordStatus::Ok => Ok(record.answer().to_string()),
            RecordStatus::Failed => Err(Error::AgentFailure {
                subtask_id: subtask.id,
                message: record.error.unwrap_or_default(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptEntry, ScriptedBackend};

    fn pool(entries: Vec<ScriptEntry>, code: Arc<dyn CodeExecutor>, search: FixtureSearch) -> AgentPool {
        AgentPool::new(
            Arc::new(Gateway::scripted(ScriptedBackend::new(entries))),
            Arc::new(Prompts::builtin()),
            Roster::standard(),
            code,
            Arc::new(search),
        )
    }

    #[test]
    fn boxed_extraction() {
        assert_eq!(extract_boxed("The answer is \\boxed{42}.").unwrap(), "42");
        assert_eq!(
            extract_boxed("so \\boxed{1.5\\times10^{7}}.").unwrap(),
            "1.5\\times10^{7}"
        );
        assert_eq!(extract_boxed("\\boxed{1} then \\boxed{2}").unwrap(), "2");
        assert!(matches!(extract_boxed("no box"), Err(Error::BoxedAnswerMissing)));
        assert!(matches!(
            extract_boxed("\\boxed{unclosed"),
            Err(Error::BoxedAnswerMissing)
        ));
    }

    #[test]
    fn code_extraction() {
        assert_eq!(extract_code("Code:\n```python\nprint(1)\n```").unwrap(), "print(1)");
        assert_eq!(extract_code("```\nx = 2\nprint(x)\n```").unwrap(), "x = 2\nprint(x)");
        assert!(matches!(extract_code("print(1)"), Err(Error::CodeExtraction)));
    }

    #[test]
    fn code_agent_runs_and_rewrites() {
        let sentence = "The combined population of China and India in 2022 is 2829000000.0 people.";
        let p = pool(
            vec![
                ScriptEntry::new("You are a code agent", "```python\nprint(1.412e9 + 1.417e9)\n```"),
                ScriptEntry::new("You are a rewrite agent. Given the input question", sentence),
            ],
            Arc::new(StubExecutor::always("2829000000.0")),
            FixtureSearch::default(),
        );
        let st = SubTask::new(
            1,
            "Calculate the combined population of China and India in 2022.",
            "code_agent",
            vec![],
        );
        let rec = p.run(
            &st,
            "The answer of 'Determine the population of China in 2022' is 1.412B.",
        );
        assert_eq!(rec.status, RecordStatus::Ok);
        assert_eq!(rec.response, sentence);
        assert_eq!(rec.artifacts.tool_output.as_deref(), Some("2829000000.0"));

        let bad = pool(
            vec![ScriptEntry::new("You are a code agent", "I would rather not.")],
            Arc::new(StubExecutor::always("x")),
            FixtureSearch::default(),
        );
        let rec = bad.run(&st, "None");
        assert_eq!(rec.status, RecordStatus::Failed);
        assert!(rec.error.unwrap().contains("fenced code"));
    }

    #[test]
    fn math_agent_retries_then_fails() {
        let p = pool(
            vec![ScriptEntry::new("You are a math agent", "It is about seven.")],
            Arc::new(StubExecutor::default()),
            FixtureSearch::default(),
        );
        let st = SubTask::new(1, "Compute 3 + 4.", "math_agent", vec![]);
        let rec = p.run(&st, "None");
        assert_eq!(rec.status, RecordStatus::Failed);
        assert_eq!(p.gateway.usage_report().totals().calls, 2);

        let ok = pool(
            vec![ScriptEntry::new(
                "You are a math agent",
                "3 + 4 = 7. The answer is \\boxed{7}.",
            )],
            Arc::new(StubExecutor::default()),
            FixtureSearch::default(),
        );
        let rec = ok.run(&st, "None");
        assert_eq!(rec.answer(), "7");
        assert!(rec.response.contains("3 + 4 = 7"));
    }

    #[test]
    fn search_agent_paths() {
        let snippet = Snippet {
            title: "China".into(),
            snippet: "1.412 billion (2022)".into(),
            url: "u".into(),
        };
        let search = FixtureSearch::new([("China population 2022".to_string(), vec![snippet])]);
        let p = pool(
            vec![
                ScriptEntry::new("You are a search agent", "China population 2022").max_uses(1),
                ScriptEntry::new("You are a search agent", "Mars population 2022"),
                ScriptEntry::new("You are a rewrite agent. Given the search question", "1.412B"),
            ],
            Arc::new(StubExecutor::default()),
            search,
        );
        let st = SubTask::new(1, "Determine the population of China in 2022.", "search_agent", vec![]);
        let rec = p.run(&st, "None");
        assert_eq!(rec.status, RecordStatus::Ok);
        assert_eq!(rec.response, "1.412B");
        assert_eq!(rec.artifacts.search_query.as_deref(), Some("China population 2022"));

        let rec = p.run(&st, "None");
        assert_eq!(rec.status, RecordStatus::Failed);
        assert!(rec.error.unwrap().contains("no results"));
    }

    #[test]
    fn commonsense_injects_history_and_rejects_empty() {
        let p = pool(
            vec![
                ScriptEntry::new("History: The answer of 'x' is 1.", "Yes."),
                ScriptEntry::new("You are a commonsense agent", "   "),
            ],
            Arc::new(StubExecutor::default()),
            FixtureSearch::default(),
        );
        let st = SubTask::new(1, "Is it?", "commonsense_agent", vec![]);
        assert_eq!(p.run(&st, "The answer of 'x' is 1.").response, "Yes.");
        assert_eq!(p.run(&st, "None").status, RecordStatus::Failed);
    }

    #[cfg(feature = "sandbox")]
    #[test]
    fn process_sandbox() {
        if std::process::Command::new("python3").arg("-V").output().is_err() {
            eprintln!("python3 not available; skipping");
            return;
        }
        let sb = ProcessSandbox::default();
        let t = Duration::from_secs(5);
        assert_eq!(sb.execute("print(6 * 7)", t).unwrap(), "42");
        assert!(matches!(
            sb.execute("import sys; sys.exit(3)", t),
            Err(CodeFailure::NonZeroExit { code: Some(3), .. })
        ));
        assert!(matches!(sb.execute("x = 1", t), Err(CodeFailure::EmptyStdout)));
        assert!(matches!(
            sb.execute("while True:\n    pass", Duration::from_millis(300)),
            Err(CodeFailure::Timeout(300))
        ));
        assert!(matches!(
            ProcessSandbox::with_interpreter("/nonexistent/python").execute("print(1)", t),
            Err(CodeFailure::Launch(_))
        ));
    }
}
