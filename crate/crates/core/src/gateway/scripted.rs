use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};
use crate::error::{Error, Result};

/// One line of a script file.
///
/// `matcher` is a plain substring of the user prompt unless it starts with
/// `re:`, in which case the remainder is a regular expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub matcher: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_uses: Option<u32>,
}

impl ScriptEntry {
    pub fn new(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: matcher.into(),
            response: response.into(),
            max_uses: None,
        }
    }

    pub fn max_uses(mut self, n: u32) -> Self {
        self.max_uses = Some(n);
        self
    }
}

#[derive(Debug, Clone)]
pub enum Matcher {
    Substring(String),
    Regex(Regex),
}

impl Matcher {
    pub fn parse(raw: &str) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::precondition("script matcher must be non-empty"));
        }
        match raw.strip_prefix("re:") {
            Some(pattern) => Regex::new(pattern)
                .map(Matcher::Regex)
                .map_err(|e| Error::precondition(format!("bad script regex `{pattern}`: {e}"))),
            None => Ok(Matcher::Substring(raw.to_string())),
        }
    }

    pub fn is_match(&self, text: &str) -> bool {
        match self {
            Matcher::Substring(s) => text.contains(s.as_str()),
            Matcher::Regex(r) => r.is_match(text),
        }
    }
}

struct CompiledEntry {
    matcher: Matcher,
    response: String,
    /// `u32::MAX` stands for unlimited.
    remaining: AtomicU32,
}

/// Deterministic backend answering from an ordered script.
pub struct ScriptedBackend {
    entries: Vec<CompiledEntry>,
}

impl ScriptedBackend {
    /// Panics on an invalid matcher; use [`ScriptedBackend::try_new`] for
    /// untrusted input.
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self::try_new(entries).expect("invalid script")
    }

    pub fn try_new(entries: Vec<ScriptEntry>) -> Result<Self> {
        let entries = entries
            .into_iter()
            .map(|e| {
                if e.max_uses == Some(0) {
                    return Err(Error::precondition("max_uses must be positive"));
                }
                Ok(CompiledEntry {
                    matcher: Matcher::parse(&e.matcher)?,
                    response: e.response,
                    remaining: AtomicU32::new(e.max_uses.unwrap_or(u32::MAX)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    /// Reads a line-delimited script; blank lines are ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::try_new(parse_script(&text)?)
    }

    fn take(&self, prompt: &str) -> Option<&str> {
        for entry in &self.entries {
            if !entry.matcher.is_match(prompt) {
                continue;
            }
            let claimed = entry
                .remaining
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| match n {
                    0 => None,
                    u32::MAX => Some(u32::MAX),
                    n => Some(n - 1),
                })
                .is_ok();
            if claimed {
                return Some(&entry.response);
            }
        }
        None
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::precondition(format!("script line {}: {e}", i + 1))))
        .collect()
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, BackendError> {
        match self.take(&request.user_prompt) {
            Some(text) => Ok(ChatResponse::text(text)),
            None => {
                let excerpt: String = request.user_prompt.chars().take(160).collect();
                Err(BackendError::Fatal(Error::ScriptMiss {
                    tag: request.tag.clone(),
                    excerpt,
                }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Gateway;

    fn ask(gw: &Gateway, prompt: &str) -> Result<String> {
        gw.ask(&ChatRequest::new("test", "sys", prompt))
    }

    #[test]
    fn first_match_wins() {
        let gw = Gateway::scripted(ScriptedBackend::new(vec![
            ScriptEntry::new("population of China", "1.412B"),
            ScriptEntry::new("population", "unknown"),
        ]));
        assert_eq!(
            ask(&gw, "Determine the population of China in 2022.").unwrap(),
            "1.412B"
        );
        assert_eq!(ask(&gw, "population of India").unwrap(), "unknown");
    }

    #[test]
    fn empty_script_misses() {
        let gw = Gateway::scripted(ScriptedBackend::new(vec![]));
        assert!(matches!(ask(&gw, "anything"), Err(Error::ScriptMiss { .. })));
    }

    #[test]
    fn regex_matchers() {
        let gw = Gateway::scripted(ScriptedBackend::new(vec![ScriptEntry::new(
            r"re:(?s)planning agent.*User query: Q\d",
            "[]",
        )]));
        assert_eq!(ask(&gw, "You are a planning agent.\nUser query: Q7").unwrap(), "[]");
        assert!(ask(&gw, "User query: Q7").is_err());
    }

    #[test]
    fn max_uses_falls_through_to_next_entry() {
        let gw = Gateway::scripted(ScriptedBackend::new(vec![
            ScriptEntry::new("x", "first").max_uses(2),
            ScriptEntry::new("x", "second"),
        ]));
        let got: Vec<_> = (0..4).map(|_| ask(&gw, "x").unwrap()).collect();
        assert_eq!(got, ["first", "first", "second", "second"]);
    }

    #[test]
    fn scripted_calls_report_zero_tokens() {
        let gw = Gateway::scripted(ScriptedBackend::new(vec![ScriptEntry::new("a", "b")]));
        ask(&gw, "a").unwrap();
        ask(&gw, "a").unwrap();
        let t = gw.usage_report().totals();
        assert_eq!((t.prompt_tokens, t.completion_tokens, t.calls), (0, 0, 2));
    }

    #[test]
    fn script_file_format() {
        let text =
            "{\"matcher\":\"a\",\"response\":\"b\"}\n\n{\"matcher\":\"re:^c\",\"response\":\"d\",\"max_uses\":1}\n";
        let entries = parse_script(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[1].max_uses, Some(1));
        assert!(parse_script("{\"matcher\":1}").is_err());
        assert!(ScriptedBackend::try_new(vec![ScriptEntry::new("", "x")]).is_err());
    }

    #[test]
    fn concurrent_use_counts_are_exact() {
        let backend = std::sync::Arc::new(ScriptedBackend::new(vec![ScriptEntry::new("x", "1").max_uses(50)]));
        let hits = std::sync::atomic::AtomicU32::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..20 {
                        if backend.complete(&ChatRequest::new("t", "s", "x")).is_ok() {
                            hits.fetch_add(1, Ordering::SeqCst);
                        }
                    }
                });
            }
        });
        assert_eq!(hits.load(Ordering::SeqCst), 50);
    }
}
