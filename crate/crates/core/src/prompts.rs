//! Prompt templates and the shared ask-parse-retry helper.
//!
//! Templates are plain text files with `{{name}}` placeholders. The built-in
//! set (version `v1`) is compiled in; a directory of `<behavior>.txt` files
//! can override any of them.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway};

pub const TEMPLATE_VERSION: &str = "v1";

/// The one-shot example plan embedded in the fast-planning prompt.
pub const ONE_SHOT_PLAN: &str = include_str!("../templates/v1/one_shot_plan.json");

pub const SYSTEM_PROMPT: &str =
    "You are part of a multi-agent system. Follow the instructions in the user message exactly.";

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../templates/v1/", $name, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin![
    "fast_plan",
    "revise",
    "replan",
    "plan_in_detail",
    "re_describe",
    "detector",
    "scorer",
    "code_agent",
    "code_rewrite",
    "math_agent",
    "search_agent",
    "search_rewrite",
    "commonsense_agent",
    "custom_agent",
    "synthesize",
    "evaluate",
];

#[derive(Debug, Clone)]
pub struct Prompts {
    templates: BTreeMap<String, String>,
}

impl Default for Prompts {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Prompts {
    pub fn builtin() -> Self {
        Self {
            templates: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Built-ins overridden by every `<behavior>.txt` in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut prompts = Self::builtin();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            prompts
                .templates
                .insert(name.to_string(), std::fs::read_to_string(&path)?);
        }
        Ok(prompts)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn raw(&self, name: &str) -> Option<&str> {
        self.templates.get(name).map(String::as_str)
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String> {
        let template = self.raw(name).ok_or_else(|| Error::Template {
            template: name.to_string(),
            reason: "no such template".into(),
        })?;
        render(name, template, vars)
    }
}

/// Single-pass substitution: inserted values are never rescanned, and every
/// placeholder must be bound.
pub fn render(name: &str, template: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| Error::Template {
            template: name.to_string(),
            reason: "unterminated placeholder".into(),
        })?;
        let key = after[..end].trim();
        let value = vars
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Template {
                template: name.to_string(),
                reason: format!("unbound placeholder `{key}`"),
            })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Sends `prompt`, parses the reply, and on a retryable parse failure
/// re-prompts once with `retry_hint` appended.
pub(crate) fn ask_parsed<T>(
    gateway: &Gateway,
    tag: &str,
    prompt: String,
    retry_hint: &str,
    retryable: impl Fn(&Error) -> bool,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<T> {
    let first = gateway.ask(&ChatRequest::new(tag, SYSTEM_PROMPT, prompt.clone()))?;
    match parse(&first) {
        Err(e) if retryable(&e) => {
            log::warn!("`{tag}`: unparseable reply ({e}); re-prompting once");
            let retry = format!("{prompt}\n{retry_hint}");
            let second = gateway.ask(&ChatRequest::new(format!("{tag}.retry"), SYSTEM_PROMPT, retry))?;
            parse(&second)
        }
        other => other,
    }
}
