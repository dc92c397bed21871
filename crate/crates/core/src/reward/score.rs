//! Judge annotations: the three-criterion score, its mapping onto the 0..=8
//! level scale, and the LLM-backed scorer that produces it.

use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::prompts::{ask_parsed, Prompts};

/// Correctness, relevance and completeness, each in `0..=2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriScore {
    correctness: u8,
    relevance: u8,
    completeness: u8,
}

impl TriScore {
    pub fn new(correctness: u8, relevance: u8, completeness: u8) -> Result<Self> {
        if correctness > 2 || relevance > 2 || completeness > 2 {
            return Err(Error::precondition(format!(
                "score components must be 0, 1 or 2, got ({correctness}, {relevance}, {completeness})"
            )));
        }
        Ok(Self {
            correctness,
            relevance,
            completeness,
        })
    }

    pub fn correctness(&self) -> u8 {
        self.correctness
    }

    pub fn relevance(&self) -> u8 {
        self.relevance
    }

    pub fn completeness(&self) -> u8 {
        self.completeness
    }

    /// Every valid score, in lexicographic order.
    pub fn all() -> impl Iterator<Item = TriScore> {
        (0..27u8).map(|i| TriScore {
            correctness: i / 9,
            relevance: i / 3 % 3,
            completeness: i % 3,
        })
    }
}

/// Maps a judge annotation to the level scale. Any score with a zero
/// component maps to 0.
pub fn level_score(t: TriScore) -> u8 {
    match (t.correctness, t.relevance, t.completeness) {
        (2, 2, 2) => 8,
        (2, 1, 2) => 7,
        (2, 2, 1) => 6,
        (2, 1, 1) => 5,
        (1, 2, 2) => 4,
        (1, 1, 2) => 3,
        (1, 2, 1) => 2,
        (1, 1, 1) => 1,
        _ => 0,
    }
}

fn summary_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\*\*\s*correctness\s*:\s*(\d+)\s*,\s*relevance\s*:\s*(\d+)\s*,\s*completeness\s*:\s*(\d+)\s*\*\*",
        )
        .unwrap()
    })
}

/// Reads the last `**Correctness: a, Relevance: b, Completeness: c**` line.
pub fn parse_summary(raw: &str) -> Result<TriScore> {
    let caps = summary_regex()
        .captures_iter(raw)
        .last()
        .ok_or_else(|| Error::ScoreParse(excerpt(raw)))?;
    let digit = |i: usize| caps[i].parse::<u8>().map_err(|_| Error::ScoreParse(excerpt(raw)));
    TriScore::new(digit(1)?, digit(2)?, digit(3)?).map_err(|_| Error::ScoreParse(excerpt(raw)))
}

fn excerpt(raw: &str) -> String {
    let tail: String = raw
        .chars()
        .rev()
        .take(120)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    tail.trim().to_string()
}

/// The LLM judge used to annotate agent responses.
pub struct LlmScorer {
    gateway: Arc<Gateway>,
    prompts: Arc<Prompts>,
}

impl LlmScorer {
    pub fn new(gateway: Arc<Gateway>, prompts: Arc<Prompts>) -> Self {
        Self { gateway, prompts }
    }

    pub fn llm_score(&self, subtask: &str, response: &str) -> Result<TriScore> {
        if subtask.trim().is_empty() || response.trim().is_empty() {
            return Err(Error::precondition("scorer needs a non-empty task and response"));
        }
        let prompt = self
            .prompts
            .render("scorer", &[("task", subtask), ("response", response)])?;
        ask_parsed(
            &self.gateway,
            "scorer",
            prompt,
            "End your response with the line **Correctness: score, Relevance: score, Completeness: score**.",
            |e| matches!(e, Error::ScoreParse(_)),
            parse_summary,
        )
    }
}
