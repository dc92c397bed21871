use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ChatResponse;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagUsage {
    pub tag: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub calls: u64,
    pub wall_time_ms: u64,
}

impl TagUsage {
    fn add(&mut self, other: &TagUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.calls += other.calls;
        self.wall_time_ms += other.wall_time_ms;
    }
}

/// Per-tag usage, ordered by tag.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageReport {
    pub entries: Vec<TagUsage>,
}

impl UsageReport {
    pub fn totals(&self) -> TagUsage {
        let mut total = TagUsage {
            tag: "total".into(),
            ..Default::default()
        };
        for e in &self.entries {
            total.add(e);
        }
        total
    }

    /// Usage accrued since `earlier` was taken from the same ledger.
    pub fn since(&self, earlier: &UsageReport) -> UsageReport {
        let before: BTreeMap<&str, &TagUsage> = earlier.entries.iter().map(|e| (e.tag.as_str(), e)).collect();
        let entries = self
            .entries
            .iter()
            .filter_map(|e| {
                let mut d = e.clone();
                if let Some(b) = before.get(e.tag.as_str()) {
                    d.prompt_tokens -= b.prompt_tokens;
                    d.completion_tokens -= b.completion_tokens;
                    d.calls -= b.calls;
                    d.wall_time_ms -= b.wall_time_ms;
                }
                (d.calls > 0).then_some(d)
            })
            .collect();
        UsageReport { entries }
    }

    /// Same report with wall times zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> UsageReport {
        UsageReport {
            entries: self
                .entries
                .iter()
                .map(|e| TagUsage {
                    wall_time_ms: 0,
                    ..e.clone()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Default)]
pub struct UsageLedger {
    inner: Mutex<BTreeMap<String, TagUsage>>,
}

impl UsageLedger {
    pub fn record(&self, tag: &str, response: &ChatResponse, wall: Duration) {
        let mut map = self.inner.lock().unwrap();
        let entry = map.entry(tag.to_string()).or_insert_with(|| TagUsage {
            tag: tag.to_string(),
            ..Default::default()
        });
        entry.add(&TagUsage {
            tag: String::new(),
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
            calls: 1,
            wall_time_ms: wall.as_millis() as u64,
        });
    }

    pub fn report(&self) -> UsageReport {
        UsageReport {
            entries: self.inner.lock().unwrap().values().cloned().collect(),
        }
    }

    pub fn reset(&self) {
        self.inner.lock().unwrap().clear();
    }
}
