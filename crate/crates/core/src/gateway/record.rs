use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};
use crate::error::{Error, Result};

/// One line of a recording file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub tag: String,
    pub request_hash: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// Forwards to an inner backend and appends every successful exchange.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    sink: Mutex<File>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, path: &Path) -> Result<Self> {
        let sink = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            sink: Mutex::new(sink),
        })
    }
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, BackendError> {
        let response = self.inner.complete(request)?;
        let line = serde_json::to_string(&RecordedExchange {
            tag: request.tag.clone(),
            request_hash: request.hash(),
            request: request.clone(),
            response: response.clone(),
        })
        .map_err(Error::from)?;
        let mut sink = self.sink.lock().unwrap();
        writeln!(sink, "{line}").map_err(Error::from)?;
        Ok(response)
    }
}

/// Answers from a recording without touching the network.
///
/// Identical requests recorded several times are replayed in recorded order;
/// once exhausted the last response repeats.
pub struct ReplayBackend {
    responses: Mutex<HashMap<String, VecDeque<ChatResponse>>>,
}

impl ReplayBackend {
    pub fn from_exchanges(exchanges: impl IntoIterator<Item = RecordedExchange>) -> Self {
        let mut responses: HashMap<String, VecDeque<ChatResponse>> = HashMap::new();
        for ex in exchanges {
            responses.entry(ex.request_hash).or_default().push_back(ex.response);
        }
        Self {
            responses: Mutex::new(responses),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut exchanges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ex: RecordedExchange = serde_json::from_str(line)
                .map_err(|e| Error::precondition(format!("{}: recording line {}: {e}", path.display(), i + 1)))?;
            exchanges.push(ex);
        }
        Ok(Self::from_exchanges(exchanges))
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, BackendError> {
        let hash = request.hash();
        let mut map = self.responses.lock().unwrap();
        match map.get_mut(&hash) {
            Some(queue) if queue.len() > 1 => Ok(queue.pop_front().unwrap()),
            Some(queue) if !queue.is_empty() => Ok(queue[0].clone()),
            _ => Err(BackendError::Fatal(Error::ReplayMiss {
                tag: request.tag.clone(),
                hash,
            })),
        }
    }
}
