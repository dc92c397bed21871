//! Text embeddings: the provider abstraction, a deterministic hash-based
//! pseudo-embedder, a content-hash cache, and an HTTP adapter for real
//! sentence-embedding servers.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 384;

/// A dense text embedding with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmbeddingUnavailable("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::EmbeddingUnavailable("non-finite embedding component".into()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity clamped to [-1, 1]; zero vectors compare as 0.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        cosine(&self.0, &other.0)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Embedding::new(v)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

pub trait Embedder: Send + Sync {
    /// Identifies the model; embeddings from different providers are not
    /// comparable.
    fn provider_id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding>;
}

impl<E: Embedder + ?Sized> Embedder for Arc<E> {
    fn provider_id(&self) -> String {
        (**self).provider_id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<Embedding> {
        (**self).embed(text)
    }
}

fn require_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Error::precondition("cannot embed empty text"));
    }
    Ok(())
}

/// Deterministic bag-of-words pseudo-embedder.
///
/// Each lowercased word and each adjacent word pair seeds its own Gaussian
/// direction; the text embedding is the unit-normalized sum. Texts sharing
/// vocabulary therefore have positive cosine similarity, and identical texts
/// map to bitwise-identical vectors.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(0)
    }
}

impl HashEmbedder {
    pub fn new(seed: u64) -> Self {
        Self::with_dim(seed, EMBEDDING_DIM)
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        assert!(dim > 0);
        Self { seed, dim }
    }

    fn feature_direction(&self, feature: &str, weight: f64, acc: &mut [f64]) {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(feature.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        for slot in acc.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *slot += weight * z;
        }
    }
}

impl Embedder for HashEmbedder {
    fn provider_id(&self) -> String {
        format!("hash-bow-v1:seed={}:dim={}", self.seed, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        require_text(text)?;
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut acc = vec![0.0; self.dim];
        if words.is_empty() {
            self.feature_direction(&format!("raw:{}", text.trim()), 1.0, &mut acc);
        }
        for w in &words {
            self.feature_direction(&format!("w:{w}"), 1.0, &mut acc);
        }
        for pair in words.windows(2) {
            self.feature_direction(&format!("b:{} {}", pair[0], pair[1]), 0.5, &mut acc);
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        acc.iter_mut().for_each(|v| *v /= norm);
        Embedding::new(acc)
    }
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    provider_id: String,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    hash: String,
    embedding: Embedding,
}

/// Memoizes an inner embedder by content hash.
pub struct CachedEmbedder {
    inner: Arc<dyn Embedder>,
    cache: RwLock<HashMap<String, Embedding>>,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn Embedder>) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = CacheHeader {
            provider_id: self.inner.provider_id(),
            dim: self.inner.dim(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        let cache = self.cache.read().unwrap();
        let mut keys: Vec<_> = cache.keys().collect();
        keys.sort();
        for k in keys {
            let rec = CacheRecord {
                hash: k.clone(),
                embedding: cache[k].clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Loads cached vectors if the file was written by the same provider;
    /// otherwise the file is ignored. Returns the number of entries loaded.
    pub fn load(&self, path: &Path) -> Result<usize> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        let Some(first) = lines.next() else { return Ok(0) };
        let header: CacheHeader = serde_json::from_str(&first?)?;
        if header.provider_id != self.inner.provider_id() {
            log::warn!(
                "embedding cache {} was written by `{}`, active provider is `{}`; ignoring it",
                path.display(),
                header.provider_id,
                self.inner.provider_id()
            );
            return Ok(0);
        }
        let mut cache = self.cache.write().unwrap();
        let mut n = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheRecord = serde_json::from_str(&line)?;
            cache.insert(rec.hash, rec.embedding);
            n += 1;
        }
        Ok(n)
    }
}

impl Embedder for CachedEmbedder {
    fn provider_id(&self) -> String {
        self.inner.provider_id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        require_text(text)?;
        let key = text_hash(text);
        if let Some(e) = self.cache.read().unwrap().get(&key) {
            return Ok(e.clone());
        }
        let e = self.inner.embed(text)?;
        self.cache.write().unwrap().insert(key, e.clone());
        Ok(e)
    }
}

#[cfg(feature = "http")]
pub use self::http::{HttpEmbedder, HttpEmbedderConfig};

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use serde::Deserialize;
    use serde_json::json;

    use super::{require_text, Embedder, Embedding};
    use crate::error::{Error, Result};

    /// Endpoint settings for an OpenAI-compatible `/embeddings` server,
    /// such as a text-embeddings-inference instance serving a MiniLM model.
    #[derive(Debug, Clone, PartialEq)]
    pub struct HttpEmbedderConfig {
        pub api_base: String,
        pub api_key: Option<String>,
        pub model: String,
        pub dim: usize,
    }

    impl HttpEmbedderConfig {
        /// Reads `EMBED_API_BASE`, `EMBED_API_KEY` and `EMBED_MODEL`.
        pub fn from_env() -> Result<Self> {
            let api_base = std::env::var("EMBED_API_BASE")
                .map_err(|_| Error::EmbeddingUnavailable("EMBED_API_BASE is not set".into()))?;
            Ok(Self {
                api_base,
                api_key: std::env::var("EMBED_API_KEY").ok(),
                model: std::env::var("EMBED_MODEL").unwrap_or_else(|_| "sentence-transformers/all-MiniLM-L6-v2".into()),
                dim: super::EMBEDDING_DIM,
            })
        }
    }

    pub struct HttpEmbedder {
        config: HttpEmbedderConfig,
        agent: ureq::Agent,
    }

    #[derive(Deserialize)]
    struct Body {
        data: Vec<Item>,
    }

    #[derive(Deserialize)]
    struct Item {
        embedding: Vec<f64>,
    }

    impl HttpEmbedder {
        pub fn new(config: HttpEmbedderConfig) -> Self {
            Self {
                agent: crate::gateway::http_agent(Duration::from_secs(30)),
                config,
            }
        }
    }

    impl Embedder for HttpEmbedder {
        fn provider_id(&self) -> String {
            format!("http:{}:dim={}", self.config.model, self.config.dim)
        }

        fn dim(&self) -> usize {
            self.config.dim
        }

        fn embed(&self, text: &str) -> Result<Embedding> {
            require_text(text)?;
            let url = format!("{}/embeddings", self.config.api_base.trim_end_matches('/'));
            let mut req = self.agent.post(&url);
            if let Some(key) = &self.config.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let unavailable = |e: String| Error::EmbeddingUnavailable(e);
            let mut resp = req
                .send_json(json!({"model": self.config.model, "input": text}))
                .map_err(|e| unavailable(e.to_string()))?;
            if !resp.status().is_success() {
                return Err(unavailable(format!("HTTP {}", resp.status().as_u16())));
            }
            let body: Body = resp.body_mut().read_json().map_err(|e| unavailable(e.to_string()))?;
            let v = body
                .data
                .into_iter()
                .next()
                .ok_or_else(|| unavailable("response has no embedding".into()))?
                .embedding;
            if v.len() != self.config.dim {
                return Err(unavailable(format!(
                    "expected {} components, got {}",
                    self.config.dim,
                    v.len()
                )));
            }
            Embedding::new(v)
        }
    }

}
