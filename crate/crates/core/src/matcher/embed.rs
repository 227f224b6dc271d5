use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::tfidf::tokenize;
use super::MatchError;

/// Turns text into a fixed-length vector.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, MatchError>;
}

pub const STUB_DIMENSION: usize = 256;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Offline embedder: token counts feature-hashed into 256 buckets.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubEmbedder;

impl EmbeddingProvider for StubEmbedder {
    fn dimension(&self) -> usize {
        STUB_DIMENSION
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MatchError> {
        let mut v = vec![0.0; STUB_DIMENSION];
        for t in tokenize(text) {
            v[(fnv1a(t.as_bytes()) % STUB_DIMENSION as u64) as usize] += 1.0;
        }
        Ok(v)
    }
}

#[derive(Debug, Clone)]
pub struct HttpEmbedderConfig {
    pub base_url: String,
    pub model: String,
    pub dimension: usize,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

/// OpenAI-style `POST {base}/embeddings` client.
pub struct HttpEmbedder {
    cfg: HttpEmbedderConfig,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(mut cfg: HttpEmbedderConfig) -> Self {
        if cfg.api_key.is_none() {
            cfg.api_key = std::env::var("MF_LLM_KEY").ok().filter(|k| !k.is_empty());
        }
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .build();
        HttpEmbedder {
            cfg,
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.cfg.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MatchError> {
        if text.trim().is_empty() {
            return Ok(vec![0.0; self.cfg.dimension]);
        }
        let url = format!("{}/embeddings", self.cfg.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let provider = |m: String| MatchError::Provider(m);
        let mut resp = req
            .send_json(json!({"model": self.cfg.model, "input": text}))
            .map_err(|e| provider(e.to_string()))?;
        let status = resp.status().as_u16();
        let value: Value = resp.body_mut().read_json().map_err(|e| provider(e.to_string()))?;
        if status != 200 {
            return Err(provider(format!("HTTP {status}: {value}")));
        }
        let v: Vec<f64> = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| provider("reply without embedding".into()))?
            .iter()
            .filter_map(Value::as_f64)
            .collect();
        if v.len() != self.cfg.dimension || v.iter().any(|x| !x.is_finite()) {
            return Err(provider(format!(
                "expected {} finite components, got {}",
                self.cfg.dimension,
                v.len()
            )));
        }
        Ok(v)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    text: String,
    vector: Vec<f64>,
}

/// Read-through cache, optionally persisted as one JSON line per text.
/// Without an inner provider every miss is an error (offline mode).
pub struct CachedEmbedder {
    inner: Option<Box<dyn EmbeddingProvider>>,
    dimension: usize,
    cache: RwLock<HashMap<String, Vec<f64>>>,
    file: Option<Mutex<PathBuf>>,
}

impl CachedEmbedder {
    pub fn new(inner: Box<dyn EmbeddingProvider>) -> Self {
        CachedEmbedder {
            dimension: inner.dimension(),
            inner: Some(inner),
            cache: RwLock::new(HashMap::new()),
            file: None,
        }
    }

    /// Loads previously persisted vectors and appends new ones to `path`.
    pub fn with_file(
        inner: Option<Box<dyn EmbeddingProvider>>,
        dimension: usize,
        path: &Path,
    ) -> Result<Self, MatchError> {
        let mut cache = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| MatchError::Provider(e.to_string()))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                match serde_json::from_str::<CacheLine>(line) {
                    Ok(c) if c.vector.len() == dimension => {
                        cache.insert(c.text, c.vector);
                    }
                    _ => log::warn!("skipping bad embedding cache line in {}", path.display()),
                }
            }
        }
        Ok(CachedEmbedder {
            inner,
            dimension,
            cache: RwLock::new(cache),
            file: Some(Mutex::new(path.to_path_buf())),
        })
    }

    pub fn len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl EmbeddingProvider for CachedEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MatchError> {
        if let Some(v) = self.cache.read().unwrap().get(text) {
            return Ok(v.clone());
        }
        let inner = self
            .inner
            .as_ref()
            .ok_or_else(|| MatchError::CacheMiss(text.chars().take(60).collect()))?;
        let v = inner.embed(text)?;
        if let Some(path) = &self.file {
            let path = path.lock().unwrap();
            let line = serde_json::to_string(&CacheLine { text: text.into(), vector: v.clone() })
                .expect("vector serializes");
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&*path)
                .and_then(|mut f| writeln!(f, "{line}"))
                .map_err(|e| MatchError::Provider(e.to_string()))?;
        }
        self.cache.write().unwrap().insert(text.to_string(), v.clone());
        Ok(v)
    }
}

/// Cosine with negative values clamped to 0; 0 for a zero vector.
pub fn clamped_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_is_deterministic_counts() {
        let a = StubEmbedder.embed("pool pool conv").unwrap();
        assert_eq!(a, StubEmbedder.embed("pool pool conv").unwrap());
        assert_eq!(a.iter().sum::<f64>(), 3.0);
        assert_eq!(a[(fnv1a(b"pool") % 256) as usize], 2.0);
        assert!((clamped_cosine(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn cosine_edges() {
        assert_eq!(clamped_cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(clamped_cosine(&[1.0, 0.0], &[-1.0, 0.0]), 0.0);
        assert_eq!(clamped_cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn cache_persists_and_serves_offline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let online = CachedEmbedder::with_file(Some(Box::new(StubEmbedder)), 256, &path).unwrap();
        let v = online.embed("max pool").unwrap();
        let offline = CachedEmbedder::with_file(None, 256, &path).unwrap();
        assert_eq!(offline.embed("max pool").unwrap(), v);
        assert!(matches!(offline.embed("unseen"), Err(MatchError::CacheMiss(_))));
    }
}
