use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_with, NormalizeOptions};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("embedding dimension must be at least 8, got {0}")]
    DimTooSmall(usize),
    #[error("embedding has {got} entries, expected {expected}")]
    WrongDim { got: usize, expected: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("embedding service: {0}")]
    Service(String),
}

/// Text embedding backend. Implementations must be callable from several threads.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Character trigrams of the lowercased text (padded with one space each
/// side), hashed into `dim` buckets and L2-normalized.
pub fn fallback_embed(text: &str, dim: usize) -> Result<Vec<f64>, EmbedError> {
    if dim < 8 {
        return Err(EmbedError::DimTooSmall(dim));
    }
    let norm = normalize_with(text, NormalizeOptions { lowercase: true, strip_diacritics: false });
    if norm.is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let chars: Vec<char> = std::iter::once(' ').chain(norm.chars()).chain(std::iter::once(' ')).collect();
    let mut v = vec![0.0f64; dim];
    let mut buf = String::new();
    for w in chars.windows(3) {
        buf.clear();
        buf.extend(w);
        v[(fnv1a(buf.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Built-in deterministic trigram embedder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigramEmbedder {
    pub dim: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        TrigramEmbedder { dim: 512 }
    }
}

impl Embedder for TrigramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        fallback_embed(text, self.dim)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

/// Remote embedder: `POST {"text": ...}` answered by `{"vector": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub url: String,
    pub dim: usize,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        HttpEmbedder { url: url.into(), dim, agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let resp: EmbedResponse = self
            .agent
            .post(&self.url)
            .send_json(EmbedRequest { text })
            .map_err(|e| EmbedError::Service(e.to_string()))?
            .into_json()
            .map_err(|e| EmbedError::Service(e.to_string()))?;
        if resp.vector.len() != self.dim {
            return Err(EmbedError::WrongDim { got: resp.vector.len(), expected: self.dim });
        }
        if resp.vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(resp.vector)
    }
}

/// Memoizes another embedder by exact text.
pub struct CachedEmbedder<E> {
    inner: E,
    memo: Mutex<HashMap<String, Vec<f64>>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        CachedEmbedder { inner, memo: Mutex::new(HashMap::new()) }
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if let Some(v) = self.memo.lock().expect("embed cache poisoned").get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.memo.lock().expect("embed cache poisoned").insert(text.to_string(), v.clone());
        Ok(v)
    }
}

/// Cosine similarity; `None` if either vector has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    assert_eq!(a.len(), b.len(), "cosine: dimension mismatch");
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return None;
    }
    Some(dot / (na.sqrt() * nb.sqrt()))
}
