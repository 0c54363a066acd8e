//! Instruction embeddings and cosine similarity.
//!
//! The built-in provider is a signed feature-hashing embedder: tokens are
//! hashed with 64-bit FNV-1a into `dimension` buckets, the top hash bit picks
//! the sign, and the sum is L2-normalized. Texts with no tokens map to the
//! unit basis vector `e_1`. A remote provider speaks a small JSON protocol:
//! `POST {"texts": [..]}` returning `{"embeddings": [[..], ..]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{EmbeddingVector, DEFAULT_DIMENSION};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("remote embedding service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid provider: {0}")]
    InvalidProvider(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("dimension mismatch: {left} vs {right}")]
pub struct DimensionMismatch {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    DeterministicHash,
    RemoteService,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingProvider {
    pub kind: ProviderKind,
    pub dimension: usize,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        Self::hashed(DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider {
    pub fn hashed(dimension: usize) -> Self {
        Self {
            kind: ProviderKind::DeterministicHash,
            dimension,
            endpoint: None,
            timeout_ms: 5_000,
        }
    }

    pub fn remote(endpoint: impl Into<String>, dimension: usize) -> Self {
        Self {
            kind: ProviderKind::RemoteService,
            dimension,
            endpoint: Some(endpoint.into()),
            timeout_ms: 5_000,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dimension == 0 {
            return Err(EmbedError::InvalidProvider(
                "dimension must be positive".into(),
            ));
        }
        if self.kind == ProviderKind::RemoteService
            && self.endpoint.as_deref().is_none_or(str::is_empty)
        {
            return Err(EmbedError::InvalidProvider(
                "remote service requires an endpoint".into(),
            ));
        }
        Ok(())
    }
}

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Canonical vector for texts without tokens and for all-zero inputs.
pub fn canonical_unit(dimension: usize) -> Vec<f64> {
    let mut v = vec![0.0; dimension];
    v[0] = 1.0;
    v
}

/// Deterministic signed token-hash embedding, L2-normalized.
pub fn hash_embed(text: &str, dimension: usize) -> EmbeddingVector {
    assert!(dimension > 0, "dimension must be positive");
    let mut acc = vec![0.0f64; dimension];
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % dimension as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[bucket] += sign;
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    let values = if norm == 0.0 {
        canonical_unit(dimension)
    } else {
        acc.into_iter().map(|x| x / norm).collect()
    };
    EmbeddingVector::new(values).expect("hash embedding is finite")
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity over raw slices, clamped to `[-1, 1]`. Zero vectors are
/// treated as `e_1`.
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, DimensionMismatch> {
    if a.len() != b.len() || a.is_empty() {
        return Err(DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    let sim = match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) => b[0] / nb,
        (false, true) => a[0] / na,
        (false, false) => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            dot / (na * nb)
        }
    };
    Ok(sim.clamp(-1.0, 1.0))
}

pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, DimensionMismatch> {
    cosine_slices(a.values(), b.values())
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// A configured embedding provider, ready to embed text.
#[derive(Debug, Clone)]
pub struct Embedder {
    provider: EmbeddingProvider,
    client: Option<reqwest::blocking::Client>,
}

impl Embedder {
    pub fn new(provider: EmbeddingProvider) -> Result<Self, EmbedError> {
        provider.validate()?;
        let client = match provider.kind {
            ProviderKind::DeterministicHash => None,
            ProviderKind::RemoteService => Some(
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(provider.timeout_ms))
                    .build()
                    .map_err(|e| EmbedError::RemoteUnavailable(e.to_string()))?,
            ),
        };
        Ok(Self { provider, client })
    }

    pub fn hashed(dimension: usize) -> Self {
        Self::new(EmbeddingProvider::hashed(dimension)).expect("positive dimension")
    }

    pub fn dimension(&self) -> usize {
        self.provider.dimension
    }

    pub fn provider(&self) -> &EmbeddingProvider {
        &self.provider
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.pop().expect("one embedding per input"))
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        match &self.client {
            None => Ok(texts
                .iter()
                .map(|t| hash_embed(t, self.provider.dimension))
                .collect()),
            Some(client) => self.embed_remote(client, texts),
        }
    }

    fn embed_remote(
        &self,
        client: &reqwest::blocking::Client,
        texts: &[&str],
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let endpoint = self.provider.endpoint.as_deref().unwrap_or_default();
        let unavailable = |e: reqwest::Error| EmbedError::RemoteUnavailable(e.to_string());
        let response: EmbedResponse = client
            .post(endpoint)
            .json(&EmbedRequest { texts })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(unavailable)?
            .json()
            .map_err(unavailable)?;
        if response.embeddings.len() != texts.len() {
            return Err(EmbedError::RemoteUnavailable(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                response.embeddings.len()
            )));
        }
        response
            .embeddings
            .into_iter()
            .map(|values| {
                if values.len() != self.provider.dimension {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.provider.dimension,
                        actual: values.len(),
                    });
                }
                let values = if norm(&values) == 0.0 {
                    canonical_unit(values.len())
                } else {
                    values
                };
                EmbeddingVector::new(values)
                    .map_err(|e| EmbedError::RemoteUnavailable(e.to_string()))
            })
            .collect()
    }
}
