use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::http::HttpSettings;
use super::GatewayError;

/// Matches the dimension of the small public sentence-embedding models the
/// engine is usually paired with.
pub const DEFAULT_EMBEDDING_DIM: usize = 384;

/// A unit-norm embedding. Construct through [`EmbeddingVector::normalized`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, GatewayError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GatewayError::ZeroVector);
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity; both sides are unit vectors so this is a dot product.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    /// Raw provider output; the gateway checks the length and normalizes.
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError>;
}

/// Deterministic offline embedder: lowercase alphanumeric tokens hashed
/// (FNV-1a, 64 bit) into `dim` buckets as term counts.
#[derive(Debug, Clone)]
pub struct HashedBagEmbedder {
    dim: usize,
}

impl HashedBagEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIM)
    }
}

pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |hash, b| (hash ^ u64::from(*b)).wrapping_mul(PRIME))
}

impl EmbeddingProvider for HashedBagEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let mut values = vec![0.0; self.dim];
        for token in tokens(text) {
            values[self.bucket(&token)] += 1.0;
        }
        Ok(values)
    }
}

/// OpenAI-compatible `/embeddings` client. The dimension is probed from the
/// provider on first use unless configured.
pub struct HttpEmbedder {
    settings: HttpSettings,
    dim: OnceLock<usize>,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, dim: Option<usize>) -> Self {
        let cell = OnceLock::new();
        if let Some(d) = dim {
            let _ = cell.set(d);
        }
        Self { settings, dim: cell }
    }

    fn fetch(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        #[derive(Deserialize)]
        struct Item {
            embedding: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Body {
            data: Vec<Item>,
        }
        let payload = serde_json::json!({ "model": self.settings.model, "input": text });
        let body: Body = self.settings.post_json("embeddings", &payload)?;
        body.data.into_iter().next().map(|i| i.embedding).ok_or_else(|| GatewayError::BackendUnavailable {
            backend: self.settings.name.clone(),
            reason: "embedding response carried no data".into(),
        })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        *self.dim.get_or_init(|| match self.fetch("dimension probe") {
            Ok(v) => v.len(),
            Err(e) => {
                tracing::warn!(error = %e, "embedding dimension probe failed; falling back to default");
                DEFAULT_EMBEDDING_DIM
            }
        })
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        self.fetch(text)
    }
}
