//! External model services: NLI, sentence embedding, and atomic-fact
//! decomposition. Each has an HTTP client, deterministic mocks, and a
//! content-hash cache that can sit in front of either.

mod cache;
mod decompose;
mod http;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::{CachedDecomposer, CachedEmbedder, CachedNli, ResponseCache};
pub use decompose::{few_shot_messages, parse_fact_lines, rule_split, ChatMessage};
pub use http::{HttpDecomposer, HttpEmbedder, HttpNli};
pub use mock::{HashNli, HashedBowEmbedder, LexicalNli, NliRule, RuleDecomposer, ScriptedNli};

use crate::error::ProviderError;

/// Raw three-class NLI scores for one (premise, hypothesis) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliLogits {
    pub entail: f64,
    pub contradict: f64,
    pub neutral: f64,
}

impl NliLogits {
    pub const fn new(entail: f64, contradict: f64, neutral: f64) -> Self {
        Self {
            entail,
            contradict,
            neutral,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entail.is_finite() && self.contradict.is_finite() && self.neutral.is_finite()
    }

    /// Wire order is `[entail, contradict, neutral]`.
    pub fn from_array([e, c, n]: [f64; 3]) -> Self {
        Self::new(e, c, n)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.entail, self.contradict, self.neutral]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na = self.0.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = other.0.iter().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(self.base_backoff_ms.saturating_mul(factor))
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff_ms: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    /// Name of the environment variable holding a bearer token; empty for none.
    pub auth_env_var: String,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub timeout_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080".into(),
            auth_env_var: String::new(),
            batch_size: 32,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            timeout_ms: 30_000,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be >= 1".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be >= 1".into());
        }
        if self.retry.max_attempts == 0 {
            return Err("retry.max_attempts must be >= 1".into());
        }
        if self.timeout_ms == 0 {
            return Err("timeout_ms must be >= 1".into());
        }
        Ok(())
    }
}

/// A (premise, hypothesis) pair.
pub type NliPair = (String, String);

pub trait NliProvider: Send + Sync {
    /// One logit triple per pair, order-aligned.
    fn nli_batch(&self, pairs: &[NliPair]) -> Result<Vec<NliLogits>, ProviderError>;
}

pub trait Embedder: Send + Sync {
    /// Order-aligned vectors of one common dimension.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

pub trait Decomposer: Send + Sync {
    /// Split a sentence into one or more atomic facts.
    fn decompose(&self, sentence: &str, prompt_context: &str) -> Result<Vec<String>, ProviderError>;
}

impl<T: NliProvider + ?Sized> NliProvider for &T {
    fn nli_batch(&self, pairs: &[NliPair]) -> Result<Vec<NliLogits>, ProviderError> {
        (**self).nli_batch(pairs)
    }
}

impl<T: NliProvider + ?Sized> NliProvider for std::sync::Arc<T> {
    fn nli_batch(&self, pairs: &[NliPair]) -> Result<Vec<NliLogits>, ProviderError> {
        (**self).nli_batch(pairs)
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed_batch(texts)
    }
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed_batch(texts)
    }
}

impl<T: Decomposer + ?Sized> Decomposer for &T {
    fn decompose(&self, sentence: &str, prompt_context: &str) -> Result<Vec<String>, ProviderError> {
        (**self).decompose(sentence, prompt_context)
    }
}

impl<T: Decomposer + ?Sized> Decomposer for std::sync::Arc<T> {
    fn decompose(&self, sentence: &str, prompt_context: &str) -> Result<Vec<String>, ProviderError> {
        (**self).decompose(sentence, prompt_context)
    }
}

/// The three services a pipeline run needs.
#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub nli: &'a dyn NliProvider,
    pub embedder: &'a dyn Embedder,
    pub decomposer: &'a dyn Decomposer,
}

pub(crate) fn check_pairs(provider: &'static str, pairs: &[NliPair]) -> Result<(), ProviderError> {
    for (i, (p, h)) in pairs.iter().enumerate() {
        if p.trim().is_empty() || h.trim().is_empty() {
            return Err(ProviderError::InvalidInput {
                provider,
                message: format!("pair {i} has an empty premise or hypothesis"),
            });
        }
    }
    Ok(())
}

/// Reject a batch whose vectors disagree on dimension or contain non-finite values.
pub(crate) fn check_vectors(
    provider: &'static str,
    vectors: &[EmbeddingVector],
    expected_dim: Option<usize>,
) -> Result<(), ProviderError> {
    let dim = expected_dim.or_else(|| vectors.first().map(EmbeddingVector::dim));
    for (i, v) in vectors.iter().enumerate() {
        if Some(v.dim()) != dim {
            return Err(ProviderError::Protocol {
                provider,
                message: format!(
                    "dimension drift: vector {i} has {} entries, expected {}",
                    v.dim(),
                    dim.unwrap_or_default()
                ),
            });
        }
        if v.0.iter().any(|x| !x.is_finite()) {
            return Err(ProviderError::Protocol {
                provider,
                message: format!("vector {i} has non-finite entries"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let r = RetryPolicy {
            max_attempts: 4,
            base_backoff_ms: 10,
        };
        assert_eq!(r.backoff(1), Duration::from_millis(10));
        assert_eq!(r.backoff(2), Duration::from_millis(20));
        assert_eq!(r.backoff(3), Duration::from_millis(40));
    }

    #[test]
    fn config_validation() {
        let mut c = ProviderConfig::default();
        assert!(c.validate().is_ok());
        c.batch_size = 0;
        assert!(c.validate().is_err());
        c.batch_size = 1;
        c.retry.max_attempts = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn dimension_drift_is_protocol_error() {
        let v = vec![EmbeddingVector(vec![1.0, 0.0]), EmbeddingVector(vec![1.0])];
        assert!(matches!(
            check_vectors("t", &v, None),
            Err(ProviderError::Protocol { .. })
        ));
    }
}
