//! Interfaces to the three external model capabilities the pipeline needs:
//! text completion, sentence embedding and continuation log-likelihood.
//!
//! Every capability has a deterministic offline fixture ([`fixture`]) and a
//! remote HTTP implementation ([`remote`]) whose raw responses are persisted
//! in a [`ResponseCache`] so runs can be replayed without network access.

mod cache;
pub mod fixture;
pub mod remote;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub use cache::ResponseCache;
pub use fixture::{BigramScorer, FixtureCompleter, TrigramEmbedder};
pub use remote::{HttpTransport, RemoteClient, RemoteCompleter, RemoteEmbedder, RemoteScorer, Transport};

/// Non-empty conditioning text for a completion or likelihood request.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prompt(String);

impl Prompt {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::invalid("prompt is empty"));
        }
        Ok(Prompt(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Hex SHA-256 of the prompt bytes; the key used by fixture files.
    pub fn hash(&self) -> String {
        sha256_hex(self.0.as_bytes())
    }
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

const NORM_TOLERANCE: f64 = 1e-6;

/// Unit-norm sentence embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wraps components that are already unit-norm.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("embedding has zero dimension"));
        }
        if components.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("embedding has non-finite components"));
        }
        let norm = l2_norm(&components);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::invalid(format!("embedding norm {norm} is not 1")));
        }
        Ok(EmbeddingVector(components))
    }

    /// Scales arbitrary components to unit length.
    pub fn normalized(mut components: Vec<f64>) -> Result<Self> {
        if components.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("embedding has non-finite components"));
        }
        let norm = l2_norm(&components);
        if norm == 0.0 {
            return Err(Error::invalid("cannot normalize a zero vector"));
        }
        for x in &mut components {
            *x /= norm;
        }
        Ok(EmbeddingVector(components))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    /// Cosine similarity; both vectors are unit-norm so this is a dot product.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        debug_assert_eq!(self.dimension(), other.dimension());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        EmbeddingVector::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Checks that every embedding shares one dimension.
pub fn check_dimensions<'a>(vectors: impl IntoIterator<Item = &'a EmbeddingVector>) -> Result<Option<usize>> {
    let mut dim = None;
    for v in vectors {
        match dim {
            None => dim = Some(v.dimension()),
            Some(d) if d != v.dimension() => {
                return Err(Error::invalid(format!(
                    "embedding dimension mismatch: {d} vs {}",
                    v.dimension()
                )))
            }
            _ => {}
        }
    }
    Ok(dim)
}

pub trait Completer: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, sentence: &str) -> Result<EmbeddingVector>;
}

pub trait LikelihoodScorer: Send + Sync {
    /// `log p(continuation | prompt)`.
    fn score_loglik(&self, prompt: &Prompt, continuation: &str) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    #[default]
    Fixture,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remote" => Ok(ProviderKind::Remote),
            "fixture" => Ok(ProviderKind::Fixture),
            other => Err(Error::invalid(format!("unknown provider kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Required when `kind = remote`.
    pub endpoint: Option<String>,
    /// Name of the environment variable that holds the bearer token.
    pub api_key_env: String,
    pub cache_dir: Option<PathBuf>,
    pub max_parallel: usize,
    pub retry_limit: u32,
    pub model: String,
    pub max_tokens: u32,
    /// Fixture data: recorded completions for the completer, training corpus
    /// for the likelihood scorer. Unused by the embedder.
    pub fixture_path: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Fixture,
            endpoint: None,
            api_key_env: "TASKGRAPH_API_KEY".to_string(),
            cache_dir: None,
            max_parallel: 4,
            retry_limit: 2,
            model: "default".to_string(),
            max_tokens: 256,
            fixture_path: None,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_parallel == 0 {
            return Err(Error::Config("max_parallel must be at least 1".into()));
        }
        if self.kind == ProviderKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(Error::Config("remote provider requires an endpoint".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_rejects_blank() {
        assert!(Prompt::new("  \n").is_err());
        assert!(Prompt::new("x").is_ok());
    }

    #[test]
    fn embedding_norm_is_enforced() {
        assert!(EmbeddingVector::new(vec![1.0, 1.0]).is_err());
        assert!(EmbeddingVector::new(vec![0.6, 0.8]).is_ok());
        let v = EmbeddingVector::normalized(vec![3.0, 4.0]).unwrap();
        assert!((v.cosine(&v) - 1.0).abs() < 1e-12);
        assert!(EmbeddingVector::normalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::new(vec![1.0]).unwrap();
        assert!(check_dimensions([&a, &b]).is_err());
        assert_eq!(check_dimensions([&a, &a]).unwrap(), Some(2));
    }

    #[test]
    fn remote_config_needs_endpoint() {
        let mut cfg = ProviderConfig {
            kind: ProviderKind::Remote,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.endpoint = Some("http://localhost:1".into());
        assert!(cfg.validate().is_ok());
        cfg.max_parallel = 0;
        assert!(cfg.validate().is_err());
    }
}
