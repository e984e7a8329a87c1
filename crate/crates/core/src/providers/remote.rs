//! HTTP-backed providers with a persistent response cache.
//!
//! Requests are JSON POSTs to the configured endpoint with a bearer token
//! taken from the environment. The cache key is the SHA-256 of the
//! canonical (key-sorted) request body, which includes the model id.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    sha256_hex, Completer, Embedder, EmbeddingVector, LikelihoodScorer, Prompt, ProviderConfig, ResponseCache,
};
use crate::{Error, Result};

pub trait Transport: Send + Sync {
    fn post_json(&self, endpoint: &str, body: &[u8], bearer: Option<&str>) -> Result<Vec<u8>>;
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, endpoint: &str, body: &[u8], bearer: Option<&str>) -> Result<Vec<u8>> {
        let mut req = self.agent.post(endpoint).header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| Error::Transport(format!("POST {endpoint}: {e}")))?;
        resp.body_mut()
            .read_to_vec()
            .map_err(|e| Error::Transport(format!("reading response from {endpoint}: {e}")))
    }
}

/// Shared request machinery: cache lookup, retries, credential handling.
pub struct RemoteClient {
    endpoint: String,
    model: String,
    max_tokens: u32,
    retry_limit: u32,
    api_key: Option<String>,
    cache: Option<ResponseCache>,
    transport: Arc<dyn Transport>,
}

impl RemoteClient {
    pub fn new(config: &ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| Error::Config("remote provider requires an endpoint".into()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!(
                "{} is not set; sending requests without credentials",
                config.api_key_env
            );
        }
        let cache = config.cache_dir.as_ref().map(ResponseCache::open).transpose()?;
        Ok(RemoteClient {
            endpoint,
            model: config.model.clone(),
            max_tokens: config.max_tokens,
            retry_limit: config.retry_limit,
            api_key,
            cache,
            transport,
        })
    }

    /// Cache key for a request body.
    pub fn cache_key(body: &Value) -> String {
        // serde_json maps are ordered, so serialization is canonical.
        sha256_hex(body.to_string().as_bytes())
    }

    /// Returns the raw response bytes, from cache when possible.
    pub fn request(&self, body: &Value) -> Result<Vec<u8>> {
        let key = Self::cache_key(body);
        if let Some(cache) = &self.cache {
            if let Some(bytes) = cache.get(&key)? {
                log::debug!("cache hit {key}");
                return Ok(bytes);
            }
        }
        let payload = body.to_string().into_bytes();
        let mut attempt = 0;
        let bytes = loop {
            match self
                .transport
                .post_json(&self.endpoint, &payload, self.api_key.as_deref())
            {
                Ok(bytes) => break bytes,
                Err(e) if attempt < self.retry_limit => {
                    attempt += 1;
                    log::warn!("attempt {attempt} failed ({e}); retrying");
                    std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
                }
                Err(e) => return Err(e),
            }
        };
        if let Some(cache) = &self.cache {
            cache.put(&key, &bytes)?;
        }
        Ok(bytes)
    }

    fn request_json(&self, body: &Value) -> Result<Value> {
        let bytes = self.request(body)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Transport(format!("malformed response from {}: {e}", self.endpoint)))
    }
}

fn pointer<'a>(v: &'a Value, paths: &[&str]) -> Option<&'a Value> {
    paths.iter().find_map(|p| v.pointer(p))
}

pub struct RemoteCompleter(RemoteClient);

impl RemoteCompleter {
    pub fn new(client: RemoteClient) -> Self {
        RemoteCompleter(client)
    }

    pub fn request_body(&self, prompt: &Prompt) -> Value {
        json!({
            "model": self.0.model,
            "prompt": prompt.as_str(),
            "max_tokens": self.0.max_tokens,
            "temperature": 0,
        })
    }
}

impl Completer for RemoteCompleter {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        let resp = self.0.request_json(&self.request_body(prompt))?;
        pointer(
            &resp,
            &["/choices/0/text", "/choices/0/message/content", "/completion", "/text"],
        )
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Transport("completion response has no text field".into()))
    }
}

pub struct RemoteEmbedder(RemoteClient);

impl RemoteEmbedder {
    pub fn new(client: RemoteClient) -> Self {
        RemoteEmbedder(client)
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, sentence: &str) -> Result<EmbeddingVector> {
        if sentence.trim().is_empty() {
            return Err(Error::invalid("cannot embed an empty sentence"));
        }
        let body = json!({ "model": self.0.model, "input": sentence.trim() });
        let resp = self.0.request_json(&body)?;
        let raw = pointer(&resp, &["/data/0/embedding", "/embedding"])
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Transport("embedding response has no vector".into()))?;
        let components = raw
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| Error::Transport("non-numeric embedding".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        EmbeddingVector::normalized(components)
    }
}

pub struct RemoteScorer(RemoteClient);

impl RemoteScorer {
    pub fn new(client: RemoteClient) -> Self {
        RemoteScorer(client)
    }
}

impl LikelihoodScorer for RemoteScorer {
    fn score_loglik(&self, prompt: &Prompt, continuation: &str) -> Result<f64> {
        if continuation.trim().is_empty() {
            return Err(Error::invalid("continuation is empty"));
        }
        let body = json!({
            "model": self.0.model,
            "prompt": prompt.as_str(),
            "continuation": continuation,
            "max_tokens": 0,
            "temperature": 0,
        });
        let resp = self.0.request_json(&body)?;
        let score = pointer(&resp, &["/logprob", "/log_likelihood", "/score"])
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Transport("likelihood response has no logprob".into()))?;
        if !score.is_finite() {
            return Err(Error::Transport(format!("non-finite log-likelihood {score}")));
        }
        Ok(score)
    }
}
