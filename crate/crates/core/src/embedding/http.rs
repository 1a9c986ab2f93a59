use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, LayeredEmbedding};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpProviderConfig {
    /// Base URL; requests go to `{endpoint}/embed`.
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
    /// Extra attempts after a transport error or 5xx answer.
    pub retries: u32,
    /// First backoff delay; doubled after every failed attempt.
    pub backoff: Duration,
    pub max_in_flight: usize,
    pub batch_size: usize,
    /// Ask for per-token vectors instead of server-aggregated ones.
    pub token_level: bool,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        HttpProviderConfig {
            endpoint: "http://127.0.0.1:8080".into(),
            model: "default".into(),
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff: Duration::from_millis(200),
            max_in_flight: 4,
            batch_size: 32,
            token_level: false,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    sentences: &'a [String],
    layers: &'static str,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    token_level: bool,
}

#[derive(Deserialize)]
struct EmbedResponse<E> {
    dim: usize,
    layer_count: usize,
    embeddings: Vec<E>,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        InFlight {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

/// Client for a remote encoder speaking the `/embed` JSON protocol.
#[derive(Debug)]
pub struct HttpProvider {
    config: HttpProviderConfig,
    url: String,
    agent: ureq::Agent,
    layer_count: usize,
    dim: usize,
    in_flight: InFlight,
}

impl HttpProvider {
    /// Connects and learns the advertised layer count and dimension from a
    /// one-sentence handshake.
    pub fn connect(config: HttpProviderConfig) -> Result<Self, EmbedError> {
        if config.batch_size == 0 {
            return Err(EmbedError::Config("batch size must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/embed", config.endpoint.trim_end_matches('/'));
        let mut provider = HttpProvider {
            in_flight: InFlight::new(config.max_in_flight),
            config,
            url,
            agent,
            layer_count: 0,
            dim: 0,
        };
        let handshake: EmbedResponse<serde_json::Value> = provider.post(&["handshake".to_string()])?;
        if handshake.layer_count == 0 || handshake.dim == 0 {
            return Err(EmbedError::Response(format!(
                "server advertises {} layers of dimension {}",
                handshake.layer_count, handshake.dim
            )));
        }
        provider.layer_count = handshake.layer_count;
        provider.dim = handshake.dim;
        Ok(provider)
    }

    fn post<E: DeserializeOwned>(&self, sentences: &[String]) -> Result<EmbedResponse<E>, EmbedError> {
        let request = EmbedRequest {
            model: &self.config.model,
            sentences,
            layers: "all",
            token_level: self.config.token_level,
        };
        let _permit = self.in_flight.acquire();
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = self.agent.post(&self.url).send_json(&request);
            let retryable = match outcome {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let body = resp
                        .body_mut()
                        .with_config()
                        .limit(u64::MAX)
                        .read_to_string()
                        .map_err(|e| EmbedError::Response(e.to_string()));
                    if (200..300).contains(&status) {
                        let body = body?;
                        return serde_json::from_str(&body).map_err(|e| EmbedError::Response(e.to_string()));
                    }
                    let err = EmbedError::Status {
                        endpoint: self.url.clone(),
                        status,
                        body: body.unwrap_or_default(),
                    };
                    if status < 500 {
                        return Err(err);
                    }
                    err
                }
                Err(e) => EmbedError::Transport {
                    endpoint: self.url.clone(),
                    attempts: attempt,
                    reason: e.to_string(),
                },
            };
            if attempt > self.config.retries {
                return Err(match retryable {
                    EmbedError::Transport { endpoint, reason, .. } => EmbedError::Transport {
                        endpoint,
                        attempts: attempt,
                        reason,
                    },
                    other => other,
                });
            }
            thread::sleep(delay);
            delay = delay.saturating_mul(2);
        }
    }

    fn check_advertised(&self, dim: usize, layer_count: usize) -> Result<(), EmbedError> {
        if dim != self.dim || layer_count != self.layer_count {
            return Err(EmbedError::Shape(format!(
                "response advertises {layer_count}x{dim}, expected {}x{}",
                self.layer_count, self.dim
            )));
        }
        Ok(())
    }

    fn check_embedding(&self, emb: &LayeredEmbedding) -> Result<(), EmbedError> {
        if emb.layer_count() != self.layer_count || emb.dim() != self.dim {
            return Err(EmbedError::Shape(format!(
                "got {}x{} vectors, expected {}x{}",
                emb.layer_count(),
                emb.dim(),
                self.layer_count,
                self.dim
            )));
        }
        Ok(())
    }

    fn embed_chunk(&self, chunk: &[String]) -> Result<Vec<LayeredEmbedding>, EmbedError> {
        let embeddings: Vec<LayeredEmbedding> = if self.config.token_level {
            let resp: EmbedResponse<Vec<Vec<Vec<f64>>>> = self.post(chunk)?;
            self.check_advertised(resp.dim, resp.layer_count)?;
            resp.embeddings
                .into_iter()
                .map(LayeredEmbedding::new)
                .collect::<Result<_, _>>()?
        } else {
            let resp: EmbedResponse<Vec<Vec<f64>>> = self.post(chunk)?;
            self.check_advertised(resp.dim, resp.layer_count)?;
            resp.embeddings
                .into_iter()
                .map(LayeredEmbedding::from_sentence_vectors)
                .collect::<Result<_, _>>()?
        };
        if embeddings.len() != chunk.len() {
            return Err(EmbedError::Shape(format!(
                "{} embeddings for {} sentences",
                embeddings.len(),
                chunk.len()
            )));
        }
        for e in &embeddings {
            self.check_embedding(e)?;
        }
        Ok(embeddings)
    }
}

impl EmbeddingProvider for HttpProvider {
    fn name(&self) -> String {
        format!(
            "http({}#{}{})",
            self.config.endpoint,
            self.config.model,
            if self.config.token_level { ",token_level" } else { "" }
        )
    }

    fn layer_count(&self) -> usize {
        self.layer_count
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<LayeredEmbedding>, EmbedError> {
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(self.config.batch_size) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}
