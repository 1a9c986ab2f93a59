//! Layered sentence representations and the providers that produce them.

mod file;
mod hashed;
mod http;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{load_precomputed, PrecomputedProvider};
pub use hashed::{HashedNgramConfig, HashedNgramProvider};
pub use http::{HttpProvider, HttpProviderConfig};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("invalid embedding shape: {0}")]
    Shape(String),
    #[error("embedding contains NaN or infinite values")]
    NonFinite,
    #[error("no stored embedding for sentence {0:?}")]
    LookupMiss(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("request to {endpoint} failed after {attempts} attempt(s): {reason}")]
    Transport {
        endpoint: String,
        attempts: u32,
        reason: String,
    },
    #[error("{endpoint} answered with status {status}: {body}")]
    Status {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("malformed response body: {0}")]
    Response(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token vectors for every layer of one sentence: `L × T × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredEmbedding {
    layer_count: usize,
    token_count: usize,
    dim: usize,
    data: Vec<f64>,
}

impl LayeredEmbedding {
    /// Builds from `layers[l][t][d]`, checking that every layer shares `T`
    /// and `D` and that all values are finite.
    pub fn new(layers: Vec<Vec<Vec<f64>>>) -> Result<Self, EmbedError> {
        let layer_count = layers.len();
        if layer_count == 0 {
            return Err(EmbedError::Shape("no layers".into()));
        }
        let token_count = layers[0].len();
        if token_count == 0 {
            return Err(EmbedError::Shape("no tokens".into()));
        }
        let dim = layers[0][0].len();
        if dim == 0 {
            return Err(EmbedError::Shape("zero dimension".into()));
        }
        let mut data = Vec::with_capacity(layer_count * token_count * dim);
        for (l, layer) in layers.into_iter().enumerate() {
            if layer.len() != token_count {
                return Err(EmbedError::Shape(format!(
                    "layer {l} has {} tokens, expected {token_count}",
                    layer.len()
                )));
            }
            for (t, row) in layer.into_iter().enumerate() {
                if row.len() != dim {
                    return Err(EmbedError::Shape(format!(
                        "layer {l} token {t} has dimension {}, expected {dim}",
                        row.len()
                    )));
                }
                data.extend(row);
            }
        }
        Self::from_flat(layer_count, token_count, dim, data)
    }

    /// One vector per layer (`T = 1`), the shape of sentence-level sources.
    pub fn from_sentence_vectors(layers: Vec<Vec<f64>>) -> Result<Self, EmbedError> {
        Self::new(layers.into_iter().map(|v| vec![v]).collect())
    }

    pub fn from_flat(
        layer_count: usize,
        token_count: usize,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<Self, EmbedError> {
        if layer_count == 0 || token_count == 0 || dim == 0 {
            return Err(EmbedError::Shape(format!(
                "empty shape {layer_count}x{token_count}x{dim}"
            )));
        }
        if data.len() != layer_count * token_count * dim {
            return Err(EmbedError::Shape(format!(
                "{} values for shape {layer_count}x{token_count}x{dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(LayeredEmbedding {
            layer_count,
            token_count,
            dim,
            data,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.layer_count
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, layer: usize, token: usize) -> &[f64] {
        let start = (layer * self.token_count + token) * self.dim;
        &self.data[start..start + self.dim]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// First token row; transformer services must put the classifier token first.
    #[default]
    Cls,
    Sum,
    Avg,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Cls => "cls",
            Aggregation::Sum => "sum",
            Aggregation::Avg => "avg",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cls" => Ok(Aggregation::Cls),
            "sum" => Ok(Aggregation::Sum),
            "avg" | "mean" => Ok(Aggregation::Avg),
            other => Err(format!("unknown aggregation {other:?} (cls|sum|avg)")),
        }
    }
}

/// Collapses the token axis, giving one `D`-vector per layer.
pub fn aggregate_tokens(emb: &LayeredEmbedding, agg: Aggregation) -> Vec<Vec<f64>> {
    (0..emb.layer_count())
        .map(|l| match agg {
            Aggregation::Cls => emb.row(l, 0).to_vec(),
            Aggregation::Sum | Aggregation::Avg => {
                let mut acc = vec![0.0; emb.dim()];
                for t in 0..emb.token_count() {
                    for (a, v) in acc.iter_mut().zip(emb.row(l, t)) {
                        *a += v;
                    }
                }
                if agg == Aggregation::Avg {
                    let n = emb.token_count() as f64;
                    acc.iter_mut().for_each(|a| *a /= n);
                }
                acc
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthMode {
    #[default]
    Truncate,
    Discard,
}

impl fmt::Display for LengthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LengthMode::Truncate => "truncate",
            LengthMode::Discard => "discard",
        })
    }
}

impl FromStr for LengthMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truncate" => Ok(LengthMode::Truncate),
            "discard" => Ok(LengthMode::Discard),
            other => Err(format!("unknown length mode {other:?} (truncate|discard)")),
        }
    }
}

/// What to do with sentences longer than `max_tokens`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LengthPolicy {
    pub max_tokens: usize,
    pub mode: LengthMode,
}

impl Default for LengthPolicy {
    fn default() -> Self {
        LengthPolicy {
            max_tokens: 512,
            mode: LengthMode::Truncate,
        }
    }
}

impl LengthPolicy {
    /// `None` means the sentence is discarded.
    pub fn apply<'a, T>(&self, tokens: &'a [T]) -> Option<&'a [T]> {
        if tokens.len() <= self.max_tokens {
            Some(tokens)
        } else {
            match self.mode {
                LengthMode::Truncate => Some(&tokens[..self.max_tokens]),
                LengthMode::Discard => None,
            }
        }
    }
}

/// A deterministic source of layered embeddings.
///
/// `embed_batch` must preserve order and give every sentence the same
/// result it would get in a batch of one.
pub trait EmbeddingProvider: Send + Sync {
    /// Identifies the provider and its configuration; part of experiment fingerprints.
    fn name(&self) -> String;
    fn layer_count(&self) -> usize;
    fn dimension(&self) -> usize;

    /// Tokenization used for the length policy.
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<LayeredEmbedding>, EmbedError>;
}

/// Applies `policy` under the provider's tokenization. Truncated text is the
/// kept tokens joined by single spaces.
pub fn prepare_text(provider: &dyn EmbeddingProvider, text: &str, policy: &LengthPolicy) -> Option<String> {
    let tokens = provider.tokenize(text);
    let kept = policy.apply(&tokens)?;
    if kept.len() == tokens.len() {
        Some(text.to_string())
    } else {
        Some(kept.join(" "))
    }
}

/// `hash`, `hash:DIM`, `file:PATH` or `http:URL` (optionally `http:URL#model`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Hash(HashedNgramConfig),
    File(PathBuf),
    Http { endpoint: String, model: String },
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "hash" {
            return Ok(ProviderSpec::Hash(HashedNgramConfig::default()));
        }
        if let Some(dim) = s.strip_prefix("hash:") {
            let dimension = dim.parse().map_err(|_| format!("bad hash dimension {dim:?}"))?;
            return Ok(ProviderSpec::Hash(HashedNgramConfig {
                dimension,
                ..Default::default()
            }));
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(ProviderSpec::File(PathBuf::from(path)));
        }
        if let Some(rest) = s.strip_prefix("http:") {
            // `http:http://host/..` and `http://host/..` are both accepted.
            let url = if rest.starts_with("//") { s } else { rest };
            let (endpoint, model) = match url.split_once('#') {
                Some((e, m)) => (e.to_string(), m.to_string()),
                None => (url.to_string(), "default".to_string()),
            };
            return Ok(ProviderSpec::Http { endpoint, model });
        }
        if s.starts_with("https:") {
            let (endpoint, model) = match s.split_once('#') {
                Some((e, m)) => (e.to_string(), m.to_string()),
                None => (s.to_string(), "default".to_string()),
            };
            return Ok(ProviderSpec::Http { endpoint, model });
        }
        Err(format!("unknown provider {s:?} (hash|file:PATH|http:URL)"))
    }
}

impl ProviderSpec {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
        Ok(match self {
            ProviderSpec::Hash(cfg) => Box::new(HashedNgramProvider::new(cfg.clone())?),
            ProviderSpec::File(path) => Box::new(load_precomputed(path)?),
            ProviderSpec::Http { endpoint, model } => Box::new(HttpProvider::connect(HttpProviderConfig {
                endpoint: endpoint.clone(),
                model: model.clone(),
                ..Default::default()
            })?),
        })
    }
}
