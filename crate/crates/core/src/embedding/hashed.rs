use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, LayeredEmbedding};

/// Offline stand-in for a transformer encoder: feature-hashed counts of
/// character n-grams inside each whitespace token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedNgramConfig {
    pub dimension: usize,
    /// One layer per order, plus a final layer summing all orders.
    pub orders: Vec<usize>,
    pub seed: u64,
}

impl Default for HashedNgramConfig {
    fn default() -> Self {
        HashedNgramConfig {
            dimension: 256,
            orders: vec![2, 3, 4],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HashedNgramProvider {
    config: HashedNgramConfig,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, order: usize, gram: &[char]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    feed(&seed.to_le_bytes());
    feed(&(order as u64).to_le_bytes());
    let mut buf = [0u8; 4];
    for c in gram {
        feed(c.encode_utf8(&mut buf).as_bytes());
    }
    h
}

impl HashedNgramProvider {
    pub fn new(config: HashedNgramConfig) -> Result<Self, EmbedError> {
        if config.dimension < 8 {
            return Err(EmbedError::Config(format!(
                "hashed dimension must be at least 8, got {}",
                config.dimension
            )));
        }
        if config.orders.is_empty() || config.orders.contains(&0) {
            return Err(EmbedError::Config("n-gram orders must be non-empty and positive".into()));
        }
        Ok(HashedNgramProvider { config })
    }

    pub fn config(&self) -> &HashedNgramConfig {
        &self.config
    }

    pub fn embed(&self, text: &str) -> Result<LayeredEmbedding, EmbedError> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let dim = self.config.dimension;
        let orders = &self.config.orders;
        let layers = orders.len() + 1;
        let t_count = tokens.len();
        let mut data = vec![0.0; layers * t_count * dim];
        let last = orders.len();
        for (t, token) in tokens.iter().enumerate() {
            let marked: Vec<char> = std::iter::once('<')
                .chain(token.chars())
                .chain(std::iter::once('>'))
                .collect();
            for (l, &n) in orders.iter().enumerate() {
                for gram in marked.windows(n) {
                    let idx = (fnv1a(self.config.seed, n, gram) % dim as u64) as usize;
                    data[(l * t_count + t) * dim + idx] += 1.0;
                    data[(last * t_count + t) * dim + idx] += 1.0;
                }
            }
        }
        LayeredEmbedding::from_flat(layers, t_count, dim, data)
    }
}

impl EmbeddingProvider for HashedNgramProvider {
    fn name(&self) -> String {
        let orders: Vec<String> = self.config.orders.iter().map(|o| o.to_string()).collect();
        format!(
            "hash(dim={},orders={},seed={})",
            self.config.dimension,
            orders.join("-"),
            self.config.seed
        )
    }

    fn layer_count(&self) -> usize {
        self.config.orders.len() + 1
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<LayeredEmbedding>, EmbedError> {
        sentences.iter().map(|s| self.embed(s)).collect()
    }
}
