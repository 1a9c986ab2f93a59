use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{EmbedError, EmbeddingProvider, LayeredEmbedding};

#[derive(Deserialize)]
struct Record {
    text: String,
    layers: Vec<Vec<f64>>,
}

/// Serves sentence vectors loaded from a JSON-lines file, keyed by exact text.
#[derive(Debug, Clone)]
pub struct PrecomputedProvider {
    source: String,
    layer_count: usize,
    dim: usize,
    vectors: HashMap<String, LayeredEmbedding>,
}

/// Loads `{"text": .., "layers": [[..], ..]}` records. Every record must
/// have the same layer count and dimension.
pub fn load_precomputed(path: &Path) -> Result<PrecomputedProvider, EmbedError> {
    let reader = BufReader::new(File::open(path)?);
    let mut vectors = HashMap::new();
    let mut shape: Option<(usize, usize)> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| EmbedError::Malformed {
            line: line_no,
            reason,
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let emb = LayeredEmbedding::from_sentence_vectors(record.layers).map_err(|e| malformed(e.to_string()))?;
        let this = (emb.layer_count(), emb.dim());
        match shape {
            None => shape = Some(this),
            Some(expected) if expected != this => {
                return Err(malformed(format!(
                    "shape {}x{} differs from earlier records ({}x{})",
                    this.0, this.1, expected.0, expected.1
                )))
            }
            Some(_) => {}
        }
        if vectors.insert(record.text.clone(), emb).is_some() {
            return Err(malformed(format!("duplicate sentence {:?}", record.text)));
        }
    }
    let (layer_count, dim) = shape.ok_or_else(|| EmbedError::Malformed {
        line: 0,
        reason: "file holds no records".into(),
    })?;
    Ok(PrecomputedProvider {
        source: path.display().to_string(),
        layer_count,
        dim,
        vectors,
    })
}

impl PrecomputedProvider {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn name(&self) -> String {
        format!("file({})", self.source)
    }

    fn layer_count(&self) -> usize {
        self.layer_count
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<LayeredEmbedding>, EmbedError> {
        sentences
            .iter()
            .map(|s| {
                self.vectors
                    .get(s)
                    .cloned()
                    .ok_or_else(|| EmbedError::LookupMiss(s.clone()))
            })
            .collect()
    }
}
