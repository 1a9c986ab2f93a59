use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{write_senteval, DroppedCategory, ProbingTask, Subset, TaskError};
use crate::conllu::DeclaredSplit;

pub const CONVERTER_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Declared,
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub path: String,
    pub declared_split: DeclaredSplit,
    pub sentences: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTask {
    pub category: String,
    pub file: String,
    pub classes: Vec<String>,
    pub counts: BTreeMap<Subset, BTreeMap<String, usize>>,
    pub entries: usize,
    /// SHA-256 of the task file contents.
    pub sha256: String,
}

/// Per-language record of a conversion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub language: String,
    pub converter_version: String,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub min_class_count: usize,
    pub split_mode: SplitMode,
    pub sources: Vec<SourceSummary>,
    pub tasks: Vec<ManifestTask>,
    pub dropped: Vec<DroppedCategory>,
    pub warnings: Vec<String>,
}

impl ProbingTask {
    pub fn file_name(&self) -> String {
        format!("{}.txt", self.id())
    }

    /// Hex SHA-256 of the SentEval serialization.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        write_senteval(self, &mut buf).expect("writing to memory");
        hex::encode(Sha256::digest(&buf))
    }

    pub fn manifest_entry(&self) -> ManifestTask {
        ManifestTask {
            category: self.category.clone(),
            file: self.file_name(),
            classes: self.class_set.iter().cloned().collect(),
            counts: self.counts(),
            entries: self.entries.len(),
            sha256: self.digest(),
        }
    }
}

impl TaskManifest {
    pub fn file_name(language: &str) -> String {
        format!("{language}.manifest.json")
    }

    pub fn read(path: &Path) -> Result<Self, TaskError> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), TaskError> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json)?;
        Ok(())
    }

    pub fn task(&self, category: &str) -> Option<&ManifestTask> {
        self.tasks.iter().find(|t| t.category == category)
    }
}
