//! Append-only JSON-lines storage of experiment records.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use polyprobe_core::probe::ExperimentRecord;

pub const RECORDS_FILE: &str = "records.jsonl";

/// A line that could not be read as a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Malformed {
    pub file: String,
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for Malformed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.reason)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Loaded {
    /// Records in file order, files in name order.
    pub records: Vec<ExperimentRecord>,
    pub malformed: Vec<Malformed>,
}

/// `*.jsonl` files of a directory in name order, or the file itself.
pub fn record_files(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every record under `path`, listing malformed lines instead of failing.
pub fn load_records(path: &Path) -> anyhow::Result<Loaded> {
    let mut out = Loaded::default();
    for file in record_files(path)? {
        let reader = BufReader::new(File::open(&file).with_context(|| format!("opening {}", file.display()))?);
        for (i, line) in reader.lines().enumerate() {
            let malformed = |reason: String| Malformed {
                file: file.display().to_string(),
                line: i + 1,
                reason,
            };
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    out.malformed.push(malformed(e.to_string()));
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ExperimentRecord>(&line) {
                Ok(r) => out.records.push(r),
                Err(e) => out.malformed.push(malformed(e.to_string())),
            }
        }
    }
    Ok(out)
}

/// Keeps, for every (language, category), only the records carrying the
/// fingerprint seen last. Order of the survivors is preserved.
pub fn latest_per_task(records: Vec<ExperimentRecord>) -> Vec<ExperimentRecord> {
    let mut latest: BTreeMap<(String, String), String> = BTreeMap::new();
    for r in &records {
        latest.insert((r.task.language.clone(), r.task.category.clone()), r.fingerprint.clone());
    }
    records
        .into_iter()
        .filter(|r| latest.get(&(r.task.language.clone(), r.task.category.clone())) == Some(&r.fingerprint))
        .collect()
}

/// Appends records to one file, skipping any whose (fingerprint, layer) is
/// already stored.
pub struct RecordSink {
    path: PathBuf,
    seen: HashSet<(String, usize)>,
    writer: BufWriter<File>,
}

impl RecordSink {
    pub fn open(path: &Path) -> anyhow::Result<Self> {
        let mut seen = HashSet::new();
        if path.exists() {
            for r in load_records(path)?.records {
                seen.insert((r.fingerprint, r.layer));
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(RecordSink {
            path: path.to_path_buf(),
            seen,
            writer: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, fingerprint: &str, layer: usize) -> bool {
        self.seen.contains(&(fingerprint.to_string(), layer))
    }

    /// Returns how many records were new.
    pub fn append(&mut self, records: &[ExperimentRecord]) -> anyhow::Result<usize> {
        let mut written = 0;
        for r in records {
            if !self.seen.insert((r.fingerprint.clone(), r.layer)) {
                continue;
            }
            serde_json::to_writer(&mut self.writer, r)?;
            self.writer.write_all(b"\n")?;
            written += 1;
        }
        self.writer.flush()?;
        Ok(written)
    }
}
