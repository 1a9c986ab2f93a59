//! The convert, probe and analyze stages behind the CLI.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use polyprobe_core::analytics::{write_graphml, GroupKey, Metric};
use polyprobe_core::conllu::{infer_language_code, read_treebank, Treebank};
use polyprobe_core::embedding::{Aggregation, EmbeddingProvider, LengthPolicy, ProviderSpec};
use polyprobe_core::probe::{fingerprint, run_probe_experiment, ProbeConfig};
use polyprobe_core::tasks::{
    build_tasks, read_senteval, write_senteval, ProbingTask, SourceSummary, SplitMode, SplitSpec, TaskManifest,
    CONVERTER_VERSION,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::meta::MetaTable;
use crate::store::{RecordSink, RECORDS_FILE};
use crate::views::{self, AnovaGrouping, Snapshot};

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// What a pipeline stage produced, written as `run-{stage}.json` in its
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: serde_json::Value,
    /// Files relative to the output directory.
    pub outputs: Vec<String>,
    pub fingerprints: Vec<String>,
    pub warnings: Vec<String>,
    /// Per-item failures that did not stop the run.
    pub failures: Vec<String>,
}

impl RunManifest {
    fn start(stage: &str, config: serde_json::Value) -> Self {
        RunManifest {
            stage: stage.to_string(),
            started_unix: unix_now(),
            finished_unix: 0,
            config,
            outputs: Vec::new(),
            fingerprints: Vec::new(),
            warnings: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn file_name(stage: &str) -> String {
        format!("run-{stage}.json")
    }

    /// Writes the manifest after checking that every listed output exists.
    fn finish(mut self, dir: &Path) -> anyhow::Result<Self> {
        self.finished_unix = unix_now();
        self.outputs.sort();
        self.outputs.dedup();
        self.fingerprints.sort();
        self.fingerprints.dedup();
        for out in &self.outputs {
            if !dir.join(out).exists() {
                bail!("manifest lists missing output {out}");
            }
        }
        let path = dir.join(Self::file_name(&self.stage));
        let mut json = serde_json::to_string_pretty(&self)?;
        json.push('\n');
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvertOptions {
    pub split: SplitSpec,
    pub min_class_count: usize,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        ConvertOptions {
            split: SplitSpec::default(),
            min_class_count: 3,
        }
    }
}

fn conllu_files(input: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        bail!("{} is not a readable directory", input.display());
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(input).sort_by_file_name() {
        let entry = entry.with_context(|| format!("walking {}", input.display()))?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "conllu") {
            files.push(entry.into_path());
        }
    }
    if files.is_empty() {
        bail!("no .conllu files under {}", input.display());
    }
    Ok(files)
}

/// Converts every `.conllu` file under `input` into SentEval task files and
/// one manifest per language. Unreadable files become failures.
pub fn convert(input: &Path, output: &Path, options: &ConvertOptions) -> anyhow::Result<RunManifest> {
    options.split.validate()?;
    let files = conllu_files(input)?;
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let mut run = RunManifest::start("convert", serde_json::to_value(options)?);

    let mut by_language: BTreeMap<String, Vec<Treebank>> = BTreeMap::new();
    for path in &files {
        match read_treebank(path, None) {
            Ok(tb) => by_language.entry(infer_language_code(path)).or_default().push(tb),
            Err(e) => run.failures.push(format!("{}: {e}", path.display())),
        }
    }

    for (language, treebanks) in &by_language {
        let build = build_tasks(treebanks, &options.split, options.min_class_count)?;
        let annotated = treebanks
            .iter()
            .flat_map(|tb| &tb.sentences)
            .flat_map(|s| &s.tokens)
            .any(|t| !t.feats.is_empty());
        if !annotated {
            run.warnings.push(format!("{language}: no morphological annotation"));
        } else if build.tasks.is_empty() {
            run.warnings.push(format!("{language}: no category yields a usable task"));
        }
        let mut manifest = TaskManifest {
            language: language.clone(),
            converter_version: CONVERTER_VERSION.to_string(),
            seed: options.split.seed,
            ratios: options.split.ratios,
            min_class_count: options.min_class_count,
            split_mode: build.split_mode.unwrap_or(SplitMode::Stratified),
            sources: Vec::new(),
            tasks: Vec::new(),
            dropped: build.dropped.clone(),
            warnings: build.warnings.clone(),
        };
        for tb in treebanks {
            manifest.sources.push(SourceSummary {
                path: tb.source_path.clone(),
                declared_split: tb.declared_split,
                sentences: tb.sentences.len(),
                excluded: tb.warnings.len(),
            });
            manifest.warnings.extend(
                tb.warnings
                    .iter()
                    .map(|w| format!("{}:{}: {}", tb.source_path, w.line, w.reason)),
            );
        }
        for task in &build.tasks {
            let name = task.file_name();
            let file = File::create(output.join(&name)).with_context(|| format!("creating {name}"))?;
            let mut writer = BufWriter::new(file);
            write_senteval(task, &mut writer)?;
            std::io::Write::flush(&mut writer)?;
            manifest.tasks.push(task.manifest_entry());
            run.outputs.push(name);
        }
        run.warnings.extend(build.warnings.iter().cloned());
        let manifest_name = TaskManifest::file_name(language);
        manifest.write(&output.join(&manifest_name))?;
        run.outputs.push(manifest_name);
        tracing::info!("{language}: {} task(s), {} dropped", build.tasks.len(), build.dropped.len());
    }
    run.finish(output)
}

/// Number of task files written by a convert run.
pub fn task_count(run: &RunManifest) -> usize {
    run.outputs.iter().filter(|o| o.ends_with(".txt")).count()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOptions {
    pub aggregation: Aggregation,
    pub policy: LengthPolicy,
    pub config: ProbeConfig,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
}

fn has_glob_chars(s: &str) -> bool {
    s.contains(['*', '?', '['])
}

/// Task files named by `inputs`: files, directories (their `*.txt`), or glob patterns.
pub fn resolve_task_files(inputs: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        let path = Path::new(input);
        if has_glob_chars(input) {
            for entry in glob::glob(input).with_context(|| format!("bad pattern {input:?}"))? {
                let p = entry?;
                if p.is_file() {
                    files.push(p);
                }
            }
        } else if path.is_dir() {
            for entry in fs::read_dir(path).with_context(|| format!("reading {}", path.display()))? {
                let p = entry?.path();
                if p.is_file() && p.extension().is_some_and(|e| e == "txt") {
                    files.push(p);
                }
            }
        } else if path.is_file() {
            files.push(path.to_path_buf());
        } else {
            bail!("{input} does not exist");
        }
    }
    files.sort();
    files.dedup();
    if files.is_empty() {
        bail!("no task files match {inputs:?}");
    }
    Ok(files)
}

/// Reads a `{language}_{category}.txt` task file.
pub fn load_task(path: &Path) -> anyhow::Result<ProbingTask> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let Some((language, category)) = stem.split_once('_') else {
        bail!("{}: task files are named LANGUAGE_CATEGORY.txt", path.display());
    };
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let task = read_senteval(std::io::BufReader::new(file), language, category)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(task)
}

/// Warns when a sibling manifest records a different digest for the task.
fn check_against_manifest(path: &Path, task: &ProbingTask) -> Option<String> {
    let manifest_path = path.with_file_name(TaskManifest::file_name(&task.language_code));
    let manifest = TaskManifest::read(&manifest_path).ok()?;
    let entry = manifest.task(&task.category)?;
    (entry.sha256 != task.digest()).then(|| {
        format!(
            "{}: contents differ from {}",
            path.display(),
            manifest_path.display()
        )
    })
}

/// Probes every task with `provider`, appending records to
/// `{output}/records.jsonl`. Experiments whose fingerprint is already
/// stored for every layer are skipped.
pub fn probe(
    task_files: &[PathBuf],
    provider: &dyn EmbeddingProvider,
    provider_spec: &str,
    output: &Path,
    options: &ProbeOptions,
) -> anyhow::Result<RunManifest> {
    options.config.validate()?;
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let mut config = serde_json::to_value(options)?;
    config["provider"] = serde_json::Value::String(provider_spec.to_string());
    let mut run = RunManifest::start("probe", config);

    let mut tasks = Vec::new();
    for path in task_files {
        match load_task(path) {
            Ok(task) => {
                if let Some(w) = check_against_manifest(path, &task) {
                    run.warnings.push(w);
                }
                tasks.push(task);
            }
            Err(e) => run.failures.push(format!("{e:#}")),
        }
    }

    let sink = Mutex::new(RecordSink::open(&output.join(RECORDS_FILE))?);
    let layer_count = provider.layer_count();
    // (fingerprints, failures)
    let outcome: Mutex<(Vec<String>, Vec<String>)> = Mutex::new((Vec::new(), Vec::new()));
    let work = || {
        tasks.par_iter().for_each(|task| {
            let fp = fingerprint(task, provider, options.aggregation, &options.policy, &options.config);
            let done = {
                let s = sink.lock().expect("sink lock poisoned");
                (0..layer_count).all(|l| s.contains(&fp, l))
            };
            if done {
                tracing::info!("{}: already recorded ({})", task.id(), &fp[..12]);
                outcome.lock().expect("outcome lock poisoned").0.push(fp);
                return;
            }
            tracing::info!("{}: probing {} layer(s)", task.id(), layer_count);
            let result = run_probe_experiment(task, provider, options.aggregation, &options.policy, &options.config)
                .map_err(anyhow::Error::from)
                .and_then(|records| sink.lock().expect("sink lock poisoned").append(&records));
            let mut o = outcome.lock().expect("outcome lock poisoned");
            match result {
                Ok(n) => {
                    tracing::info!("{}: {n} record(s) written", task.id());
                    o.0.push(fp);
                }
                Err(e) => {
                    tracing::warn!("{}: {e:#}", task.id());
                    o.1.push(format!("{}: {e:#}", task.id()));
                }
            }
        })
    };
    match options.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building worker pool")?
            .install(work),
        None => work(),
    }
    let (fingerprints, failures) = outcome.into_inner().expect("outcome lock poisoned");
    run.fingerprints = fingerprints;
    run.failures.extend(failures);
    run.failures.sort();
    drop(sink);
    run.outputs.push(RECORDS_FILE.to_string());
    run.finish(output)
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeOptions {
    pub metric: Metric,
    pub max_frechet: f64,
    pub min_abs_pearson: f64,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, run: &mut RunManifest) -> anyhow::Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(dir.join(name), json).with_context(|| format!("writing {name}"))?;
    run.outputs.push(name.to_string());
    Ok(())
}

/// Curves, heatmap, per-category similarity graphs (JSON and GraphML) and
/// ANOVA tables from a records file or directory.
pub fn analyze(
    records: &Path,
    meta: Option<&Path>,
    output: &Path,
    options: &AnalyzeOptions,
) -> anyhow::Result<RunManifest> {
    let snap = Snapshot::load(records, meta)?;
    if snap.records.is_empty() {
        bail!("no experiment records under {}", records.display());
    }
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let mut run = RunManifest::start("analyze", serde_json::to_value(options)?);
    run.warnings.extend(snap.malformed.iter().map(|m| m.to_string()));
    run.warnings.extend(snap.warnings.iter().cloned());
    run.fingerprints = snap.records.iter().map(|r| r.fingerprint.clone()).collect();

    let curves = views::curves(&snap, None, None, options.metric)?;
    write_json(output, "curves.json", &curves, &mut run)?;
    let heatmap = views::heatmap(&snap, &[GroupKey::Language, GroupKey::Category], options.metric);
    write_json(output, "heatmap.json", &heatmap, &mut run)?;
    let pooled = views::heatmap(&snap, &[GroupKey::Language, GroupKey::Layer], options.metric);
    write_json(output, "language-layer.json", &pooled, &mut run)?;

    let categories: std::collections::BTreeSet<&str> = curves.iter().map(|c| c.id.category.as_str()).collect();
    for category in categories {
        match views::similarity(&snap, Some(category), options.max_frechet, options.min_abs_pearson, options.metric) {
            Ok(graph) => {
                write_json(output, &format!("similarity-{category}.json"), &graph, &mut run)?;
                let name = format!("similarity-{category}.graphml");
                let file = File::create(output.join(&name)).with_context(|| format!("creating {name}"))?;
                write_graphml(&graph, BufWriter::new(file))?;
                run.outputs.push(name);
            }
            Err(e) => run.failures.push(format!("similarity {category}: {e}")),
        }
    }
    if !snap.meta.is_empty() {
        for grouping in [AnovaGrouping::Family, AnovaGrouping::Script] {
            let name = match grouping {
                AnovaGrouping::Family => "anova-family.json",
                AnovaGrouping::Script => "anova-script.json",
            };
            match views::anova(&snap, grouping, options.metric, None) {
                Ok(table) => write_json(output, name, &table, &mut run)?,
                Err(e) => run.warnings.push(format!("{name}: {e}")),
            }
        }
    }
    run.finish(output)
}

/// Builds the provider named by a `--provider` value.
pub fn build_provider(spec: &str) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
    let parsed: ProviderSpec = spec.parse().map_err(anyhow::Error::msg)?;
    parsed
        .build()
        .with_context(|| format!("initializing provider {spec}"))
}

/// Loaded metadata, or an empty table when no file is given.
pub fn load_meta(path: Option<&Path>) -> anyhow::Result<MetaTable> {
    path.map_or(Ok(MetaTable::default()), MetaTable::load)
}
