//! Read-only views over a loaded set of records. The HTTP handlers and the
//! `analyze` subcommand both serialize these.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use polyprobe_core::analytics::{
    anova_oneway, build_curves, group_pool, similarity_graph, AnalyticsError, AnovaResult, GraphExport, GroupKey,
    Metric, PooledValue, ProbingCurve,
};
use polyprobe_core::embedding::Aggregation;
use polyprobe_core::probe::{ClassifierKind, ExperimentRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meta::MetaTable;
use crate::store::{latest_per_task, load_records, Malformed};

/// Responses larger than this are refused.
pub const MAX_EDGES: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum ViewError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unprocessable(String),
}

impl From<AnalyticsError> for ViewError {
    fn from(e: AnalyticsError) -> Self {
        ViewError::Unprocessable(e.to_string())
    }
}

/// Immutable state the views are computed from.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    /// Only the latest fingerprint per (language, category).
    pub records: Vec<ExperimentRecord>,
    pub meta: MetaTable,
    pub malformed: Vec<Malformed>,
    /// Warnings about record groups that do not form a curve and
    /// languages without metadata.
    pub warnings: Vec<String>,
    curves: BTreeMap<Metric, Vec<ProbingCurve>>,
}

impl Snapshot {
    pub fn new(records: Vec<ExperimentRecord>, meta: MetaTable, malformed: Vec<Malformed>) -> Self {
        let records = latest_per_task(records);
        let mut warnings = Vec::new();
        let mut curves = BTreeMap::new();
        for metric in [Metric::Accuracy, Metric::WeightedF1] {
            let (built, failures) = build_curves(&records, metric);
            if metric == Metric::WeightedF1 {
                warnings.extend(failures.into_iter().map(|(task, e)| format!("{task}: {e}")));
            }
            curves.insert(metric, built);
        }
        let languages: BTreeSet<&str> = records.iter().map(|r| r.task.language.as_str()).collect();
        for lang in languages {
            if meta.get(lang).is_none() {
                warnings.push(format!("{lang}: no language metadata, node has no coordinates"));
            }
        }
        Snapshot {
            records,
            meta,
            malformed,
            warnings,
            curves,
        }
    }

    /// Reads records from a file or directory and optional metadata.
    pub fn load(records: &Path, meta: Option<&Path>) -> anyhow::Result<Self> {
        let loaded = load_records(records)?;
        let meta = match meta {
            Some(p) => MetaTable::load(p)?,
            None => MetaTable::default(),
        };
        Ok(Snapshot::new(loaded.records, meta, loaded.malformed))
    }

    pub fn curves(&self, metric: Metric) -> &[ProbingCurve] {
        self.curves.get(&metric).map_or(&[], Vec::as_slice)
    }

    pub fn has_language(&self, code: &str) -> bool {
        self.records.iter().any(|r| r.task.language == code)
    }
}

/// Where a snapshot is (re)loaded from.
#[derive(Debug, Clone)]
pub struct SnapshotSource {
    pub records: PathBuf,
    pub meta: Option<PathBuf>,
}

impl SnapshotSource {
    pub fn load(&self) -> anyhow::Result<Snapshot> {
        Snapshot::load(&self.records, self.meta.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageView {
    pub code: String,
    pub name: Option<String>,
    pub family: Option<String>,
    pub script: Option<String>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub example_count: Option<u64>,
    /// Categories with records in the snapshot.
    pub categories: Vec<String>,
}

/// Every language with metadata or records, by code.
pub fn languages(snap: &Snapshot) -> Vec<LanguageView> {
    let mut categories: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in &snap.records {
        categories
            .entry(r.task.language.as_str())
            .or_default()
            .insert(r.task.category.as_str());
    }
    let codes: BTreeSet<&str> = snap
        .meta
        .iter()
        .map(|m| m.code.as_str())
        .chain(categories.keys().copied())
        .collect();
    codes
        .into_iter()
        .map(|code| {
            let m = snap.meta.get(code);
            LanguageView {
                code: code.to_string(),
                name: m.map(|m| m.name.clone()),
                family: m.map(|m| m.family.clone()),
                script: m.map(|m| m.script.clone()),
                latitude: m.map(|m| m.latitude),
                longitude: m.map(|m| m.longitude),
                example_count: m.map(|m| m.example_count),
                categories: categories
                    .get(code)
                    .map(|c| c.iter().map(|s| s.to_string()).collect())
                    .unwrap_or_default(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub language: String,
    pub category: String,
    pub layer_count: usize,
    pub records: usize,
    pub fingerprint: String,
    pub provider: String,
    pub classifier: ClassifierKind,
    pub aggregation: Aggregation,
}

pub fn tasks(snap: &Snapshot) -> Vec<TaskView> {
    let mut out: BTreeMap<(&str, &str), TaskView> = BTreeMap::new();
    for r in &snap.records {
        out.entry((&r.task.language, &r.task.category))
            .and_modify(|t| t.records += 1)
            .or_insert_with(|| TaskView {
                language: r.task.language.clone(),
                category: r.task.category.clone(),
                layer_count: r.layer_count,
                records: 1,
                fingerprint: r.fingerprint.clone(),
                provider: r.provider.clone(),
                classifier: r.classifier,
                aggregation: r.aggregation,
            });
    }
    out.into_values().collect()
}

pub fn parse_metric(raw: Option<&str>) -> Result<Metric, ViewError> {
    raw.map_or(Ok(Metric::default()), |m| Metric::from_str(m).map_err(ViewError::BadRequest))
}

/// Curves filtered by language and category. An unknown language is NotFound.
pub fn curves(
    snap: &Snapshot,
    language: Option<&str>,
    category: Option<&str>,
    metric: Metric,
) -> Result<Vec<ProbingCurve>, ViewError> {
    if let Some(lang) = language {
        if !snap.has_language(lang) {
            return Err(ViewError::NotFound(format!("no records for language {lang:?}")));
        }
    }
    if let Some(cat) = category {
        if !snap.records.iter().any(|r| r.task.category == cat) {
            return Err(ViewError::NotFound(format!("no records for category {cat:?}")));
        }
    }
    Ok(snap
        .curves(metric)
        .iter()
        .filter(|c| language.is_none_or(|l| c.id.language == l))
        .filter(|c| category.is_none_or(|k| c.id.category == k))
        .cloned()
        .collect())
}

pub fn parse_group_keys(raw: Option<&str>) -> Result<Vec<GroupKey>, ViewError> {
    let raw = raw.unwrap_or("language,category");
    let keys: Vec<GroupKey> = raw
        .split(',')
        .map(|k| GroupKey::from_str(k.trim()).map_err(ViewError::BadRequest))
        .collect::<Result<_, _>>()?;
    if keys.is_empty() || keys.iter().collect::<BTreeSet<_>>().len() != keys.len() {
        return Err(ViewError::BadRequest(format!("invalid group_by {raw:?}")));
    }
    Ok(keys)
}

/// Mean score per group, for the language × category heatmap and friends.
pub fn heatmap(snap: &Snapshot, keys: &[GroupKey], metric: Metric) -> Vec<PooledValue> {
    let refs: Vec<&ExperimentRecord> = snap.records.iter().collect();
    group_pool(&refs, keys, metric)
}

/// Similarity graph between the curves of one category (all categories
/// when `category` is `None`).
pub fn similarity(
    snap: &Snapshot,
    category: Option<&str>,
    max_frechet: f64,
    min_abs_pearson: f64,
    metric: Metric,
) -> Result<GraphExport, ViewError> {
    let selected: Vec<ProbingCurve> = snap
        .curves(metric)
        .iter()
        .filter(|c| category.is_none_or(|k| c.id.category == k))
        .cloned()
        .collect();
    let edges = similarity_graph(&selected, max_frechet, min_abs_pearson).map_err(|e| match e {
        AnalyticsError::Threshold(m) => ViewError::BadRequest(m),
        other => other.into(),
    })?;
    if edges.len() > MAX_EDGES {
        return Err(ViewError::Unprocessable(format!(
            "{} edges exceed the limit of {MAX_EDGES}; tighten the thresholds",
            edges.len()
        )));
    }
    Ok(GraphExport::build(&selected, edges, |lang| snap.meta.get(lang).map(|m| m.node_meta())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnovaGrouping {
    Family,
    Script,
}

impl FromStr for AnovaGrouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "family" => Ok(AnovaGrouping::Family),
            "script" => Ok(AnovaGrouping::Script),
            other => Err(format!("unknown group_by {other:?} (family|script)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageScore {
    pub language: String,
    pub group: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaView {
    pub group_by: AnovaGrouping,
    pub metric: Metric,
    pub category: Option<String>,
    #[serde(flatten)]
    pub result: AnovaResult,
    pub languages: Vec<LanguageScore>,
    /// Languages left out because their family or script is unknown.
    pub without_metadata: Vec<String>,
}

/// One-way ANOVA of per-language mean scores grouped by family or script.
/// A language's score is the mean of its records' metric over all layers
/// (and categories, unless one is selected).
pub fn anova(
    snap: &Snapshot,
    group_by: AnovaGrouping,
    metric: Metric,
    category: Option<&str>,
) -> Result<AnovaView, ViewError> {
    let refs: Vec<&ExperimentRecord> = snap
        .records
        .iter()
        .filter(|r| category.is_none_or(|k| r.task.category == k))
        .collect();
    if refs.is_empty() {
        return Err(ViewError::NotFound("no records match".into()));
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut languages = Vec::new();
    let mut without_metadata = Vec::new();
    for pooled in group_pool(&refs, &[GroupKey::Language], metric) {
        let code = pooled.key[0].clone();
        let Some(m) = snap.meta.get(&code) else {
            without_metadata.push(code);
            continue;
        };
        let group = match group_by {
            AnovaGrouping::Family => m.family.clone(),
            AnovaGrouping::Script => m.script.clone(),
        };
        groups.entry(group.clone()).or_default().push(pooled.mean);
        languages.push(LanguageScore {
            language: code,
            group,
            score: pooled.mean,
        });
    }
    let samples: Vec<(String, Vec<f64>)> = groups.into_iter().collect();
    let result = anova_oneway(&samples)?;
    Ok(AnovaView {
        group_by,
        metric,
        category: category.map(str::to_string),
        result,
        languages,
        without_metadata,
    })
}
