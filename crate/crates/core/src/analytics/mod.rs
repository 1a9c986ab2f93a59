//! Probing curves, curve similarity, pooling and group statistics.
//!
//! Everything here is a pure function of experiment records, so any value
//! served by the workbench can be recomputed from the JSON-lines files.

mod anova;
mod export;
mod similarity;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probe::ExperimentRecord;

pub use anova::{anova_oneway, f_survival, AnovaResult, GroupSummary};
pub use export::{write_graphml, GraphExport, GraphNode, NodeMeta};
pub use similarity::{frechet_distance, frechet_points, pearson, pearson_values, similarity_graph, SimilarityEdge};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("no records given")]
    Empty,
    #[error("records mix tasks {0:?}")]
    MixedTasks(Vec<String>),
    #[error("layers do not cover 0..{expected} exactly once: missing {missing:?}, duplicated {duplicated:?}")]
    LayerCoverage {
        expected: usize,
        missing: Vec<usize>,
        duplicated: Vec<usize>,
    },
    #[error("curves differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined: a sequence has zero variance")]
    ZeroVariance,
    #[error("invalid threshold: {0}")]
    Threshold(String),
    #[error("ANOVA precondition failed: {0}")]
    Anova(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    #[default]
    WeightedF1,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::WeightedF1 => "weighted_f1",
        }
    }

    pub fn of(self, record: &ExperimentRecord) -> f64 {
        match self {
            Metric::Accuracy => record.mean.accuracy,
            Metric::WeightedF1 => record.mean.weighted_f1,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "weighted_f1" | "f1" => Ok(Metric::WeightedF1),
            other => Err(format!("unknown metric {other:?} (accuracy|weighted_f1)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CurveId {
    pub language: String,
    pub category: String,
    pub metric: Metric,
}

impl CurveId {
    /// `language_category`, the node id used by similarity graphs.
    pub fn label(&self) -> String {
        format!("{}_{}", self.language, self.category)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbingCurve {
    pub id: CurveId,
    pub points: Vec<Point>,
}

impl ProbingCurve {
    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }
}

/// Normalized layer positions `i / (L - 1)`; a single layer sits at 0.
pub fn layer_positions(layer_count: usize) -> Vec<f64> {
    match layer_count {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// One point per layer from the records of a single (language, category).
pub fn build_curve(records: &[&ExperimentRecord], metric: Metric) -> Result<ProbingCurve, AnalyticsError> {
    let first = records.first().ok_or(AnalyticsError::Empty)?;
    let tasks: BTreeSet<String> = records
        .iter()
        .map(|r| format!("{}_{}", r.task.language, r.task.category))
        .collect();
    if tasks.len() > 1 {
        return Err(AnalyticsError::MixedTasks(tasks.into_iter().collect()));
    }
    let n = records.len();
    let mut by_layer: Vec<Vec<&ExperimentRecord>> = vec![Vec::new(); n];
    let mut duplicated = BTreeSet::new();
    for r in records {
        if r.layer < n {
            by_layer[r.layer].push(r);
        }
    }
    let mut missing = Vec::new();
    for (layer, slot) in by_layer.iter().enumerate() {
        match slot.len() {
            0 => missing.push(layer),
            1 => {}
            _ => {
                duplicated.insert(layer);
            }
        }
    }
    // With n records, a missing layer implies a duplicate or out-of-range one.
    for r in records {
        if r.layer >= n {
            duplicated.insert(r.layer);
        }
    }
    if !missing.is_empty() || !duplicated.is_empty() {
        return Err(AnalyticsError::LayerCoverage {
            expected: n,
            missing,
            duplicated: duplicated.into_iter().collect(),
        });
    }
    let points = layer_positions(n)
        .into_iter()
        .zip(&by_layer)
        .map(|(x, slot)| Point { x, y: metric.of(slot[0]) })
        .collect();
    Ok(ProbingCurve {
        id: CurveId {
            language: first.task.language.clone(),
            category: first.task.category.clone(),
            metric,
        },
        points,
    })
}

/// Groups records by (language, category) and builds every curve, in
/// key order. Groups that fail [`build_curve`] are returned separately.
pub fn build_curves<'a, I>(records: I, metric: Metric) -> (Vec<ProbingCurve>, Vec<(String, AnalyticsError)>)
where
    I: IntoIterator<Item = &'a ExperimentRecord>,
{
    let mut groups: BTreeMap<(String, String), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.task.language.clone(), r.task.category.clone()))
            .or_default()
            .push(r);
    }
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for ((language, category), members) in groups {
        match build_curve(&members, metric) {
            Ok(c) => curves.push(c),
            Err(e) => failures.push((format!("{language}_{category}"), e)),
        }
    }
    (curves, failures)
}

/// Element-wise mean of equally long curves; `x` comes from the first curve.
pub fn pool_curves(curves: &[&ProbingCurve]) -> Result<Vec<Point>, AnalyticsError> {
    let first = curves.first().ok_or(AnalyticsError::Empty)?;
    let len = first.points.len();
    if let Some(c) = curves.iter().find(|c| c.points.len() != len) {
        return Err(AnalyticsError::LengthMismatch(len, c.points.len()));
    }
    let n = curves.len() as f64;
    Ok((0..len)
        .map(|i| Point {
            x: first.points[i].x,
            y: curves.iter().map(|c| c.points[i].y).sum::<f64>() / n,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Language,
    Category,
    Layer,
}

impl GroupKey {
    fn value(self, r: &ExperimentRecord) -> String {
        match self {
            GroupKey::Language => r.task.language.clone(),
            GroupKey::Category => r.task.category.clone(),
            GroupKey::Layer => r.layer.to_string(),
        }
    }
}

impl FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "language" => Ok(GroupKey::Language),
            "category" => Ok(GroupKey::Category),
            "layer" => Ok(GroupKey::Layer),
            other => Err(format!("unknown grouping {other:?} (language|category|layer)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledValue {
    /// One value per requested group key, in the requested order.
    pub key: Vec<String>,
    pub n: usize,
    pub mean: f64,
}

/// Mean of the records' metric per combination of `keys`, in key order.
/// Layer keys sort numerically.
pub fn group_pool(records: &[&ExperimentRecord], keys: &[GroupKey], metric: Metric) -> Vec<PooledValue> {
    let mut groups: BTreeMap<Vec<SortKey>, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = keys
            .iter()
            .map(|k| match k {
                GroupKey::Layer => SortKey::Num(r.layer),
                other => SortKey::Text(other.value(r)),
            })
            .collect();
        groups.entry(key).or_default().push(metric.of(r));
    }
    groups
        .into_iter()
        .map(|(key, values)| PooledValue {
            key: key.into_iter().map(|k| k.to_string()).collect(),
            n: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SortKey {
    Num(usize),
    Text(String),
}

impl fmt::Display for SortKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SortKey::Num(n) => write!(f, "{n}"),
            SortKey::Text(s) => f.write_str(s),
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::embedding::{Aggregation, LengthPolicy};
    use crate::probe::{ClassifierKind, Discarded, ExperimentRecord, MeanScores, RunScore, TaskRef};
    use crate::tasks::Subset;

    /// A record whose test runs are exactly `te_runs` (used for both metrics).
    pub fn record(language: &str, category: &str, layer: usize, layer_count: usize, te_runs: &[f64]) -> ExperimentRecord {
        let runs: Vec<RunScore> = te_runs
            .iter()
            .enumerate()
            .map(|(run, &v)| RunScore {
                run,
                split: Subset::Te,
                accuracy: v,
                weighted_f1: v,
            })
            .collect();
        let mut r = ExperimentRecord {
            task: TaskRef {
                language: language.into(),
                category: category.into(),
            },
            layer,
            layer_count,
            classifier: ClassifierKind::LogisticRegression,
            runs,
            mean: MeanScores {
                accuracy: 0.0,
                weighted_f1: 0.0,
            },
            fingerprint: "f".into(),
            provider: "test".into(),
            aggregation: Aggregation::Cls,
            policy: LengthPolicy::default(),
            discarded: Discarded::default(),
        };
        r.mean = r.mean_of(Subset::Te).unwrap();
        r
    }
}
