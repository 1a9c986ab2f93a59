use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{evaluate, train, ClassifierKind, ProbeConfig, ProbeError, Scores};
use crate::embedding::{aggregate_tokens, prepare_text, Aggregation, EmbedError, EmbeddingProvider, LengthPolicy};
use crate::tasks::{ProbingTask, Subset};

/// Sentences sent to the provider per call.
const EMBED_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskRef {
    pub language: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub run: usize,
    pub split: Subset,
    pub accuracy: f64,
    pub weighted_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub accuracy: f64,
    pub weighted_f1: f64,
}

impl MeanScores {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => Some(self.accuracy),
            "weighted_f1" => Some(self.weighted_f1),
            _ => None,
        }
    }
}

/// Sentences dropped by the length policy, per subset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discarded {
    pub tr: usize,
    pub va: usize,
    pub te: usize,
}

impl Discarded {
    fn bump(&mut self, subset: Subset) {
        match subset {
            Subset::Tr => self.tr += 1,
            Subset::Va => self.va += 1,
            Subset::Te => self.te += 1,
        }
    }
}

/// Scores of every run for one layer of one task. `mean` is taken over
/// the test-subset runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub task: TaskRef,
    pub layer: usize,
    pub layer_count: usize,
    pub classifier: ClassifierKind,
    pub runs: Vec<RunScore>,
    pub mean: MeanScores,
    pub fingerprint: String,
    pub provider: String,
    pub aggregation: Aggregation,
    pub policy: LengthPolicy,
    pub discarded: Discarded,
}

impl ExperimentRecord {
    /// Arithmetic mean of the runs on `split`, summed in run order.
    pub fn mean_of(&self, split: Subset) -> Option<MeanScores> {
        let runs: Vec<&RunScore> = self.runs.iter().filter(|r| r.split == split).collect();
        if runs.is_empty() {
            return None;
        }
        let n = runs.len() as f64;
        Some(MeanScores {
            accuracy: runs.iter().map(|r| r.accuracy).sum::<f64>() / n,
            weighted_f1: runs.iter().map(|r| r.weighted_f1).sum::<f64>() / n,
        })
    }
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    language: &'a str,
    category: &'a str,
    task_sha256: String,
    config: &'a ProbeConfig,
    provider: String,
    aggregation: Aggregation,
    policy: &'a LengthPolicy,
    standardize: bool,
}

/// Hex SHA-256 identifying everything that determines an experiment's results.
pub fn fingerprint(
    task: &ProbingTask,
    provider: &dyn EmbeddingProvider,
    aggregation: Aggregation,
    policy: &LengthPolicy,
    config: &ProbeConfig,
) -> String {
    let input = FingerprintInput {
        language: &task.language_code,
        category: &task.category,
        task_sha256: task.digest(),
        config,
        provider: provider.name(),
        aggregation,
        policy,
        standardize: true,
    };
    let json = serde_json::to_vec(&input).expect("fingerprint input serializes");
    hex::encode(Sha256::digest(&json))
}

/// Sentence vectors for one subset, indexed `[layer][example]`.
struct SubsetFeatures {
    labels: Vec<String>,
    layers: Vec<Vec<Vec<f64>>>,
}

fn embed_subset(
    task: &ProbingTask,
    subset: Subset,
    provider: &dyn EmbeddingProvider,
    aggregation: Aggregation,
    policy: &LengthPolicy,
    discarded: &mut Discarded,
) -> Result<SubsetFeatures, ProbeError> {
    let layer_count = provider.layer_count();
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for entry in task.subset(subset) {
        match prepare_text(provider, &entry.text, policy) {
            Some(text) => {
                texts.push(text);
                labels.push(entry.label.clone());
            }
            None => discarded.bump(subset),
        }
    }
    if texts.is_empty() {
        return Err(ProbeError::EmptySubset(subset));
    }
    let mut layers = vec![Vec::with_capacity(texts.len()); layer_count];
    for (c, chunk) in texts.chunks(EMBED_CHUNK).enumerate() {
        let start = c * EMBED_CHUNK;
        let context = || format!("{} subset {}, sentences {}..{}", task.id(), subset, start, start + chunk.len());
        let embedded = provider.embed_batch(chunk).map_err(|source| ProbeError::Provider {
            context: context(),
            source,
        })?;
        if embedded.len() != chunk.len() {
            return Err(ProbeError::Provider {
                context: context(),
                source: EmbedError::Shape(format!("{} embeddings for {} sentences", embedded.len(), chunk.len())),
            });
        }
        for emb in &embedded {
            if emb.layer_count() != layer_count {
                return Err(ProbeError::Provider {
                    context: context(),
                    source: EmbedError::Shape(format!("{} layers, provider declared {layer_count}", emb.layer_count())),
                });
            }
            for (l, vector) in aggregate_tokens(emb, aggregation).into_iter().enumerate() {
                layers[l].push(vector);
            }
        }
    }
    Ok(SubsetFeatures { labels, layers })
}

/// Trains `config.runs` probes per provider layer and scores them on the
/// validation and test subsets. Each sentence is embedded once; layers are
/// then processed in parallel on the current rayon pool.
pub fn run_probe_experiment(
    task: &ProbingTask,
    provider: &dyn EmbeddingProvider,
    aggregation: Aggregation,
    policy: &LengthPolicy,
    config: &ProbeConfig,
) -> Result<Vec<ExperimentRecord>, ProbeError> {
    config.validate()?;
    let fingerprint = fingerprint(task, provider, aggregation, policy, config);
    let mut discarded = Discarded::default();
    let mut features = Vec::with_capacity(3);
    for subset in Subset::ALL {
        features.push(embed_subset(task, subset, provider, aggregation, policy, &mut discarded)?);
    }
    let [train_set, dev_set, test_set] = <[SubsetFeatures; 3]>::try_from(features)
        .unwrap_or_else(|_| unreachable!("three subsets"));
    let layer_count = provider.layer_count();
    let provider_name = provider.name();

    (0..layer_count)
        .into_par_iter()
        .map(|layer| {
            let mut runs = Vec::with_capacity(config.runs * 2);
            for run in 0..config.runs {
                let probe = train(
                    &train_set.layers[layer],
                    &train_set.labels,
                    config,
                    config.seed.wrapping_add(run as u64),
                    layer,
                )?;
                for (split, set) in [(Subset::Va, &dev_set), (Subset::Te, &test_set)] {
                    let Scores { accuracy, weighted_f1 } = evaluate(&probe, &set.layers[layer], &set.labels);
                    runs.push(RunScore {
                        run,
                        split,
                        accuracy,
                        weighted_f1,
                    });
                }
            }
            let mut record = ExperimentRecord {
                task: TaskRef {
                    language: task.language_code.clone(),
                    category: task.category.clone(),
                },
                layer,
                layer_count,
                classifier: config.classifier,
                runs,
                mean: MeanScores {
                    accuracy: 0.0,
                    weighted_f1: 0.0,
                },
                fingerprint: fingerprint.clone(),
                provider: provider_name.clone(),
                aggregation,
                policy: *policy,
                discarded,
            };
            record.mean = record.mean_of(Subset::Te).expect("at least one run");
            Ok(record)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{HashedNgramConfig, HashedNgramProvider, LengthMode};
    use crate::tasks::TaskEntry;
    use std::collections::BTreeSet;

    fn toy_task() -> ProbingTask {
        let mut entries = Vec::new();
        let words = [("walked", "Past"), ("jumped", "Past"), ("walks", "Pres"), ("jumps", "Pres")];
        for i in 0..40 {
            let (verb, label) = words[i % 4];
            let subset = match i % 10 {
                0 => Subset::Va,
                1 => Subset::Te,
                _ => Subset::Tr,
            };
            entries.push(TaskEntry {
                subset,
                label: label.into(),
                text: format!("person{i} {verb} home"),
            });
        }
        entries.sort_by_key(|e| e.subset);
        ProbingTask {
            language_code: "en".into(),
            category: "Tense".into(),
            entries,
            class_set: BTreeSet::from(["Past".to_string(), "Pres".to_string()]),
        }
    }

    fn hashed() -> HashedNgramProvider {
        HashedNgramProvider::new(HashedNgramConfig {
            dimension: 32,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn one_record_per_layer_with_all_runs() {
        let config = ProbeConfig {
            runs: 3,
            ..Default::default()
        };
        let records =
            run_probe_experiment(&toy_task(), &hashed(), Aggregation::Avg, &LengthPolicy::default(), &config).unwrap();
        assert_eq!(records.len(), 4);
        for (l, r) in records.iter().enumerate() {
            assert_eq!(r.layer, l);
            assert_eq!(r.runs.len(), 6);
            assert_eq!(r.mean, r.mean_of(Subset::Te).unwrap());
            assert!(r.mean_of(Subset::Va).is_some());
            assert_eq!(r.fingerprint, records[0].fingerprint);
        }
    }

    #[test]
    fn single_run_mean_is_that_run() {
        let config = ProbeConfig {
            runs: 1,
            ..Default::default()
        };
        let records =
            run_probe_experiment(&toy_task(), &hashed(), Aggregation::Sum, &LengthPolicy::default(), &config).unwrap();
        for r in &records {
            let te = r.runs.iter().find(|s| s.split == Subset::Te).unwrap();
            assert_eq!(r.mean.accuracy, te.accuracy);
            assert_eq!(r.mean.weighted_f1, te.weighted_f1);
        }
    }

    #[test]
    fn fingerprint_tracks_every_setting() {
        let task = toy_task();
        let p = hashed();
        let config = ProbeConfig::default();
        let policy = LengthPolicy::default();
        let base = fingerprint(&task, &p, Aggregation::Cls, &policy, &config);
        assert_eq!(base, fingerprint(&task, &p, Aggregation::Cls, &policy, &config));
        assert_ne!(base, fingerprint(&task, &p, Aggregation::Avg, &policy, &config));
        let discard = LengthPolicy {
            mode: LengthMode::Discard,
            ..policy
        };
        assert_ne!(base, fingerprint(&task, &p, Aggregation::Cls, &discard, &config));
        let more_epochs = ProbeConfig {
            epochs: 11,
            ..config.clone()
        };
        assert_ne!(base, fingerprint(&task, &p, Aggregation::Cls, &policy, &more_epochs));
        let mut other_task = task.clone();
        other_task.entries[0].text.push('x');
        assert_ne!(base, fingerprint(&other_task, &p, Aggregation::Cls, &policy, &config));
    }

    #[test]
    fn discard_that_empties_a_subset_fails() {
        let policy = LengthPolicy {
            max_tokens: 2,
            mode: LengthMode::Discard,
        };
        assert!(matches!(
            run_probe_experiment(&toy_task(), &hashed(), Aggregation::Avg, &policy, &ProbeConfig::default()),
            Err(ProbeError::EmptySubset(Subset::Tr))
        ));
    }

    #[test]
    fn provider_errors_carry_context() {
        struct Broken;
        impl EmbeddingProvider for Broken {
            fn name(&self) -> String {
                "broken".into()
            }
            fn layer_count(&self) -> usize {
                1
            }
            fn dimension(&self) -> usize {
                1
            }
            fn embed_batch(&self, _: &[String]) -> Result<Vec<crate::embedding::LayeredEmbedding>, EmbedError> {
                Err(EmbedError::Response("boom".into()))
            }
        }
        match run_probe_experiment(&toy_task(), &Broken, Aggregation::Cls, &LengthPolicy::default(), &ProbeConfig::default()) {
            Err(ProbeError::Provider { context, .. }) => assert!(context.contains("en_Tense")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn record_json_shape() {
        let config = ProbeConfig {
            runs: 1,
            epochs: 1,
            ..Default::default()
        };
        let records =
            run_probe_experiment(&toy_task(), &hashed(), Aggregation::Avg, &LengthPolicy::default(), &config).unwrap();
        let v: serde_json::Value = serde_json::to_value(&records[0]).unwrap();
        assert_eq!(v["task"]["language"], "en");
        assert_eq!(v["aggregation"], "avg");
        assert_eq!(v["policy"]["mode"], "truncate");
        assert_eq!(v["policy"]["max_tokens"], 512);
        assert_eq!(v["runs"][0]["split"], "va");
        assert_eq!(v["discarded"]["te"], 0);
        let back: ExperimentRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, records[0]);
    }
}
