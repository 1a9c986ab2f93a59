//! Diagnostic classifiers trained on frozen sentence representations.

mod experiment;
mod metrics;
mod model;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbedError;
use crate::tasks::Subset;

pub use experiment::{
    fingerprint, run_probe_experiment, Discarded, ExperimentRecord, MeanScores, RunScore, TaskRef,
};
pub use metrics::{accuracy, macro_f1, score, weighted_f1, Scores};
pub use model::{argmax, softmax, AdamW, Model};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid probe configuration: {0}")]
    Config(String),
    #[error("training labels contain a single class {0:?}")]
    SingleClass(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("loss became NaN in epoch {epoch}")]
    NanLoss { epoch: usize },
    #[error("subset {0} is empty after applying the length policy")]
    EmptySubset(Subset),
    #[error("embedding failed ({context}): {source}")]
    Provider {
        context: String,
        #[source]
        source: EmbedError,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    LogisticRegression,
    Mlp,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::LogisticRegression => "logistic_regression",
            ClassifierKind::Mlp => "mlp",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic_regression" | "lr" | "logreg" => Ok(ClassifierKind::LogisticRegression),
            "mlp" => Ok(ClassifierKind::Mlp),
            other => Err(format!("unknown classifier {other:?} (logistic_regression|mlp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub classifier: ClassifierKind,
    pub epochs: usize,
    pub runs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub mlp_hidden: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            classifier: ClassifierKind::LogisticRegression,
            epochs: 10,
            runs: 5,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            mlp_hidden: 256,
            seed: 42,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: &str| Err(ProbeError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if self.classifier == ClassifierKind::Mlp && self.mlp_hidden == 0 {
            return bad("MLP hidden width must be at least 1");
        }
        Ok(())
    }
}

/// Per-feature centering and scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// `sqrt(variance + 1e-8)`.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub const EPSILON: f64 = 1e-8;

    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var.into_iter().map(|s| (s / n + Self::EPSILON).sqrt()).collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedProbe {
    /// Output index `k` decodes to `class_labels[k]`.
    pub class_labels: Vec<String>,
    pub layer_index: usize,
    pub standardizer: Standardizer,
    pub model: Model,
}

impl TrainedProbe {
    pub fn predict(&self, row: &[f64]) -> &str {
        let k = self.model.predict(&self.standardizer.transform(row));
        &self.class_labels[k]
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Trains one probe.
///
/// Rows are first put in a canonical order (by label, then feature values),
/// so the result depends on the multiset of examples and `run_seed` only,
/// never on how the caller ordered them. Class indices follow first
/// appearance in that canonical order.
pub fn train(
    features: &[Vec<f64>],
    labels: &[String],
    config: &ProbeConfig,
    run_seed: u64,
    layer_index: usize,
) -> Result<TrainedProbe, ProbeError> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(ProbeError::Data(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let d = features.first().map_or(0, |r| r.len());
    if d == 0 {
        return Err(ProbeError::Data("no features".into()));
    }
    if features.iter().any(|r| r.len() != d) {
        return Err(ProbeError::Data("feature rows differ in length".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ProbeError::Data("features contain NaN or infinite values".into()));
    }

    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| labels[a].cmp(&labels[b]).then_with(|| lexicographic(&features[a], &features[b])));

    let mut class_labels: Vec<String> = Vec::new();
    let mut targets = Vec::with_capacity(order.len());
    for &i in &order {
        let k = match class_labels.iter().position(|c| c == &labels[i]) {
            Some(k) => k,
            None => {
                class_labels.push(labels[i].clone());
                class_labels.len() - 1
            }
        };
        targets.push(k);
    }
    if class_labels.len() < 2 {
        return Err(ProbeError::SingleClass(class_labels.pop().unwrap_or_default()));
    }

    let raw: Vec<&[f64]> = order.iter().map(|&i| features[i].as_slice()).collect();
    let standardizer = Standardizer::fit(&raw);
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.transform(r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let mut model = Model::init(config.classifier, d, class_labels.len(), config.mlp_hidden, &mut rng);
    let mut optimizer = AdamW::new(model.param_count(), config.learning_rate, config.weight_decay);
    let mut shuffled: Vec<usize> = (0..rows.len()).collect();
    for epoch in 1..=config.epochs {
        shuffled.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in shuffled.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| rows[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&xs, &ys);
            epoch_loss += loss;
            if loss.is_nan() || grad.iter().any(|g| g.is_nan()) {
                return Err(ProbeError::NanLoss { epoch });
            }
            optimizer.step(&mut model.params, &grad);
        }
        if epoch_loss.is_nan() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(ProbeError::NanLoss { epoch });
        }
    }
    Ok(TrainedProbe {
        class_labels,
        layer_index,
        standardizer,
        model,
    })
}

pub fn evaluate(probe: &TrainedProbe, features: &[Vec<f64>], labels: &[String]) -> Scores {
    let predicted: Vec<String> = features.iter().map(|r| probe.predict(r).to_string()).collect();
    score(labels, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Box-Muller standard normal draw.
    fn normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Two unit-variance 2-D blobs whose centres are `gap` apart.
    fn blobs(n: usize, gap: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let offset = if c == 0 { -gap / 2.0 } else { gap / 2.0 };
            xs.push(vec![offset + normal(&mut rng), normal(&mut rng)]);
            ys.push(if c == 0 { "neg" } else { "pos" }.to_string());
        }
        (xs, ys)
    }

    #[test]
    fn separates_gaussian_blobs() {
        let (train_x, train_y) = blobs(200, 6.0, 1);
        let (test_x, test_y) = blobs(200, 6.0, 2);
        for kind in [ClassifierKind::LogisticRegression, ClassifierKind::Mlp] {
            let config = ProbeConfig {
                classifier: kind,
                ..Default::default()
            };
            let probe = train(&train_x, &train_y, &config, 7, 0).unwrap();
            let s = evaluate(&probe, &test_x, &test_y);
            assert!(s.accuracy >= 0.95, "{kind}: {s:?}");
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let xs = vec![vec![1.0], vec![2.0], vec![3.0]];
        let ys = vec!["a".to_string(); 3];
        assert!(matches!(
            train(&xs, &ys, &ProbeConfig::default(), 0, 0),
            Err(ProbeError::SingleClass(c)) if c == "a"
        ));
    }

    #[test]
    fn exploding_learning_rate_reports_epoch() {
        let xs = vec![vec![1.0], vec![-1.0], vec![2.0], vec![-2.0]];
        let ys: Vec<String> = ["a", "b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let config = ProbeConfig {
            learning_rate: f64::MAX,
            ..Default::default()
        };
        match train(&xs, &ys, &config, 0, 0) {
            Err(ProbeError::NanLoss { epoch }) => assert!(epoch >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let ys: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let config = ProbeConfig::default();
        assert!(train(&[vec![1.0], vec![f64::NAN]], &ys, &config, 0, 0).is_err());
        assert!(train(&[vec![1.0], vec![1.0, 2.0]], &ys, &config, 0, 0).is_err());
        assert!(train(&[vec![1.0]], &ys, &config, 0, 0).is_err());
        let zero_epochs = ProbeConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(
            train(&[vec![1.0], vec![2.0]], &ys, &zero_epochs, 0, 0),
            Err(ProbeError::Config(_))
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let (xs, ys) = blobs(60, 2.0, 3);
        for kind in [ClassifierKind::LogisticRegression, ClassifierKind::Mlp] {
            let config = ProbeConfig {
                classifier: kind,
                mlp_hidden: 16,
                ..Default::default()
            };
            let a = train(&xs, &ys, &config, 11, 0).unwrap();
            let b = train(&xs, &ys, &config, 11, 0).unwrap();
            assert_eq!(a, b);
            let c = train(&xs, &ys, &config, 12, 0).unwrap();
            assert_ne!(a.model.params, c.model.params);
        }
    }

    #[test]
    fn input_order_does_not_matter() {
        let (xs, ys) = blobs(80, 1.0, 4);
        let (test_x, test_y) = blobs(80, 1.0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut perm: Vec<usize> = (0..xs.len()).collect();
        perm.shuffle(&mut rng);
        let px: Vec<Vec<f64>> = perm.iter().map(|&i| xs[i].clone()).collect();
        let py: Vec<String> = perm.iter().map(|&i| ys[i].clone()).collect();
        for kind in [ClassifierKind::LogisticRegression, ClassifierKind::Mlp] {
            let config = ProbeConfig {
                classifier: kind,
                mlp_hidden: 8,
                ..Default::default()
            };
            let a = train(&xs, &ys, &config, 3, 0).unwrap();
            let b = train(&px, &py, &config, 3, 0).unwrap();
            assert_eq!(evaluate(&a, &test_x, &test_y), evaluate(&b, &test_x, &test_y));
        }
    }

    #[test]
    fn standardizer_uses_training_statistics() {
        let rows: Vec<&[f64]> = vec![&[1.0, 5.0], &[3.0, 5.0]];
        let s = Standardizer::fit(&rows);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        let t = s.transform(&[3.0, 5.0]);
        assert!((t[0] - 1.0 / (1.0f64 + 1e-8).sqrt()).abs() < 1e-15);
        assert_eq!(t[1], 0.0);
    }

    #[test]
    fn unseen_test_label_counts_as_error() {
        let xs = vec![vec![-1.0], vec![-2.0], vec![1.0], vec![2.0]];
        let ys: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        let probe = train(&xs, &ys, &ProbeConfig::default(), 0, 0).unwrap();
        let s = evaluate(&probe, &[vec![-1.5], vec![1.5]], &["a".to_string(), "zzz".to_string()]);
        assert_eq!(s.accuracy, 0.5);
    }
}
