use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub weighted_f1: f64,
}

pub fn accuracy<T: PartialEq>(truth: &[T], predicted: &[T]) -> f64 {
    assert_eq!(truth.len(), predicted.len(), "prediction count differs from label count");
    if truth.is_empty() {
        return 0.0;
    }
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    correct as f64 / truth.len() as f64
}

/// `(support, f1)` for every class present in `truth`.
fn per_class_f1<T: Ord + Clone>(truth: &[T], predicted: &[T]) -> BTreeMap<T, (usize, f64)> {
    let mut tp: BTreeMap<T, usize> = BTreeMap::new();
    let mut support: BTreeMap<T, usize> = BTreeMap::new();
    let mut predicted_count: BTreeMap<T, usize> = BTreeMap::new();
    for (t, p) in truth.iter().zip(predicted) {
        *support.entry(t.clone()).or_default() += 1;
        *predicted_count.entry(p.clone()).or_default() += 1;
        if t == p {
            *tp.entry(t.clone()).or_default() += 1;
        }
    }
    support
        .into_iter()
        .map(|(class, s)| {
            let hits = tp.get(&class).copied().unwrap_or(0) as f64;
            let guessed = predicted_count.get(&class).copied().unwrap_or(0) as f64;
            let precision = if guessed > 0.0 { hits / guessed } else { 0.0 };
            let recall = hits / s as f64;
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            (class, (s, f1))
        })
        .collect()
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1<T: Ord + Clone>(truth: &[T], predicted: &[T]) -> f64 {
    assert_eq!(truth.len(), predicted.len(), "prediction count differs from label count");
    if truth.is_empty() {
        return 0.0;
    }
    let n = truth.len() as f64;
    per_class_f1(truth, predicted)
        .values()
        .map(|(s, f1)| *s as f64 / n * f1)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Unweighted mean of per-class F1 over classes present in `truth`.
pub fn macro_f1<T: Ord + Clone>(truth: &[T], predicted: &[T]) -> f64 {
    assert_eq!(truth.len(), predicted.len(), "prediction count differs from label count");
    let per_class = per_class_f1(truth, predicted);
    if per_class.is_empty() {
        return 0.0;
    }
    per_class.values().map(|(_, f1)| f1).sum::<f64>() / per_class.len() as f64
}

pub fn score<T: Ord + Clone>(truth: &[T], predicted: &[T]) -> Scores {
    Scores {
        accuracy: accuracy(truth, predicted),
        weighted_f1: weighted_f1(truth, predicted),
    }
}
