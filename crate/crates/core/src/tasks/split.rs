use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Subset, TaskError};

/// Train/validation/test proportions plus the shuffle seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub respect_declared_split: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.8, 0.1, 0.1],
            seed: 42,
            respect_declared_split: true,
        }
    }
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64, respect_declared_split: bool) -> Result<Self, TaskError> {
        let spec = SplitSpec {
            ratios,
            seed,
            respect_declared_split,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let sum: f64 = self.ratios.iter().sum();
        if self.ratios.iter().any(|r| r.is_nan() || *r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(TaskError::InvalidRatios(self.ratios));
        }
        Ok(())
    }
}

/// Per-subset counts for a class of `n` members.
///
/// Each count is the floor or the ceiling of `n * ratio`. Leftover units go
/// first to subsets that would otherwise get nothing, then by largest
/// fractional part; `rotation` breaks remaining ties so that successive tiny
/// classes do not all land in the same subset.
pub(crate) fn allocate(n: usize, ratios: &[f64; 3], rotation: usize) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| n as f64 * r).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = (exact[i] + 1e-9).floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut leftover = n.saturating_sub(assigned);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let starving = |i: usize| counts[i] == 0 && exact[i] > 0.0;
        let frac = |i: usize| exact[i] - counts[i] as f64;
        let rank = |i: usize| (i + rotation) % 3;
        starving(b)
            .cmp(&starving(a))
            .then(frac(b).total_cmp(&frac(a)))
            .then(rank(a).cmp(&rank(b)))
    });
    for &i in order.iter() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}

/// Assigns each example to a subset so that every label keeps its share in
/// tr/va/te. The result is parallel to `labels` and depends only on the
/// label multiset order, the ratios and `seed`.
pub fn stratified_split<L: AsRef<str>>(labels: &[L], ratios: &[f64; 3], seed: u64) -> Vec<Subset> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        by_class.entry(label.as_ref()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Subset::Tr; labels.len()];
    for (rotation, members) in by_class.values_mut().enumerate() {
        let [tr, va, _] = allocate(members.len(), ratios, rotation);
        members.shuffle(&mut rng);
        for (k, &idx) in members.iter().enumerate() {
            assignment[idx] = if k < tr {
                Subset::Tr
            } else if k < tr + va {
                Subset::Va
            } else {
                Subset::Te
            };
        }
    }
    assignment
}
