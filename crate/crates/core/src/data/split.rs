use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, QualityLabel};
use crate::rng::{streams, substream};

/// Train / validation / test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    fn fractions(&self) -> Result<[f64; 3], DataError> {
        let f = [self.train_frac, self.val_frac, self.test_frac];
        let sum: f64 = f.iter().sum();
        if f.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidSplit(sum));
        }
        Ok(f)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_frac: 0.6, val_frac: 0.2, test_frac: 0.2, seed: 0 }
    }
}

/// Record indices of each subset. Within a subset the order is a seeded
/// shuffle, so positional order carries no temporal information.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<SplitIndices, DataError> {
    stratified_split_labels(ds.labels(), spec)
}

/// Splits each class separately with largest-remainder allocation, so every
/// subset keeps the global error rate up to rounding.
pub fn stratified_split_labels(labels: &[QualityLabel], spec: &SplitSpec) -> Result<SplitIndices, DataError> {
    if labels.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let fractions = spec.fractions()?;
    let mut rng = substream(spec.seed, streams::SPLIT);
    let mut parts: [Vec<usize>; 3] = Default::default();

    for class in [QualityLabel::Good, QualityLabel::Bad] {
        let mut members: Vec<usize> = labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let counts = largest_remainder(members.len(), &fractions);
        let mut start = 0;
        for (part, count) in parts.iter_mut().zip(counts) {
            part.extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for part in &mut parts {
        part.shuffle(&mut rng);
    }
    let [train, val, test] = parts;
    Ok(SplitIndices { train, val, test })
}

/// Integer allocation of `total` proportional to `fractions`; leftover units go
/// to the largest fractional parts, earlier subsets first on ties.
fn largest_remainder(total: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let quotas = fractions.map(|f| f * total as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().take(total.saturating_sub(assigned)) {
        counts[j] += 1;
    }
    counts
}
