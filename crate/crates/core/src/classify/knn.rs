use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::data::{squared_distance, FeatureMatrix, QualityLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

impl KnnParams {
    pub(crate) fn validate(&self) -> Result<(), ClassifierError> {
        if self.k == 0 {
            return Err(ClassifierError::InvalidParameter("knn.k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Vote-fraction classifier over Euclidean neighbours. When fewer than `k`
/// reference points exist, all of them vote.
#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    reference: FeatureMatrix,
    bad: Vec<bool>,
}

impl KnnModel {
    pub(crate) fn fit(params: &KnnParams, x: &FeatureMatrix, y: &[QualityLabel]) -> Self {
        Self { k: params.k, reference: x.clone(), bad: y.iter().map(|l| l.is_bad()).collect() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.bad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bad.is_empty()
    }

    pub fn predict_bad(&self, row: &[f64]) -> f64 {
        let k = self.k.min(self.len());
        let mut dist: Vec<(f64, usize)> = self.reference.rows().map(|r| squared_distance(r, row)).zip(0..).collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let votes = dist[..k].iter().filter(|&&(_, i)| self.bad[i]).count();
        votes as f64 / k as f64
    }
}
