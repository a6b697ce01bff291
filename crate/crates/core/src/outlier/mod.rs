//! Outlier scoring and outlier-driven construction of the initial labelled set.
//!
//! All detectors follow the same convention: one finite score per instance,
//! higher meaning more anomalous. Rankings break score ties by ascending index.

mod iforest;
mod lof;
mod ocsvm;

use std::cmp::Ordering;
use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureMatrix, QualityLabel};
use crate::rng::{derive_seed, streams, substream};

pub use iforest::{average_path_length, iforest_scores, score_from_path_length, IsolationForest};
pub use lof::{k_nearest, lof_scores};
pub use ocsvm::{ocsvm_scores, rbf_kernel, OneClassSvm};

#[derive(Debug, Error, PartialEq)]
pub enum OutlierError {
    #[error("{detector} needs more than {required} points, got {found}")]
    TooFewPoints { detector: DetectorKind, required: usize, found: usize },
    #[error("one-class SVM solver did not converge within {iterations} iterations (violation {violation:e})")]
    SolverNotConverged { iterations: usize, violation: f64 },
    #[error("initial set size {size} must satisfy 0 < size < {pool}")]
    InvalidSize { size: usize, pool: usize },
    #[error("invalid detector parameter: {0}")]
    InvalidParameter(String),
    #[error("cut-off {cutoff} exceeds the {len} available scores")]
    CutoffTooLarge { cutoff: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Lof,
    Iforest,
    Ocsvm,
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DetectorKind::Lof => "LOF",
            DetectorKind::Iforest => "iForest",
            DetectorKind::Ocsvm => "OCSVM",
        })
    }
}

/// Scores assigned by one detector to every pool instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierScoreVector {
    pub detector: DetectorKind,
    pub scores: Vec<f64>,
}

impl OutlierScoreVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// All indices, most anomalous first.
    pub fn ranking(&self) -> Vec<usize> {
        rank_descending(&self.scores, (0..self.scores.len()).collect())
    }

    /// The `n` most anomalous indices.
    pub fn top(&self, n: usize) -> Vec<usize> {
        let mut r = self.ranking();
        r.truncate(n);
        r
    }

    /// Hard outlier predictions: the top `ceil(contamination * n)` instances.
    pub fn predict_outliers(&self, contamination: f64) -> Result<Vec<bool>, OutlierError> {
        if !(contamination > 0.0 && contamination < 0.5) {
            return Err(OutlierError::InvalidParameter(format!("contamination {contamination} outside (0, 0.5)")));
        }
        let cut = (contamination * self.len() as f64).ceil() as usize;
        let mut flags = vec![false; self.len()];
        for i in self.top(cut) {
            flags[i] = true;
        }
        Ok(flags)
    }

    /// Debug export as `index,score`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,score")?;
        for (i, s) in self.scores.iter().enumerate() {
            writeln!(w, "{i},{s}")?;
        }
        Ok(())
    }
}

/// Sorts `candidates` by descending score, ascending index on ties.
pub(crate) fn rank_descending(scores: &[f64], mut candidates: Vec<usize>) -> Vec<usize> {
    candidates.sort_by(|&a, &b| match scores[b].partial_cmp(&scores[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    candidates
}

/// Number of true positives among the top-`cutoff` scores.
pub fn anomalies_at_n(scores: &OutlierScoreVector, labels: &[QualityLabel], cutoff: usize) -> Result<usize, OutlierError> {
    if cutoff > scores.len() {
        return Err(OutlierError::CutoffTooLarge { cutoff, len: scores.len() });
    }
    Ok(scores.top(cutoff).into_iter().filter(|&i| labels[i].is_bad()).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LofParams {
    pub k_neighbors: usize,
}

impl Default for LofParams {
    fn default() -> Self {
        Self { k_neighbors: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IForestParams {
    pub n_estimators: usize,
    pub subsample: usize,
}

impl Default for IForestParams {
    fn default() -> Self {
        Self { n_estimators: 100, subsample: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcsvmParams {
    /// RBF width; `None` means `1 / n_features`.
    pub gamma: Option<f64>,
    pub nu: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        Self { gamma: None, nu: 0.5, tolerance: 1e-6, max_iterations: 1_000_000 }
    }
}

/// Detector block of a session configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub lof: LofParams,
    pub iforest: IForestParams,
    pub ocsvm: OcsvmParams,
    /// Expected anomaly fraction; only used for hard outlier predictions.
    pub contamination: Option<f64>,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), OutlierError> {
        let bad = |m: String| Err(OutlierError::InvalidParameter(m));
        if self.lof.k_neighbors == 0 {
            return bad("lof.k_neighbors must be >= 1".into());
        }
        if self.iforest.n_estimators == 0 || self.iforest.subsample < 2 {
            return bad("iforest needs n_estimators >= 1 and subsample >= 2".into());
        }
        if let Some(g) = self.ocsvm.gamma {
            if !(g > 0.0) {
                return bad(format!("ocsvm.gamma must be > 0, got {g}"));
            }
        }
        if !(self.ocsvm.nu > 0.0 && self.ocsvm.nu <= 1.0) {
            return bad(format!("ocsvm.nu must lie in (0, 1], got {}", self.ocsvm.nu));
        }
        if let Some(c) = self.contamination {
            if !(c > 0.0 && c < 0.5) {
                return bad(format!("contamination must lie in (0, 0.5), got {c}"));
            }
        }
        Ok(())
    }
}

/// How the initial set is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Random,
    Lof,
    Iforest,
    Ocsvm,
}

impl InitMethod {
    pub fn detector(self) -> Option<DetectorKind> {
        match self {
            InitMethod::Random => None,
            InitMethod::Lof => Some(DetectorKind::Lof),
            InitMethod::Iforest => Some(DetectorKind::Iforest),
            InitMethod::Ocsvm => Some(DetectorKind::Ocsvm),
        }
    }
}

impl std::str::FromStr for InitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" | "rd" => Ok(InitMethod::Random),
            "lof" => Ok(InitMethod::Lof),
            "iforest" => Ok(InitMethod::Iforest),
            "ocsvm" => Ok(InitMethod::Ocsvm),
            other => Err(format!("unknown init method `{other}` (random|lof|iforest|ocsvm)")),
        }
    }
}

/// Partition of the pool into the initial set and the unlabelled remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSet {
    /// Selection order (rank order for detector-based methods).
    pub initial: Vec<usize>,
    /// Ascending.
    pub unlabeled: Vec<usize>,
    /// Scores over the whole pool, when a detector was used.
    pub scores: Option<OutlierScoreVector>,
}

/// Scores every pool row with the given detector, fitting on the pool itself.
pub fn score_pool(
    pool: &FeatureMatrix,
    detector: DetectorKind,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<OutlierScoreVector, OutlierError> {
    match detector {
        DetectorKind::Lof => lof_scores(pool, cfg.lof.k_neighbors),
        DetectorKind::Iforest => iforest_scores(pool, &cfg.iforest, derive_seed(seed, streams::IFOREST)),
        DetectorKind::Ocsvm => ocsvm_scores(pool, pool, &cfg.ocsvm),
    }
}

pub fn build_initial_set(
    pool: &FeatureMatrix,
    method: InitMethod,
    size: usize,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<InitialSet, OutlierError> {
    let n = pool.n_rows();
    if size == 0 || size >= n {
        return Err(OutlierError::InvalidSize { size, pool: n });
    }
    cfg.validate()?;
    let mut rng = substream(seed, streams::INITIAL_SET);

    let (initial, scores) = match method {
        InitMethod::Random => (index::sample(&mut rng, n, size).into_vec(), None),
        InitMethod::Lof | InitMethod::Iforest => {
            let scores = score_pool(pool, method.detector().expect("detector method"), cfg, seed)?;
            (scores.top(size), Some(scores))
        }
        InitMethod::Ocsvm => {
            // half random (also the OCSVM training data), half top-ranked among the rest
            let n_train = size / 2;
            if n_train < 2 {
                return Err(OutlierError::InvalidSize { size, pool: n });
            }
            let mut initial = index::sample(&mut rng, n, n_train).into_vec();
            let train = pool.select(&initial);
            let scores = ocsvm_scores(&train, pool, &cfg.ocsvm)?;
            let mut taken = vec![false; n];
            for &i in &initial {
                taken[i] = true;
            }
            let rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            let ranked = rank_descending(&scores.scores, rest);
            initial.extend(ranked.into_iter().take(size - initial.len()));
            (initial, Some(scores))
        }
    };

    let mut in_initial = vec![false; n];
    for &i in &initial {
        in_initial[i] = true;
    }
    let unlabeled = (0..n).filter(|&i| !in_initial[i]).collect();
    Ok(InitialSet { initial, unlabeled, scores })
}
