//! Pool-based active learning: bookkeeping, query strategies, oracles and the
//! resumable session engine.

mod engine;
mod oracle;
mod pool;
mod session;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassifierError;
use crate::data::DataError;
use crate::outlier::{rank_descending, OutlierError, OutlierScoreVector};
use crate::rng::{derive_seed, streams, substream};

pub use engine::{CurvePoint, Engine, EngineConfig, EvalSet, PendingBatch, PendingKind, Phase, Prediction, PredictionSource, StopReason};
pub use oracle::{drive, ExternalOracle, LabelSender, Oracle, OracleResponse, SimulatedOracle};
pub use pool::{PoolState, Slot};
pub use session::{
    cold_start_scores, initial_set, prepare_data, run_al_session, run_prepared_session, start_engine, ColdStart, PreparedData,
    SessionConfig, SessionReport,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unlabelled set is empty")]
    EmptyUnlabeledSet,
    #[error("index {0} is not an unlabelled pool instance")]
    UnknownIndex(usize),
    #[error("budget {budget} is smaller than the initial set ({initial})")]
    BudgetSmallerThanInitialSet { budget: usize, initial: usize },
    #[error("budget {budget} exceeds the pool size {pool}")]
    BudgetExceedsPool { budget: usize, pool: usize },
    #[error("batch size must be >= 1")]
    InvalidBatchSize,
    #[error("confidence threshold must be finite and >= 0")]
    InvalidThreshold,
    #[error("session is {0:?}, not awaiting labels")]
    WrongPhase(Phase),
    #[error("labels missing for pending indices {0:?}")]
    MissingLabels(Vec<usize>),
    #[error("labels given for indices that are not pending: {0:?}")]
    UnexpectedLabels(Vec<usize>),
    #[error("timed out waiting for external labels")]
    ExternalTimeout,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Outlier(#[from] OutlierError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Probability of the more likely class. Every binary uncertainty measure is
/// a function of this value alone, so `p` and `1 − p` score identically.
fn majority(p_bad: f64) -> f64 {
    p_bad.max(1.0 - p_bad)
}

/// Binary entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p_bad: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    let m = majority(p_bad);
    term(m) + term(1.0 - m)
}

/// `1 − max_c P(c)`.
pub fn least_confidence(p_bad: f64) -> f64 {
    1.0 - majority(p_bad)
}

/// Gap between the two class probabilities; smaller means more uncertain.
pub fn margin(p_bad: f64) -> f64 {
    2.0 * majority(p_bad) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryStrategy {
    /// Maximum prediction entropy.
    Uncertainty,
    Random,
}

impl std::str::FromStr for QueryStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uncertainty" | "us" | "entropy" => Ok(QueryStrategy::Uncertainty),
            "random" | "rs" => Ok(QueryStrategy::Random),
            other => Err(format!("unknown strategy `{other}` (uncertainty|random)")),
        }
    }
}

/// Instances chosen for labelling, most informative first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl QueryBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn from_ranked(indices: Vec<usize>, score: impl Fn(usize) -> f64) -> Self {
        let scores = indices.iter().map(|&i| score(i)).collect();
        Self { indices, scores }
    }
}

/// The `k` unlabelled instances with the highest entropy of `p_bad`.
///
/// `p_bad` is indexed by pool position. With a degenerate (single-class)
/// model every entropy is equal, so the ranking falls back to `fallback`
/// outlier scores when present, else to ascending index.
pub fn select_uncertain(
    p_bad: &[f64],
    unlabeled: &[usize],
    k: usize,
    degenerate: bool,
    fallback: Option<&OutlierScoreVector>,
) -> Result<QueryBatch, EngineError> {
    if unlabeled.is_empty() {
        return Err(EngineError::EmptyUnlabeledSet);
    }
    if k == 0 {
        return Err(EngineError::InvalidBatchSize);
    }
    if degenerate {
        let mut ranked = match fallback {
            Some(scores) => rank_descending(&scores.scores, unlabeled.to_vec()),
            None => {
                let mut v = unlabeled.to_vec();
                v.sort_unstable();
                v
            }
        };
        ranked.truncate(k);
        return Ok(match fallback {
            Some(scores) => QueryBatch::from_ranked(ranked, |i| scores.scores[i]),
            None => QueryBatch::from_ranked(ranked, |i| entropy(p_bad[i])),
        });
    }
    Ok(top_entropy(p_bad, unlabeled.to_vec(), k))
}

/// Highest-entropy candidates first. Entropy falls strictly as the majority
/// probability rises, so ranking on the latter gives the same order without
/// rounding noise; ties go to the lower index.
fn top_entropy(p_bad: &[f64], candidates: Vec<usize>, k: usize) -> QueryBatch {
    let mut ranked: Vec<(f64, usize)> = candidates.iter().map(|&i| (majority(p_bad[i]), i)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, cmp);
        ranked.truncate(k);
    }
    ranked.sort_unstable_by(cmp);
    QueryBatch::from_ranked(ranked.iter().map(|e| e.1).collect(), |i| entropy(p_bad[i]))
}

/// `k` uniform draws without replacement from the unlabelled set. The draw for
/// a given `(seed, cycle)` is fixed.
pub fn select_random(p_bad: Option<&[f64]>, unlabeled: &[usize], k: usize, seed: u64, cycle: u64) -> Result<QueryBatch, EngineError> {
    if unlabeled.is_empty() {
        return Err(EngineError::EmptyUnlabeledSet);
    }
    if k == 0 {
        return Err(EngineError::InvalidBatchSize);
    }
    let mut sorted = unlabeled.to_vec();
    sorted.sort_unstable();
    let k = k.min(sorted.len());
    let mut rng = substream(derive_seed(seed, streams::RANDOM_QUERY), cycle);
    let picked: Vec<usize> = index::sample(&mut rng, sorted.len(), k).into_iter().map(|j| sorted[j]).collect();
    Ok(match p_bad {
        Some(p) => top_entropy(p, picked, k),
        None => {
            let mut picked = picked;
            picked.sort_unstable();
            QueryBatch::from_ranked(picked, |_| 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outlier::DetectorKind;

    #[test]
    fn entropy_values() {
        assert!((entropy(0.5) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(entropy(0.0), 0.0);
        assert_eq!(entropy(1.0), 0.0);
        assert!((entropy(0.9) - 0.325_082_973_391_448_2).abs() < 1e-12);
    }

    #[test]
    fn uncertain_selection() {
        let p = [0.5, 0.99, 0.7];
        let all = [0, 1, 2];
        assert_eq!(select_uncertain(&p, &all, 1, false, None).unwrap().indices, vec![0]);
        assert_eq!(select_uncertain(&p, &all, 2, false, None).unwrap().indices, vec![0, 2]);
        let p = [0.3, 0.7];
        assert_eq!(select_uncertain(&p, &[0, 1], 1, false, None).unwrap().indices, vec![0]);
        let p = [0.7, 0.9, 0.3];
        assert_eq!(select_uncertain(&p, &[0, 1, 2], 2, false, None).unwrap().indices, vec![0, 2]);
        assert_eq!(select_uncertain(&p, &[1, 2], 1, false, None).unwrap().indices, vec![2]);
        assert!(matches!(select_uncertain(&p, &[], 1, false, None), Err(EngineError::EmptyUnlabeledSet)));
    }

    #[test]
    fn degenerate_fallbacks() {
        let p = [1e-6; 5];
        let unl = [4, 1, 3];
        let b = select_uncertain(&p, &unl, 2, true, None).unwrap();
        assert_eq!(b.indices, vec![1, 3]);
        let scores = OutlierScoreVector { detector: DetectorKind::Lof, scores: vec![9.0, 1.0, 9.0, 2.0, 5.0] };
        let b = select_uncertain(&p, &unl, 2, true, Some(&scores)).unwrap();
        assert_eq!(b.indices, vec![4, 3]);
        assert_eq!(b.scores, vec![5.0, 2.0]);
    }

    #[test]
    fn random_selection_is_reproducible_and_complete() {
        let unl: Vec<usize> = (10..20).collect();
        let a = select_random(None, &unl, 3, 7, 2).unwrap();
        assert_eq!(a, select_random(None, &unl, 3, 7, 2).unwrap());
        assert_ne!(a.indices, select_random(None, &unl, 3, 7, 3).unwrap().indices);
        let all = select_random(None, &unl, 10, 7, 0).unwrap();
        let mut idx = all.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, unl);
    }

    #[test]
    fn random_selection_is_uniform() {
        // 10k single draws over 100 items: each count should sit near 100
        let unl: Vec<usize> = (0..100).collect();
        let mut counts = [0usize; 100];
        for cycle in 0..10_000 {
            counts[select_random(None, &unl, 1, 42, cycle).unwrap().indices[0]] += 1;
        }
        assert!(counts.iter().all(|&c| (60..=140).contains(&c)), "{counts:?}");
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 100.0).powi(2) / 100.0).sum();
        // 99 dof; the 0.999 quantile is about 148
        assert!(chi2 < 148.0, "chi2 {chi2}");
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("US".parse::<QueryStrategy>().unwrap(), QueryStrategy::Uncertainty);
        assert_eq!("random".parse::<QueryStrategy>().unwrap(), QueryStrategy::Random);
        assert!("qbc".parse::<QueryStrategy>().is_err());
    }
}
