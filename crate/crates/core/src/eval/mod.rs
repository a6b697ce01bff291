//! Metrics and the two comparative experiments.

mod experiment;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::QualityLabel;
use crate::outlier::InitMethod;

pub use experiment::{
    run_init_experiment, run_paired_strategies, run_strategy_experiment, ArmResult, Attempt, InitExperimentConfig, InitReport,
    InitSeedResult, PairedRun, StrategyExperimentConfig, StrategyReport,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("baseline cost N_I + N_L is zero")]
    ZeroBaselineCost,
    #[error("{arm:?} arm never reached the target F1 {target} for seed {seed}")]
    TargetUnreachable { arm: InitMethod, seed: u64, target: f64 },
    #[error("target F1 must lie in (0, 1], got {0}")]
    InvalidTarget(f64),
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
}

/// Binary confusion counts with the erroneous class as positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Panics if the slices differ in length.
pub fn confusion(predicted: &[QualityLabel], truth: &[QualityLabel]) -> ConfusionCounts {
    assert_eq!(predicted.len(), truth.len(), "prediction and truth lengths differ");
    let mut c = ConfusionCounts::default();
    for (p, t) in predicted.iter().zip(truth) {
        match (p.is_bad(), t.is_bad()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Harmonic mean of precision and recall; every 0/0 is 0.
pub fn f1_score(c: &ConfusionCounts) -> f64 {
    let (p, r) = (c.precision(), c.recall());
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Labels spent by an outlier-initialised arm and a random-initialised arm
/// to reach the same target F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub n_i_lof: usize,
    pub n_l_lof: usize,
    pub n_i_rd: usize,
    pub n_l_rd: usize,
    pub f1_lof: Option<f64>,
    pub f1_rd: Option<f64>,
}

impl CostComparison {
    /// Cost pair without F1 values, as published tables report them.
    pub fn from_counts(n_i_lof: usize, n_l_lof: usize, n_i_rd: usize, n_l_rd: usize) -> Self {
        Self { n_i_lof, n_l_lof, n_i_rd, n_l_rd, f1_lof: None, f1_rd: None }
    }
}

/// `1 − (N_I_lof + N_L_lof) / (N_I_rd + N_L_rd)`, in `(−∞, 1]`.
pub fn cost_reduced(c: &CostComparison) -> Result<f64, EvalError> {
    let base = c.n_i_rd + c.n_l_rd;
    if base == 0 {
        return Err(EvalError::ZeroBaselineCost);
    }
    Ok(1.0 - (c.n_i_lof + c.n_l_lof) as f64 / base as f64)
}

/// `(F1_t − F1_b) / F1_b`. Zero when the scores are equal, undefined when
/// only the baseline is zero.
pub fn relative_improvement(treatment: f64, baseline: f64) -> Option<f64> {
    if treatment == baseline {
        Some(0.0)
    } else if baseline == 0.0 {
        None
    } else {
        Some((treatment - baseline) / baseline)
    }
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}
