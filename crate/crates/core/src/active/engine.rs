//! Resumable active-learning state machine.
//!
//! An [`Engine`] is always either waiting for labels on one pending batch or
//! done. The first pending batch is the initial set; after each submission the
//! model is refitted from scratch on every acquired label, evaluated, and the
//! stop rule is checked before the next batch is chosen. The simulated loop and
//! the annotation service drive the same engine, so a label stream replayed
//! through either produces the same state.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{entropy, select_random, select_uncertain, EngineError, PoolState, QueryBatch, QueryStrategy};
use crate::classify::{fit, ClassifierModel, ClassifierSpec};
use crate::data::{FeatureMatrix, QualityLabel};
use crate::eval::{confusion, f1_score};
use crate::outlier::OutlierScoreVector;

/// Loop parameters shared by every driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub classifier: ClassifierSpec,
    /// Instances queried per cycle.
    pub batch_size: usize,
    /// Total labels, initial set included.
    pub budget: usize,
    /// Stop once every unlabelled entropy is below this (nats).
    pub confidence_threshold: f64,
    pub strategy: QueryStrategy,
    pub seed: u64,
}

/// Held-out instances with ground truth, used only for the learning curve.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub x: FeatureMatrix,
    pub y: Vec<QualityLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingLabels,
    Training,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendingKind {
    Initial,
    Query,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingBatch {
    pub kind: PendingKind,
    pub cycle: usize,
    pub batch: QueryBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    BudgetExhausted,
    Confident,
    PoolExhausted,
}

/// One learning-curve point, recorded after every refit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub cycle: usize,
    pub labels_spent: usize,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Oracle,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub label: QualityLabel,
    pub source: PredictionSource,
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    pool: Arc<FeatureMatrix>,
    eval: Option<Arc<EvalSet>>,
    fallback: Option<Arc<OutlierScoreVector>>,
    state: PoolState,
    model: Option<ClassifierModel>,
    /// `P(bad)` by pool position; refreshed for the unlabelled set on every refit.
    p_bad: Vec<f64>,
    phase: Phase,
    pending: Option<PendingBatch>,
    cycle: usize,
    curve: Vec<CurvePoint>,
    stop_reason: Option<StopReason>,
    labels_received: usize,
    audit_violations: Vec<String>,
}

impl Engine {
    /// Starts a session whose first pending batch is `initial`.
    pub fn new(
        config: EngineConfig,
        pool: Arc<FeatureMatrix>,
        eval: Option<Arc<EvalSet>>,
        initial: Vec<usize>,
        fallback: Option<Arc<OutlierScoreVector>>,
    ) -> Result<Self, EngineError> {
        config.classifier.validate()?;
        let n = pool.n_rows();
        if config.batch_size == 0 {
            return Err(EngineError::InvalidBatchSize);
        }
        if !(config.confidence_threshold >= 0.0 && config.confidence_threshold.is_finite()) {
            return Err(EngineError::InvalidThreshold);
        }
        if config.budget < initial.len() {
            return Err(EngineError::BudgetSmallerThanInitialSet { budget: config.budget, initial: initial.len() });
        }
        if config.budget > n {
            return Err(EngineError::BudgetExceedsPool { budget: config.budget, pool: n });
        }
        if initial.is_empty() {
            return Err(EngineError::EmptyUnlabeledSet);
        }
        let mut seen = vec![false; n];
        for &i in &initial {
            if i >= n || seen[i] {
                return Err(EngineError::UnknownIndex(i));
            }
            seen[i] = true;
        }
        let scores = match &fallback {
            Some(s) => initial.iter().map(|&i| s.scores[i]).collect(),
            None => vec![0.0; initial.len()],
        };
        Ok(Self {
            config,
            pool,
            eval,
            fallback,
            state: PoolState::new(n),
            model: None,
            p_bad: vec![0.5; n],
            phase: Phase::AwaitingLabels,
            pending: Some(PendingBatch { kind: PendingKind::Initial, cycle: 0, batch: QueryBatch { indices: initial, scores } }),
            cycle: 0,
            curve: Vec::new(),
            stop_reason: None,
            labels_received: 0,
            audit_violations: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn pending(&self) -> Option<&PendingBatch> {
        self.pending.as_ref()
    }

    pub fn state(&self) -> &PoolState {
        &self.state
    }

    pub fn model(&self) -> Option<&ClassifierModel> {
        self.model.as_ref()
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop_reason
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn n_initial(&self) -> usize {
        self.state.initial().len()
    }

    pub fn n_queried(&self) -> usize {
        self.state.queried().len()
    }

    pub fn labels_spent(&self) -> usize {
        self.state.n_labeled()
    }

    pub fn labels_received(&self) -> usize {
        self.labels_received
    }

    pub fn budget(&self) -> usize {
        self.config.budget
    }

    pub fn pool(&self) -> &FeatureMatrix {
        &self.pool
    }

    pub fn audit_violations(&self) -> &[String] {
        &self.audit_violations
    }

    /// Current `P(bad)` for a pool position (0.5 before the first fit).
    pub fn probability(&self, i: usize) -> f64 {
        self.p_bad[i]
    }

    /// Largest entropy over the unlabelled set, once a model exists.
    pub fn max_entropy(&self) -> Option<f64> {
        self.model.as_ref()?;
        self.state.unlabeled().map(|i| entropy(self.p_bad[i])).max_by(f64::total_cmp)
    }

    /// Applies labels for the whole pending batch, refits and advances.
    /// On error the engine is left exactly as before the call.
    pub fn submit(&mut self, labels: &BTreeMap<usize, QualityLabel>) -> Result<Phase, EngineError> {
        if self.phase != Phase::AwaitingLabels {
            return Err(EngineError::WrongPhase(self.phase));
        }
        let pending = self.pending.as_ref().expect("awaiting labels implies a pending batch");
        let missing: Vec<usize> = pending.batch.indices.iter().copied().filter(|i| !labels.contains_key(i)).collect();
        if !missing.is_empty() {
            return Err(EngineError::MissingLabels(missing));
        }
        let extra: Vec<usize> = labels.keys().copied().filter(|i| !pending.batch.indices.contains(i)).collect();
        if !extra.is_empty() {
            return Err(EngineError::UnexpectedLabels(extra));
        }

        let mut state = self.state.clone();
        for &i in &pending.batch.indices {
            let label = labels[&i];
            match pending.kind {
                PendingKind::Initial => state.acquire_initial(i, label)?,
                PendingKind::Query => state.acquire_queried(i, label)?,
            }
        }

        // Step 6: refit from scratch on everything acquired so far.
        let labeled = state.labeled();
        let idx: Vec<usize> = labeled.iter().map(|p| p.0).collect();
        let y: Vec<QualityLabel> = labeled.iter().map(|p| p.1).collect();
        let model = fit(&self.config.classifier, &self.pool.select(&idx), &y)?;

        // Step 2: predict on the unlabelled set.
        let unlabeled = state.unlabeled_vec();
        let probs = model.predict_bad(&self.pool.select(&unlabeled))?;
        let f1 = match &self.eval {
            Some(eval) => Some(f1_score(&confusion(&model.predict(&eval.x)?, &eval.y))),
            None => None,
        };

        // commit
        let received = pending.batch.len();
        self.state = state;
        for (&i, p) in unlabeled.iter().zip(probs) {
            self.p_bad[i] = p;
        }
        self.model = Some(model);
        self.labels_received += received;
        self.curve.push(CurvePoint { cycle: self.cycle, labels_spent: self.state.n_labeled(), f1 });
        self.pending = None;
        self.phase = Phase::Training;
        self.advance()?;
        self.audit();
        Ok(self.phase)
    }

    /// Step 3 stop rule, then Step 4 selection.
    fn advance(&mut self) -> Result<(), EngineError> {
        let spent = self.state.n_labeled();
        let unlabeled = self.state.unlabeled_vec();
        let model = self.model.as_ref().expect("advance runs after a fit");
        let stop = if spent >= self.config.budget {
            Some(StopReason::BudgetExhausted)
        } else if unlabeled.is_empty() {
            Some(StopReason::PoolExhausted)
        } else if !model.is_degenerate() && self.max_entropy().is_some_and(|h| h < self.config.confidence_threshold) {
            // a single-class model is never "confident": its flat output says nothing
            Some(StopReason::Confident)
        } else {
            None
        };
        if let Some(reason) = stop {
            self.stop_reason = Some(reason);
            self.phase = Phase::Done;
            return Ok(());
        }

        let k = self.config.batch_size.min(self.config.budget - spent);
        self.cycle += 1;
        let batch = match self.config.strategy {
            QueryStrategy::Uncertainty => select_uncertain(&self.p_bad, &unlabeled, k, model.is_degenerate(), self.fallback.as_deref())?,
            QueryStrategy::Random => select_random(Some(&self.p_bad), &unlabeled, k, self.config.seed, self.cycle as u64)?,
        };
        self.pending = Some(PendingBatch { kind: PendingKind::Query, cycle: self.cycle, batch });
        self.phase = Phase::AwaitingLabels;
        Ok(())
    }

    fn audit(&mut self) {
        let mut v = self.state.audit();
        let spent = self.state.n_labeled();
        if spent > self.config.budget {
            v.push(format!("labels spent {spent} exceed budget {}", self.config.budget));
        }
        if self.labels_received != spent {
            v.push(format!("received {} labels but {spent} are recorded", self.labels_received));
        }
        if let Some(p) = &self.pending {
            if p.batch.indices.iter().any(|&i| !self.state.is_unlabeled(i)) {
                v.push("pending batch contains labelled instances".to_owned());
            }
            if spent + p.batch.len() > self.config.budget {
                v.push("pending batch would exceed the budget".to_owned());
            }
        }
        self.audit_violations.extend(v);
    }

    /// Oracle labels for acquired instances, model predictions for the rest.
    pub fn predictions(&self) -> Vec<Prediction> {
        (0..self.state.pool_size())
            .map(|i| match self.state.label_of(i) {
                Some(label) => Prediction { index: i, label, source: PredictionSource::Oracle },
                None => Prediction { index: i, label: QualityLabel::from_bit(self.p_bad[i] >= 0.5), source: PredictionSource::Model },
            })
            .collect()
    }

    /// Labelled-set class balance as `(good, bad)`.
    pub fn class_balance(&self) -> (usize, usize) {
        let bad = self.state.labeled().iter().filter(|p| p.1.is_bad()).count();
        (self.state.n_labeled() - bad, bad)
    }
}
