use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{drive, CurvePoint, Engine, EngineConfig, EngineError, EvalSet, Phase, QueryStrategy, SimulatedOracle, StopReason};
use crate::classify::ClassifierSpec;
use crate::data::{fit_scaler, stratified_split, Dataset, FeatureMatrix, QualityLabel, SplitSpec};
use crate::outlier::{build_initial_set, lof_scores, DetectorConfig, InitMethod, InitialSet, OutlierScoreVector};
use crate::Result;

/// What an uncertainty query does while the model has seen only one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdStart {
    /// Rank by outlier score: the initial set's detector, or LOF for random
    /// initialisation.
    #[default]
    OutlierScores,
    /// Ascending pool position (a seeded shuffle of the records).
    Ordered,
}

fn default_n_initial() -> usize {
    100
}
fn default_k() -> usize {
    1
}
fn default_budget() -> usize {
    250
}
fn default_tau() -> f64 {
    0.05
}
fn default_strategy() -> QueryStrategy {
    QueryStrategy::Uncertainty
}
fn default_init() -> InitMethod {
    InitMethod::Random
}
fn default_hold_out() -> bool {
    true
}

/// Everything needed to run one session. `classifier` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub classifier: ClassifierSpec,
    #[serde(default)]
    pub detectors: DetectorConfig,
    #[serde(default = "default_init")]
    pub init: InitMethod,
    #[serde(default = "default_n_initial")]
    pub n_initial: usize,
    /// Queries per cycle.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Total labels including the initial set.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Confidence stop threshold on the maximum unlabelled entropy (nats).
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_strategy")]
    pub strategy: QueryStrategy,
    #[serde(default)]
    pub cold_start: ColdStart,
    #[serde(default)]
    pub seed: u64,
    /// Hold out a stratified test split for the learning curve.
    #[serde(default = "default_hold_out")]
    pub hold_out: bool,
}

impl SessionConfig {
    pub fn new(classifier: ClassifierSpec) -> Self {
        Self {
            classifier,
            detectors: DetectorConfig::default(),
            init: default_init(),
            n_initial: default_n_initial(),
            k: default_k(),
            budget: default_budget(),
            tau: default_tau(),
            strategy: default_strategy(),
            cold_start: ColdStart::default(),
            seed: 0,
            hold_out: true,
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            classifier: self.classifier.clone(),
            batch_size: self.k,
            budget: self.budget,
            confidence_threshold: self.tau,
            strategy: self.strategy,
            seed: self.seed,
        }
    }
}

/// A dataset split into a scaled pool and an optional scaled test set.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub name: String,
    pub pool: Arc<FeatureMatrix>,
    /// Ground truth for the pool; only oracles may read it.
    pub pool_labels: Vec<QualityLabel>,
    /// Dataset record index of each pool position.
    pub pool_records: Vec<usize>,
    pub eval: Option<Arc<EvalSet>>,
    pub test_records: Vec<usize>,
}

/// Splits (60/20/20 stratified, seeded) when `hold_out`, then z-scores with
/// statistics from the pool alone.
pub fn prepare_data(dataset: &Dataset, seed: u64, hold_out: bool) -> Result<PreparedData> {
    let (pool_records, test_records) = if hold_out {
        let split = stratified_split(dataset, &SplitSpec::with_seed(seed))?;
        (split.train, split.test)
    } else {
        ((0..dataset.len()).collect(), Vec::new())
    };
    let raw_pool = dataset.feature_matrix(&pool_records);
    let scaler = fit_scaler(&raw_pool)?;
    let pool = Arc::new(scaler.apply(&raw_pool)?);
    let eval = if test_records.is_empty() {
        None
    } else {
        Some(Arc::new(EvalSet { x: scaler.apply(&dataset.feature_matrix(&test_records))?, y: dataset.labels_at(&test_records) }))
    };
    Ok(PreparedData {
        name: dataset.name().to_owned(),
        pool,
        pool_labels: dataset.labels_at(&pool_records),
        pool_records,
        eval,
        test_records,
    })
}

/// Builds the initial set for `config` on the prepared pool.
pub fn initial_set(data: &PreparedData, config: &SessionConfig) -> Result<InitialSet> {
    Ok(build_initial_set(&data.pool, config.init, config.n_initial, &config.detectors, config.seed)?)
}

/// Scores used to rank queries while the model is single-class.
pub fn cold_start_scores(data: &PreparedData, config: &SessionConfig, initial: &InitialSet) -> Result<Option<Arc<OutlierScoreVector>>> {
    if config.strategy != QueryStrategy::Uncertainty || config.cold_start == ColdStart::Ordered {
        return Ok(None);
    }
    Ok(Some(match &initial.scores {
        Some(s) => Arc::new(s.clone()),
        None => Arc::new(lof_scores(&data.pool, config.detectors.lof.k_neighbors)?),
    }))
}

/// Creates an engine awaiting labels for the initial set.
pub fn start_engine(
    data: &PreparedData,
    config: &SessionConfig,
    initial: &InitialSet,
    fallback: Option<Arc<OutlierScoreVector>>,
) -> Result<Engine> {
    Ok(Engine::new(config.engine_config(), data.pool.clone(), data.eval.clone(), initial.initial.clone(), fallback)?)
}

/// Summary of one finished (or suspended) session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub dataset: String,
    pub pool_size: usize,
    pub test_size: usize,
    pub config: SessionConfig,
    /// Dataset record indices of the initial set, in selection order.
    pub initial: Vec<usize>,
    /// Erroneous instances among the initial set's acquired labels.
    pub initial_anomalies: usize,
    /// Dataset record indices queried, in order.
    pub queried: Vec<usize>,
    pub curve: Vec<CurvePoint>,
    pub final_f1: Option<f64>,
    pub n_initial: usize,
    pub n_queried: usize,
    pub labels_spent: usize,
    pub labels_received: usize,
    pub budget: usize,
    pub finished: bool,
    pub stop_reason: Option<StopReason>,
    pub audit_violations: Vec<String>,
}

impl SessionReport {
    pub fn from_engine(data: &PreparedData, config: &SessionConfig, engine: &Engine) -> Self {
        let state = engine.state();
        let to_record = |v: &[usize]| v.iter().map(|&i| data.pool_records[i]).collect::<Vec<_>>();
        Self {
            dataset: data.name.clone(),
            pool_size: data.pool.n_rows(),
            test_size: data.test_records.len(),
            config: config.clone(),
            initial: to_record(state.initial()),
            initial_anomalies: state.initial().iter().filter(|&&i| state.label_of(i).is_some_and(|l| l.is_bad())).count(),
            queried: to_record(state.queried()),
            curve: engine.curve().to_vec(),
            final_f1: engine.curve().last().and_then(|p| p.f1),
            n_initial: engine.n_initial(),
            n_queried: engine.n_queried(),
            labels_spent: engine.labels_spent(),
            labels_received: engine.labels_received(),
            budget: engine.budget(),
            finished: engine.phase() == Phase::Done,
            stop_reason: engine.stop_reason(),
            audit_violations: engine.audit_violations().to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Learning curve as `cycle,labels_spent,f1`.
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cycle,labels_spent,f1")?;
        for p in &self.curve {
            match p.f1 {
                Some(f1) => writeln!(w, "{},{},{}", p.cycle, p.labels_spent, f1)?,
                None => writeln!(w, "{},{},", p.cycle, p.labels_spent)?,
            }
        }
        Ok(())
    }
}

/// Runs a simulated-oracle session on already prepared data with a given
/// initial set, so paired arms can share both.
pub fn run_prepared_session(
    data: &PreparedData,
    config: &SessionConfig,
    initial: &InitialSet,
    fallback: Option<Arc<OutlierScoreVector>>,
) -> Result<SessionReport> {
    let mut engine = start_engine(data, config, initial, fallback)?;
    let mut oracle = SimulatedOracle::new(&data.pool_labels);
    drive(&mut engine, &mut oracle)?;
    let mut report = SessionReport::from_engine(data, config, &engine);
    if oracle.calls() != engine.labels_spent() {
        report.audit_violations.push(format!("oracle answered {} labels, engine recorded {}", oracle.calls(), engine.labels_spent()));
    }
    Ok(report)
}

/// Full simulated session: split, scale, build the initial set, loop.
pub fn run_al_session(dataset: &Dataset, config: &SessionConfig) -> Result<SessionReport> {
    if config.budget < config.n_initial {
        return Err(EngineError::BudgetSmallerThanInitialSet { budget: config.budget, initial: config.n_initial }.into());
    }
    let data = prepare_data(dataset, config.seed, config.hold_out)?;
    let initial = initial_set(&data, config)?;
    let fallback = cold_start_scores(&data, config, &initial)?;
    run_prepared_session(&data, config, &initial, fallback)
}
