use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{cost_reduced, median, relative_improvement, CostComparison, EvalError};
use crate::active::{
    cold_start_scores, initial_set, prepare_data, run_prepared_session, start_engine, ColdStart, Oracle, OracleResponse, Phase,
    PreparedData, QueryStrategy, SessionConfig, SessionReport, SimulatedOracle,
};
use crate::data::Dataset;
use crate::outlier::InitMethod;
use crate::Result;

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn uncertainty() -> QueryStrategy {
    QueryStrategy::Uncertainty
}
fn random() -> QueryStrategy {
    QueryStrategy::Random
}

/// Paired comparison of two query strategies. The session's own `strategy`
/// and `seed` are overridden per arm and per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyExperimentConfig {
    #[serde(flatten)]
    pub session: SessionConfig,
    #[serde(default = "uncertainty")]
    pub treatment: QueryStrategy,
    #[serde(default = "random")]
    pub baseline: QueryStrategy,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl StrategyExperimentConfig {
    pub fn new(session: SessionConfig) -> Self {
        Self { session, treatment: uncertainty(), baseline: random(), seeds: default_seeds() }
    }
}

/// Both arms of one seed, run from the same split and initial set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRun {
    pub seed: u64,
    pub treatment: SessionReport,
    pub baseline: SessionReport,
    /// `F1_treatment − F1_baseline`.
    pub f1_diff: Option<f64>,
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub dataset: String,
    pub treatment: QueryStrategy,
    pub baseline: QueryStrategy,
    pub runs: Vec<PairedRun>,
    /// Runs where the treatment's final F1 is strictly higher.
    pub treatment_wins: usize,
    pub median_f1_diff: Option<f64>,
    pub median_improvement: Option<f64>,
    pub audit_violations: Vec<String>,
}

impl StrategyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// One row per curve point: `seed,arm,strategy,cycle,labels_spent,f1`.
    pub fn write_curves_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "seed,arm,strategy,cycle,labels_spent,f1")?;
        for run in &self.runs {
            for (arm, report) in [("treatment", &run.treatment), ("baseline", &run.baseline)] {
                let strategy = strategy_name(report.config.strategy);
                for p in &report.curve {
                    let f1 = p.f1.map(|v| v.to_string()).unwrap_or_default();
                    writeln!(w, "{},{arm},{strategy},{},{},{f1}", run.seed, p.cycle, p.labels_spent)?;
                }
            }
        }
        Ok(())
    }
}

fn strategy_name(s: QueryStrategy) -> &'static str {
    match s {
        QueryStrategy::Uncertainty => "uncertainty",
        QueryStrategy::Random => "random",
    }
}

/// Runs both arms for one seed.
pub fn run_paired_strategies(dataset: &Dataset, cfg: &StrategyExperimentConfig, seed: u64) -> Result<PairedRun> {
    let session = SessionConfig { seed, ..cfg.session.clone() };
    let data = prepare_data(dataset, seed, session.hold_out)?;
    let initial = initial_set(&data, &session)?;
    let us = SessionConfig { strategy: QueryStrategy::Uncertainty, ..session.clone() };
    let fallback = cold_start_scores(&data, &us, &initial)?;
    let run = |strategy: QueryStrategy| {
        let arm = SessionConfig { strategy, ..session.clone() };
        let fb = if strategy == QueryStrategy::Uncertainty { fallback.clone() } else { None };
        run_prepared_session(&data, &arm, &initial, fb)
    };
    let treatment = run(cfg.treatment)?;
    let baseline = run(cfg.baseline)?;
    let (f1_diff, improvement) = match (treatment.final_f1, baseline.final_f1) {
        (Some(t), Some(b)) => (Some(t - b), relative_improvement(t, b)),
        _ => (None, None),
    };
    Ok(PairedRun { seed, treatment, baseline, f1_diff, improvement })
}

/// Paired runs over every configured seed, in seed order.
pub fn run_strategy_experiment(dataset: &Dataset, cfg: &StrategyExperimentConfig) -> Result<StrategyReport> {
    if cfg.seeds.is_empty() {
        return Err(EvalError::InvalidConfig("no seeds".into()).into());
    }
    let runs = cfg.seeds.iter().map(|&s| run_paired_strategies(dataset, cfg, s)).collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = runs.iter().filter_map(|r| r.f1_diff).collect();
    let improvements: Vec<f64> = runs.iter().filter_map(|r| r.improvement).collect();
    let audit_violations = runs
        .iter()
        .flat_map(|r| {
            [&r.treatment, &r.baseline]
                .into_iter()
                .flat_map(move |rep| rep.audit_violations.iter().map(move |v| format!("seed {}: {v}", r.seed)))
        })
        .collect();
    Ok(StrategyReport {
        dataset: dataset.name().to_owned(),
        treatment: cfg.treatment,
        baseline: cfg.baseline,
        treatment_wins: diffs.iter().filter(|&&d| d > 0.0).count(),
        median_f1_diff: median(&diffs),
        median_improvement: median(&improvements),
        runs,
        audit_violations,
    })
}

fn default_outlier_arm() -> InitMethod {
    InitMethod::Lof
}
fn default_baseline_arm() -> InitMethod {
    InitMethod::Random
}
fn default_grid() -> Vec<usize> {
    vec![25, 50, 100, 200, 400, 800, 1600]
}
fn default_max_queries() -> usize {
    250
}
fn default_target() -> f64 {
    0.3
}

/// Smallest-cost comparison of an outlier-based initial set against a random
/// one. The session's `init`, `n_initial`, `budget` and `seed` are overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitExperimentConfig {
    #[serde(flatten)]
    pub session: SessionConfig,
    #[serde(default = "default_outlier_arm")]
    pub outlier_arm: InitMethod,
    #[serde(default = "default_baseline_arm")]
    pub baseline_arm: InitMethod,
    /// Candidate initial-set sizes, tried in ascending order.
    #[serde(default = "default_grid")]
    pub grid: Vec<usize>,
    /// Query allowance after the initial set for each grid point.
    #[serde(default = "default_max_queries")]
    pub max_queries: usize,
    #[serde(default = "default_target")]
    pub target_f1: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl InitExperimentConfig {
    pub fn new(session: SessionConfig) -> Self {
        Self {
            session,
            outlier_arm: default_outlier_arm(),
            baseline_arm: default_baseline_arm(),
            grid: default_grid(),
            max_queries: default_max_queries(),
            target_f1: default_target(),
            seeds: default_seeds(),
        }
    }

    fn validate(&self) -> Result<(), EvalError> {
        if !(self.target_f1 > 0.0 && self.target_f1 <= 1.0) {
            return Err(EvalError::InvalidTarget(self.target_f1));
        }
        if self.grid.is_empty() || self.grid.contains(&0) {
            return Err(EvalError::InvalidConfig("grid must hold positive sizes".into()));
        }
        if self.seeds.is_empty() {
            return Err(EvalError::InvalidConfig("no seeds".into()));
        }
        if !self.session.hold_out {
            return Err(EvalError::InvalidConfig("a held-out test split is required".into()));
        }
        Ok(())
    }
}

/// One grid point tried by an arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub n_initial: usize,
    pub reached: bool,
    pub best_f1: f64,
    pub labels_spent: usize,
}

/// Cheapest successful grid point of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub method: InitMethod,
    pub n_initial: usize,
    pub n_queried: usize,
    pub f1: f64,
    pub initial_anomalies: usize,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSeedResult {
    pub seed: u64,
    pub outlier: ArmResult,
    pub baseline: ArmResult,
    pub comparison: CostComparison,
    pub cost_reduced: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub dataset: String,
    pub target_f1: f64,
    pub outlier_arm: InitMethod,
    pub baseline_arm: InitMethod,
    pub seeds: Vec<InitSeedResult>,
    pub median_cost_reduced: Option<f64>,
    pub audit_violations: Vec<String>,
}

impl InitReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// `seed,arm,method,n_initial,n_queried,f1,cost_reduced`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "seed,arm,method,n_initial,n_queried,f1,cost_reduced")?;
        for s in &self.seeds {
            for (arm, r) in [("outlier", &s.outlier), ("baseline", &s.baseline)] {
                let method = serde_json::to_value(r.method).expect("method serialises");
                let method = method.as_str().unwrap_or_default();
                writeln!(w, "{},{arm},{method},{},{},{},{}", s.seed, r.n_initial, r.n_queried, r.f1, s.cost_reduced)?;
            }
        }
        Ok(())
    }
}

struct TargetRun {
    attempt: Attempt,
    n_queried: usize,
    initial_anomalies: usize,
    violations: Vec<String>,
}

/// Runs one session, stopping as soon as the test F1 reaches `target`.
fn run_to_target(data: &PreparedData, session: &SessionConfig, target: f64) -> Result<TargetRun> {
    let initial = initial_set(data, session)?;
    let fallback = cold_start_scores(data, session, &initial)?;
    let mut engine = start_engine(data, session, &initial, fallback)?;
    let mut oracle = SimulatedOracle::new(&data.pool_labels);
    let mut best = 0.0f64;
    let mut reached = false;
    while engine.phase() == Phase::AwaitingLabels {
        let indices = engine.pending().expect("pending batch").batch.indices.clone();
        let OracleResponse::Labels(labels) = oracle.request(engine.state(), &indices)? else {
            unreachable!("simulated oracle always answers")
        };
        engine.submit(&labels)?;
        if let Some(f1) = engine.curve().last().and_then(|p| p.f1) {
            best = best.max(f1);
            if f1 >= target {
                reached = true;
                break;
            }
        }
    }
    let mut violations = engine.audit_violations().to_vec();
    if oracle.calls() != engine.labels_spent() || engine.labels_spent() > engine.budget() {
        violations.push(format!("oracle calls {} vs labels spent {} (budget {})", oracle.calls(), engine.labels_spent(), engine.budget()));
    }
    let state = engine.state();
    Ok(TargetRun {
        attempt: Attempt { n_initial: engine.n_initial(), reached, best_f1: best, labels_spent: engine.labels_spent() },
        n_queried: engine.n_queried(),
        initial_anomalies: state.initial().iter().filter(|&&i| state.label_of(i).is_some_and(|l| l.is_bad())).count(),
        violations,
    })
}

fn sweep_arm(
    data: &PreparedData,
    cfg: &InitExperimentConfig,
    method: InitMethod,
    seed: u64,
    violations: &mut Vec<String>,
) -> Result<ArmResult> {
    let mut grid = cfg.grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let pool = data.pool.n_rows();
    let cold_start = if method == InitMethod::Random { ColdStart::Ordered } else { cfg.session.cold_start };
    let mut attempts = Vec::new();
    for n_i in grid.into_iter().filter(|&n| n < pool) {
        let session = SessionConfig {
            init: method,
            n_initial: n_i,
            budget: (n_i + cfg.max_queries).min(pool),
            cold_start,
            seed,
            ..cfg.session.clone()
        };
        let run = run_to_target(data, &session, cfg.target_f1)?;
        violations.extend(run.violations.iter().map(|v| format!("seed {seed} {method:?} N_I={n_i}: {v}")));
        attempts.push(run.attempt);
        if run.attempt.reached {
            return Ok(ArmResult {
                method,
                n_initial: n_i,
                n_queried: run.n_queried,
                f1: run.attempt.best_f1,
                initial_anomalies: run.initial_anomalies,
                attempts,
            });
        }
    }
    Err(EvalError::TargetUnreachable { arm: method, seed, target: cfg.target_f1 }.into())
}

/// Sweeps both arms over the grid for every seed and compares label costs.
pub fn run_init_experiment(dataset: &Dataset, cfg: &InitExperimentConfig) -> Result<InitReport> {
    cfg.validate()?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    let mut audit_violations = Vec::new();
    for &seed in &cfg.seeds {
        let data = prepare_data(dataset, seed, true)?;
        let outlier = sweep_arm(&data, cfg, cfg.outlier_arm, seed, &mut audit_violations)?;
        let baseline = sweep_arm(&data, cfg, cfg.baseline_arm, seed, &mut audit_violations)?;
        let comparison = CostComparison {
            n_i_lof: outlier.n_initial,
            n_l_lof: outlier.n_queried,
            n_i_rd: baseline.n_initial,
            n_l_rd: baseline.n_queried,
            f1_lof: Some(outlier.f1),
            f1_rd: Some(baseline.f1),
        };
        let cost = cost_reduced(&comparison)?;
        seeds.push(InitSeedResult { seed, outlier, baseline, comparison, cost_reduced: cost });
    }
    let costs: Vec<f64> = seeds.iter().map(|s| s.cost_reduced).collect();
    Ok(InitReport {
        dataset: dataset.name().to_owned(),
        target_f1: cfg.target_f1,
        outlier_arm: cfg.outlier_arm,
        baseline_arm: cfg.baseline_arm,
        median_cost_reduced: median(&costs),
        seeds,
        audit_violations,
    })
}
