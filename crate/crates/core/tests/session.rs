use std::collections::BTreeMap;
use std::sync::Arc;

use odeal::active::{
    drive, run_al_session, Engine, EngineConfig, EngineError, PendingKind, Phase, QueryStrategy, SessionConfig, SimulatedOracle, StopReason,
};
use odeal::classify::ClassifierSpec;
use odeal::data::{generate_synthetic_dataset, Dataset, FeatureMatrix, ProfileShape, QualityLabel};
use odeal::eval::{run_init_experiment, run_strategy_experiment, InitExperimentConfig, StrategyExperimentConfig};
use odeal::outlier::{build_initial_set, DetectorConfig, InitMethod, LofParams};
use odeal::Error;

fn small_dataset(seed: u64) -> Dataset {
    generate_synthetic_dataset(1_000, 0.03, seed, &ProfileShape::default()).unwrap()
}

fn small_config(seed: u64) -> SessionConfig {
    SessionConfig { n_initial: 20, budget: 45, seed, ..SessionConfig::new(ClassifierSpec::gbdt()) }
}

#[test]
fn six_point_golden_trace() {
    // one erroneous reading far from five good ones
    let pool = Arc::new(FeatureMatrix::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0], [10.0]]).unwrap());
    let truth = [0, 0, 0, 0, 0, 1].map(|b| QualityLabel::from_bit(b == 1));
    let detectors = DetectorConfig { lof: LofParams { k_neighbors: 2 }, ..DetectorConfig::default() };
    let init = build_initial_set(&pool, InitMethod::Lof, 2, &detectors, 0).unwrap();
    // LOF: 4.33 for the outlier, 1.25 for 0, 1, 3, 4 (index breaks the tie)
    assert_eq!(init.initial, vec![5, 0]);

    let cfg = EngineConfig {
        classifier: ClassifierSpec::gbdt(),
        batch_size: 1,
        budget: 4,
        confidence_threshold: 0.05,
        strategy: QueryStrategy::Uncertainty,
        seed: 0,
    };
    let mut engine = Engine::new(cfg, pool, None, init.initial.clone(), None).unwrap();
    assert_eq!(engine.pending().unwrap().kind, PendingKind::Initial);

    // With under five rows no split is allowed and the balanced class weights
    // put every prediction at 0.5, so queries follow index order.
    let mut oracle = SimulatedOracle::new(&truth);
    assert_eq!(drive(&mut engine, &mut oracle).unwrap(), Phase::Done);
    assert_eq!(engine.state().initial(), &[5, 0]);
    assert_eq!(engine.state().queried(), &[1, 2]);
    assert_eq!(engine.state().unlabeled_vec(), vec![3, 4]);
    assert_eq!(engine.cycle(), 2);
    assert_eq!(engine.labels_spent(), 4);
    assert_eq!(oracle.calls(), 4);
    assert_eq!(engine.stop_reason(), Some(StopReason::BudgetExhausted));
    assert!((engine.probability(3) - 0.5).abs() < 1e-12);
    let spent: Vec<usize> = engine.curve().iter().map(|p| p.labels_spent).collect();
    assert_eq!(spent, vec![2, 3, 4]);
    assert!(engine.audit_violations().is_empty());
}

#[test]
fn budget_equal_to_initial_set_gives_one_point() {
    let ds = small_dataset(1);
    let cfg = SessionConfig { budget: 20, ..small_config(1) };
    let report = run_al_session(&ds, &cfg).unwrap();
    assert_eq!(report.curve.len(), 1);
    assert_eq!(report.n_queried, 0);
    assert_eq!(report.stop_reason, Some(StopReason::BudgetExhausted));

    let too_small = SessionConfig { budget: 19, ..small_config(1) };
    assert!(matches!(run_al_session(&ds, &too_small), Err(Error::Engine(EngineError::BudgetSmallerThanInitialSet { .. }))));
}

#[test]
fn sessions_are_reproducible_and_audited() {
    let ds = small_dataset(2);
    for init in [InitMethod::Random, InitMethod::Lof, InitMethod::Iforest, InitMethod::Ocsvm] {
        for strategy in [QueryStrategy::Uncertainty, QueryStrategy::Random] {
            let cfg = SessionConfig { init, strategy, ..small_config(9) };
            let a = run_al_session(&ds, &cfg).unwrap();
            let b = run_al_session(&ds, &cfg).unwrap();
            assert_eq!(a.to_json(), b.to_json(), "{init:?} {strategy:?}");
            assert!(a.audit_violations.is_empty(), "{:?}", a.audit_violations);
            assert_eq!(a.labels_spent, a.n_initial + a.n_queried);
            assert!(a.labels_spent <= a.budget);
            let mut all: Vec<usize> = a.initial.iter().chain(&a.queried).copied().collect();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), a.labels_spent, "an instance was labelled twice");
        }
    }
}

#[test]
fn curve_csv_layout() {
    let report = run_al_session(&small_dataset(3), &small_config(3)).unwrap();
    let mut out = Vec::new();
    report.write_curve_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("cycle,labels_spent,f1"));
    assert_eq!(lines.next(), Some(format!("0,20,{}", report.curve[0].f1.unwrap()).as_str()));
    assert_eq!(text.lines().count(), report.curve.len() + 1);
}

#[test]
fn confident_models_stop_without_querying() {
    // Two clean clusters: once both classes are seen the model is sure of
    // every remaining point.
    let rows: Vec<[f64; 1]> = (0..60).map(|i| if i < 50 { [i as f64 * 0.01] } else { [100.0 + i as f64 * 0.01] }).collect();
    let truth: Vec<QualityLabel> = (0..60).map(|i| QualityLabel::from_bit(i >= 50)).collect();
    let pool = Arc::new(FeatureMatrix::from_rows(&rows).unwrap());
    let cfg = EngineConfig {
        classifier: ClassifierSpec::knn(),
        batch_size: 1,
        budget: 40,
        confidence_threshold: 0.05,
        strategy: QueryStrategy::Uncertainty,
        seed: 0,
    };
    let initial: Vec<usize> = (0..10).chain(50..60).collect();
    let mut engine = Engine::new(cfg, pool, None, initial, None).unwrap();
    let labels: BTreeMap<usize, QualityLabel> = engine.pending().unwrap().batch.indices.iter().map(|&i| (i, truth[i])).collect();
    assert_eq!(engine.submit(&labels).unwrap(), Phase::Done);
    assert_eq!(engine.stop_reason(), Some(StopReason::Confident));
    assert!(engine.max_entropy().unwrap() < 0.05);
    assert_eq!(engine.n_queried(), 0);
}

#[test]
fn paired_arms_share_their_initial_set() {
    let ds = small_dataset(4);
    let cfg = StrategyExperimentConfig { seeds: vec![1, 2, 3], ..StrategyExperimentConfig::new(small_config(0)) };
    let report = run_strategy_experiment(&ds, &cfg).unwrap();
    assert_eq!(report.runs.len(), 3);
    for run in &report.runs {
        assert_eq!(run.treatment.initial, run.baseline.initial);
        assert_eq!(run.treatment.config.strategy, QueryStrategy::Uncertainty);
        assert_eq!(run.baseline.config.strategy, QueryStrategy::Random);
    }
    assert_eq!(report.to_json(), run_strategy_experiment(&ds, &cfg).unwrap().to_json());
    let mut csv = Vec::new();
    report.write_curves_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("seed,arm,strategy,cycle,labels_spent,f1\n1,treatment,uncertainty,0,20,"));
}

#[test]
fn self_comparison_has_zero_improvement() {
    let ds = small_dataset(5);
    let cfg = StrategyExperimentConfig {
        baseline: QueryStrategy::Uncertainty,
        seeds: vec![7, 8],
        ..StrategyExperimentConfig::new(small_config(0))
    };
    let report = run_strategy_experiment(&ds, &cfg).unwrap();
    for run in &report.runs {
        assert_eq!(run.improvement, Some(0.0));
        assert_eq!(run.f1_diff, Some(0.0));
    }
    assert_eq!(report.treatment_wins, 0);
}

#[test]
fn init_experiment_identity_and_contract() {
    let ds = generate_synthetic_dataset(1_000, 0.05, 6, &ProfileShape::default()).unwrap();
    let mut cfg = InitExperimentConfig::new(small_config(0));
    cfg.grid = vec![10, 20, 40];
    cfg.max_queries = 40;
    cfg.target_f1 = 0.2;
    cfg.seeds = vec![1, 2];
    cfg.outlier_arm = InitMethod::Random;
    let report = run_init_experiment(&ds, &cfg).unwrap();
    for s in &report.seeds {
        assert_eq!(s.cost_reduced, 0.0);
        assert_eq!(s.outlier, s.baseline);
        assert!(s.outlier.f1 >= 0.2);
    }

    cfg.target_f1 = 0.999;
    cfg.outlier_arm = InitMethod::Lof;
    let err = run_init_experiment(&ds, &cfg).unwrap_err();
    assert!(matches!(err, Error::Eval(odeal::eval::EvalError::TargetUnreachable { .. })), "{err}");
    cfg.target_f1 = 0.0;
    assert!(run_init_experiment(&ds, &cfg).is_err());
}
