mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, Barrier};

use common::dataset;
use odeal::active::SessionConfig;
use odeal::classify::ClassifierSpec;
use odeal::data::Dataset;
use odeal::outlier::InitMethod;
use odeal_service::api::{CreateSessionRequest, InitialLabels, PendingDocument, SubmitLabelsRequest};
use odeal_service::Registry;
use proptest::prelude::*;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
enum Op {
    Create { trusted: bool, k: usize, lof: bool },
    Correct(usize),
    Partial(usize),
    Extra(usize),
    BadValue(usize),
    Stale(usize),
    Fetch(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => (any::<bool>(), 1..4usize, any::<bool>()).prop_map(|(trusted, k, lof)| Op::Create { trusted, k, lof }),
        6 => (0..4usize).prop_map(Op::Correct),
        1 => (0..4usize).prop_map(Op::Partial),
        1 => (0..4usize).prop_map(Op::Extra),
        1 => (0..4usize).prop_map(Op::BadValue),
        1 => (0..4usize).prop_map(Op::Stale),
        1 => (0..4usize).prop_map(Op::Fetch),
    ]
}

fn truth_labels(ds: &Dataset, pending: &PendingDocument) -> BTreeMap<String, Value> {
    pending.instances.iter().map(|i| (i.record.index.to_string(), json!(ds.labels()[i.record.index].value()))).collect()
}

fn submit(reg: &Registry, id: &str, labels: BTreeMap<String, Value>, revision: Option<u64>) -> Result<(), u16> {
    reg.submit_labels(id, &SubmitLabelsRequest { labels, revision }).map(|_| ()).map_err(|e| e.status.as_u16())
}

fn check_invariants(reg: &Registry, id: &str, expected_revision: u64) -> Result<(), TestCaseError> {
    let status = reg.status(id).unwrap();
    let report = reg.report(id).unwrap();
    prop_assert_eq!(status.revision, expected_revision);
    prop_assert!(report.audit_violations.is_empty(), "{:?}", report.audit_violations);
    prop_assert!(report.labels_spent <= report.budget);
    prop_assert_eq!(report.labels_spent, report.n_initial + report.n_queried);
    prop_assert_eq!(report.labels_spent, report.labels_received);
    let mut seen: Vec<usize> = report.initial.iter().chain(&report.queried).copied().collect();
    let acquired = report.n_initial + report.n_queried;
    seen.sort_unstable();
    seen.dedup();
    // the initial list holds the whole initial set even before it is labelled
    prop_assert!(seen.len() >= acquired);
    if let Ok(p) = reg.pending(id) {
        prop_assert!(report.labels_spent + p.instances.len() <= report.budget);
        for inst in &p.instances {
            prop_assert!(!report.queried.contains(&inst.record.index));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn no_request_sequence_breaks_session_state(ops in prop::collection::vec(op(), 1..40)) {
        let ds = dataset(200, 0.06, 3);
        let reg = Registry::in_memory();
        let dataset_id = reg.register_dataset(ds.clone()).unwrap().dataset_id;
        let mut sessions: Vec<(String, u64)> = Vec::new();
        let create = |trusted: bool, k: usize, lof: bool| {
            let config = SessionConfig {
                n_initial: 10,
                budget: 16,
                k,
                init: if lof { InitMethod::Lof } else { InitMethod::Random },
                ..SessionConfig::new(ClassifierSpec::gbdt())
            };
            let initial_labels = if trusted { InitialLabels::Trusted } else { InitialLabels::Human };
            reg.create_session(CreateSessionRequest { dataset_id: dataset_id.clone(), config, initial_labels }).unwrap().session_id
        };
        sessions.push((create(false, 1, false), 0));

        for op in ops {
            match op {
                Op::Create { trusted, k, lof } => sessions.push((create(trusted, k, lof), 0)),
                Op::Fetch(s) => {
                    let (id, _) = &sessions[s % sessions.len()];
                    let a = reg.pending(id).map_err(|e| e.status);
                    let b = reg.pending(id).map_err(|e| e.status);
                    prop_assert_eq!(a, b);
                }
                Op::Correct(s) | Op::Partial(s) | Op::Extra(s) | Op::BadValue(s) | Op::Stale(s) => {
                    let n = sessions.len();
                    let (id, rev) = &mut sessions[s % n];
                    let before = reg.report(id).unwrap();
                    let Ok(pending) = reg.pending(id) else {
                        prop_assert_eq!(submit(&reg, id, BTreeMap::new(), None), Err(409));
                        continue;
                    };
                    let mut labels = truth_labels(&ds, &pending);
                    let result = match op {
                        Op::Correct(_) => submit(&reg, id, labels, Some(*rev)),
                        Op::Partial(_) => {
                            let first = labels.keys().next().unwrap().clone();
                            labels.remove(&first);
                            submit(&reg, id, labels, None)
                        }
                        Op::Extra(_) => {
                            let outsider = (0..ds.len()).find(|i| !labels.contains_key(&i.to_string())).unwrap();
                            labels.insert(outsider.to_string(), json!(1));
                            submit(&reg, id, labels, None)
                        }
                        Op::BadValue(_) => {
                            let first = labels.keys().next().unwrap().clone();
                            labels.insert(first, json!(7));
                            submit(&reg, id, labels, None)
                        }
                        _ => submit(&reg, id, labels, Some(*rev + 1)),
                    };
                    match op {
                        Op::Correct(_) => {
                            prop_assert_eq!(result, Ok(()));
                            *rev += 1;
                        }
                        Op::Stale(_) => prop_assert_eq!(result, Err(409)),
                        _ => prop_assert_eq!(result, Err(422)),
                    }
                    if result.is_err() {
                        prop_assert_eq!(reg.report(id).unwrap(), before);
                    }
                }
            }
            for (id, rev) in &sessions {
                check_invariants(&reg, id, *rev)?;
            }
        }
    }
}

#[test]
fn concurrent_submissions_apply_once() {
    let ds = dataset(300, 0.05, 4);
    let reg = Arc::new(Registry::in_memory());
    let dataset_id = reg.register_dataset(ds.clone()).unwrap().dataset_id;
    let config = SessionConfig { n_initial: 15, budget: 25, ..SessionConfig::new(ClassifierSpec::gbdt()) };
    let id = reg.create_session(CreateSessionRequest { dataset_id, config, initial_labels: InitialLabels::Human }).unwrap().session_id;

    for with_revision in [true, false] {
        let rev = reg.status(&id).unwrap().revision;
        let labels = truth_labels(&ds, &reg.pending(&id).unwrap());
        let barrier = Arc::new(Barrier::new(8));
        let results: Vec<Result<(), u16>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    let (reg, id, labels, barrier) = (reg.clone(), id.clone(), labels.clone(), barrier.clone());
                    s.spawn(move || {
                        barrier.wait();
                        submit(&reg, &id, labels, with_revision.then_some(rev))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1, "{results:?}");
        let expected_loser = if with_revision { 409 } else { 422 };
        assert!(results.iter().all(|r| r.is_ok() || *r == Err(expected_loser)), "{results:?}");
        assert_eq!(reg.status(&id).unwrap().revision, rev + 1);
    }
    let report = reg.report(&id).unwrap();
    assert!(report.audit_violations.is_empty());
    assert_eq!(report.labels_spent, 16);
}

#[test]
fn sessions_are_isolated() {
    let reg = Registry::in_memory();
    let a = reg.register_dataset(dataset(200, 0.05, 5)).unwrap().dataset_id;
    let config = SessionConfig { n_initial: 10, budget: 14, ..SessionConfig::new(ClassifierSpec::knn()) };
    let s1 =
        reg.create_session(CreateSessionRequest { dataset_id: a.clone(), config: config.clone(), initial_labels: InitialLabels::Trusted });
    let s2 = reg.create_session(CreateSessionRequest { dataset_id: a, config, initial_labels: InitialLabels::Trusted });
    let (s1, s2) = (s1.unwrap().session_id, s2.unwrap().session_id);
    assert_ne!(s1, s2);
    let before = reg.report(&s2).unwrap();
    let p = reg.pending(&s1).unwrap();
    let labels = p.instances.iter().map(|i| (i.record.index.to_string(), json!(0))).collect();
    submit(&reg, &s1, labels, None).unwrap();
    assert_eq!(reg.report(&s2).unwrap(), before);
    assert_eq!(reg.status(&s1).unwrap().revision, 1);
}
