//! One annotation session: an engine plus the documents served from it.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use odeal::active::{cold_start_scores, entropy, initial_set, prepare_data, start_engine, Engine, Phase, PreparedData, SessionReport};
use odeal::data::{Dataset, QualityLabel};
use serde_json::{json, Value};

use crate::api::{
    ClassBalance, CreateSessionRequest, CycleResponse, DatasetInfo, InitialLabels, PendingDocument, PendingInstance, PredictionRow,
    RecordView, StatusDocument, SubmitLabelsRequest,
};
use crate::error::ApiError;
use crate::store::{Event, EventLog};

/// Records on each side of a queried one shown as context.
pub const CONTEXT_RADIUS: usize = 3;

/// An uploaded dataset with a time ordering for context lookups.
#[derive(Debug)]
pub struct StoredDataset {
    pub info: DatasetInfo,
    pub dataset: Dataset,
    time_order: Vec<usize>,
    time_rank: Vec<usize>,
}

impl StoredDataset {
    pub fn new(id: String, dataset: Dataset) -> Self {
        let records = dataset.records();
        let mut time_order: Vec<usize> = (0..records.len()).collect();
        time_order.sort_by_key(|&i| (records[i].timestamp, i));
        let mut time_rank = vec![0; records.len()];
        for (rank, &i) in time_order.iter().enumerate() {
            time_rank[i] = rank;
        }
        let info = DatasetInfo {
            dataset_id: id,
            name: dataset.name().to_owned(),
            rows: dataset.len(),
            positives: dataset.positives(),
            error_rate: dataset.error_rate(),
        };
        Self { info, dataset, time_order, time_rank }
    }

    pub fn context(&self, record: usize) -> Vec<RecordView> {
        let rank = self.time_rank[record];
        let lo = rank.saturating_sub(CONTEXT_RADIUS);
        let hi = (rank + CONTEXT_RADIUS + 1).min(self.time_order.len());
        (lo..hi)
            .filter(|&r| r != rank)
            .map(|r| {
                let i = self.time_order[r];
                RecordView::new(i, &self.dataset.records()[i])
            })
            .collect()
    }
}

/// Read-only view published after every transition.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub status: StatusDocument,
    pub pending: Option<PendingDocument>,
    pub report: SessionReport,
    pub predictions: Option<Vec<PredictionRow>>,
}

impl Snapshot {
    pub fn phase(&self) -> Phase {
        self.status.phase
    }

    /// The same view while a refit is running.
    pub fn training(&self) -> Self {
        let mut s = self.clone();
        s.status.phase = Phase::Training;
        s.pending = None;
        s
    }

    pub fn predictions_csv(&self) -> Option<String> {
        let rows = self.predictions.as_ref()?;
        let mut out = String::from("index,predicted_label,source\n");
        for r in rows {
            let source = match r.source {
                odeal::active::PredictionSource::Oracle => "oracle",
                odeal::active::PredictionSource::Model => "model",
            };
            out.push_str(&format!("{},{},{}\n", r.index, r.predicted_label, source));
        }
        Some(out)
    }

    pub fn cycle_response(&self) -> CycleResponse {
        CycleResponse {
            session_id: self.status.session_id.clone(),
            phase: self.status.phase,
            revision: self.status.revision,
            labels_spent: self.status.labels_spent,
            pending: self.pending.clone(),
            report: (self.status.phase == Phase::Done).then(|| self.report.clone()),
            predictions: self.predictions.clone(),
        }
    }
}

pub fn report_url(id: &str) -> String {
    format!("/sessions/{id}/report")
}

pub fn predictions_url(id: &str) -> String {
    format!("/sessions/{id}/predictions")
}

pub struct Session {
    id: String,
    dataset: Arc<StoredDataset>,
    request: CreateSessionRequest,
    data: PreparedData,
    record_to_pool: HashMap<usize, usize>,
    engine: Engine,
    revision: u64,
    log: Option<EventLog>,
}

impl Session {
    /// Builds the engine; in trusted mode the initial set is labelled from
    /// the dataset flags straight away.
    pub fn create(id: String, dataset: Arc<StoredDataset>, request: CreateSessionRequest) -> Result<Self, ApiError> {
        let config = &request.config;
        if config.n_initial >= config.budget {
            return Err(ApiError::unprocessable(
                "invalid_config",
                format!("n_initial ({}) must be smaller than budget ({})", config.n_initial, config.budget),
                json!({ "n_initial": config.n_initial, "budget": config.budget }),
            ));
        }
        let data = prepare_data(&dataset.dataset, config.seed, config.hold_out)?;
        let initial = initial_set(&data, config)?;
        let fallback = cold_start_scores(&data, config, &initial)?;
        let mut engine = start_engine(&data, config, &initial, fallback)?;
        if request.initial_labels == InitialLabels::Trusted {
            let pending = engine.pending().expect("a new engine awaits the initial set");
            let labels = pending.batch.indices.iter().map(|&i| (i, data.pool_labels[i])).collect();
            engine.submit(&labels)?;
        }
        let record_to_pool = data.pool_records.iter().enumerate().map(|(p, &r)| (r, p)).collect();
        Ok(Self { id, dataset, request, data, record_to_pool, engine, revision: 0, log: None })
    }

    pub fn request(&self) -> &CreateSessionRequest {
        &self.request
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn attach_log(&mut self, log: EventLog) {
        self.log = Some(log);
    }

    /// Checks revision and phase before any label parsing.
    pub fn check_ready(&self, revision: Option<u64>) -> Result<(), ApiError> {
        if let Some(r) = revision {
            if r != self.revision {
                return Err(ApiError::conflict(
                    "stale_revision",
                    format!("session is at revision {}, request was made at {r}", self.revision),
                    json!({ "revision": self.revision, "given": r }),
                ));
            }
        }
        match self.engine.phase() {
            Phase::AwaitingLabels => Ok(()),
            phase => Err(wrong_phase(&self.id, phase)),
        }
    }

    /// Validates values and coverage; returns labels keyed by pool position.
    pub fn parse_labels(&self, req: &SubmitLabelsRequest) -> Result<BTreeMap<usize, QualityLabel>, ApiError> {
        let mut invalid = Vec::new();
        let mut by_record = BTreeMap::new();
        for (key, value) in &req.labels {
            let index = key.parse::<usize>().ok();
            let label = match value.as_u64() {
                Some(0) => Some(QualityLabel::Good),
                Some(1) => Some(QualityLabel::Bad),
                _ => None,
            };
            match (index, label) {
                (Some(i), Some(l)) => {
                    by_record.insert(i, l);
                }
                _ => invalid.push(json!({ "index": key, "value": value })),
            }
        }
        if !invalid.is_empty() {
            return Err(ApiError::unprocessable(
                "invalid_labels",
                "labels must map record indices to 0 or 1",
                json!({ "invalid": invalid }),
            ));
        }

        let pending: Vec<usize> = self.pending_records();
        let missing: Vec<usize> = pending.iter().copied().filter(|r| !by_record.contains_key(r)).collect();
        let unexpected: Vec<usize> = by_record.keys().copied().filter(|r| !pending.contains(r)).collect();
        if !unexpected.is_empty() {
            return Err(ApiError::unprocessable(
                "unexpected_labels",
                format!("labels given for records that are not pending: {unexpected:?}"),
                json!({ "unexpected": unexpected, "missing": missing }),
            ));
        }
        if !missing.is_empty() {
            return Err(ApiError::unprocessable(
                "missing_labels",
                format!("labels missing for pending records {missing:?}"),
                json!({ "missing": missing }),
            ));
        }
        Ok(by_record.into_iter().map(|(r, l)| (self.record_to_pool[&r], l)).collect())
    }

    /// Submits on a copy of the engine, logs the event, then swaps the copy
    /// in. Any failure leaves the session untouched.
    pub fn apply(&mut self, labels: &BTreeMap<usize, QualityLabel>) -> Result<(), ApiError> {
        let mut next = self.engine.clone();
        next.submit(labels)?;
        let revision = self.revision + 1;
        if let Some(log) = &mut self.log {
            let record_labels = labels.iter().map(|(&p, l)| (self.data.pool_records[p], l.value())).collect();
            log.append(&Event::Labels { revision, labels: record_labels })
                .map_err(|e| ApiError::internal(format!("could not persist labels: {e}")))?;
        }
        self.engine = next;
        self.revision = revision;
        Ok(())
    }

    fn pending_records(&self) -> Vec<usize> {
        self.engine.pending().map(|p| p.batch.indices.iter().map(|&i| self.data.pool_records[i]).collect()).unwrap_or_default()
    }

    pub fn report(&self) -> SessionReport {
        SessionReport::from_engine(&self.data, &self.request.config, &self.engine)
    }

    pub fn snapshot(&self) -> Snapshot {
        let engine = &self.engine;
        let done = engine.phase() == Phase::Done;
        let (good, bad) = engine.class_balance();
        let report = self.report();
        let status = StatusDocument {
            session_id: self.id.clone(),
            dataset_id: self.dataset.info.dataset_id.clone(),
            phase: engine.phase(),
            revision: self.revision,
            initial_labels: self.request.initial_labels,
            n_initial: engine.n_initial(),
            n_queried: engine.n_queried(),
            labels_spent: engine.labels_spent(),
            budget: engine.budget(),
            cycle: engine.cycle(),
            max_entropy: engine.max_entropy(),
            tau: self.request.config.tau,
            curve: engine.curve().to_vec(),
            class_balance: ClassBalance { good, bad },
            stop_reason: engine.stop_reason(),
            final_f1: report.final_f1,
            report_url: report_url(&self.id),
            predictions_url: done.then(|| predictions_url(&self.id)),
        };
        let pending = engine.pending().map(|p| {
            let fitted = engine.model().is_some();
            let instances = p
                .batch
                .indices
                .iter()
                .map(|&i| {
                    let record = self.data.pool_records[i];
                    let p_bad = fitted.then(|| engine.probability(i));
                    PendingInstance {
                        record: RecordView::new(record, &self.dataset.dataset.records()[record]),
                        p_bad,
                        entropy: p_bad.map(entropy),
                        context: self.dataset.context(record),
                    }
                })
                .collect();
            PendingDocument {
                session_id: self.id.clone(),
                revision: self.revision,
                kind: p.kind,
                cycle: p.cycle,
                remaining_budget: engine.budget() - engine.labels_spent(),
                instances,
            }
        });
        let predictions = done.then(|| {
            let mut rows: Vec<PredictionRow> = engine
                .predictions()
                .into_iter()
                .map(|p| PredictionRow { index: self.data.pool_records[p.index], predicted_label: p.label.value(), source: p.source })
                .collect();
            rows.sort_by_key(|r| r.index);
            rows
        });
        Snapshot { status, pending, report, predictions }
    }
}

pub fn wrong_phase(id: &str, phase: Phase) -> ApiError {
    let mut details = json!({ "phase": phase });
    if phase == Phase::Done {
        details["report_url"] = Value::from(report_url(id));
        details["predictions_url"] = Value::from(predictions_url(id));
    }
    let message = match phase {
        Phase::Done => "session is done".to_owned(),
        Phase::Training => "session is retraining; retry shortly".to_owned(),
        Phase::AwaitingLabels => "session is awaiting labels".to_owned(),
    };
    ApiError::conflict("wrong_phase", message, details)
}
