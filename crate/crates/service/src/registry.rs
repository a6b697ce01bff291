use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use odeal::active::SessionReport;
use odeal::data::{read_observations, write_observations, Dataset};
use serde_json::json;

use crate::api::{CreateSessionRequest, CycleResponse, DatasetInfo, PendingDocument, StatusDocument, SubmitLabelsRequest};
use crate::error::ApiError;
use crate::session::{wrong_phase, Session, Snapshot, StoredDataset};
use crate::store::{read_log, write_atomic, DatasetMeta, Event, EventLog, Layout, StoreError};

/// A session behind a mutex that serialises writers, plus a snapshot that
/// readers take without waiting for them.
pub struct SessionHandle {
    session: Mutex<Session>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl SessionHandle {
    fn new(session: Session) -> Self {
        let snapshot = RwLock::new(Arc::new(session.snapshot()));
        Self { session: Mutex::new(session), snapshot }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn publish(&self, s: Snapshot) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(s);
    }
}

/// All datasets and sessions, optionally backed by a directory.
pub struct Registry {
    layout: Option<Layout>,
    datasets: RwLock<HashMap<String, Arc<StoredDataset>>>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

impl Registry {
    pub fn in_memory() -> Self {
        Self { layout: None, datasets: RwLock::default(), sessions: RwLock::default() }
    }

    /// Opens (or initialises) a data directory and replays every session log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let layout = Layout::create(dir.as_ref())?;
        let mut datasets = HashMap::new();
        for id in Layout::stems(&layout.datasets, "json")? {
            let meta_path = layout.dataset_meta(&id);
            let meta: DatasetMeta = read_json(&meta_path)?;
            let csv_path = layout.dataset_csv(&id);
            let file = std::fs::File::open(&csv_path).map_err(|e| StoreError::io(&csv_path, e))?;
            let dataset = read_observations(file, meta.name).map_err(|e| StoreError::corrupt(&csv_path, e.to_string()))?;
            datasets.insert(id.clone(), Arc::new(StoredDataset::new(id, dataset)));
        }

        let mut sessions = HashMap::new();
        for id in Layout::stems(&layout.sessions, "jsonl")? {
            let path = layout.session_log(&id);
            let session = replay(&id, &path, &datasets)?;
            tracing::info!(session = %id, revision = session.revision(), "session restored");
            sessions.insert(id, Arc::new(SessionHandle::new(session)));
        }
        Ok(Self { layout: Some(layout), datasets: RwLock::new(datasets), sessions: RwLock::new(sessions) })
    }

    pub fn data_dir(&self) -> Option<PathBuf> {
        self.layout.as_ref().and_then(|l| l.datasets.parent().map(Path::to_owned))
    }

    /// Parses an uploaded CSV and registers it.
    pub fn upload_dataset(&self, name: &str, csv: &[u8]) -> Result<DatasetInfo, ApiError> {
        let dataset =
            read_observations(csv, name).map_err(|e| ApiError::unprocessable("invalid_dataset", e.to_string(), serde_json::Value::Null))?;
        self.register_dataset(dataset)
    }

    pub fn register_dataset(&self, dataset: Dataset) -> Result<DatasetInfo, ApiError> {
        if dataset.is_empty() {
            return Err(ApiError::unprocessable("invalid_dataset", "dataset has no records", serde_json::Value::Null));
        }
        let id = new_id();
        if let Some(layout) = &self.layout {
            let mut csv = Vec::new();
            write_observations(dataset.records(), &mut csv).map_err(|e| ApiError::internal(e.to_string()))?;
            let meta = DatasetMeta { dataset_id: id.clone(), name: dataset.name().to_owned() };
            write_atomic(&layout.dataset_csv(&id), &csv)
                .and_then(|_| write_atomic(&layout.dataset_meta(&id), &serde_json::to_vec(&meta).expect("meta serialises")))
                .map_err(|e| ApiError::internal(format!("could not store dataset: {e}")))?;
        }
        let stored = Arc::new(StoredDataset::new(id.clone(), dataset));
        let info = stored.info.clone();
        self.datasets.write().expect("dataset lock").insert(id, stored);
        tracing::info!(dataset = %info.dataset_id, rows = info.rows, "dataset registered");
        Ok(info)
    }

    pub fn dataset(&self, id: &str) -> Result<DatasetInfo, ApiError> {
        Ok(self.stored_dataset(id)?.info.clone())
    }

    fn stored_dataset(&self, id: &str) -> Result<Arc<StoredDataset>, ApiError> {
        self.datasets.read().expect("dataset lock").get(id).cloned().ok_or_else(|| ApiError::not_found("dataset", id))
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions.read().expect("session lock").get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create_session(&self, request: CreateSessionRequest) -> Result<CycleResponse, ApiError> {
        let dataset = self.stored_dataset(&request.dataset_id)?;
        let id = new_id();
        let mut session = Session::create(id.clone(), dataset, request)?;
        if let Some(layout) = &self.layout {
            let log = EventLog::create(&layout.session_log(&id), &Event::Created(session.request().clone()))
                .map_err(|e| ApiError::internal(format!("could not persist session: {e}")))?;
            session.attach_log(log);
        }
        let handle = Arc::new(SessionHandle::new(session));
        let response = handle.snapshot().cycle_response();
        self.sessions.write().expect("session lock").insert(id.clone(), handle);
        tracing::info!(session = %id, "session created");
        Ok(response)
    }

    pub fn pending(&self, id: &str) -> Result<PendingDocument, ApiError> {
        let snap = self.handle(id)?.snapshot();
        snap.pending.clone().ok_or_else(|| wrong_phase(id, snap.phase()))
    }

    pub fn status(&self, id: &str) -> Result<StatusDocument, ApiError> {
        Ok(self.handle(id)?.snapshot().status.clone())
    }

    pub fn report(&self, id: &str) -> Result<SessionReport, ApiError> {
        Ok(self.handle(id)?.snapshot().report.clone())
    }

    pub fn predictions_csv(&self, id: &str) -> Result<String, ApiError> {
        let snap = self.handle(id)?.snapshot();
        snap.predictions_csv().ok_or_else(|| {
            ApiError::conflict("not_done", "predictions are available once the session is done", json!({ "phase": snap.phase() }))
        })
    }

    /// One atomic cycle: validate, refit, persist, publish.
    pub fn submit_labels(&self, id: &str, request: &SubmitLabelsRequest) -> Result<CycleResponse, ApiError> {
        let handle = self.handle(id)?;
        let mut session = handle.session.lock().expect("session lock");
        session.check_ready(request.revision)?;
        let labels = session.parse_labels(request)?;
        let before = handle.snapshot();
        handle.publish(before.training());
        match session.apply(&labels) {
            Ok(()) => {
                let snap = session.snapshot();
                let response = snap.cycle_response();
                handle.publish(snap);
                tracing::debug!(session = %id, revision = response.revision, phase = ?response.phase, "labels applied");
                Ok(response)
            }
            Err(e) => {
                handle.publish((*before).clone());
                Err(e)
            }
        }
    }

    /// Marks a session as retraining without changing it, for as long as the
    /// returned guard lives.
    #[doc(hidden)]
    pub fn hold_training(&self, id: &str) -> Result<TrainingGuard, ApiError> {
        let handle = self.handle(id)?;
        let before = handle.snapshot();
        handle.publish(before.training());
        Ok(TrainingGuard { handle, before })
    }
}

#[doc(hidden)]
pub struct TrainingGuard {
    handle: Arc<SessionHandle>,
    before: Arc<Snapshot>,
}

impl Drop for TrainingGuard {
    fn drop(&mut self) {
        self.handle.publish((*self.before).clone());
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::corrupt(path, e.to_string()))
}

fn replay(id: &str, path: &Path, datasets: &HashMap<String, Arc<StoredDataset>>) -> Result<Session, StoreError> {
    let mut events = read_log(path)?.into_iter();
    let Some(Event::Created(request)) = events.next() else {
        return Err(StoreError::corrupt(path, "log does not start with a created event"));
    };
    let dataset = datasets
        .get(&request.dataset_id)
        .cloned()
        .ok_or_else(|| StoreError::corrupt(path, format!("unknown dataset {}", request.dataset_id)))?;
    let mut session = Session::create(id.to_owned(), dataset, request).map_err(|e| StoreError::corrupt(path, e.to_string()))?;
    for event in events {
        let Event::Labels { revision, labels } = event else {
            return Err(StoreError::corrupt(path, "second created event"));
        };
        if revision != session.revision() + 1 {
            return Err(StoreError::corrupt(path, format!("revision {revision} follows {}", session.revision())));
        }
        let request = SubmitLabelsRequest {
            labels: labels.into_iter().map(|(r, v)| (r.to_string(), json!(v))).collect(),
            revision: Some(session.revision()),
        };
        session
            .check_ready(request.revision)
            .and_then(|_| session.parse_labels(&request))
            .and_then(|l| session.apply(&l))
            .map_err(|e| StoreError::corrupt(path, format!("revision {revision}: {e}")))?;
    }
    session.attach_log(EventLog::open_append(path).map_err(|e| StoreError::io(path, e))?);
    Ok(session)
}
