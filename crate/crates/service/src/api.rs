//! Request and response documents.

use std::collections::BTreeMap;

use odeal::active::{CurvePoint, PendingKind, Phase, SessionConfig, SessionReport, StopReason};
use odeal::data::ObservationRecord;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Who labels the initial set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLabels {
    /// The annotator labels it as the first pending batch.
    #[default]
    Human,
    /// Taken from the dataset's QC flags; the first pending batch is a query.
    Trusted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub dataset_id: String,
    pub config: SessionConfig,
    #[serde(default)]
    pub initial_labels: InitialLabels,
}

/// Labels keyed by dataset record index. Values are validated by hand so a
/// bad value can be reported with its index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitLabelsRequest {
    pub labels: BTreeMap<String, Value>,
    /// When present, must equal the session's current revision.
    #[serde(default)]
    pub revision: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub name: String,
    pub rows: usize,
    pub positives: usize,
    pub error_rate: f64,
}

/// Raw, unscaled values of one record. QC flags are never exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    pub index: usize,
    pub timestamp: String,
    pub latitude: f64,
    pub longitude: f64,
    pub pressure: f64,
    pub temperature: f64,
    pub salinity: f64,
}

impl RecordView {
    pub fn new(index: usize, r: &ObservationRecord) -> Self {
        Self {
            index,
            timestamp: r.timestamp.to_rfc3339(),
            latitude: r.latitude,
            longitude: r.longitude,
            pressure: r.pressure,
            temperature: r.temperature,
            salinity: r.salinity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingInstance {
    #[serde(flatten)]
    pub record: RecordView,
    /// Current model output; absent before the first fit.
    pub p_bad: Option<f64>,
    pub entropy: Option<f64>,
    /// Records just before and after this one in time.
    pub context: Vec<RecordView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingDocument {
    pub session_id: String,
    pub revision: u64,
    pub kind: PendingKind,
    pub cycle: usize,
    pub remaining_budget: usize,
    pub instances: Vec<PendingInstance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub good: usize,
    pub bad: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusDocument {
    pub session_id: String,
    pub dataset_id: String,
    pub phase: Phase,
    pub revision: u64,
    pub initial_labels: InitialLabels,
    pub n_initial: usize,
    pub n_queried: usize,
    pub labels_spent: usize,
    pub budget: usize,
    pub cycle: usize,
    pub max_entropy: Option<f64>,
    pub tau: f64,
    pub curve: Vec<CurvePoint>,
    pub class_balance: ClassBalance,
    pub stop_reason: Option<StopReason>,
    pub final_f1: Option<f64>,
    pub report_url: String,
    pub predictions_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub index: usize,
    pub predicted_label: u8,
    pub source: odeal::active::PredictionSource,
}

/// Reply to session creation and to every label submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleResponse {
    pub session_id: String,
    pub phase: Phase,
    pub revision: u64,
    pub labels_spent: usize,
    pub pending: Option<PendingDocument>,
    pub report: Option<SessionReport>,
    pub predictions: Option<Vec<PredictionRow>>,
}
