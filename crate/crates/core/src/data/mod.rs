//! Observation records, quality labels and feature matrices.

mod csv_io;
mod scaler;
mod split;
mod synth;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{parse_observations_csv, read_observations, write_observations, write_observations_csv, CSV_HEADER};
pub use scaler::{fit_scaler, Scaler};
pub use split::{stratified_split, stratified_split_labels, SplitIndices, SplitSpec};
pub use synth::{generate_synthetic_dataset, ErrorKind, ProfileShape};

/// Number of features per observation.
pub const N_FEATURES: usize = 6;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("invalid QC flag {value} (expected 1..=9)")]
    InvalidFlag { value: i64 },
    #[error("non-finite value for `{column}` at line {line}")]
    NonFiniteFeature { line: u64, column: String },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("feature {0} is constant; cannot z-score it")]
    ConstantFeature(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("at least {required} rows are required, got {found}")]
    TooFewRows { required: usize, found: usize },
    #[error("error rate {0} must lie strictly between 0 and 1")]
    InvalidRate(f64),
    #[error("split fractions must be non-negative and sum to 1 (got {0})")]
    InvalidSplit(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The six measured quantities of an observation, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Datetime,
    Latitude,
    Longitude,
    Pressure,
    Temperature,
    Salinity,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] =
        [Feature::Datetime, Feature::Latitude, Feature::Longitude, Feature::Pressure, Feature::Temperature, Feature::Salinity];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Datetime => "datetime",
            Feature::Latitude => "latitude",
            Feature::Longitude => "longitude",
            Feature::Pressure => "pressure",
            Feature::Temperature => "temperature",
            Feature::Salinity => "salinity",
        }
    }
}

/// Argo-style per-feature QC code. Only `1` means good data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct QcFlag(u8);

impl QcFlag {
    pub const GOOD: QcFlag = QcFlag(1);
    pub const BAD: QcFlag = QcFlag(4);

    pub fn new(value: i64) -> Result<Self, DataError> {
        if (1..=9).contains(&value) {
            Ok(QcFlag(value as u8))
        } else {
            Err(DataError::InvalidFlag { value })
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn is_good(self) -> bool {
        self.0 == 1
    }
}

impl TryFrom<i64> for QcFlag {
    type Error = DataError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        QcFlag::new(value)
    }
}

impl From<QcFlag> for u8 {
    fn from(flag: QcFlag) -> u8 {
        flag.0
    }
}

/// Instance-level quality label: `Bad` (1) when any feature is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum QualityLabel {
    Good = 0,
    Bad = 1,
}

impl QualityLabel {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            QualityLabel::Bad
        } else {
            QualityLabel::Good
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn is_bad(self) -> bool {
        self == QualityLabel::Bad
    }
}

impl TryFrom<u8> for QualityLabel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(QualityLabel::Good),
            1 => Ok(QualityLabel::Bad),
            other => Err(format!("quality label must be 0 or 1, got {other}")),
        }
    }
}

impl From<QualityLabel> for u8 {
    fn from(label: QualityLabel) -> u8 {
        label.value()
    }
}

impl fmt::Display for QualityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// `Good` iff every feature flag is 1.
pub fn derive_instance_label(flags: &[QcFlag; N_FEATURES]) -> QualityLabel {
    QualityLabel::from_bit(!flags.iter().all(|f| f.is_good()))
}

/// Same rule on raw integer codes, validating them first.
pub fn derive_label_from_codes(codes: &[i64; N_FEATURES]) -> Result<QualityLabel, DataError> {
    let mut flags = [QcFlag::GOOD; N_FEATURES];
    for (slot, &code) in flags.iter_mut().zip(codes) {
        *slot = QcFlag::new(code)?;
    }
    Ok(derive_instance_label(&flags))
}

/// One timestamped multi-sensor measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub timestamp: DateTime<Utc>,
    pub latitude: f64,
    pub longitude: f64,
    pub pressure: f64,
    pub temperature: f64,
    pub salinity: f64,
    pub flags: [QcFlag; N_FEATURES],
}

impl ObservationRecord {
    /// Seconds since the Unix epoch, with sub-second precision.
    pub fn epoch_seconds(&self) -> f64 {
        self.timestamp.timestamp() as f64 + f64::from(self.timestamp.timestamp_subsec_nanos()) * 1e-9
    }

    /// Raw (unscaled) feature vector in [`Feature::ALL`] order.
    pub fn features(&self) -> [f64; N_FEATURES] {
        [self.epoch_seconds(), self.latitude, self.longitude, self.pressure, self.temperature, self.salinity]
    }

    pub fn label(&self) -> QualityLabel {
        derive_instance_label(&self.flags)
    }
}

/// An ordered collection of records with their derived ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    records: Vec<ObservationRecord>,
    labels: Vec<QualityLabel>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, records: Vec<ObservationRecord>) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let labels = records.iter().map(ObservationRecord::label).collect();
        Ok(Self { name: name.into(), records, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    /// Ground truth. Only oracles and evaluators should look at this.
    pub fn labels(&self) -> &[QualityLabel] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_bad()).count()
    }

    pub fn error_rate(&self) -> f64 {
        self.positives() as f64 / self.len() as f64
    }

    /// Raw features of the selected records.
    pub fn feature_matrix(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * N_FEATURES);
        for &i in indices {
            data.extend_from_slice(&self.records[i].features());
        }
        FeatureMatrix { data, n_cols: N_FEATURES }
    }

    pub fn all_features(&self) -> FeatureMatrix {
        let all: Vec<usize> = (0..self.len()).collect();
        self.feature_matrix(&all)
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<QualityLabel> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Dense row-major matrix of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_cols: usize) -> Result<Self, DataError> {
        if n_cols == 0 || !data.len().is_multiple_of(n_cols) {
            return Err(DataError::DimensionMismatch { expected: n_cols, found: data.len() });
        }
        Ok(Self { data, n_cols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, DataError> {
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(DataError::DimensionMismatch { expected: n_cols, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        if n_cols == 0 {
            return Err(DataError::DimensionMismatch { expected: 1, found: 0 });
        }
        Ok(Self { data, n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix { data, n_cols: self.n_cols }
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
