//! Quality classifiers producing `P(bad | x)` for uncertainty sampling.

mod gbdt;
mod knn;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureMatrix, QualityLabel};

pub use gbdt::{gbdt_gradients, weighted_logistic_loss, GbdtModel, GbdtParams, TreeDump};
pub use knn::{KnnModel, KnnParams};

/// Probability assigned to the observed class of a single-class training set.
pub const DEGENERATE_CONFIDENCE: f64 = 1.0 - 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model has not been fitted")]
    NotFitted,
    #[error("invalid classifier parameter: {0}")]
    InvalidParameter(String),
}

/// Which classifier to train, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Knn(KnnParams),
    Gbdt(GbdtParams),
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::Gbdt(GbdtParams::default())
    }
}

impl ClassifierSpec {
    pub fn knn() -> Self {
        ClassifierSpec::Knn(KnnParams::default())
    }

    pub fn gbdt() -> Self {
        ClassifierSpec::Gbdt(GbdtParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn(_) => "knn",
            ClassifierSpec::Gbdt(_) => "gbdt",
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self {
            ClassifierSpec::Knn(p) => p.validate(),
            ClassifierSpec::Gbdt(p) => p.validate(),
        }
    }
}

impl std::str::FromStr for ClassifierSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(ClassifierSpec::knn()),
            "gbdt" | "xgboost" | "catboost" | "lightgbm" => Ok(ClassifierSpec::gbdt()),
            other => Err(format!("unknown classifier `{other}` (knn|gbdt)")),
        }
    }
}

/// `(P(good), P(bad))` for one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    pub good: f64,
    pub bad: f64,
}

impl ClassProbabilities {
    pub fn from_bad(p_bad: f64) -> Self {
        Self { good: 1.0 - p_bad, bad: p_bad }
    }

    pub fn predicted(&self) -> QualityLabel {
        QualityLabel::from_bit(self.bad >= 0.5)
    }
}

#[derive(Debug, Clone)]
enum Fitted {
    Knn(KnnModel),
    Gbdt(GbdtModel),
    /// Single-class training set.
    Constant(QualityLabel),
}

/// A fitted quality assessor.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    spec: ClassifierSpec,
    n_features: usize,
    fitted: Fitted,
}

/// Trains `spec` on `(x, y)`. Inputs are borrowed immutably; a single-class
/// `y` yields a flagged constant model instead of an error.
pub fn fit(spec: &ClassifierSpec, x: &FeatureMatrix, y: &[QualityLabel]) -> Result<ClassifierModel, ClassifierError> {
    spec.validate()?;
    if y.is_empty() || x.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if x.n_rows() != y.len() {
        return Err(ClassifierError::DimensionMismatch { expected: x.n_rows(), found: y.len() });
    }
    let first = y[0];
    let fitted = if y.iter().all(|&l| l == first) {
        Fitted::Constant(first)
    } else {
        match spec {
            ClassifierSpec::Knn(p) => Fitted::Knn(KnnModel::fit(p, x, y)),
            ClassifierSpec::Gbdt(p) => Fitted::Gbdt(GbdtModel::fit(p, x, y)),
        }
    };
    Ok(ClassifierModel { spec: spec.clone(), n_features: x.n_cols(), fitted })
}

impl ClassifierModel {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    /// True when trained on a single class.
    pub fn is_degenerate(&self) -> bool {
        matches!(self.fitted, Fitted::Constant(_))
    }

    pub fn gbdt(&self) -> Option<&GbdtModel> {
        match &self.fitted {
            Fitted::Gbdt(m) => Some(m),
            _ => None,
        }
    }

    /// `P(bad)` for every row.
    pub fn predict_bad(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ClassifierError> {
        if x.n_cols() != self.n_features {
            return Err(ClassifierError::DimensionMismatch { expected: self.n_features, found: x.n_cols() });
        }
        Ok(match &self.fitted {
            Fitted::Knn(m) => x.rows().map(|r| m.predict_bad(r)).collect(),
            Fitted::Gbdt(m) => x.rows().map(|r| m.predict_bad(r)).collect(),
            Fitted::Constant(label) => {
                let p = if label.is_bad() { DEGENERATE_CONFIDENCE } else { 1.0 - DEGENERATE_CONFIDENCE };
                vec![p; x.n_rows()]
            }
        })
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<ClassProbabilities>, ClassifierError> {
        Ok(self.predict_bad(x)?.into_iter().map(ClassProbabilities::from_bad).collect())
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<QualityLabel>, ClassifierError> {
        Ok(self.predict_proba(x)?.iter().map(ClassProbabilities::predicted).collect())
    }

    /// JSON description of the fitted state (trees as nested nodes).
    pub fn dump(&self) -> serde_json::Value {
        match &self.fitted {
            Fitted::Gbdt(m) => serde_json::json!({
                "kind": "gbdt",
                "base_score": m.base_score(),
                "trees": m.dump_trees(),
            }),
            Fitted::Knn(m) => serde_json::json!({ "kind": "knn", "k": m.k(), "n_reference": m.len() }),
            Fitted::Constant(label) => serde_json::json!({ "kind": self.spec.name(), "degenerate_class": label.value() }),
        }
    }
}
