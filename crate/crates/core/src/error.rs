use thiserror::Error;

use crate::active::EngineError;
use crate::classify::ClassifierError;
use crate::data::DataError;
use crate::eval::EvalError;
use crate::outlier::OutlierError;

/// Any failure surfaced by the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Outlier(#[from] OutlierError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
