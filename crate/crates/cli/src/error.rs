use std::path::PathBuf;

use odeal::active::EngineError;
use odeal::classify::ClassifierError;
use odeal::data::DataError;
use odeal::eval::EvalError;
use odeal::outlier::OutlierError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;
    pub const SESSION: u8 = 4;
    pub const TARGET_UNREACHABLE: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DataError },
    #[error(transparent)]
    Core(#[from] odeal::Error),
    #[error("{0} state audit violations")]
    Audit(usize),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self::Config(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } | CliError::Data { .. } => exit::IO,
            CliError::Core(e) => core_exit_code(e),
            CliError::Audit(_) => exit::SESSION,
        }
    }
}

fn core_exit_code(e: &odeal::Error) -> u8 {
    use odeal::Error as E;
    match e {
        E::Eval(EvalError::TargetUnreachable { .. }) => exit::TARGET_UNREACHABLE,
        E::Eval(EvalError::InvalidTarget(_) | EvalError::InvalidConfig(_))
        | E::Data(DataError::InvalidRate(_) | DataError::InvalidSplit(_) | DataError::TooFewRows { .. })
        | E::Classifier(ClassifierError::InvalidParameter(_))
        | E::Outlier(OutlierError::InvalidParameter(_) | OutlierError::InvalidSize { .. })
        | E::Engine(
            EngineError::BudgetSmallerThanInitialSet { .. }
            | EngineError::BudgetExceedsPool { .. }
            | EngineError::InvalidBatchSize
            | EngineError::InvalidThreshold
            | EngineError::Classifier(ClassifierError::InvalidParameter(_))
            | EngineError::Outlier(OutlierError::InvalidParameter(_) | OutlierError::InvalidSize { .. }),
        ) => exit::CONFIG,
        _ => exit::SESSION,
    }
}
