use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{Engine, EngineError, Phase, PoolState};
use crate::data::QualityLabel;

pub enum OracleResponse {
    Labels(BTreeMap<usize, QualityLabel>),
    /// No labels yet; the session stays suspended.
    Pending,
}

/// A label source. Requests must target unlabelled pool instances.
pub trait Oracle {
    fn request(&mut self, state: &PoolState, indices: &[usize]) -> Result<OracleResponse, EngineError>;
}

/// Answers from stored ground truth.
#[derive(Debug)]
pub struct SimulatedOracle<'a> {
    truth: &'a [QualityLabel],
    calls: usize,
}

impl<'a> SimulatedOracle<'a> {
    pub fn new(truth: &'a [QualityLabel]) -> Self {
        Self { truth, calls: 0 }
    }

    /// Labels handed out so far.
    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl Oracle for SimulatedOracle<'_> {
    fn request(&mut self, state: &PoolState, indices: &[usize]) -> Result<OracleResponse, EngineError> {
        let mut out = BTreeMap::new();
        for &i in indices {
            if i >= self.truth.len() || !state.is_unlabeled(i) {
                return Err(EngineError::UnknownIndex(i));
            }
            out.insert(i, self.truth[i]);
        }
        self.calls += out.len();
        Ok(OracleResponse::Labels(out))
    }
}

type Inbox = Arc<(Mutex<Option<BTreeMap<usize, QualityLabel>>>, Condvar)>;

/// Labels arriving from outside the process (a human, another thread).
/// Without a timeout a request returns `Pending` when nothing has arrived;
/// with one it blocks up to that long and then fails.
#[derive(Debug, Clone)]
pub struct ExternalOracle {
    inbox: Inbox,
    timeout: Option<Duration>,
}

/// Sending half of an [`ExternalOracle`].
#[derive(Debug, Clone)]
pub struct LabelSender {
    inbox: Inbox,
}

impl LabelSender {
    pub fn send(&self, labels: BTreeMap<usize, QualityLabel>) {
        let (lock, cvar) = &*self.inbox;
        *lock.lock().expect("inbox poisoned") = Some(labels);
        cvar.notify_all();
    }
}

impl ExternalOracle {
    pub fn new(timeout: Option<Duration>) -> (Self, LabelSender) {
        let inbox: Inbox = Arc::new((Mutex::new(None), Condvar::new()));
        (Self { inbox: inbox.clone(), timeout }, LabelSender { inbox })
    }
}

impl Oracle for ExternalOracle {
    fn request(&mut self, state: &PoolState, indices: &[usize]) -> Result<OracleResponse, EngineError> {
        if let Some(&bad) = indices.iter().find(|&&i| !state.is_unlabeled(i)) {
            return Err(EngineError::UnknownIndex(bad));
        }
        let (lock, cvar) = &*self.inbox;
        let mut slot = lock.lock().expect("inbox poisoned");
        if let Some(timeout) = self.timeout {
            let (guard, result) = cvar.wait_timeout_while(slot, timeout, |s| s.is_none()).expect("inbox poisoned");
            slot = guard;
            if result.timed_out() && slot.is_none() {
                return Err(EngineError::ExternalTimeout);
            }
        }
        Ok(match slot.take() {
            Some(labels) => OracleResponse::Labels(labels),
            None => OracleResponse::Pending,
        })
    }
}

/// Runs the engine until it is done or the oracle has nothing to give.
pub fn drive(engine: &mut Engine, oracle: &mut dyn Oracle) -> Result<Phase, EngineError> {
    while engine.phase() == Phase::AwaitingLabels {
        let indices = engine.pending().expect("pending batch").batch.indices.clone();
        match oracle.request(engine.state(), &indices)? {
            OracleResponse::Labels(labels) => {
                engine.submit(&labels)?;
            }
            OracleResponse::Pending => break,
        }
    }
    Ok(engine.phase())
}
