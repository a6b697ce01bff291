use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::data::QualityLabel;

/// Where a pool instance currently sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Unlabeled,
    Initial(QualityLabel),
    Queried(QualityLabel),
}

/// Partition of the pool into the initial set, the queried (labelled) set and
/// the unlabelled remainder. Labels live inside the slot, so an instance can
/// only carry a label while it is outside the unlabelled set.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    slots: Vec<Slot>,
    initial: Vec<usize>,
    queried: Vec<usize>,
    unlabeled: BTreeSet<usize>,
}

impl PoolState {
    pub fn new(pool_size: usize) -> Self {
        Self { slots: vec![Slot::Unlabeled; pool_size], initial: Vec::new(), queried: Vec::new(), unlabeled: (0..pool_size).collect() }
    }

    pub fn pool_size(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, i: usize) -> Option<Slot> {
        self.slots.get(i).copied()
    }

    /// Initial-set indices in acquisition order.
    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    /// Queried indices in acquisition order.
    pub fn queried(&self) -> &[usize] {
        &self.queried
    }

    pub fn unlabeled(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.unlabeled.iter().copied()
    }

    pub fn unlabeled_vec(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn n_labeled(&self) -> usize {
        self.initial.len() + self.queried.len()
    }

    pub fn is_unlabeled(&self, i: usize) -> bool {
        matches!(self.slots.get(i), Some(Slot::Unlabeled))
    }

    pub fn label_of(&self, i: usize) -> Option<QualityLabel> {
        match self.slots.get(i)? {
            Slot::Initial(l) | Slot::Queried(l) => Some(*l),
            Slot::Unlabeled => None,
        }
    }

    /// Initial set first, then queries, each in acquisition order.
    pub fn labeled(&self) -> Vec<(usize, QualityLabel)> {
        self.initial.iter().chain(&self.queried).map(|&i| (i, self.label_of(i).expect("labelled slot"))).collect()
    }

    pub fn acquire_initial(&mut self, i: usize, label: QualityLabel) -> Result<(), EngineError> {
        self.take(i)?;
        self.slots[i] = Slot::Initial(label);
        self.initial.push(i);
        Ok(())
    }

    pub fn acquire_queried(&mut self, i: usize, label: QualityLabel) -> Result<(), EngineError> {
        self.take(i)?;
        self.slots[i] = Slot::Queried(label);
        self.queried.push(i);
        Ok(())
    }

    fn take(&mut self, i: usize) -> Result<(), EngineError> {
        if !self.unlabeled.remove(&i) {
            return Err(EngineError::UnknownIndex(i));
        }
        Ok(())
    }

    /// Consistency check of the partition; returns human-readable violations.
    pub fn audit(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let n = self.slots.len();
        let mut seen = vec![0u8; n];
        for (name, list) in [("initial", &self.initial), ("queried", &self.queried)] {
            for &i in list.iter() {
                if i >= n {
                    violations.push(format!("{name} index {i} out of range"));
                    continue;
                }
                seen[i] += 1;
                let ok = matches!((name, self.slots[i]), ("initial", Slot::Initial(_)) | ("queried", Slot::Queried(_)));
                if !ok {
                    violations.push(format!("{name} index {i} has slot {:?}", self.slots[i]));
                }
            }
        }
        for &i in &self.unlabeled {
            if i >= n {
                violations.push(format!("unlabelled index {i} out of range"));
                continue;
            }
            seen[i] += 1;
            if self.slots[i] != Slot::Unlabeled {
                violations.push(format!("unlabelled index {i} carries a label"));
            }
        }
        for (i, &count) in seen.iter().enumerate() {
            if count != 1 {
                violations.push(format!("index {i} appears in {count} sets"));
            }
        }
        violations
    }
}
