//! Quality assessment of ocean observation records with pool-based active
//! learning, where the first labelled batch is chosen by outlier detectors
//! instead of at random.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: observation records, CSV ingestion/export, z-score scaling,
//!   stratified splitting and a synthetic Argo-like generator.
//! * [`outlier`]: LOF, Isolation Forest and One-Class SVM scoring, plus
//!   initial-set construction from the top-ranked scores.
//! * [`classify`]: KNN and gradient-boosted tree quality classifiers.
//! * [`active`]: the query loop: pool bookkeeping, uncertainty / random
//!   sampling, oracles and a resumable session engine.
//! * [`eval`]: F1, reduced annotation cost and the two experiment harnesses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod classify;
pub mod data;
pub mod eval;
pub mod outlier;
pub mod rng;

mod error;

pub use error::{Error, Result};
