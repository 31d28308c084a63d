//! Pairwise "chemistry" between collaborating language models, computed from
//! recorded (quality, accuracy) performance histories, and ensemble
//! recommendation on top of it.
//!
//! The pipeline is: history CSVs ([`history`]) → per-model profiles
//! ([`model`]) → rank-weighted cost ([`cost`]) → model interaction graph
//! ([`mig`]) → pairwise chemistry ([`chemistry`]) → hill-climbing subset
//! recommendation ([`recommend`]). [`consensus`] turns raw grade matrices
//! into quality and accuracy scores, and [`complementarity`] holds the
//! evaluation-side metrics.

pub mod chemistry;
pub mod complementarity;
pub mod consensus;
pub mod cost;
pub mod error;
pub mod history;
pub mod mig;
pub mod model;
pub mod recommend;

pub use chemistry::{ChemMethod, ChemistryTable};
pub use cost::{benefit, cost, penalty, used_subset, CostBackend, CostTable, RankedOutput};
pub use error::{ChemError, Result};
pub use model::{sha256_hex, Configuration, ModelId, ModelProfile, ModelSet, Subset};
pub use recommend::{CandidatePool, LossParams, Recommendation};
