//! Candidate-site search by clustering detector score fields and fusing
//! component evidence.
//!
//! The crate is organized bottom-up:
//!
//! * [`geo`]: distances and a radius-query grid index,
//! * [`field`]: detection fields, alpha-cuts and score amplification,
//! * [`cluster`]: greedy mode clustering with normalized cluster scores,
//! * [`features`]: per-candidate component features,
//! * [`dta`]: F1-optimal decision thresholds,
//! * [`fusion`]: OR-gate, MLP and neuro-fuzzy fusion,
//! * [`rank`]: weighted score fusion for re-ranking,
//! * [`eval`]: metrics and reports,
//! * [`synth`]: seeded synthetic scenarios,
//! * [`config`], [`io`], [`pipeline`]: configuration, file formats and
//!   end-to-end workflows.

pub mod cluster;
pub mod config;
pub mod dta;
pub mod error;
pub mod eval;
pub mod features;
pub mod field;
pub mod fusion;
pub mod geo;
pub mod io;
pub mod pipeline;
pub mod rank;
pub mod synth;

pub use error::{Error, Result};
