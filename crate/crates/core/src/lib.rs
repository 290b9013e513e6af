//! Hybrid neural layers that fuse per-subject structured covariates with
//! time series, the late-fusion and replication baselines, a conditional
//! mutual information test for whether fusion is warranted, and a nested
//! evaluation protocol.

pub mod error;
pub mod numeric;
pub mod par;

pub use error::{Error, Result};
pub mod fusion;
pub mod layers;
pub mod models;
pub mod pipeline;
pub mod rng;
