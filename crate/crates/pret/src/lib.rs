//! Trajectory-alignment navigation planning on synthetic graph environments.
//!
//! An agent explores a procedurally generated discrete environment, maintains
//! a directed exploration graph with fidelity trajectories, scores
//! instruction-trajectory alignment incrementally with prefix-shared causal
//! attention and a KV-cache, and selects navigation targets by candidate
//! comparison.

pub mod bench;
pub mod config;
pub mod error;
pub mod env;
pub mod explore;
pub mod model;
pub mod metrics;
pub mod planner;
pub mod tensor;
pub mod trace;
pub mod train;

pub use error::{PretError, Result};
