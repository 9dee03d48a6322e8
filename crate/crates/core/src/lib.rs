//! Simulated power side-channel laboratory for weight-stationary systolic arrays.
//!
//! The crate models 1D and 2D arrays at register granularity, turns register
//! switching into power traces, and runs correlation attacks that recover the
//! stationary weights: the chained per-column attack, template subtraction and
//! the multi-phase template attack for 2D arrays.

pub mod analysis;
pub mod attack;
pub mod cli;
pub mod error;
pub mod power;
pub mod rng;
pub mod systolic;
pub mod trace_io;
pub mod traces;

pub use error::{Error, Result};
pub use power::{LeakageModel, NoiseSpec, PowerCoefficients};
pub use systolic::{ArrayConfig, InputBatch, WeightMatrix};
pub use traces::TraceMatrix;
