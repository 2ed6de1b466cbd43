//! Single-load activation-profile monitoring from aggregate real power.
//!
//! A fully convolutional encoder–decoder maps a window of the aggregate
//! power signal to per-sample posteriors of a load being on. The crate
//! covers every stage of that pipeline:
//!
//! * [`nncore`]: differentiable 1-D primitives with hand-written backward passes
//! * [`model`]: config-driven encoder–decoder assembly, checkpoints, decision rule
//! * [`train`]: binary cross-entropy, NAdam, and the training loop
//! * [`dataio`]: CSV ingestion, ground-truth extraction, windowing, synthetic households
//! * [`metrics`]: contingency tables and chance-corrected evaluation measures
//! * [`cli`]: the `loadmon` command-line surface

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataio;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod nncore;
pub mod real;
pub mod train;

pub use error::{Error, Result};
pub use real::{DType, Real};
