//! Model-driven scheduling for streaming dataflow DAGs.
//!
//! The pipeline has three planning phases plus verification:
//!
//! 1. **Modeling** ([`perfmodel`]): per-task performance models mapping a
//!    thread count on one resource slot to the peak stable input rate and the
//!    CPU%/memory% used at that rate. Models are measured by an automated
//!    trial sweep or shipped as fixture files.
//! 2. **Allocation** ([`allocation`]): per-task thread counts and resource
//!    estimates for a target DAG input rate, via the linear-scaling baseline
//!    (LSA) or the model-based allocator (MBA), plus the total slot count.
//! 3. **Mapping** ([`mapping`]): VM acquisition for the slot count and the
//!    assignment of every task thread to a (VM, slot) pair, via round-robin
//!    (DSM), resource-distance (RSM) or slot-aware bundling (SAM).
//!
//! [`predictor`] derives the supported input rate and per-VM utilization a
//! mapped plan should sustain, and [`simulator`] checks it in a deterministic
//! discrete-event simulation.

pub mod allocation;
pub mod dagcore;
pub mod mapping;
pub mod perfmodel;
pub mod predictor;
pub mod simulator;

mod error;

pub use error::{Error, Result};
