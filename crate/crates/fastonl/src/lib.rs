//! Online node labeling on undirected weighted graphs.
//!
//! The crate is organized around a local-push solver that approximates one
//! column of a regularized graph-kernel inverse at a time:
//!
//! - [`graph`]: compressed adjacency, label sequences, edge-list I/O.
//! - [`push`]: the FIFO local-push solver for the two basic kernels, with
//!   epoch instrumentation and operation-count bounds.
//! - [`kernel`]: the six parameterized kernel presentations built on the two
//!   basic kernels, plus dense oracles for verification.
//! - [`learner`]: the exact relaxation learner and its push-approximated
//!   online variant, surrogate loss machinery, and admissibility audits.
//! - [`baselines`]: weighted-majority and truncated power-iteration baselines.
//! - [`harness`]: experiment configs, multi-trial runs, CSV/JSON exports.

pub mod baselines;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kernel;
pub mod learner;
pub mod push;

pub use error::{Error, Result};
pub use graph::{Graph, LabelSequence};
pub use push::{fifo_push, KernelType, PushConfig, PushOutcome, PushStats, SparseVec};
