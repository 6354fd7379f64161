//! Discrete-event simulation of serverless function scheduling on a single
//! edge server with a fixed number of instance slots.
//!
//! * [`model`]: requests, functions, instances and the server ledger.
//! * [`engine`]: the event loop and instance lifecycle.
//! * [`schedulers`]: the weight-based online scheduler and four baselines.
//! * [`ssfs`]: the offline single-slot sequencing problem with an
//!   enumeration oracle.
//! * [`stats`]: history estimators and run metrics.
//! * [`trace`]: trace ingestion and synthetic workloads.
//! * [`cli`]: the experiment runner behind the `edgesched` binary.

// `!(x > 0.0)` style checks are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod model;
pub mod schedulers;
pub mod ssfs;
pub mod stats;
pub mod trace;

pub use engine::{run, run_observed, SimulationConfig, SimulationResult};
pub use error::SimError;
pub use model::{FunctionId, FunctionProfile, InstanceId, Request, RequestId, Time};
pub use schedulers::{build_scheduler, Scheduler, SchedulerKind};
