use std::path::PathBuf;

use thiserror::Error;

use crate::model::{FunctionId, InstanceId, InstanceState, RequestId};

/// Errors raised by the simulation engine and the scheduler contract checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown function {0}")]
    UnknownFunction(FunctionId),
    #[error("unknown instance {0}")]
    UnknownInstance(InstanceId),
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("duplicate request id {0}")]
    DuplicateRequest(RequestId),
    #[error("server capacity {capacity} exceeded")]
    CapacityExceeded { capacity: usize },
    #[error("instance {instance}: illegal transition {from:?} -> {to:?}")]
    InvalidTransition {
        instance: InstanceId,
        from: InstanceState,
        to: InstanceState,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("scheduler contract violation: {0}")]
    Contract(String),
    #[error("simulation stalled with {pending} unfinished requests")]
    Stalled { pending: usize },
}

/// Errors from the offline sequencing module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsfsError {
    #[error("duplicate function id {0}")]
    DuplicateFunction(FunctionId),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("sequence does not match request counts: {0}")]
    Multiplicity(String),
    #[error("instance has {requests} requests; the oracle accepts at most {max}")]
    TooLarge { requests: usize, max: usize },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("unsupported header {0:?}; expected func,end_timestamp,duration or func,arrival,duration")]
    Header(Vec<String>),
    #[error("invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("negative observation {value} for function {function}")]
    NegativeObservation { function: FunctionId, value: f64 },
    #[error("request {0} has not completed")]
    Incomplete(RequestId),
}
