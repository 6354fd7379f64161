//! Scheduler interface and the built-in policies.
//!
//! A scheduler is consulted when a request arrives and when an instance
//! finishes a request. It answers with an ordered list of
//! [`SchedulerAction`]s that the engine validates and applies.

mod baselines;
mod esff;
#[cfg(test)]
mod testkit;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{RequestStatus, RequestTable, SimulationConfig};
use crate::model::{FunctionId, InstanceId, RequestId, ServerState, Time};
use crate::stats::Estimator;

pub use baselines::{CentralQueue, OpenWhiskV2, QueueOrder, VictimPolicy};
pub use esff::{RemainingCount, Esff};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SchedulerAction {
    /// Start the request on an Idle instance of its function.
    DispatchToIdle(InstanceId, RequestId),
    /// Put a freshly arrived request in its function's queue.
    Enqueue(RequestId),
    /// Cold-start a new instance in a free slot.
    InitializeNew(FunctionId),
    /// Evict an Idle instance and cold-start the given function in its slot.
    Replace(InstanceId, FunctionId),
    /// Start a queued request of the instance's function.
    TakeFromQueue(InstanceId, RequestId),
    /// Leave the instance Idle.
    GoIdle(InstanceId),
    /// Wake the scheduler at `at` through [`Scheduler::on_timer`].
    ArmTimer { at: Time, request: RequestId },
}

/// Per-function inputs to the weight and instance-count estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightInputs {
    pub avg_exec: Time,
    pub avg_cold_start: Time,
    pub avg_eviction: Time,
    /// `|K^j|`, see [`ServerState::committed_count`].
    pub instance_count: usize,
    /// `n^w_j`.
    pub waiting_count: usize,
}

/// Read-only state handed to scheduler hooks. Execution times of requests
/// that have not completed are not reachable from here.
pub struct SchedulerView<'a> {
    pub now: Time,
    pub server: &'a ServerState,
    pub stats: &'a Estimator,
    pub(crate) requests: &'a RequestTable,
}

impl SchedulerView<'_> {
    pub fn function_of(&self, r: RequestId) -> FunctionId {
        self.requests.get(r).expect("scheduler asked about an unknown request").function_id
    }

    pub fn arrival_of(&self, r: RequestId) -> Time {
        self.requests.get(r).expect("scheduler asked about an unknown request").arrival
    }

    pub fn is_waiting(&self, r: RequestId) -> bool {
        self.requests.status(r) == Some(RequestStatus::Queued)
    }

    pub fn weight_inputs(&self, f: FunctionId) -> WeightInputs {
        let est = self.stats.estimate(f);
        WeightInputs {
            avg_exec: est.avg_exec,
            avg_cold_start: est.avg_cold_start,
            avg_eviction: est.avg_eviction,
            instance_count: self.server.committed_count(f),
            waiting_count: self.server.waiting_count(f),
        }
    }

    /// Queued requests of `f` not matched by an instance on its way up.
    pub fn uncovered(&self, f: FunctionId) -> usize {
        self.server
            .waiting_count(f)
            .saturating_sub(self.server.pending_count(f))
    }
}

pub trait Scheduler {
    fn name(&self) -> &str;

    fn on_arrival(&mut self, request: RequestId, view: &SchedulerView<'_>) -> Vec<SchedulerAction>;

    /// `instance` has just finished a request and is Idle.
    fn on_completion(&mut self, instance: InstanceId, view: &SchedulerView<'_>)
        -> Vec<SchedulerAction>;

    /// `instance` finished its cold start and found its queue empty.
    fn on_ready(&mut self, _instance: InstanceId, _view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        Vec::new()
    }

    fn on_timer(&mut self, _request: RequestId, _view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        Vec::new()
    }
}

impl<S: Scheduler + ?Sized> Scheduler for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn on_arrival(&mut self, request: RequestId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        (**self).on_arrival(request, view)
    }
    fn on_completion(&mut self, instance: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        (**self).on_completion(instance, view)
    }
    fn on_ready(&mut self, instance: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        (**self).on_ready(instance, view)
    }
    fn on_timer(&mut self, request: RequestId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        (**self).on_timer(request, view)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(rename = "esff")]
    Esff,
    #[serde(rename = "fifo")]
    Fifo,
    #[serde(rename = "openwhisk-v2")]
    OpenWhiskV2,
    #[serde(rename = "faascache")]
    FaasCache,
    #[serde(rename = "sff")]
    Sff,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::Esff,
        SchedulerKind::Fifo,
        SchedulerKind::OpenWhiskV2,
        SchedulerKind::FaasCache,
        SchedulerKind::Sff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Esff => "esff",
            SchedulerKind::Fifo => "fifo",
            SchedulerKind::OpenWhiskV2 => "openwhisk-v2",
            SchedulerKind::FaasCache => "faascache",
            SchedulerKind::Sff => "sff",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown scheduler {s:?} (expected esff|fifo|openwhisk-v2|faascache|sff)"))
    }
}

pub fn build_scheduler(kind: SchedulerKind, config: &SimulationConfig) -> Box<dyn Scheduler> {
    match kind {
        SchedulerKind::Esff => Box::new(Esff::new(config.remaining_count)),
        SchedulerKind::Fifo => Box::new(CentralQueue::fifo()),
        SchedulerKind::Sff => Box::new(CentralQueue::sff()),
        SchedulerKind::FaasCache => Box::new(CentralQueue::faascache()),
        SchedulerKind::OpenWhiskV2 => Box::new(OpenWhiskV2::new(config.v2_wait_threshold)),
    }
}
