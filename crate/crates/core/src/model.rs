//! Domain types shared by the simulator: requests, function profiles,
//! instances and the edge-server capacity ledger.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Simulated wall-clock time in milliseconds. All timestamps within one run
/// share the same epoch.
pub type Time = f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u64);

impl FunctionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One function invocation.
///
/// `exec_time` is ground truth; schedulers never see it before the request
/// completes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub function_id: FunctionId,
    pub arrival: Time,
    pub exec_time: Time,
    pub start: Option<Time>,
    pub completion: Option<Time>,
}

impl Request {
    pub fn new(id: u64, function_id: FunctionId, arrival: Time, exec_time: Time) -> Self {
        Self {
            id: RequestId(id),
            function_id,
            arrival,
            exec_time,
            start: None,
            completion: None,
        }
    }

    pub fn response_time(&self) -> Option<Time> {
        self.completion.map(|c| c - self.arrival)
    }
}

/// Ground-truth cold-start and eviction delays of one function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionProfile {
    pub id: FunctionId,
    pub cold_start: Time,
    pub eviction: Time,
}

impl FunctionProfile {
    pub fn new(id: u32, cold_start: Time, eviction: Time) -> Self {
        Self {
            id: FunctionId(id),
            cold_start,
            eviction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstanceState {
    Initializing,
    Idle,
    Busy,
    Evicting,
}

impl InstanceState {
    fn can_enter(self, next: InstanceState) -> bool {
        use InstanceState::*;
        matches!(
            (self, next),
            (Initializing, Idle)
                | (Initializing, Busy)
                | (Idle, Busy)
                | (Busy, Idle)
                | (Idle, Evicting)
        )
    }
}

/// One slot on the edge server holding an instance of a function.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: InstanceId,
    pub function_id: FunctionId,
    pub state: InstanceState,
    pub state_entered_at: Time,
    pub current_request: Option<RequestId>,
    /// Function that takes over this slot once eviction finishes.
    pub replacing_with: Option<FunctionId>,
    /// Last time the instance finished (or began) serving a request.
    pub last_used: Time,
}

/// Instances, per-function FIFO queues and the capacity `C` of the server.
#[derive(Debug, Clone)]
pub struct ServerState {
    capacity: usize,
    function_count: usize,
    instances: BTreeMap<InstanceId, Instance>,
    queues: Vec<VecDeque<RequestId>>,
    waiting_functions: BTreeSet<FunctionId>,
    next_instance: u64,
}

impl ServerState {
    pub fn new(capacity: usize, function_count: usize) -> Self {
        Self {
            capacity,
            function_count,
            instances: BTreeMap::new(),
            queues: vec![VecDeque::new(); function_count],
            waiting_functions: BTreeSet::new(),
            next_instance: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn function_count(&self) -> usize {
        self.function_count
    }

    fn check_function(&self, f: FunctionId) -> Result<(), SimError> {
        if f.index() < self.function_count {
            Ok(())
        } else {
            Err(SimError::UnknownFunction(f))
        }
    }

    /// Number of instances of `f` currently in the Idle state.
    pub fn idle_count(&self, f: FunctionId) -> Result<usize, SimError> {
        self.check_function(f)?;
        Ok(self
            .instances_of(f)
            .filter(|i| i.state == InstanceState::Idle)
            .count())
    }

    /// Occupied slots in any lifecycle state, transitioning ones included.
    pub fn total_slots(&self) -> usize {
        self.instances.len()
    }

    pub fn has_free_slot(&self) -> bool {
        self.total_slots() < self.capacity
    }

    pub fn instance(&self, id: InstanceId) -> Option<&Instance> {
        self.instances.get(&id)
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.values()
    }

    /// Slots currently bound to `f`, excluding slots evicting on behalf of
    /// another function.
    pub fn instances_of(&self, f: FunctionId) -> impl Iterator<Item = &Instance> {
        self.instances.values().filter(move |i| i.function_id == f)
    }

    /// `|K^j|`: instances that serve or will serve `f`. Counts Initializing,
    /// Idle and Busy instances of `f`, plus slots being evicted so that an
    /// instance of `f` can take them over.
    pub fn committed_count(&self, f: FunctionId) -> usize {
        self.instances
            .values()
            .filter(|i| match i.state {
                InstanceState::Evicting => i.replacing_with == Some(f),
                _ => i.function_id == f,
            })
            .count()
    }

    /// Instances of `f` that are not yet able to serve: initializing ones and
    /// evicting slots destined for `f`.
    pub fn pending_count(&self, f: FunctionId) -> usize {
        self.instances
            .values()
            .filter(|i| match i.state {
                InstanceState::Evicting => i.replacing_with == Some(f),
                InstanceState::Initializing => i.function_id == f,
                _ => false,
            })
            .count()
    }

    /// Least-recently-used Idle instance of `f` (ties by instance id).
    pub fn lru_idle_of(&self, f: FunctionId) -> Option<InstanceId> {
        self.instances_of(f)
            .filter(|i| i.state == InstanceState::Idle)
            .min_by(|a, b| a.last_used.total_cmp(&b.last_used).then(a.id.cmp(&b.id)))
            .map(|i| i.id)
    }

    pub fn queue(&self, f: FunctionId) -> &VecDeque<RequestId> {
        &self.queues[f.index()]
    }

    /// `n^w_j`: requests waiting in `q_j`.
    pub fn waiting_count(&self, f: FunctionId) -> usize {
        self.queues[f.index()].len()
    }

    /// Functions with at least one waiting request, in ascending id order.
    pub fn waiting_functions(&self) -> impl Iterator<Item = FunctionId> + '_ {
        self.waiting_functions.iter().copied()
    }

    pub fn total_waiting(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub(crate) fn enqueue(&mut self, f: FunctionId, r: RequestId) {
        self.queues[f.index()].push_back(r);
        self.waiting_functions.insert(f);
    }

    pub(crate) fn pop_front(&mut self, f: FunctionId) -> Option<RequestId> {
        let q = &mut self.queues[f.index()];
        let r = q.pop_front();
        if q.is_empty() {
            self.waiting_functions.remove(&f);
        }
        r
    }

    pub(crate) fn remove_queued(&mut self, f: FunctionId, r: RequestId) -> bool {
        let q = &mut self.queues[f.index()];
        let Some(pos) = q.iter().position(|&x| x == r) else {
            return false;
        };
        q.remove(pos);
        if q.is_empty() {
            self.waiting_functions.remove(&f);
        }
        true
    }

    pub(crate) fn add_instance(&mut self, f: FunctionId, now: Time) -> Result<InstanceId, SimError> {
        self.check_function(f)?;
        if !self.has_free_slot() {
            return Err(SimError::CapacityExceeded {
                capacity: self.capacity,
            });
        }
        Ok(self.insert_instance(f, now))
    }

    /// Inserts without the capacity guard; used when a slot is handed over
    /// from an evicted instance.
    pub(crate) fn insert_instance(&mut self, f: FunctionId, now: Time) -> InstanceId {
        let id = InstanceId(self.next_instance);
        self.next_instance += 1;
        self.instances.insert(
            id,
            Instance {
                id,
                function_id: f,
                state: InstanceState::Initializing,
                state_entered_at: now,
                current_request: None,
                replacing_with: None,
                last_used: now,
            },
        );
        id
    }

    pub(crate) fn remove_instance(&mut self, id: InstanceId) -> Option<Instance> {
        self.instances.remove(&id)
    }

    pub(crate) fn transition(
        &mut self,
        id: InstanceId,
        next: InstanceState,
        now: Time,
    ) -> Result<&mut Instance, SimError> {
        let inst = self
            .instances
            .get_mut(&id)
            .ok_or(SimError::UnknownInstance(id))?;
        if !inst.state.can_enter(next) {
            return Err(SimError::InvalidTransition {
                instance: id,
                from: inst.state,
                to: next,
            });
        }
        inst.state = next;
        inst.state_entered_at = now;
        if next != InstanceState::Busy {
            inst.current_request = None;
        }
        Ok(inst)
    }

    /// First function found holding an Idle instance while its queue is
    /// non-empty, if any.
    pub fn idle_with_queue(&self) -> Option<FunctionId> {
        self.waiting_functions
            .iter()
            .copied()
            .find(|&f| self.instances_of(f).any(|i| i.state == InstanceState::Idle))
    }
}
