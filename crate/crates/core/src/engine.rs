//! Deterministic discrete-event loop.
//!
//! The engine owns the clock, the event queue, the server state and the
//! estimators. It executes instance lifecycles (cold start, execution,
//! eviction) and calls the scheduler on request arrival and on request
//! completion. Every action a scheduler returns is validated against the
//! current state; an invalid action aborts the run.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::model::{
    FunctionId, FunctionProfile, InstanceId, InstanceState, Request, RequestId, ServerState, Time,
};
use crate::schedulers::{RemainingCount, Scheduler, SchedulerAction, SchedulerKind, SchedulerView};
use crate::stats::{Estimator, PriorConfig, PriorMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EventKind {
    ExecutionDone {
        instance: InstanceId,
        request: RequestId,
    },
    EvictionDone {
        instance: InstanceId,
        pending: Option<FunctionId>,
    },
    ColdStartDone {
        instance: InstanceId,
    },
    Arrival {
        request: RequestId,
    },
    /// Scheduler-armed timer for a waiting request.
    Timer {
        request: RequestId,
    },
}

impl EventKind {
    /// Rank among events sharing a timestamp: capacity is freed and queues
    /// drained before new work is admitted.
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::ExecutionDone { .. } => 0,
            EventKind::EvictionDone { .. } => 1,
            EventKind::ColdStartDone { .. } => 2,
            EventKind::Arrival { .. } => 3,
            EventKind::Timer { .. } => 4,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EventKind::ExecutionDone { .. } => "execution_done",
            EventKind::EvictionDone { .. } => "eviction_done",
            EventKind::ColdStartDone { .. } => "cold_start_done",
            EventKind::Arrival { .. } => "arrival",
            EventKind::Timer { .. } => "timer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: Time,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.priority().cmp(&other.kind.priority()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub capacity: usize,
    pub rng_seed: u64,
    pub cold_start_range: [Time; 2],
    pub eviction_range: [Time; 2],
    pub intensity_ratio: f64,
    pub scheduler: SchedulerKind,
    pub v2_wait_threshold: Time,
    pub prior_mode: PriorMode,
    /// Execution-time estimate used before anything has completed.
    pub prior_exec: Time,
    pub remaining_count: RemainingCount,
    pub record_events: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            capacity: 16,
            rng_seed: 0,
            cold_start_range: [500.0, 1500.0],
            eviction_range: [500.0, 1500.0],
            intensity_ratio: 1.0,
            scheduler: SchedulerKind::Esff,
            v2_wait_threshold: 100.0,
            prior_mode: PriorMode::Global,
            prior_exec: 1000.0,
            remaining_count: RemainingCount::Candidate,
            record_events: false,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.to_string()));
        if self.capacity == 0 {
            return bad("capacity must be at least 1");
        }
        for (name, [lo, hi]) in [
            ("cold_start_range", self.cold_start_range),
            ("eviction_range", self.eviction_range),
        ] {
            if !(lo >= 0.0 && lo <= hi) {
                return Err(SimError::Invalid(format!("{name} must satisfy 0 <= lower <= upper")));
            }
        }
        if !(self.intensity_ratio > 0.0) {
            return bad("intensity_ratio must be positive");
        }
        if !(self.v2_wait_threshold >= 0.0) {
            return bad("v2_wait_threshold must be non-negative");
        }
        if !(self.prior_exec > 0.0) {
            return bad("prior_exec must be positive");
        }
        Ok(())
    }

    /// Prior for the estimators: configured execution constant, range
    /// midpoints for cold start and eviction.
    pub fn prior(&self) -> PriorConfig {
        PriorConfig {
            mode: self.prior_mode,
            exec: self.prior_exec,
            cold_start: 0.5 * (self.cold_start_range[0] + self.cold_start_range[1]),
            eviction: 0.5 * (self.eviction_range[0] + self.eviction_range[1]),
        }
    }

    /// Draws one ground-truth cold-start and eviction time per function,
    /// uniformly from the configured ranges.
    pub fn draw_profiles(&self, function_count: usize, seed: u64) -> Vec<FunctionProfile> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |[lo, hi]: [Time; 2]| if lo == hi { lo } else { rng.random_range(lo..hi) };
        (0..function_count)
            .map(|i| {
                let cold_start = draw(self.cold_start_range);
                let eviction = draw(self.eviction_range);
                FunctionProfile::new(i as u32, cold_start, eviction)
            })
            .collect()
    }
}

/// A cold start or an eviction: when it began and how long it took.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionRecord {
    pub function_id: FunctionId,
    pub time: Time,
    pub duration: Time,
    /// For cold starts: true when the slot was free, false when it was
    /// handed over by an eviction.
    pub fresh: bool,
}

/// One processed event, rendered as `time_ms,kind,function_id,instance_id,request_id`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventLogEntry {
    pub time: Time,
    pub kind: &'static str,
    pub function_id: Option<FunctionId>,
    pub instance_id: Option<InstanceId>,
    pub request_id: Option<RequestId>,
}

impl fmt::Display for EventLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn opt<T: fmt::Display>(x: &Option<T>) -> String {
            x.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        write!(
            f,
            "{},{},{},{},{}",
            self.time,
            self.kind,
            opt(&self.function_id),
            opt(&self.instance_id),
            opt(&self.request_id)
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimulationResult {
    /// Completed requests, in input order.
    pub requests: Vec<Request>,
    pub cold_start_events: Vec<TransitionRecord>,
    pub eviction_events: Vec<TransitionRecord>,
    pub replacement_count: usize,
    /// Highest slot occupancy seen at any event boundary.
    pub peak_slots: usize,
    pub event_log: Vec<EventLogEntry>,
}

impl SimulationResult {
    pub fn event_log_text(&self) -> String {
        let mut s = String::new();
        for e in &self.event_log {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RequestStatus {
    NotArrived,
    Arrived,
    Queued,
    Running,
    Done,
}

/// Requests plus their engine-side status. Schedulers only see the
/// arrival time and function of a request through [`SchedulerView`].
#[derive(Debug, Clone)]
pub(crate) struct RequestTable {
    pub(crate) requests: Vec<Request>,
    pub(crate) status: Vec<RequestStatus>,
    index: HashMap<RequestId, usize>,
}

impl RequestTable {
    pub(crate) fn new(requests: Vec<Request>) -> Result<Self, SimError> {
        let mut index = HashMap::with_capacity(requests.len());
        for (i, r) in requests.iter().enumerate() {
            if index.insert(r.id, i).is_some() {
                return Err(SimError::DuplicateRequest(r.id));
            }
        }
        let status = vec![RequestStatus::NotArrived; requests.len()];
        Ok(Self {
            requests,
            status,
            index,
        })
    }

    #[cfg(test)]
    pub(crate) fn push(&mut self, request: Request, status: RequestStatus) {
        self.index.insert(request.id, self.requests.len());
        self.requests.push(request);
        self.status.push(status);
    }

    pub(crate) fn idx(&self, id: RequestId) -> Result<usize, SimError> {
        self.index.get(&id).copied().ok_or(SimError::UnknownRequest(id))
    }

    pub(crate) fn get(&self, id: RequestId) -> Option<&Request> {
        self.index.get(&id).map(|&i| &self.requests[i])
    }

    pub(crate) fn status(&self, id: RequestId) -> Option<RequestStatus> {
        self.index.get(&id).map(|&i| self.status[i])
    }
}

/// Which scheduler hook produced a batch of actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hook {
    Arrival(RequestId),
    Completion(InstanceId),
    Ready(InstanceId),
    Timer(RequestId),
}

/// A scheduler decision, shown to observers before it is applied.
pub struct Decision<'a> {
    pub hook: Hook,
    pub view: &'a SchedulerView<'a>,
    pub actions: &'a [SchedulerAction],
}

pub trait DecisionObserver {
    fn observe(&mut self, decision: &Decision<'_>);
}

impl<F: FnMut(&Decision<'_>)> DecisionObserver for F {
    fn observe(&mut self, decision: &Decision<'_>) {
        self(decision)
    }
}

/// One simulation run in progress.
pub struct Simulation<'p> {
    now: Time,
    seq: u64,
    events: BinaryHeap<Reverse<Event>>,
    server: ServerState,
    stats: Estimator,
    requests: RequestTable,
    profiles: &'p [FunctionProfile],
    config: SimulationConfig,
    result: SimulationResult,
    completed: usize,
}

impl<'p> Simulation<'p> {
    pub fn new(
        trace: &[Request],
        profiles: &'p [FunctionProfile],
        config: &SimulationConfig,
    ) -> Result<Self, SimError> {
        config.validate()?;
        for (i, p) in profiles.iter().enumerate() {
            if p.id.index() != i {
                return Err(SimError::Invalid(format!(
                    "profile at position {i} has id {}; profiles must be indexed by function id",
                    p.id
                )));
            }
            if !(p.cold_start >= 0.0 && p.eviction >= 0.0) {
                return Err(SimError::Invalid(format!("function {} has negative delays", p.id)));
            }
        }
        let mut prev = 0.0;
        for r in trace {
            if r.function_id.index() >= profiles.len() {
                return Err(SimError::UnknownFunction(r.function_id));
            }
            if !(r.exec_time > 0.0) {
                return Err(SimError::Invalid(format!("request {} has non-positive execution time", r.id)));
            }
            if !(r.arrival >= 0.0) || r.arrival < prev {
                return Err(SimError::Invalid(format!(
                    "request {} breaks non-negative, sorted arrivals",
                    r.id
                )));
            }
            prev = r.arrival;
        }
        let fresh: Vec<Request> = trace
            .iter()
            .map(|r| Request {
                start: None,
                completion: None,
                ..r.clone()
            })
            .collect();
        let mut sim = Self {
            now: 0.0,
            seq: 0,
            events: BinaryHeap::with_capacity(trace.len() + 64),
            server: ServerState::new(config.capacity, profiles.len()),
            stats: Estimator::new(profiles.len(), config.prior()),
            requests: RequestTable::new(fresh)?,
            profiles,
            config: *config,
            result: SimulationResult::default(),
            completed: 0,
        };
        for r in trace {
            sim.push(r.arrival, EventKind::Arrival { request: r.id });
        }
        Ok(sim)
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn stats(&self) -> &Estimator {
        &self.stats
    }

    /// Pending events in processing order.
    pub fn pending_events(&self) -> Vec<Event> {
        let mut v: Vec<Event> = self.events.iter().map(|r| r.0).collect();
        v.sort();
        v
    }

    fn push(&mut self, time: Time, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.events.push(Reverse(Event { time, seq, kind }));
    }

    fn profile(&self, f: FunctionId) -> Result<&FunctionProfile, SimError> {
        self.profiles.get(f.index()).ok_or(SimError::UnknownFunction(f))
    }

    /// Occupies a free slot with a new Initializing instance of `f`.
    pub fn schedule_cold_start(&mut self, f: FunctionId) -> Result<InstanceId, SimError> {
        let cold = self.profile(f)?.cold_start;
        let id = self.server.add_instance(f, self.now)?;
        self.result.cold_start_events.push(TransitionRecord {
            function_id: f,
            time: self.now,
            duration: cold,
            fresh: true,
        });
        self.push(self.now + cold, EventKind::ColdStartDone { instance: id });
        Ok(id)
    }

    /// Starts evicting the Idle `victim`; once done, its slot cold-starts `f`.
    pub fn schedule_replacement(&mut self, victim: InstanceId, f: FunctionId) -> Result<(), SimError> {
        self.profile(f)?;
        let inst = self.server.instance(victim).ok_or(SimError::UnknownInstance(victim))?;
        if inst.state != InstanceState::Idle {
            return Err(SimError::InvalidTransition {
                instance: victim,
                from: inst.state,
                to: InstanceState::Evicting,
            });
        }
        let victim_fn = inst.function_id;
        let eviction = self.profile(victim_fn)?.eviction;
        let now = self.now;
        let inst = self.server.transition(victim, InstanceState::Evicting, now)?;
        inst.replacing_with = Some(f);
        self.result.eviction_events.push(TransitionRecord {
            function_id: victim_fn,
            time: now,
            duration: eviction,
            fresh: false,
        });
        self.result.replacement_count += 1;
        self.push(
            now + eviction,
            EventKind::EvictionDone {
                instance: victim,
                pending: Some(f),
            },
        );
        Ok(())
    }

    fn start_request(&mut self, instance: InstanceId, request: RequestId) -> Result<(), SimError> {
        let idx = self.requests.idx(request)?;
        let now = self.now;
        let inst = self.server.transition(instance, InstanceState::Busy, now)?;
        inst.current_request = Some(request);
        inst.last_used = now;
        let req = &mut self.requests.requests[idx];
        req.start = Some(now);
        let done = now + req.exec_time;
        self.requests.status[idx] = RequestStatus::Running;
        self.push(done, EventKind::ExecutionDone { instance, request });
        Ok(())
    }

    fn log(&mut self, kind: &EventKind, f: Option<FunctionId>) {
        if !self.config.record_events {
            return;
        }
        let (instance_id, request_id) = match *kind {
            EventKind::ExecutionDone { instance, request } => (Some(instance), Some(request)),
            EventKind::EvictionDone { instance, .. } | EventKind::ColdStartDone { instance } => {
                (Some(instance), None)
            }
            EventKind::Arrival { request } | EventKind::Timer { request } => (None, Some(request)),
        };
        self.result.event_log.push(EventLogEntry {
            time: self.now,
            kind: kind.label(),
            function_id: f,
            instance_id,
            request_id,
        });
    }

    fn call<S: Scheduler + ?Sized>(
        &mut self,
        scheduler: &mut S,
        hook: Hook,
        observer: &mut Option<&mut (dyn DecisionObserver + '_)>,
    ) -> Result<(), SimError> {
        let view = SchedulerView {
            now: self.now,
            server: &self.server,
            stats: &self.stats,
            requests: &self.requests,
        };
        let actions = match hook {
            Hook::Arrival(r) => scheduler.on_arrival(r, &view),
            Hook::Completion(k) => scheduler.on_completion(k, &view),
            Hook::Ready(k) => scheduler.on_ready(k, &view),
            Hook::Timer(r) => scheduler.on_timer(r, &view),
        };
        if let Some(obs) = observer.as_deref_mut() {
            obs.observe(&Decision {
                hook,
                view: &view,
                actions: &actions,
            });
        }
        for action in actions {
            self.apply(action)?;
        }
        Ok(())
    }

    fn apply(&mut self, action: SchedulerAction) -> Result<(), SimError> {
        let contract = |m: String| Err(SimError::Contract(m));
        match action {
            SchedulerAction::DispatchToIdle(k, r) => {
                let idx = self.requests.idx(r)?;
                let f = self.requests.requests[idx].function_id;
                let inst = self.server.instance(k).ok_or(SimError::UnknownInstance(k))?;
                if inst.function_id != f || inst.state != InstanceState::Idle {
                    return contract(format!("dispatch of {r} to instance {k} that is not an idle instance of {f}"));
                }
                match self.requests.status[idx] {
                    RequestStatus::Arrived => {}
                    RequestStatus::Queued => {
                        self.server.remove_queued(f, r);
                    }
                    s => return contract(format!("dispatch of request {r} in state {s:?}")),
                }
                self.start_request(k, r)
            }
            SchedulerAction::Enqueue(r) => {
                let idx = self.requests.idx(r)?;
                if self.requests.status[idx] != RequestStatus::Arrived {
                    return contract(format!("enqueue of request {r} that is not freshly arrived"));
                }
                let f = self.requests.requests[idx].function_id;
                self.server.enqueue(f, r);
                self.requests.status[idx] = RequestStatus::Queued;
                Ok(())
            }
            SchedulerAction::InitializeNew(f) => self.schedule_cold_start(f).map(|_| ()),
            SchedulerAction::Replace(victim, f) => self.schedule_replacement(victim, f),
            SchedulerAction::TakeFromQueue(k, r) => {
                let inst = self.server.instance(k).ok_or(SimError::UnknownInstance(k))?;
                let f = inst.function_id;
                if inst.state != InstanceState::Idle {
                    return contract(format!("instance {k} is {:?}, cannot take work", inst.state));
                }
                if !self.server.remove_queued(f, r) {
                    return contract(format!("request {r} is not waiting in the queue of {f}"));
                }
                self.start_request(k, r)
            }
            SchedulerAction::GoIdle(k) => {
                let inst = self.server.instance(k).ok_or(SimError::UnknownInstance(k))?;
                if inst.state != InstanceState::Idle {
                    return contract(format!("instance {k} told to idle while {:?}", inst.state));
                }
                Ok(())
            }
            SchedulerAction::ArmTimer { at, request } => {
                self.requests.idx(request)?;
                if !(at >= self.now) {
                    return contract(format!("timer for {request} set in the past"));
                }
                self.push(at, EventKind::Timer { request });
                Ok(())
            }
        }
    }

    /// Processes the next event. Returns `Ok(false)` once the queue is empty.
    pub fn step<S: Scheduler + ?Sized>(
        &mut self,
        scheduler: &mut S,
        mut observer: Option<&mut (dyn DecisionObserver + '_)>,
    ) -> Result<bool, SimError> {
        let Some(Reverse(event)) = self.events.pop() else {
            return Ok(false);
        };
        debug_assert!(event.time >= self.now);
        self.now = event.time;
        match event.kind {
            EventKind::Arrival { request } => {
                let idx = self.requests.idx(request)?;
                let f = self.requests.requests[idx].function_id;
                self.log(&event.kind, Some(f));
                self.requests.status[idx] = RequestStatus::Arrived;
                self.call(scheduler, Hook::Arrival(request), &mut observer)?;
                match self.requests.status[idx] {
                    RequestStatus::Queued | RequestStatus::Running => {}
                    _ => {
                        return Err(SimError::Contract(format!(
                            "request {request} was neither dispatched nor enqueued on arrival"
                        )))
                    }
                }
            }
            EventKind::ExecutionDone { instance, request } => {
                let idx = self.requests.idx(request)?;
                let (f, exec) = {
                    let r = &mut self.requests.requests[idx];
                    r.completion = Some(self.now);
                    (r.function_id, r.exec_time)
                };
                self.log(&event.kind, Some(f));
                self.requests.status[idx] = RequestStatus::Done;
                self.completed += 1;
                self.stats
                    .record_execution(f, exec)
                    .map_err(|e| SimError::Invalid(e.to_string()))?;
                let now = self.now;
                let inst = self.server.transition(instance, InstanceState::Idle, now)?;
                inst.last_used = now;
                self.call(scheduler, Hook::Completion(instance), &mut observer)?;
            }
            EventKind::ColdStartDone { instance } => {
                let f = self
                    .server
                    .instance(instance)
                    .ok_or(SimError::UnknownInstance(instance))?
                    .function_id;
                self.log(&event.kind, Some(f));
                let cold = self.profile(f)?.cold_start;
                self.stats
                    .record_cold_start(f, cold)
                    .map_err(|e| SimError::Invalid(e.to_string()))?;
                if let Some(r) = self.server.pop_front(f) {
                    self.start_request(instance, r)?;
                } else {
                    self.server.transition(instance, InstanceState::Idle, self.now)?;
                    self.call(scheduler, Hook::Ready(instance), &mut observer)?;
                }
            }
            EventKind::EvictionDone { instance, pending } => {
                let old = self
                    .server
                    .remove_instance(instance)
                    .ok_or(SimError::UnknownInstance(instance))?;
                self.log(&event.kind, Some(old.function_id));
                let ev = self.profile(old.function_id)?.eviction;
                self.stats
                    .record_eviction(old.function_id, ev)
                    .map_err(|e| SimError::Invalid(e.to_string()))?;
                if let Some(f) = pending {
                    let cold = self.profile(f)?.cold_start;
                    let id = self.server.insert_instance(f, self.now);
                    self.result.cold_start_events.push(TransitionRecord {
                        function_id: f,
                        time: self.now,
                        duration: cold,
                        fresh: false,
                    });
                    self.push(self.now + cold, EventKind::ColdStartDone { instance: id });
                }
            }
            EventKind::Timer { request } => {
                let f = self
                    .requests
                    .get(request)
                    .ok_or(SimError::UnknownRequest(request))?
                    .function_id;
                self.log(&event.kind, Some(f));
                self.call(scheduler, Hook::Timer(request), &mut observer)?;
            }
        }
        self.check_invariants()?;
        Ok(true)
    }

    fn check_invariants(&mut self) -> Result<(), SimError> {
        let slots = self.server.total_slots();
        if slots > self.server.capacity() {
            return Err(SimError::CapacityExceeded {
                capacity: self.server.capacity(),
            });
        }
        self.result.peak_slots = self.result.peak_slots.max(slots);
        if let Some(f) = self.server.idle_with_queue() {
            return Err(SimError::Contract(format!(
                "function {f} has an idle instance while requests wait in its queue"
            )));
        }
        Ok(())
    }

    pub fn run_to_end<S: Scheduler + ?Sized>(
        mut self,
        scheduler: &mut S,
        mut observer: Option<&mut dyn DecisionObserver>,
    ) -> Result<SimulationResult, SimError> {
        while self.step(scheduler, observer.as_deref_mut())? {}
        let total = self.requests.requests.len();
        if self.completed != total {
            return Err(SimError::Stalled {
                pending: total - self.completed,
            });
        }
        self.result.requests = self.requests.requests;
        Ok(self.result)
    }
}

/// Runs `trace` to completion under `scheduler`.
pub fn run<S: Scheduler + ?Sized>(
    trace: &[Request],
    profiles: &[FunctionProfile],
    config: &SimulationConfig,
    scheduler: &mut S,
) -> Result<SimulationResult, SimError> {
    Simulation::new(trace, profiles, config)?.run_to_end(scheduler, None)
}

/// Like [`run`], reporting every scheduler decision to `observer` before it
/// takes effect.
pub fn run_observed<S: Scheduler + ?Sized>(
    trace: &[Request],
    profiles: &[FunctionProfile],
    config: &SimulationConfig,
    scheduler: &mut S,
    observer: &mut dyn DecisionObserver,
) -> Result<SimulationResult, SimError> {
    Simulation::new(trace, profiles, config)?.run_to_end(scheduler, Some(observer))
}
