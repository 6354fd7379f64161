//! Hand-built server snapshots for scheduler unit tests.

use super::SchedulerView;
use crate::engine::{RequestStatus, RequestTable};
use crate::model::{FunctionId, InstanceId, InstanceState, Request, RequestId, ServerState, Time};
use crate::stats::{Estimator, PriorConfig};

pub(crate) struct Fixture {
    pub now: Time,
    pub server: ServerState,
    pub stats: Estimator,
    pub requests: RequestTable,
    next_request: u64,
}

impl Fixture {
    pub fn new(capacity: usize, functions: usize) -> Self {
        Self {
            now: 0.0,
            server: ServerState::new(capacity, functions),
            stats: Estimator::new(functions, PriorConfig::default()),
            requests: RequestTable::new(Vec::new()).unwrap(),
            next_request: 0,
        }
    }

    pub fn instance(&mut self, f: u32, state: InstanceState) -> InstanceId {
        let id = self.server.add_instance(FunctionId(f), self.now).unwrap();
        match state {
            InstanceState::Initializing => {}
            InstanceState::Idle => {
                self.server.transition(id, InstanceState::Idle, self.now).unwrap();
            }
            InstanceState::Busy => {
                self.server.transition(id, InstanceState::Busy, self.now).unwrap();
            }
            InstanceState::Evicting => {
                self.server.transition(id, InstanceState::Idle, self.now).unwrap();
                self.server.transition(id, InstanceState::Evicting, self.now).unwrap();
            }
        }
        id
    }

    pub fn set_last_used(&mut self, id: InstanceId, t: Time) {
        self.server.transition(id, InstanceState::Busy, t).unwrap();
        self.server.transition(id, InstanceState::Idle, t).unwrap().last_used = t;
    }

    fn request(&mut self, f: u32, status: RequestStatus) -> RequestId {
        let id = self.next_request;
        self.next_request += 1;
        self.requests
            .push(Request::new(id, FunctionId(f), self.now, 1.0), status);
        RequestId(id)
    }

    pub fn queued(&mut self, f: u32) -> RequestId {
        let r = self.request(f, RequestStatus::Queued);
        self.server.enqueue(FunctionId(f), r);
        r
    }

    pub fn arrive(&mut self, f: u32) -> RequestId {
        self.request(f, RequestStatus::Arrived)
    }

    pub fn view(&self) -> SchedulerView<'_> {
        SchedulerView {
            now: self.now,
            server: &self.server,
            stats: &self.stats,
            requests: &self.requests,
        }
    }
}
