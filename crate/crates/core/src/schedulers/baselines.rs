//! Comparison policies: arrival-ordered central queue (OpenWhisk style),
//! its shortest-function-first and keep-alive-cache variants, and the
//! per-function-queue scheduler with a waiting threshold.

use std::collections::HashMap;

use super::{Scheduler, SchedulerAction, SchedulerView};
use crate::model::{FunctionId, InstanceId, InstanceState, RequestId, Time};

/// Order in which the central queue is served across functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueOrder {
    Arrival,
    /// Ascending average execution time of the request's function, as
    /// estimated when the request was enqueued; ties by arrival.
    AvgExec,
}

/// Which idle instance makes room for another function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VictimPolicy {
    LeastRecentlyUsed,
    /// Lowest `last_use + avg_exec + avg_cold_start`, a Greedy-Dual style
    /// keep-alive priority.
    GreedyDual,
}

/// Central-queue scheduler.
///
/// Arrivals go to an idle instance of their function when one exists;
/// otherwise every arrival starts a new instance if capacity allows, or
/// replaces an idle instance of another function. A finishing instance keeps
/// serving its own function's queue, then moves to the next uncovered
/// function in central-queue order.
#[derive(Debug, Clone)]
pub struct CentralQueue {
    name: &'static str,
    order: QueueOrder,
    victim: VictimPolicy,
    exec_keys: HashMap<RequestId, f64>,
}

impl CentralQueue {
    pub fn new(name: &'static str, order: QueueOrder, victim: VictimPolicy) -> Self {
        Self {
            name,
            order,
            victim,
            exec_keys: HashMap::new(),
        }
    }

    pub fn fifo() -> Self {
        Self::new("fifo", QueueOrder::Arrival, VictimPolicy::LeastRecentlyUsed)
    }

    pub fn sff() -> Self {
        Self::new("sff", QueueOrder::AvgExec, VictimPolicy::LeastRecentlyUsed)
    }

    pub fn faascache() -> Self {
        Self::new("faascache", QueueOrder::Arrival, VictimPolicy::GreedyDual)
    }

    fn pick_victim(&self, view: &SchedulerView<'_>, exclude: FunctionId) -> Option<InstanceId> {
        let score = |i: &crate::model::Instance| match self.victim {
            VictimPolicy::LeastRecentlyUsed => i.last_used,
            VictimPolicy::GreedyDual => {
                let est = view.stats.estimate(i.function_id);
                i.last_used + est.avg_exec + est.avg_cold_start
            }
        };
        view.server
            .instances()
            .filter(|i| i.state == InstanceState::Idle && i.function_id != exclude)
            .min_by(|a, b| score(a).total_cmp(&score(b)).then(a.id.cmp(&b.id)))
            .map(|i| i.id)
    }

    fn key(&self, view: &SchedulerView<'_>, r: RequestId) -> (f64, Time, RequestId) {
        let primary = match self.order {
            QueueOrder::Arrival => 0.0,
            QueueOrder::AvgExec => self.exec_keys.get(&r).copied().unwrap_or(0.0),
        };
        (primary, view.arrival_of(r), r)
    }

    /// Function whose queue head comes first among those with requests not
    /// yet matched by an incoming instance.
    fn next_uncovered(&self, view: &SchedulerView<'_>, exclude: FunctionId) -> Option<FunctionId> {
        view.server
            .waiting_functions()
            .filter(|&g| g != exclude && view.uncovered(g) > 0)
            .map(|g| (self.key(view, *view.server.queue(g).front().expect("waiting")), g))
            .min_by(|(a, _), (b, _)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
            .map(|(_, g)| g)
    }

    fn reassign(&self, k: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        let j = view.server.instance(k).expect("live instance").function_id;
        match self.next_uncovered(view, j) {
            Some(g) => vec![SchedulerAction::Replace(k, g)],
            None => vec![SchedulerAction::GoIdle(k)],
        }
    }
}

impl Scheduler for CentralQueue {
    fn name(&self) -> &str {
        self.name
    }

    fn on_arrival(&mut self, r: RequestId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        let server = view.server;
        let j = view.function_of(r);
        if let Some(k) = server.lru_idle_of(j) {
            return vec![SchedulerAction::DispatchToIdle(k, r)];
        }
        let mut out = Vec::with_capacity(2);
        if server.has_free_slot() {
            out.push(SchedulerAction::InitializeNew(j));
        } else if let Some(v) = self.pick_victim(view, j) {
            out.push(SchedulerAction::Replace(v, j));
        }
        if self.order == QueueOrder::AvgExec {
            self.exec_keys.insert(r, view.stats.estimate(j).avg_exec);
        }
        out.push(SchedulerAction::Enqueue(r));
        out
    }

    fn on_completion(&mut self, k: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        let j = view.server.instance(k).expect("live instance").function_id;
        if let Some(&head) = view.server.queue(j).front() {
            self.exec_keys.remove(&head);
            return vec![SchedulerAction::TakeFromQueue(k, head)];
        }
        self.reassign(k, view)
    }

    fn on_ready(&mut self, k: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        self.reassign(k, view)
    }
}

/// Per-function queues; an extra instance is provisioned only once a
/// request has waited `threshold` ms. A function with no instance at all
/// gets one immediately.
#[derive(Debug, Clone)]
pub struct OpenWhiskV2 {
    threshold: Time,
}

impl OpenWhiskV2 {
    pub fn new(threshold: Time) -> Self {
        Self { threshold }
    }

    fn provision(&self, f: FunctionId, view: &SchedulerView<'_>) -> Option<SchedulerAction> {
        if view.server.has_free_slot() {
            return Some(SchedulerAction::InitializeNew(f));
        }
        view.server
            .instances()
            .filter(|i| i.state == InstanceState::Idle && i.function_id != f)
            .min_by(|a, b| a.last_used.total_cmp(&b.last_used).then(a.id.cmp(&b.id)))
            .map(|i| SchedulerAction::Replace(i.id, f))
    }

    fn reassign(&self, k: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        let j = view.server.instance(k).expect("live instance").function_id;
        let overdue = view
            .server
            .waiting_functions()
            .filter(|&g| g != j && view.uncovered(g) > 0)
            .filter_map(|g| {
                let head = *view.server.queue(g).front()?;
                let arrival = view.arrival_of(head);
                (view.now - arrival >= self.threshold).then_some((arrival, head, g))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match overdue {
            Some((_, _, g)) => vec![SchedulerAction::Replace(k, g)],
            None => vec![SchedulerAction::GoIdle(k)],
        }
    }
}

impl Scheduler for OpenWhiskV2 {
    fn name(&self) -> &str {
        "openwhisk-v2"
    }

    fn on_arrival(&mut self, r: RequestId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        let j = view.function_of(r);
        if let Some(k) = view.server.lru_idle_of(j) {
            return vec![SchedulerAction::DispatchToIdle(k, r)];
        }
        let mut out = Vec::with_capacity(3);
        if view.server.committed_count(j) == 0 {
            out.extend(self.provision(j, view));
        }
        out.push(SchedulerAction::Enqueue(r));
        out.push(SchedulerAction::ArmTimer {
            at: view.arrival_of(r) + self.threshold,
            request: r,
        });
        out
    }

    fn on_completion(&mut self, k: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        let j = view.server.instance(k).expect("live instance").function_id;
        if let Some(&head) = view.server.queue(j).front() {
            return vec![SchedulerAction::TakeFromQueue(k, head)];
        }
        self.reassign(k, view)
    }

    fn on_ready(&mut self, k: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        self.reassign(k, view)
    }

    fn on_timer(&mut self, r: RequestId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        let j = view.function_of(r);
        if !view.is_waiting(r) || view.uncovered(j) == 0 {
            return Vec::new();
        }
        self.provision(j, view).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedulers::testkit::Fixture;
    use crate::schedulers::SchedulerAction::*;

    fn f(i: u32) -> FunctionId {
        FunctionId(i)
    }

    #[test]
    fn fifo_dispatches_to_idle_match() {
        let mut fx = Fixture::new(2, 2);
        let k = fx.instance(0, InstanceState::Idle);
        let r = fx.arrive(0);
        assert_eq!(CentralQueue::fifo().on_arrival(r, &fx.view()), vec![DispatchToIdle(k, r)]);
    }

    #[test]
    fn fifo_full_and_busy_enqueues() {
        let mut fx = Fixture::new(1, 2);
        fx.instance(1, InstanceState::Busy);
        let r = fx.arrive(0);
        assert_eq!(CentralQueue::fifo().on_arrival(r, &fx.view()), vec![Enqueue(r)]);
    }

    #[test]
    fn fifo_replaces_least_recently_used() {
        let mut fx = Fixture::new(2, 3);
        let a = fx.instance(1, InstanceState::Idle);
        let b = fx.instance(2, InstanceState::Idle);
        fx.set_last_used(a, 50.0);
        fx.set_last_used(b, 10.0);
        let r = fx.arrive(0);
        assert_eq!(
            CentralQueue::fifo().on_arrival(r, &fx.view()),
            vec![Replace(b, f(0)), Enqueue(r)]
        );
    }

    #[test]
    fn faascache_evicts_stale_cheap_instance() {
        // a: recent, expensive to recreate; b: stale, cheap.
        let mut fx = Fixture::new(2, 3);
        fx.stats.record_execution(f(1), 500.0).unwrap();
        fx.stats.record_cold_start(f(1), 1500.0).unwrap();
        fx.stats.record_execution(f(2), 20.0).unwrap();
        fx.stats.record_cold_start(f(2), 500.0).unwrap();
        let a = fx.instance(1, InstanceState::Idle);
        let b = fx.instance(2, InstanceState::Idle);
        fx.set_last_used(a, 100.0);
        fx.set_last_used(b, 90.0);
        let r = fx.arrive(0);
        assert_eq!(
            CentralQueue::faascache().on_arrival(r, &fx.view()),
            vec![Replace(b, f(0)), Enqueue(r)]
        );
    }

    #[test]
    fn faascache_full_without_idle_enqueues() {
        let mut fx = Fixture::new(1, 2);
        fx.instance(1, InstanceState::Initializing);
        let r = fx.arrive(0);
        assert_eq!(CentralQueue::faascache().on_arrival(r, &fx.view()), vec![Enqueue(r)]);
    }

    #[test]
    fn central_queue_prefers_own_function() {
        let mut fx = Fixture::new(1, 2);
        let k = fx.instance(0, InstanceState::Idle);
        fx.queued(1);
        let own = fx.queued(0);
        assert_eq!(CentralQueue::fifo().on_completion(k, &fx.view()), vec![TakeFromQueue(k, own)]);
    }

    #[test]
    fn fifo_moves_to_earliest_waiting_function() {
        let mut fx = Fixture::new(1, 3);
        let k = fx.instance(0, InstanceState::Idle);
        fx.now = 1.0;
        fx.queued(2);
        fx.now = 2.0;
        fx.queued(1);
        assert_eq!(CentralQueue::fifo().on_completion(k, &fx.view()), vec![Replace(k, f(2))]);
    }

    #[test]
    fn sff_serves_short_functions_first() {
        let mut fx = Fixture::new(1, 3);
        fx.stats.record_execution(f(1), 10.0).unwrap();
        fx.stats.record_execution(f(2), 9000.0).unwrap();
        let busy = fx.instance(0, InstanceState::Busy);
        let mut sff = CentralQueue::sff();
        // long function arrives first
        fx.now = 1.0;
        let long = fx.arrive(2);
        for a in sff.on_arrival(long, &fx.view()) {
            if a == Enqueue(long) {
                fx.server.enqueue(f(2), long);
            }
        }
        fx.now = 2.0;
        let short = fx.arrive(1);
        for a in sff.on_arrival(short, &fx.view()) {
            if a == Enqueue(short) {
                fx.server.enqueue(f(1), short);
            }
        }
        fx.server.transition(busy, InstanceState::Idle, 3.0).unwrap();
        assert_eq!(sff.on_completion(busy, &fx.view()), vec![Replace(busy, f(1))]);
        // FIFO picks the earlier arrival
        assert_eq!(CentralQueue::fifo().on_completion(busy, &fx.view()), vec![Replace(busy, f(2))]);
    }

    #[test]
    fn covered_functions_are_not_reassigned() {
        let mut fx = Fixture::new(2, 2);
        let k = fx.instance(0, InstanceState::Idle);
        fx.instance(1, InstanceState::Initializing);
        fx.queued(1);
        assert_eq!(CentralQueue::fifo().on_completion(k, &fx.view()), vec![GoIdle(k)]);
    }

    #[test]
    fn v2_first_instance_is_immediate_then_threshold() {
        let mut fx = Fixture::new(4, 1);
        let mut v2 = OpenWhiskV2::new(100.0);
        let r = fx.arrive(0);
        assert_eq!(
            v2.on_arrival(r, &fx.view()),
            vec![InitializeNew(f(0)), Enqueue(r), ArmTimer { at: 100.0, request: r }]
        );
        fx.instance(0, InstanceState::Busy);
        let r2 = fx.arrive(0);
        assert_eq!(
            v2.on_arrival(r2, &fx.view()),
            vec![Enqueue(r2), ArmTimer { at: 100.0, request: r2 }]
        );
    }

    #[test]
    fn v2_timer_provisions_when_still_waiting() {
        let mut fx = Fixture::new(4, 1);
        let mut v2 = OpenWhiskV2::new(100.0);
        fx.instance(0, InstanceState::Busy);
        let r = fx.queued(0);
        fx.now = 100.0;
        assert_eq!(v2.on_timer(r, &fx.view()), vec![InitializeNew(f(0))]);
        // once an instance is on its way the timer is a no-op
        fx.instance(0, InstanceState::Initializing);
        assert_eq!(v2.on_timer(r, &fx.view()), vec![]);
    }

    #[test]
    fn v2_timer_is_noop_after_drain() {
        let mut fx = Fixture::new(4, 1);
        let r = fx.arrive(0);
        fx.now = 100.0;
        assert_eq!(OpenWhiskV2::new(100.0).on_timer(r, &fx.view()), vec![]);
    }

    #[test]
    fn v2_reassigns_only_overdue_heads() {
        let mut fx = Fixture::new(1, 2);
        let k = fx.instance(0, InstanceState::Idle);
        fx.now = 0.0;
        fx.queued(1);
        fx.now = 50.0;
        let v2 = OpenWhiskV2::new(100.0);
        assert_eq!(v2.reassign(k, &fx.view()), vec![GoIdle(k)]);
        fx.now = 100.0;
        assert_eq!(v2.reassign(k, &fx.view()), vec![Replace(k, f(1))]);
    }
}
