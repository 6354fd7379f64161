//! Weight-driven online scheduling.
//!
//! On arrival the creation policy decides whether a new instance of the
//! request's function is worth its cold start, and if the server is full
//! whether an idle instance of another function should make room. On
//! completion the replacement policy compares the finishing function's
//! weight with the weight of every function that has waiting requests and
//! hands the instance to the most urgent one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Scheduler, SchedulerAction, SchedulerView, WeightInputs};
use crate::model::{FunctionId, InstanceId, InstanceState, RequestId};

/// Which instance count enters the expected-remaining estimate when the
/// replacement policy evaluates a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemainingCount {
    /// The candidate's own instance count.
    #[default]
    Candidate,
    /// The finishing function's instance count.
    Completing,
}

#[derive(Debug, Clone, Default)]
pub struct Esff {
    remaining_count: RemainingCount,
}

/// Requests of `target` expected to still be waiting once a new instance
/// is up after `setup` ms, given `instances` already serving it.
pub(crate) fn expected_remaining(target: &WeightInputs, setup: f64, instances: usize) -> f64 {
    target.waiting_count as f64 + 1.0 - setup * instances as f64 / target.avg_exec
}

/// Urgency of a function that already holds the instance; infinite when
/// nothing of it waits.
pub(crate) fn incumbent_weight(own: &WeightInputs) -> f64 {
    if own.waiting_count == 0 {
        f64::INFINITY
    } else {
        own.avg_exec + own.avg_eviction * own.instance_count as f64 / own.waiting_count as f64
    }
}

/// Urgency of a candidate that would take over the instance.
pub(crate) fn candidate_weight(cand: &WeightInputs, incumbent_instances: usize, remaining: f64) -> f64 {
    cand.avg_exec
        + (cand.avg_cold_start + cand.avg_eviction) * (incumbent_instances as f64 + 1.0) / remaining
}

impl Esff {
    pub fn new(remaining_count: RemainingCount) -> Self {
        Self { remaining_count }
    }

    fn creation_policy(&self, r: RequestId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        let server = view.server;
        let j = view.function_of(r);
        let own = view.weight_inputs(j);

        if own.waiting_count == 0 {
            if let Some(k) = server.lru_idle_of(j) {
                return vec![SchedulerAction::DispatchToIdle(k, r)];
            }
        }

        let mut out = Vec::with_capacity(2);
        if server.has_free_slot() {
            let remaining = expected_remaining(&own, own.avg_cold_start, own.instance_count);
            if remaining > 0.0 {
                out.push(SchedulerAction::InitializeNew(j));
            }
        } else {
            let holders: BTreeSet<FunctionId> = server
                .instances()
                .filter(|i| i.state == InstanceState::Idle && i.function_id != j)
                .map(|i| i.function_id)
                .collect();
            let mut best: Option<(FunctionId, f64)> = None;
            for g in holders {
                let victim = view.weight_inputs(g);
                let remaining =
                    expected_remaining(&own, own.avg_cold_start + victim.avg_eviction, own.instance_count);
                if remaining > 0.0 && best.is_none_or(|(_, e)| victim.avg_exec > e) {
                    best = Some((g, victim.avg_exec));
                }
            }
            if let Some((g, _)) = best {
                let k = server.lru_idle_of(g).expect("holder has an idle instance");
                out.push(SchedulerAction::Replace(k, j));
            }
        }
        out.push(SchedulerAction::Enqueue(r));
        out
    }

    fn replacement_policy(&self, k: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        let server = view.server;
        let j = server
            .instance(k)
            .expect("completion hook for a live instance")
            .function_id;
        let own = view.weight_inputs(j);
        let mut chosen = j;
        let mut chosen_weight = incumbent_weight(&own);

        for g in server.waiting_functions() {
            if g == j {
                continue;
            }
            let cand = view.weight_inputs(g);
            let instances = match self.remaining_count {
                RemainingCount::Candidate => cand.instance_count,
                RemainingCount::Completing => own.instance_count,
            };
            let remaining = expected_remaining(&cand, cand.avg_cold_start + own.avg_eviction, instances);
            if remaining <= 0.0 {
                continue;
            }
            let w = candidate_weight(&cand, own.instance_count, remaining);
            if w < chosen_weight {
                chosen = g;
                chosen_weight = w;
            }
        }

        if chosen != j {
            vec![SchedulerAction::Replace(k, chosen)]
        } else if let Some(&head) = server.queue(j).front() {
            vec![SchedulerAction::TakeFromQueue(k, head)]
        } else {
            vec![SchedulerAction::GoIdle(k)]
        }
    }
}

impl Scheduler for Esff {
    fn name(&self) -> &str {
        "esff"
    }

    fn on_arrival(&mut self, request: RequestId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        self.creation_policy(request, view)
    }

    fn on_completion(&mut self, instance: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        self.replacement_policy(instance, view)
    }

    fn on_ready(&mut self, instance: InstanceId, view: &SchedulerView<'_>) -> Vec<SchedulerAction> {
        self.replacement_policy(instance, view)
    }
}
