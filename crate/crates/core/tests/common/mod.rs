//! Helpers shared by the integration and acceptance targets. Everything here
//! is written against the public API only and recomputes results from first
//! principles instead of calling the library's own helpers.

#![allow(dead_code)]

use edgesched::engine::{Decision, DecisionObserver, Hook};
use edgesched::model::{InstanceState, ServerState};
use edgesched::schedulers::{SchedulerAction, SchedulerView};
use edgesched::{FunctionId, FunctionProfile, InstanceId, Request, RequestId, SimulationConfig, SimulationResult};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- workloads

/// Two functions on two slots; the long function's third request has to
/// wait while the short function borrows a slot.
pub fn two_slot_workload() -> (Vec<Request>, Vec<FunctionProfile>, SimulationConfig) {
    let f1 = FunctionId(0);
    let f2 = FunctionId(1);
    let requests = vec![
        Request::new(0, f1, 0.0, 2000.0),
        Request::new(1, f1, 600.0, 2000.0),
        Request::new(2, f1, 700.0, 2000.0),
        Request::new(3, f2, 800.0, 100.0),
        Request::new(4, f2, 900.0, 100.0),
    ];
    let profiles = vec![FunctionProfile::new(0, 500.0, 500.0), FunctionProfile::new(1, 300.0, 300.0)];
    let config = SimulationConfig {
        capacity: 2,
        record_events: true,
        ..SimulationConfig::default()
    };
    (requests, profiles, config)
}

/// Small random trace with random per-function setup costs.
pub fn random_trace(rng: &mut ChaCha8Rng) -> (Vec<Request>, Vec<FunctionProfile>, usize) {
    let functions = rng.random_range(1..=6u32);
    let n = rng.random_range(1..=80u64);
    let mut arrivals: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20_000.0)).collect();
    arrivals.sort_by(f64::total_cmp);
    let exec: Vec<f64> = (0..functions).map(|_| rng.random_range(1.0..3000.0)).collect();
    let requests = arrivals
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let f = rng.random_range(0..functions);
            let jitter = rng.random_range(0.8..1.2);
            Request::new(i as u64, FunctionId(f), a, (exec[f as usize] * jitter).max(1.0))
        })
        .collect();
    let profiles = (0..functions)
        .map(|f| FunctionProfile::new(f, rng.random_range(50.0..1500.0), rng.random_range(50.0..1500.0)))
        .collect();
    let capacity = rng.random_range(1..=6usize);
    (requests, profiles, capacity)
}

// ---------------------------------------------------------------- invariants

/// Checks a finished run against its input. Returns a description of the
/// first violation.
pub fn check_run(input: &[Request], capacity: usize, result: &SimulationResult) -> Result<(), String> {
    if result.requests.len() != input.len() {
        return Err(format!("{} requests in, {} out", input.len(), result.requests.len()));
    }
    if result.peak_slots > capacity {
        return Err(format!("peak slots {} > capacity {capacity}", result.peak_slots));
    }
    let mut intervals = Vec::with_capacity(input.len());
    for (a, b) in input.iter().zip(&result.requests) {
        if a.id != b.id || a.function_id != b.function_id || a.arrival != b.arrival || a.exec_time != b.exec_time {
            return Err(format!("request {} altered", a.id));
        }
        let (Some(s), Some(c)) = (b.start, b.completion) else {
            return Err(format!("request {} not completed", b.id));
        };
        if s < b.arrival {
            return Err(format!("request {} starts at {s} before arriving at {}", b.id, b.arrival));
        }
        if ((c - s) - b.exec_time).abs() > 1e-6 * b.exec_time.max(1.0) {
            return Err(format!("request {} ran {} instead of {}", b.id, c - s, b.exec_time));
        }
        if (c - b.arrival) / b.exec_time < 1.0 - 1e-12 {
            return Err(format!("request {} has slowdown below 1", b.id));
        }
        intervals.push((s, c));
    }
    // At most `capacity` requests execute at any instant.
    let mut edges: Vec<(f64, i32)> = intervals.iter().flat_map(|&(s, c)| [(s, 1), (c, -1)]).collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut running = 0i32;
    for (_, d) in edges {
        running += d;
        if running as usize > capacity {
            return Err(format!("{running} requests running on {capacity} slots"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- ssfs oracle

/// One function of an offline instance: exec, cold start, eviction, count.
#[derive(Debug, Clone, Copy)]
pub struct Job {
    pub t: f64,
    pub l: f64,
    pub v: f64,
    pub n: u32,
}

/// Total response time of `seq` (function indices) when every maximal run
/// pays its own cold start and eviction before executing.
pub fn uniform_cost(jobs: &[Job], seq: &[usize]) -> f64 {
    let mut clock = 0.0;
    let mut total = 0.0;
    for (i, &j) in seq.iter().enumerate() {
        if i == 0 || seq[i - 1] != j {
            clock += jobs[j].l + jobs[j].v;
        }
        clock += jobs[j].t;
        total += clock;
    }
    total
}

/// Minimum of [`uniform_cost`] over every interleaving of the requests.
pub fn brute_force_min(jobs: &[Job]) -> f64 {
    fn go(jobs: &[Job], left: &mut [u32], seq: &mut Vec<usize>, len: usize, best: &mut f64) {
        if seq.len() == len {
            *best = best.min(uniform_cost(jobs, seq));
            return;
        }
        for j in 0..jobs.len() {
            if left[j] > 0 {
                left[j] -= 1;
                seq.push(j);
                go(jobs, left, seq, len, best);
                seq.pop();
                left[j] += 1;
            }
        }
    }
    let len = jobs.iter().map(|j| j.n as usize).sum();
    let mut left: Vec<u32> = jobs.iter().map(|j| j.n).collect();
    let mut best = f64::INFINITY;
    go(jobs, &mut left, &mut Vec::with_capacity(len), len, &mut best);
    best
}

pub fn random_jobs(rng: &mut ChaCha8Rng, max_functions: usize, max_requests: u32) -> Vec<Job> {
    let k = rng.random_range(2..=max_functions);
    let mut budget = rng.random_range((k as u32).max(3)..=max_requests);
    let mut jobs = Vec::with_capacity(k);
    for i in 0..k {
        let rest = (k - i - 1) as u32;
        let n = if rest == 0 { budget } else { rng.random_range(1..=budget - rest) };
        budget -= n;
        jobs.push(Job {
            t: rng.random_range(1.0..10.0),
            l: rng.random_range(1.0..10.0),
            v: rng.random_range(1.0..10.0),
            n,
        });
    }
    jobs
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- esff oracle

/// Recomputes every creation and replacement decision from the raw server
/// state and the estimator, and counts disagreements with what the
/// scheduler actually returned.
#[derive(Debug, Default)]
pub struct EsffRecheck {
    pub decisions: usize,
    pub mismatches: Vec<String>,
    pub replacements_on_arrival: usize,
    pub replacements_on_completion: usize,
    pub skipped_creations: usize,
}

struct Est {
    e: f64,
    l: f64,
    v: f64,
}

fn est(view: &SchedulerView<'_>, f: FunctionId) -> Est {
    let x = view.stats.estimate(f);
    Est {
        e: x.avg_exec,
        l: x.avg_cold_start,
        v: x.avg_eviction,
    }
}

fn committed(server: &ServerState, f: FunctionId) -> f64 {
    server
        .instances()
        .filter(|i| {
            if i.state == InstanceState::Evicting {
                i.replacing_with == Some(f)
            } else {
                i.function_id == f
            }
        })
        .count() as f64
}

fn lru_idle(server: &ServerState, f: FunctionId) -> Option<InstanceId> {
    server
        .instances()
        .filter(|i| i.function_id == f && i.state == InstanceState::Idle)
        .min_by(|a, b| a.last_used.total_cmp(&b.last_used).then(a.id.cmp(&b.id)))
        .map(|i| i.id)
}

fn expected_creation(view: &SchedulerView<'_>, r: RequestId) -> Vec<SchedulerAction> {
    let server = view.server;
    let j = view.function_of(r);
    let waiting = server.queue(j).len() as f64;
    if waiting == 0.0 {
        if let Some(k) = lru_idle(server, j) {
            return vec![SchedulerAction::DispatchToIdle(k, r)];
        }
    }
    let ej = est(view, j);
    let kj = committed(server, j);
    let mut out = Vec::new();
    if server.instances().count() < server.capacity() {
        if waiting + 1.0 - ej.l * kj / ej.e > 0.0 {
            out.push(SchedulerAction::InitializeNew(j));
        }
    } else {
        let mut best: Option<(FunctionId, f64)> = None;
        for g in 0..server.function_count() as u32 {
            let g = FunctionId(g);
            if g == j || lru_idle(server, g).is_none() {
                continue;
            }
            let eg = est(view, g);
            let ne = waiting + 1.0 - (ej.l + eg.v) * kj / ej.e;
            if ne > 0.0 && best.is_none_or(|(_, e)| eg.e > e) {
                best = Some((g, eg.e));
            }
        }
        if let Some((g, _)) = best {
            out.push(SchedulerAction::Replace(lru_idle(server, g).unwrap(), j));
        }
    }
    out.push(SchedulerAction::Enqueue(r));
    out
}

fn expected_replacement(view: &SchedulerView<'_>, k: InstanceId) -> Vec<SchedulerAction> {
    let server = view.server;
    let j = server.instance(k).unwrap().function_id;
    let ej = est(view, j);
    let kj = committed(server, j);
    let wj = server.queue(j).len() as f64;
    let mut best = j;
    let mut best_w = if wj == 0.0 { f64::INFINITY } else { ej.e + ej.v * kj / wj };
    for g in 0..server.function_count() as u32 {
        let g = FunctionId(g);
        let wg = server.queue(g).len() as f64;
        if g == j || wg == 0.0 {
            continue;
        }
        let eg = est(view, g);
        // The transition evicts j's instance, but the weight charges the
        // candidate's own setup pair.
        let ne = wg + 1.0 - (eg.l + ej.v) * committed(server, g) / eg.e;
        if ne <= 0.0 {
            continue;
        }
        let w = eg.e + (eg.l + eg.v) * (kj + 1.0) / ne;
        if w < best_w {
            best = g;
            best_w = w;
        }
    }
    if best != j {
        vec![SchedulerAction::Replace(k, best)]
    } else if let Some(&r) = server.queue(j).front() {
        vec![SchedulerAction::TakeFromQueue(k, r)]
    } else {
        vec![SchedulerAction::GoIdle(k)]
    }
}

impl DecisionObserver for EsffRecheck {
    fn observe(&mut self, d: &Decision<'_>) {
        self.decisions += 1;
        let expected = match d.hook {
            Hook::Arrival(r) => expected_creation(d.view, r),
            Hook::Completion(k) | Hook::Ready(k) => expected_replacement(d.view, k),
            Hook::Timer(_) => Vec::new(),
        };
        let replaces = expected.iter().any(|a| matches!(a, SchedulerAction::Replace(..)));
        if let Hook::Arrival(r) = d.hook {
            self.replacements_on_arrival += usize::from(replaces);
            self.skipped_creations += usize::from(expected == [SchedulerAction::Enqueue(r)]);
        } else {
            self.replacements_on_completion += usize::from(replaces);
        }
        if expected.as_slice() != d.actions {
            self.mismatches.push(format!(
                "t={} {:?}: expected {:?}, got {:?}",
                d.view.now, d.hook, expected, d.actions
            ));
        }
    }
}
