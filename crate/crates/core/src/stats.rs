//! History-based per-function estimates consumed by the schedulers, and the
//! end-of-run metrics report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::SimulationResult;
use crate::error::StatsError;
use crate::model::{FunctionId, Request, Time};

/// Incremental arithmetic mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMean {
    count: u64,
    mean: f64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    /// Mean over every function observed so far, else the constant.
    #[default]
    Global,
    Constant,
}

/// What the estimator reports for a function with no history yet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub mode: PriorMode,
    pub exec: Time,
    pub cold_start: Time,
    pub eviction: Time,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mode: PriorMode::Global,
            exec: 1000.0,
            cold_start: 1000.0,
            eviction: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub avg_exec: Time,
    pub avg_cold_start: Time,
    pub avg_eviction: Time,
}

#[derive(Debug, Clone, Default)]
struct FunctionHistory {
    exec: RunningMean,
    cold_start: RunningMean,
    eviction: RunningMean,
}

/// Running means of execution, cold-start and eviction times per function.
#[derive(Debug, Clone)]
pub struct Estimator {
    prior: PriorConfig,
    per_function: Vec<FunctionHistory>,
    global: FunctionHistory,
}

impl Estimator {
    pub fn new(function_count: usize, prior: PriorConfig) -> Self {
        Self {
            prior,
            per_function: vec![FunctionHistory::default(); function_count],
            global: FunctionHistory::default(),
        }
    }

    fn slot(&mut self, f: FunctionId) -> &mut FunctionHistory {
        let idx = f.index();
        if idx >= self.per_function.len() {
            self.per_function.resize_with(idx + 1, FunctionHistory::default);
        }
        &mut self.per_function[idx]
    }

    pub fn record_execution(&mut self, f: FunctionId, observed: Time) -> Result<(), StatsError> {
        if !(observed > 0.0) {
            return Err(StatsError::NegativeObservation {
                function: f,
                value: observed,
            });
        }
        self.slot(f).exec.push(observed);
        self.global.exec.push(observed);
        Ok(())
    }

    pub fn record_cold_start(&mut self, f: FunctionId, observed: Time) -> Result<(), StatsError> {
        check_non_negative(f, observed)?;
        self.slot(f).cold_start.push(observed);
        self.global.cold_start.push(observed);
        Ok(())
    }

    pub fn record_eviction(&mut self, f: FunctionId, observed: Time) -> Result<(), StatsError> {
        check_non_negative(f, observed)?;
        self.slot(f).eviction.push(observed);
        self.global.eviction.push(observed);
        Ok(())
    }

    pub fn estimate(&self, f: FunctionId) -> Estimate {
        let own = self.per_function.get(f.index());
        let pick = |own: Option<RunningMean>, global: RunningMean, constant: Time| {
            own.and_then(|m| m.mean()).unwrap_or_else(|| match self.prior.mode {
                PriorMode::Global => global.mean().unwrap_or(constant),
                PriorMode::Constant => constant,
            })
        };
        Estimate {
            avg_exec: pick(own.map(|h| h.exec), self.global.exec, self.prior.exec),
            avg_cold_start: pick(
                own.map(|h| h.cold_start),
                self.global.cold_start,
                self.prior.cold_start,
            ),
            avg_eviction: pick(
                own.map(|h| h.eviction),
                self.global.eviction,
                self.prior.eviction,
            ),
        }
    }

    pub fn exec_observations(&self, f: FunctionId) -> u64 {
        self.per_function.get(f.index()).map_or(0, |h| h.exec.count())
    }
}

fn check_non_negative(f: FunctionId, v: Time) -> Result<(), StatsError> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(StatsError::NegativeObservation {
            function: f,
            value: v,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinuteBucket {
    pub minute: u64,
    pub arrival_count: usize,
    pub avg_response: Time,
    pub avg_exec: Time,
}

/// Aggregate response-time, slowdown and cold-start statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub requests: usize,
    pub avg_response_time: Time,
    pub avg_slowdown: f64,
    /// Total cold-start milliseconds divided by the request count.
    pub avg_cold_start_time: Time,
    /// Mean duration of one cold start.
    pub mean_cold_start_duration: Time,
    pub cold_start_count: usize,
    pub total_eviction_time: Time,
    pub eviction_count: usize,
    pub replacement_count: usize,
    pub p50: Time,
    pub p95: Time,
    pub p99: Time,
    #[serde(skip)]
    pub response_cdf: Vec<Time>,
    #[serde(skip)]
    pub slowdown_cdf: Vec<f64>,
    #[serde(skip)]
    pub per_minute: Vec<MinuteBucket>,
}

pub const METRICS_CSV_HEADER: &str =
    "avg_response_ms,avg_slowdown,avg_cold_start_ms,p50,p95,p99";

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }

    /// Values in [`METRICS_CSV_HEADER`] order.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.avg_response_time,
            self.avg_slowdown,
            self.avg_cold_start_time,
            self.p50,
            self.p95,
            self.p99
        )
    }

    pub fn percentile(&self, p: f64) -> Time {
        nearest_rank(&self.response_cdf, p)
    }
}

/// Nearest-rank percentile of an ascending slice; `p` in (0, 100].
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn compute_metrics(result: &SimulationResult) -> Result<MetricsReport, StatsError> {
    let reqs = &result.requests;
    let mut responses = Vec::with_capacity(reqs.len());
    let mut slowdowns = Vec::with_capacity(reqs.len());
    for r in reqs {
        let resp = r.response_time().ok_or(StatsError::Incomplete(r.id))?;
        responses.push(resp);
        slowdowns.push(resp / r.exec_time);
    }
    let n = reqs.len();
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };

    let total_cold: Time = result.cold_start_events.iter().map(|e| e.duration).sum();
    let cold_count = result.cold_start_events.len();
    let total_eviction: Time = result.eviction_events.iter().map(|e| e.duration).sum();

    let avg_response_time = mean(&responses);
    let avg_slowdown = mean(&slowdowns);
    let per_minute = per_minute_series(reqs);

    responses.sort_by(f64::total_cmp);
    slowdowns.sort_by(f64::total_cmp);

    Ok(MetricsReport {
        requests: n,
        avg_response_time,
        avg_slowdown,
        avg_cold_start_time: if n == 0 { 0.0 } else { total_cold / n as f64 },
        mean_cold_start_duration: if cold_count == 0 {
            0.0
        } else {
            total_cold / cold_count as f64
        },
        cold_start_count: cold_count,
        total_eviction_time: total_eviction,
        eviction_count: result.eviction_events.len(),
        replacement_count: result.replacement_count,
        p50: nearest_rank(&responses, 50.0),
        p95: nearest_rank(&responses, 95.0),
        p99: nearest_rank(&responses, 99.0),
        response_cdf: responses,
        slowdown_cdf: slowdowns,
        per_minute,
    })
}

/// Requests bucketed by arrival minute, counted from the first arrival.
fn per_minute_series(reqs: &[Request]) -> Vec<MinuteBucket> {
    let Some(origin) = reqs.iter().map(|r| r.arrival).min_by(f64::total_cmp) else {
        return Vec::new();
    };
    let mut buckets: BTreeMap<u64, (usize, f64, f64)> = BTreeMap::new();
    for r in reqs {
        let minute = ((r.arrival - origin) / 60_000.0).floor() as u64;
        let b = buckets.entry(minute).or_default();
        b.0 += 1;
        b.1 += r.response_time().unwrap_or(0.0);
        b.2 += r.exec_time;
    }
    buckets
        .into_iter()
        .map(|(minute, (count, resp, exec))| MinuteBucket {
            minute,
            arrival_count: count,
            avg_response: resp / count as f64,
            avg_exec: exec / count as f64,
        })
        .collect()
}
