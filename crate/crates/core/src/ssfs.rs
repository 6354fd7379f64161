//! Offline sequencing on a unary server.
//!
//! Every request is present at time zero, requests of one function share an
//! execution time, and the server holds a single instance at a time, so a
//! schedule is just an ordering of requests. Ordering whole functions by
//! ascending `t_j + (t^l_j + t^v_j) / n_j` is optimal; [`ssfs_oracle`]
//! checks that claim by enumeration on small instances.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::SsfsError;
use crate::model::{FunctionId, Time};

/// Largest instance (total requests) the enumeration oracle accepts.
pub const ORACLE_MAX_REQUESTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsfsFunction {
    pub id: FunctionId,
    pub exec_time: Time,
    pub cold_start: Time,
    pub eviction: Time,
    pub request_count: u32,
}

impl SsfsFunction {
    pub fn new(id: u32, exec_time: Time, cold_start: Time, eviction: Time, request_count: u32) -> Self {
        Self {
            id: FunctionId(id),
            exec_time,
            cold_start,
            eviction,
            request_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsfsSchedule {
    pub sequence: Vec<FunctionId>,
    pub total_response_time: Time,
}

/// How setup time is charged in front of each maximal run of one function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CostConvention {
    /// Each run pays the previous run's eviction plus its own cold start; the
    /// first run pays only its cold start.
    #[default]
    FirstBlockFree,
    /// Each run pays its own cold start plus its own eviction, first run
    /// included.
    Uniform,
}

pub fn ssfs_weight(f: &SsfsFunction) -> f64 {
    f.exec_time + (f.cold_start + f.eviction) / f64::from(f.request_count)
}

fn validate(fs: &[SsfsFunction]) -> Result<(), SsfsError> {
    if fs.is_empty() {
        return Err(SsfsError::Invalid("no functions".into()));
    }
    let mut seen = BTreeSet::new();
    for f in fs {
        if !seen.insert(f.id) {
            return Err(SsfsError::DuplicateFunction(f.id));
        }
        if f.request_count == 0 {
            return Err(SsfsError::Invalid(format!("function {} has no requests", f.id)));
        }
        if !(f.exec_time > 0.0) {
            return Err(SsfsError::Invalid(format!(
                "function {} has non-positive execution time",
                f.id
            )));
        }
        if !(f.cold_start >= 0.0 && f.eviction >= 0.0) {
            return Err(SsfsError::Invalid(format!(
                "function {} has negative setup time",
                f.id
            )));
        }
    }
    Ok(())
}

/// Total response time of `sequence` under the default convention.
pub fn evaluate_schedule(fs: &[SsfsFunction], sequence: &[FunctionId]) -> Result<Time, SsfsError> {
    evaluate_schedule_with(fs, sequence, CostConvention::default())
}

pub fn evaluate_schedule_with(
    fs: &[SsfsFunction],
    sequence: &[FunctionId],
    convention: CostConvention,
) -> Result<Time, SsfsError> {
    validate(fs)?;
    let lookup = |id: FunctionId| fs.iter().position(|f| f.id == id);
    let mut counts = vec![0u32; fs.len()];
    for &id in sequence {
        let idx = lookup(id).ok_or_else(|| SsfsError::Multiplicity(format!("unknown function {id}")))?;
        counts[idx] += 1;
    }
    for (f, &c) in fs.iter().zip(&counts) {
        if c != f.request_count {
            return Err(SsfsError::Multiplicity(format!(
                "function {} appears {c} times, expected {}",
                f.id, f.request_count
            )));
        }
    }

    let mut clock = 0.0;
    let mut total = 0.0;
    let mut prev: Option<usize> = None;
    for &id in sequence {
        let idx = lookup(id).expect("checked above");
        let f = &fs[idx];
        if prev != Some(idx) {
            clock += match convention {
                CostConvention::FirstBlockFree => {
                    prev.map_or(0.0, |p| fs[p].eviction) + f.cold_start
                }
                CostConvention::Uniform => f.cold_start + f.eviction,
            };
        }
        clock += f.exec_time;
        total += clock;
        prev = Some(idx);
    }
    Ok(total)
}

/// Weight-ordered contiguous schedule under the default convention.
pub fn ssfs_optimal(fs: &[SsfsFunction]) -> Result<SsfsSchedule, SsfsError> {
    ssfs_optimal_with(fs, CostConvention::default())
}

pub fn ssfs_optimal_with(
    fs: &[SsfsFunction],
    convention: CostConvention,
) -> Result<SsfsSchedule, SsfsError> {
    validate(fs)?;
    let mut order: Vec<&SsfsFunction> = fs.iter().collect();
    order.sort_by(|a, b| ssfs_weight(a).total_cmp(&ssfs_weight(b)).then(a.id.cmp(&b.id)));
    let sequence: Vec<FunctionId> = order
        .iter()
        .flat_map(|f| std::iter::repeat_n(f.id, f.request_count as usize))
        .collect();
    let total_response_time = evaluate_schedule_with(fs, &sequence, convention)?;
    Ok(SsfsSchedule {
        sequence,
        total_response_time,
    })
}

/// Exhaustive search over every distinct request sequence.
///
/// Identical requests of one function are interchangeable, so only
/// multiset permutations are visited. The first minimum in lexicographic
/// (function index) order is returned.
pub fn ssfs_oracle(fs: &[SsfsFunction]) -> Result<SsfsSchedule, SsfsError> {
    ssfs_oracle_with(fs, CostConvention::default())
}

pub fn ssfs_oracle_with(
    fs: &[SsfsFunction],
    convention: CostConvention,
) -> Result<SsfsSchedule, SsfsError> {
    validate(fs)?;
    let requests: usize = fs.iter().map(|f| f.request_count as usize).sum();
    if requests > ORACLE_MAX_REQUESTS {
        return Err(SsfsError::TooLarge {
            requests,
            max: ORACLE_MAX_REQUESTS,
        });
    }
    let mut best: Option<SsfsSchedule> = None;
    let mut remaining: Vec<u32> = fs.iter().map(|f| f.request_count).collect();
    let mut prefix = Vec::with_capacity(requests);
    let mut visit = |seq: &[FunctionId]| -> Result<(), SsfsError> {
        let total = evaluate_schedule_with(fs, seq, convention)?;
        if best.as_ref().is_none_or(|b| total < b.total_response_time) {
            best = Some(SsfsSchedule {
                sequence: seq.to_vec(),
                total_response_time: total,
            });
        }
        Ok(())
    };
    enumerate_multiset(fs, &mut remaining, &mut prefix, requests, &mut visit)?;
    Ok(best.expect("non-empty instance has at least one sequence"))
}

fn enumerate_multiset<F>(
    fs: &[SsfsFunction],
    remaining: &mut [u32],
    prefix: &mut Vec<FunctionId>,
    len: usize,
    visit: &mut F,
) -> Result<(), SsfsError>
where
    F: FnMut(&[FunctionId]) -> Result<(), SsfsError>,
{
    if prefix.len() == len {
        return visit(prefix);
    }
    for i in 0..fs.len() {
        if remaining[i] == 0 {
            continue;
        }
        remaining[i] -= 1;
        prefix.push(fs[i].id);
        enumerate_multiset(fs, remaining, prefix, len, visit)?;
        prefix.pop();
        remaining[i] += 1;
    }
    Ok(())
}

/// Best schedule among those where every function's requests are contiguous
/// (all block orders enumerated).
pub fn best_contiguous_with(
    fs: &[SsfsFunction],
    convention: CostConvention,
) -> Result<SsfsSchedule, SsfsError> {
    validate(fs)?;
    let mut idx: Vec<usize> = (0..fs.len()).collect();
    let mut best: Option<SsfsSchedule> = None;
    permute(&mut idx, 0, &mut |order| {
        let sequence: Vec<FunctionId> = order
            .iter()
            .flat_map(|&i| std::iter::repeat_n(fs[i].id, fs[i].request_count as usize))
            .collect();
        let total = evaluate_schedule_with(fs, &sequence, convention).expect("valid by construction");
        if best.as_ref().is_none_or(|b| total < b.total_response_time) {
            best = Some(SsfsSchedule {
                sequence,
                total_response_time: total,
            });
        }
    });
    Ok(best.expect("at least one order"))
}

fn permute<F: FnMut(&[usize])>(xs: &mut [usize], k: usize, visit: &mut F) {
    if k == xs.len() {
        visit(xs);
        return;
    }
    for i in k..xs.len() {
        xs.swap(k, i);
        permute(xs, k + 1, visit);
        xs.swap(k, i);
    }
}
