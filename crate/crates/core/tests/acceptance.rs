//! Acceptance criteria. Each prints one PASS/FAIL line; the process exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_force_min, close, random_jobs, uniform_cost, EsffRecheck, Job};
use edgesched::cli::{load_workload, run_points, Args, ExperimentSpec};
use edgesched::engine::Decision;
use edgesched::schedulers::{Esff, SchedulerAction};
use edgesched::ssfs::{ssfs_optimal_with, ssfs_oracle_with, ssfs_weight, CostConvention, SsfsFunction};
use edgesched::stats::MetricsReport;
use edgesched::trace::long_short_workload;
use edgesched::{build_scheduler, run, run_observed, FunctionId, SchedulerKind, SimulationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

type Table = BTreeMap<(SchedulerKind, usize), MetricsReport>;

const CAPACITIES: [usize; 4] = [8, 16, 24, 32];

fn to_functions(jobs: &[Job]) -> Vec<SsfsFunction> {
    jobs.iter()
        .enumerate()
        .map(|(i, j)| SsfsFunction::new(i as u32, j.t, j.l, j.v, j.n))
        .collect()
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    if took < limit {
        Ok(took)
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

fn ssfs_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut matches = 0;
    let cases = 500;
    for _ in 0..cases {
        let jobs = random_jobs(&mut rng, 4, 8);
        let fs = to_functions(&jobs);
        let fast = ssfs_optimal_with(&fs, CostConvention::Uniform).map_err(|e| e.to_string())?;
        let exhaustive = ssfs_oracle_with(&fs, CostConvention::Uniform).map_err(|e| e.to_string())?;
        let independent = brute_force_min(&jobs);
        if close(fast.total_response_time, independent) && close(exhaustive.total_response_time, independent) {
            matches += 1;
        }
    }
    let took = within(Duration::from_secs(60), start)?;
    if matches == cases {
        Ok(format!("{matches}/{cases} in {took:.2?}"))
    } else {
        Err(format!("{matches}/{cases}"))
    }
}

fn exchange_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases = 1000;
    let mut ok = 0;
    for _ in 0..cases {
        // A lighter/heavier pair placed between random surrounding blocks.
        let jobs = random_jobs(&mut rng, 5, 14);
        let a = rng.random_range(0..jobs.len());
        let mut b = rng.random_range(0..jobs.len() - 1);
        if b >= a {
            b += 1;
        }
        let fs = to_functions(&jobs);
        let (lo, hi) = if ssfs_weight(&fs[a]) <= ssfs_weight(&fs[b]) { (a, b) } else { (b, a) };
        let mut others: Vec<usize> = (0..jobs.len()).filter(|&i| i != a && i != b).collect();
        let split = rng.random_range(0..=others.len());
        let tail = others.split_off(split);
        let expand = |order: &[usize], jobs: &[Job]| -> Vec<usize> {
            order.iter().flat_map(|&i| std::iter::repeat_n(i, jobs[i].n as usize)).collect()
        };
        let mut sorted = others.clone();
        sorted.extend([lo, hi]);
        sorted.extend(&tail);
        let mut swapped = others;
        swapped.extend([hi, lo]);
        swapped.extend(&tail);
        let c_sorted = uniform_cost(&jobs, &expand(&sorted, &jobs));
        let c_swapped = uniform_cost(&jobs, &expand(&swapped, &jobs));
        if c_sorted <= c_swapped + 1e-9 * c_swapped {
            ok += 1;
        }
    }
    if ok == cases {
        Ok(format!("{ok}/{cases}"))
    } else {
        Err(format!("{ok}/{cases}"))
    }
}

fn single_slot_example() -> Outcome {
    let start = Instant::now();
    let w = long_short_workload();
    let config = SimulationConfig {
        capacity: w.capacity.unwrap_or(1),
        ..SimulationConfig::default()
    };
    let avg = |kind| -> Result<f64, String> {
        let r = run(&w.requests, &w.profiles, &config, &mut build_scheduler(kind, &config)).map_err(|e| e.to_string())?;
        Ok(r.requests.iter().map(|q| q.response_time().unwrap()).sum::<f64>() / r.requests.len() as f64)
    };
    let esff = avg(SchedulerKind::Esff)?;
    let fifo = avg(SchedulerKind::Fifo)?;
    let v2 = avg(SchedulerKind::OpenWhiskV2)?;
    let took = within(Duration::from_secs(1), start)?;
    let msg = format!("esff {esff} fifo {fifo} openwhisk-v2 {v2} in {took:.2?}");
    if esff < fifo && esff < v2 && fifo == v2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn two_slot_replay() -> Outcome {
    let (requests, profiles, config) = common::two_slot_workload();
    let mut actions: Vec<(f64, Vec<SchedulerAction>)> = Vec::new();
    let mut record = |d: &Decision<'_>| actions.push((d.view.now, d.actions.to_vec()));
    let result = run_observed(&requests, &profiles, &config, &mut Esff::default(), &mut record)
        .map_err(|e| e.to_string())?;
    let golden = include_str!("data/two_slot_events.log");
    if result.event_log_text() != golden {
        return Err("event log differs from golden".into());
    }
    use SchedulerAction::*;
    let f1 = FunctionId(0);
    let f2 = FunctionId(1);
    let at = |t: f64| actions.iter().find(|(x, _)| *x == t).map(|(_, a)| a.as_slice());
    let r2_init = matches!(at(600.0), Some([InitializeNew(f), Enqueue(_)]) if *f == f1);
    let r3_queued = matches!(at(700.0), Some([Enqueue(_)]));
    let replaced = matches!(at(2500.0), Some([Replace(_, f)]) if *f == f2);
    if r2_init && r3_queued && replaced {
        Ok("golden log and decisions match".into())
    } else {
        Err(format!("decisions {actions:?}"))
    }
}

/// Runs the bursty preset at the default seed across every scheduler and
/// capacity, exactly as the command line does.
fn bursty_sweep() -> Result<(Table, Duration), String> {
    let start = Instant::now();
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = Args {
        synthetic: Some("bursty".into()),
        scheduler: Some(SchedulerKind::ALL.to_vec()),
        capacity: Some(CAPACITIES.to_vec()),
        out: Some(out.path().to_path_buf()),
        ..Args::default()
    };
    let spec = ExperimentSpec::resolve(&args).map_err(|e| e.to_string())?;
    let workload = load_workload(&spec).map_err(|e| e.to_string())?;
    if workload.requests.len() != 10_000 {
        return Err(format!("workload has {} requests", workload.requests.len()));
    }
    let runs = run_points(&spec, &workload).map_err(|e| e.to_string())?;
    let table = runs
        .into_iter()
        .map(|o| ((o.point.scheduler, o.point.capacity), o.metrics))
        .collect();
    Ok((table, start.elapsed()))
}

/// At most one increase between adjacent capacities, and that one within 2%.
fn non_increasing(series: &[f64]) -> bool {
    let ups: Vec<f64> = series
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| w[1] / w[0] - 1.0)
        .collect();
    ups.len() <= 1 && ups.iter().all(|&u| u <= 0.02)
}

fn bursty_trend(table: &Table, took: Duration) -> Outcome {
    if took >= Duration::from_secs(300) {
        return Err(format!("took {took:.2?}, limit 300s"));
    }
    let avg = |k, c| table[&(k, c)].avg_response_time;
    let esff = avg(SchedulerKind::Esff, 16);
    let sff = avg(SchedulerKind::Sff, 16);
    let fc = avg(SchedulerKind::FaasCache, 16);
    let v2 = avg(SchedulerKind::OpenWhiskV2, 16);
    let mut problems = Vec::new();
    if esff > 0.9 * sff {
        problems.push(format!("esff {esff:.1} not 10% below sff {sff:.1}"));
    }
    if esff >= fc || esff >= v2 {
        problems.push(format!("esff {esff:.1} vs faascache {fc:.1}, openwhisk-v2 {v2:.1}"));
    }
    for k in SchedulerKind::ALL {
        let resp: Vec<f64> = CAPACITIES.iter().map(|&c| avg(k, c)).collect();
        let cold: Vec<f64> = CAPACITIES.iter().map(|&c| table[&(k, c)].avg_cold_start_time).collect();
        if !non_increasing(&resp) {
            problems.push(format!("{k} response {resp:.1?}"));
        }
        if !non_increasing(&cold) {
            problems.push(format!("{k} cold start {cold:.1?}"));
        }
    }
    let msg = format!(
        "C=16 esff {esff:.1} sff {sff:.1} ({:.0}% lower) faascache {fc:.1} openwhisk-v2 {v2:.1}; sweep {took:.2?}",
        100.0 * (1.0 - esff / sff)
    );
    if problems.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; {}", problems.join("; ")))
    }
}

fn bursty_tail(table: &Table) -> Outcome {
    let e = &table[&(SchedulerKind::Esff, 16)];
    let mut problems = Vec::new();
    let mut best = (f64::INFINITY, f64::INFINITY);
    for k in SchedulerKind::ALL.into_iter().filter(|&k| k != SchedulerKind::Esff) {
        let b = &table[&(k, 16)];
        best = (best.0.min(b.percentile(95.0)), best.1.min(b.percentile(99.0)));
        if e.percentile(95.0) > b.percentile(95.0) || e.percentile(99.0) > b.percentile(99.0) {
            problems.push(format!("{k} p95 {:.1} p99 {:.1}", b.percentile(95.0), b.percentile(99.0)));
        }
    }
    let msg = format!(
        "esff p95 {:.1} p99 {:.1}; best baseline p95 {:.1} p99 {:.1}",
        e.percentile(95.0),
        e.percentile(99.0),
        best.0,
        best.1
    );
    if problems.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; beaten by {}", problems.join(", ")))
    }
}

fn engine_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let traces = 100;
    let mut ok = 0;
    let mut failures = Vec::new();
    for t in 0..traces {
        let (requests, profiles, capacity) = common::random_trace(&mut rng);
        let config = SimulationConfig {
            capacity,
            record_events: true,
            ..SimulationConfig::default()
        };
        let mut all = true;
        for kind in SchedulerKind::ALL {
            let a = run(&requests, &profiles, &config, &mut build_scheduler(kind, &config));
            let b = run(&requests, &profiles, &config, &mut build_scheduler(kind, &config));
            let verdict = match (a, b) {
                (Ok(a), Ok(b)) => common::check_run(&requests, capacity, &a).and_then(|_| {
                    if a == b && a.event_log_text() == b.event_log_text() {
                        Ok(())
                    } else {
                        Err("runs differ".into())
                    }
                }),
                (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
            };
            if let Err(e) = verdict {
                all = false;
                failures.push(format!("trace {t} {kind}: {e}"));
            }
        }
        ok += usize::from(all);
    }
    if ok == traces {
        Ok(format!("{ok}/{traces} traces x {} schedulers", SchedulerKind::ALL.len()))
    } else {
        Err(format!("{ok}/{traces}; {}", failures.iter().take(3).cloned().collect::<Vec<_>>().join("; ")))
    }
}

fn decision_conformance() -> Outcome {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = Args {
        synthetic: Some("bursty".into()),
        out: Some(out.path().to_path_buf()),
        ..Args::default()
    };
    let spec = ExperimentSpec::resolve(&args).map_err(|e| e.to_string())?;
    let w = load_workload(&spec).map_err(|e| e.to_string())?;
    let mut total = EsffRecheck::default();
    for capacity in CAPACITIES {
        let config = SimulationConfig {
            capacity,
            ..spec.base
        };
        let mut check = EsffRecheck::default();
        run_observed(&w.requests, &w.profiles, &config, &mut Esff::default(), &mut check).map_err(|e| e.to_string())?;
        total.decisions += check.decisions;
        total.replacements_on_arrival += check.replacements_on_arrival;
        total.replacements_on_completion += check.replacements_on_completion;
        total.skipped_creations += check.skipped_creations;
        total.mismatches.extend(check.mismatches);
    }
    let msg = format!(
        "{} decisions over {} requests x {} capacities: {} arrival replacements, {} completion replacements, {} declined creations; {} mismatches",
        total.decisions,
        w.requests.len(),
        CAPACITIES.len(),
        total.replacements_on_arrival,
        total.replacements_on_completion,
        total.skipped_creations,
        total.mismatches.len()
    );
    if total.mismatches.is_empty() && total.replacements_on_completion > 0 {
        Ok(msg)
    } else {
        Err(format!("{msg}; first: {:?}", total.mismatches.first()))
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 ssfs optimality", ssfs_optimality()),
        ("2 exchange property", exchange_property()),
        ("3 single-slot example", single_slot_example()),
        ("4 two-slot replay", two_slot_replay()),
    ];
    match bursty_sweep() {
        Ok((table, took)) => {
            results.push(("5 bursty average trend", bursty_trend(&table, took)));
            results.push(("6 bursty tail latency", bursty_tail(&table)));
        }
        Err(e) => {
            results.push(("5 bursty average trend", Err(e.clone())));
            results.push(("6 bursty tail latency", Err(e)));
        }
    }
    results.push(("7 engine invariants", engine_invariants()));
    results.push(("8 decision conformance", decision_conformance()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
