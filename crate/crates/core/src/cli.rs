//! Experiment runner: single runs and capacity/intensity sweeps over a trace
//! file or a synthetic preset, plus the offline sequencing self-check.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run, SimulationConfig, SimulationResult};
use crate::error::{SimError, SsfsError, StatsError, TraceError};
use crate::model::{FunctionProfile, Request};
use crate::schedulers::{build_scheduler, SchedulerKind};
use crate::ssfs::{self, CostConvention, SsfsFunction};
use crate::stats::{compute_metrics, MetricsReport, METRICS_CSV_HEADER};
use crate::trace::{self, SyntheticSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("metrics: {0}")]
    Stats(#[from] StatsError),
    #[error("ssfs: {0}")]
    Ssfs(#[from] SsfsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serverless scheduling simulator.
#[derive(Debug, Parser, Default)]
#[command(name = "edgesched", version, about)]
pub struct Args {
    /// TOML file mirroring these flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trace CSV (`func,end_timestamp,duration` or `func,arrival,duration`).
    #[arg(long, conflicts_with = "synthetic")]
    pub trace: Option<PathBuf>,
    /// Synthetic preset: long-short, bursty, or custom (the config's `[synthetic_spec]` table).
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Comma list of esff, fifo, openwhisk-v2, faascache, sff.
    #[arg(long, value_delimiter = ',')]
    pub scheduler: Option<Vec<SchedulerKind>>,
    /// Comma list of slot counts to sweep.
    #[arg(long, value_delimiter = ',')]
    pub capacity: Option<Vec<usize>>,
    /// Comma list of inter-arrival gap multipliers to sweep (above 1 lightens load).
    #[arg(long, value_delimiter = ',')]
    pub intensity: Option<Vec<f64>>,
    /// Base seed for workload, profile and check draws.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep only the first N requests by arrival.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Output directory (default `results`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write `events_<run>.log` for every run.
    #[arg(long)]
    pub events: bool,
    /// Write `requests_<run>.csv` with per-request timestamps.
    #[arg(long)]
    pub requests: bool,
    /// Check weight ordering against exhaustive search instead of simulating.
    #[arg(long)]
    pub check_ssfs: bool,
    /// Largest random instance for `--check-ssfs` (default 8).
    #[arg(long, requires = "check_ssfs")]
    pub max_requests: Option<usize>,
    /// Random instances for `--check-ssfs` (default 200).
    #[arg(long, requires = "check_ssfs")]
    pub cases: Option<usize>,
}

/// On-disk configuration. Every field is optional and mirrors a flag, plus
/// `[simulation]` for engine settings and `[synthetic_spec]` for a custom workload.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub trace: Option<PathBuf>,
    pub synthetic: Option<String>,
    pub schedulers: Option<Vec<SchedulerKind>>,
    pub capacity: Option<Vec<usize>>,
    pub intensity: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub limit: Option<usize>,
    pub out: Option<PathBuf>,
    pub events: Option<bool>,
    pub requests: Option<bool>,
    pub simulation: Option<SimulationConfig>,
    #[serde(rename = "synthetic_spec")]
    pub synthetic_spec: Option<SyntheticSpec>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Trace(PathBuf),
    Preset(String),
    Custom(SyntheticSpec),
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub source: Source,
    pub schedulers: Vec<SchedulerKind>,
    /// `None` uses the base configuration (or the preset's own capacity).
    pub capacities: Option<Vec<usize>>,
    pub intensities: Vec<f64>,
    pub seed: u64,
    pub limit: Option<usize>,
    pub base: SimulationConfig,
    pub out: PathBuf,
    pub events: bool,
    pub dump_requests: bool,
}

impl ExperimentSpec {
    /// Merges a config file (if any) with flag overrides.
    pub fn resolve(args: &Args) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let source = match (args.trace.clone(), args.synthetic.clone()) {
            (Some(p), _) => Source::Trace(p),
            (None, Some(name)) => preset_source(name, &file)?,
            (None, None) => match (file.trace.clone(), file.synthetic.clone()) {
                (Some(p), None) => Source::Trace(p),
                (None, Some(name)) => preset_source(name, &file)?,
                (Some(_), Some(_)) => {
                    return Err(CliError::Config("set either trace or synthetic, not both".into()))
                }
                (None, None) => return Err(CliError::Config("no workload: pass --trace or --synthetic".into())),
            },
        };
        let spec = ExperimentSpec {
            source,
            schedulers: args
                .scheduler
                .clone()
                .or(file.schedulers)
                .unwrap_or_else(|| vec![SchedulerKind::Esff]),
            capacities: args.capacity.clone().or(file.capacity),
            intensities: args.intensity.clone().or(file.intensity).unwrap_or_else(|| vec![1.0]),
            seed: args.seed.or(file.seed).unwrap_or(0),
            limit: args.limit.or(file.limit),
            base: file.simulation.unwrap_or_default(),
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("results")),
            events: args.events || file.events.unwrap_or(false),
            dump_requests: args.requests || file.requests.unwrap_or(false),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schedulers.is_empty() {
            return Err(CliError::Config("scheduler list is empty".into()));
        }
        if self.intensities.is_empty() || self.capacities.as_ref().is_some_and(Vec::is_empty) {
            return Err(CliError::Config("sweep lists must be non-empty".into()));
        }
        if self.capacities.iter().flatten().any(|&c| c == 0) {
            return Err(CliError::Config("capacities must be positive".into()));
        }
        if self.intensities.iter().any(|&r| !(r > 0.0)) {
            return Err(CliError::Config("intensity ratios must be positive".into()));
        }
        self.base.validate()?;
        Ok(())
    }
}

fn preset_source(name: String, file: &FileConfig) -> Result<Source, CliError> {
    if name == "custom" {
        file.synthetic_spec
            .clone()
            .map(Source::Custom)
            .ok_or_else(|| CliError::Config("synthetic = \"custom\" needs a [synthetic_spec] table".into()))
    } else if trace::PRESETS.contains(&name.as_str()) {
        Ok(Source::Preset(name))
    } else {
        Err(TraceError::Invalid(format!("unknown preset {name:?}")).into())
    }
}

/// Splits a base seed into independent per-purpose seeds: FNV-1a of the
/// label, xored into the base, then one splitmix64 round.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = (base ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Loads the workload named by `spec`, applies the request limit and draws
/// profiles for trace files.
pub fn load_workload(spec: &ExperimentSpec) -> Result<trace::Workload, CliError> {
    let mut w = match &spec.source {
        Source::Trace(path) => {
            let t = trace::parse_trace(path, spec.limit)?;
            let profiles = spec
                .base
                .draw_profiles(t.function_count(), derive_seed(spec.seed, "profiles"));
            trace::Workload {
                requests: t.requests,
                profiles,
                capacity: None,
            }
        }
        Source::Preset(name) => trace::preset(name, Some(derive_seed(spec.seed, "workload")))?,
        Source::Custom(s) => {
            let s = SyntheticSpec {
                rng_seed: derive_seed(spec.seed, "workload"),
                ..s.clone()
            };
            let (requests, profiles) = trace::generate_synthetic(&s)?;
            trace::Workload {
                requests,
                profiles,
                capacity: None,
            }
        }
    };
    if let Some(n) = spec.limit {
        w.requests.truncate(n);
    }
    Ok(w)
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPoint {
    pub scheduler: SchedulerKind,
    pub capacity: usize,
    pub intensity: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub point: RunPoint,
    pub label: String,
    pub metrics: MetricsReport,
    pub result: SimulationResult,
}

pub const RUN_CSV_HEADER_PREFIX: &str = "scheduler,capacity,intensity";

pub fn metrics_header() -> String {
    format!("{RUN_CSV_HEADER_PREFIX},{METRICS_CSV_HEADER}")
}

pub fn sweep_points(spec: &ExperimentSpec, workload_capacity: Option<usize>) -> Vec<RunPoint> {
    let caps = spec
        .capacities
        .clone()
        .unwrap_or_else(|| vec![workload_capacity.unwrap_or(spec.base.capacity)]);
    let mut points = Vec::new();
    for &scheduler in &spec.schedulers {
        for &capacity in &caps {
            for &intensity in &spec.intensities {
                points.push(RunPoint {
                    scheduler,
                    capacity,
                    intensity,
                });
            }
        }
    }
    points
}

fn run_point(
    point: RunPoint,
    requests: &[Request],
    profiles: &[FunctionProfile],
    base: &SimulationConfig,
    events: bool,
) -> Result<(MetricsReport, SimulationResult), CliError> {
    let config = SimulationConfig {
        capacity: point.capacity,
        intensity_ratio: point.intensity,
        scheduler: point.scheduler,
        record_events: events,
        ..*base
    };
    let scaled = trace::apply_intensity(requests, point.intensity)?;
    let mut scheduler = build_scheduler(point.scheduler, &config);
    let result = run(&scaled, profiles, &config, &mut scheduler)?;
    let metrics = compute_metrics(&result)?;
    Ok((metrics, result))
}

/// Runs every sweep point (in parallel) and returns outcomes in sweep order.
pub fn run_points(spec: &ExperimentSpec, workload: &trace::Workload) -> Result<Vec<RunOutcome>, CliError> {
    let points = sweep_points(spec, workload.capacity);
    let single = points.len() == 1 || (spec.capacities.as_ref().is_none_or(|c| c.len() == 1) && spec.intensities.len() == 1);
    points
        .par_iter()
        .map(|&point| {
            let (metrics, result) =
                run_point(point, &workload.requests, &workload.profiles, &spec.base, spec.events)?;
            let label = if single {
                point.scheduler.to_string()
            } else {
                format!("{}_c{}_i{}", point.scheduler, point.capacity, point.intensity)
            };
            Ok(RunOutcome {
                point,
                label,
                metrics,
                result,
            })
        })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Writes `metrics.csv` and the per-run files into `spec.out`.
pub fn write_outputs(spec: &ExperimentSpec, outcomes: &[RunOutcome]) -> Result<(), CliError> {
    fs::create_dir_all(&spec.out).map_err(io_err(&spec.out))?;
    let mut metrics = metrics_header();
    metrics.push('\n');
    for o in outcomes {
        metrics.push_str(&format!(
            "{},{},{},{}\n",
            o.point.scheduler,
            o.point.capacity,
            o.point.intensity,
            o.metrics.csv_row()
        ));

        let mut cdf = String::from("response_ms,slowdown\n");
        for (r, s) in o.metrics.response_cdf.iter().zip(&o.metrics.slowdown_cdf) {
            cdf.push_str(&format!("{r},{s}\n"));
        }
        write(&spec.out.join(format!("cdf_{}.csv", o.label)), &cdf)?;

        let mut pm = String::from("minute,arrival_count,avg_response_ms,avg_exec_ms\n");
        for b in &o.metrics.per_minute {
            pm.push_str(&format!("{},{},{},{}\n", b.minute, b.arrival_count, b.avg_response, b.avg_exec));
        }
        write(&spec.out.join(format!("per_minute_{}.csv", o.label)), &pm)?;

        if spec.events {
            write(&spec.out.join(format!("events_{}.log", o.label)), &o.result.event_log_text())?;
        }
        if spec.dump_requests {
            let mut rq = String::from("request_id,function_id,arrival_ms,start_ms,completion_ms,exec_ms\n");
            for r in &o.result.requests {
                rq.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.id,
                    r.function_id,
                    r.arrival,
                    r.start.unwrap_or(f64::NAN),
                    r.completion.unwrap_or(f64::NAN),
                    r.exec_time
                ));
            }
            write(&spec.out.join(format!("requests_{}.csv", o.label)), &rq)?;
        }
    }
    write(&spec.out.join("metrics.csv"), &metrics)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunOutcome>, CliError> {
    let workload = load_workload(spec)?;
    let outcomes = run_points(spec, &workload)?;
    write_outputs(spec, &outcomes)?;
    Ok(outcomes)
}

/// Random offline instance: 2 to 4 functions, 3 to `max_requests` requests
/// in total, times uniform in [1, 10].
pub fn random_ssfs_instance<R: Rng>(rng: &mut R, max_requests: usize) -> Vec<SsfsFunction> {
    let max_requests = max_requests.max(3);
    let functions = rng.random_range(2..=4usize.min(max_requests));
    let total = rng.random_range(3.max(functions)..=max_requests);
    let mut counts = vec![1u32; functions];
    for _ in functions..total {
        counts[rng.random_range(0..functions)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            SsfsFunction::new(
                i as u32,
                rng.random_range(1.0..=10.0),
                rng.random_range(1.0..=10.0),
                rng.random_range(1.0..=10.0),
                n,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SsfsCheck {
    pub cases: usize,
    pub uniform_matches: usize,
    pub first_block_free_matches: usize,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Compares weight ordering with exhaustive search on random instances,
/// under both setup-cost conventions.
pub fn check_ssfs(cases: usize, max_requests: usize, seed: u64) -> Result<SsfsCheck, CliError> {
    if max_requests > ssfs::ORACLE_MAX_REQUESTS {
        return Err(CliError::Config(format!(
            "--max-requests is limited to {}",
            ssfs::ORACLE_MAX_REQUESTS
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "ssfs"));
    let mut check = SsfsCheck {
        cases,
        ..Default::default()
    };
    for _ in 0..cases {
        let fs = random_ssfs_instance(&mut rng, max_requests);
        for (conv, slot) in [
            (CostConvention::Uniform, &mut check.uniform_matches),
            (CostConvention::FirstBlockFree, &mut check.first_block_free_matches),
        ] {
            let opt = ssfs::ssfs_optimal_with(&fs, conv)?;
            let oracle = ssfs::ssfs_oracle_with(&fs, conv)?;
            if close(opt.total_response_time, oracle.total_response_time) {
                *slot += 1;
            }
        }
    }
    Ok(check)
}

/// Entry point behind the binary. Returns the text printed on success.
pub fn main_with(args: Args) -> Result<String, CliError> {
    if args.check_ssfs {
        let c = check_ssfs(
            args.cases.unwrap_or(200),
            args.max_requests.unwrap_or(8),
            args.seed.unwrap_or(0),
        )?;
        return Ok(format!(
            "ssfs oracle matches: {}/{} (uniform setup), {}/{} (first block without eviction)\n",
            c.uniform_matches, c.cases, c.first_block_free_matches, c.cases
        ));
    }
    let spec = ExperimentSpec::resolve(&args)?;
    let outcomes = run_experiment(&spec)?;
    let mut text = metrics_header();
    text.push('\n');
    for o in &outcomes {
        text.push_str(&format!(
            "{},{},{},{}\n",
            o.point.scheduler,
            o.point.capacity,
            o.point.intensity,
            o.metrics.csv_row()
        ));
    }
    Ok(text)
}
