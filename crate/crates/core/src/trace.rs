//! Workload acquisition: invocation-trace CSV parsing, load scaling and
//! seeded synthetic workloads.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::model::{FunctionId, FunctionProfile, Request, Time};

/// Recorded durations of zero are replaced by this value.
pub const MIN_DURATION: Time = 1.0;

/// A parsed trace. `function_keys[i]` is the original key of `FunctionId(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub requests: Vec<Request>,
    pub function_keys: Vec<String>,
}

impl Trace {
    pub fn function_count(&self) -> usize {
        self.function_keys.len()
    }
}

/// One row of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub function_key: String,
    pub end_timestamp: Time,
    pub duration: Time,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layout {
    EndTimestamp,
    Arrival,
}

fn layout_of(headers: &csv::StringRecord) -> Result<Layout, TraceError> {
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    match names.as_slice() {
        ["func", "end_timestamp", "duration"] => Ok(Layout::EndTimestamp),
        ["func", "arrival", "duration"] => Ok(Layout::Arrival),
        _ => Err(TraceError::Header(names.iter().map(|s| s.to_string()).collect())),
    }
}

fn number(field: Option<&str>, what: &str, line: u64) -> Result<f64, TraceError> {
    let raw = field.ok_or_else(|| TraceError::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    let v: f64 = raw.trim().parse().map_err(|_| TraceError::Parse {
        line,
        message: format!("{what} {raw:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(TraceError::Parse {
            line,
            message: format!("{what} must be finite"),
        });
    }
    Ok(v)
}

/// Parses a trace from any reader. See [`parse_trace`].
pub fn parse_trace_from<R: std::io::Read>(reader: R, limit: Option<usize>) -> Result<Trace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| TraceError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let layout = layout_of(headers)?;

    // (arrival, duration, key); file order is preserved by the stable sort.
    let mut rows: Vec<(Time, Time, String)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| TraceError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(TraceError::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let key = record[0].trim().to_string();
        if key.is_empty() {
            return Err(TraceError::Parse {
                line,
                message: "empty function key".into(),
            });
        }
        let stamp = number(record.get(1), "timestamp", line)?;
        let duration = number(record.get(2), "duration", line)?;
        if duration < 0.0 {
            return Err(TraceError::Parse {
                line,
                message: format!("negative duration {duration}"),
            });
        }
        let duration = if duration == 0.0 { MIN_DURATION } else { duration };
        let arrival = match layout {
            Layout::EndTimestamp => stamp - duration,
            Layout::Arrival => stamp,
        };
        if arrival < 0.0 {
            return Err(TraceError::Parse {
                line,
                message: format!("arrival {arrival} is negative"),
            });
        }
        rows.push((arrival, duration, key));
    }

    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(n) = limit {
        rows.truncate(n);
    }

    let mut ids: HashMap<String, FunctionId> = HashMap::new();
    let mut function_keys = Vec::new();
    let requests = rows
        .into_iter()
        .enumerate()
        .map(|(i, (arrival, duration, key))| {
            let next = FunctionId(function_keys.len() as u32);
            let f = *ids.entry(key).or_insert_with_key(|k| {
                function_keys.push(k.clone());
                next
            });
            Request::new(i as u64, f, arrival, duration)
        })
        .collect();
    Ok(Trace {
        requests,
        function_keys,
    })
}

/// Reads a three-column CSV trace (`func,end_timestamp,duration`, or
/// `func,arrival,duration` to skip arrival reconstruction). Times are in
/// milliseconds. Requests are returned sorted by arrival, keeping file
/// order among equal arrivals, and renumbered from 0.
pub fn parse_trace(path: &Path, limit: Option<usize>) -> Result<Trace, TraceError> {
    let file = std::fs::File::open(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace_from(std::io::BufReader::new(file), limit)
}

/// Writes requests as `func,end_timestamp,duration`, the format
/// [`parse_trace`] reads. Keys are taken from `keys` when given, else `f<id>`.
pub fn write_trace<W: Write>(out: W, requests: &[Request], keys: Option<&[String]>) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| TraceError::Invalid(e.to_string());
    w.write_record(["func", "end_timestamp", "duration"]).map_err(io)?;
    for r in requests {
        let key = match keys {
            Some(k) => k[r.function_id.index()].clone(),
            None => format!("f{}", r.function_id),
        };
        w.write_record([key, (r.arrival + r.exec_time).to_string(), r.exec_time.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| TraceError::Invalid(e.to_string()))
}

/// Scales every inter-arrival gap by `ratio`, keeping the first arrival in
/// place. Ratios above 1 lighten the load.
pub fn apply_intensity(requests: &[Request], ratio: f64) -> Result<Vec<Request>, TraceError> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(TraceError::Invalid(format!("intensity ratio must be positive, got {ratio}")));
    }
    if ratio == 1.0 {
        return Ok(requests.to_vec());
    }
    let Some(first) = requests.first().map(|r| r.arrival) else {
        return Ok(Vec::new());
    };
    Ok(requests
        .iter()
        .map(|r| Request {
            arrival: first + (r.arrival - first) * ratio,
            ..r.clone()
        })
        .collect())
}

/// Per-function mean execution time distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExecDistribution {
    Uniform { low: Time, high: Time },
    LogUniform { low: Time, high: Time },
    /// A `long_fraction` share of functions draws log-uniformly from
    /// `long`, the rest from `short`.
    Bimodal {
        short: [Time; 2],
        long: [Time; 2],
        long_fraction: f64,
    },
}

impl ExecDistribution {
    fn validate(&self) -> Result<(), TraceError> {
        let range_ok = |[lo, hi]: [Time; 2]| lo > 0.0 && lo <= hi;
        let ok = match *self {
            ExecDistribution::Uniform { low, high } | ExecDistribution::LogUniform { low, high } => {
                range_ok([low, high])
            }
            ExecDistribution::Bimodal {
                short,
                long,
                long_fraction,
            } => range_ok(short) && range_ok(long) && (0.0..=1.0).contains(&long_fraction),
        };
        if ok {
            Ok(())
        } else {
            Err(TraceError::Invalid(format!("bad execution time distribution {self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Time {
        let log_uniform = |rng: &mut R, [lo, hi]: [Time; 2]| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo.ln()..hi.ln()).exp()
            }
        };
        match *self {
            ExecDistribution::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.random_range(low..high)
                }
            }
            ExecDistribution::LogUniform { low, high } => log_uniform(rng, [low, high]),
            ExecDistribution::Bimodal {
                short,
                long,
                long_fraction,
            } => {
                if rng.random::<f64>() < long_fraction {
                    log_uniform(rng, long)
                } else {
                    log_uniform(rng, short)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArrivalProcess {
    /// Independent arrivals at `rate` requests per ms.
    Poisson { rate: f64 },
    /// Bursts start as a Poisson process at `burst_rate` per ms. Each burst
    /// belongs to one function and holds between 1 and `2 * mean_size - 1`
    /// requests separated by exponential gaps of mean `mean_gap` ms.
    Bursts {
        burst_rate: f64,
        mean_size: u32,
        mean_gap: Time,
    },
}

/// Seeded description of a synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub function_count: usize,
    pub exec: ExecDistribution,
    /// Per-request multiplicative jitter around the function mean, as a
    /// fraction in [0, 1).
    pub exec_jitter: f64,
    pub arrivals: ArrivalProcess,
    /// Zipf exponent of function popularity; 0 is uniform.
    pub popularity_skew: f64,
    pub horizon: Time,
    pub max_requests: Option<usize>,
    pub rng_seed: u64,
    pub cold_start_range: [Time; 2],
    pub eviction_range: [Time; 2],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::bursty()
    }
}

impl SyntheticSpec {
    /// Mixed short and long functions arriving in same-function bursts,
    /// capped at 10^4 requests.
    pub fn bursty() -> Self {
        Self {
            function_count: 10,
            exec: ExecDistribution::Bimodal {
                short: [10.0, 500.0],
                long: [2_000.0, 5_000.0],
                long_fraction: 0.1,
            },
            exec_jitter: 0.2,
            arrivals: ArrivalProcess::Bursts {
                burst_rate: 0.0003,
                mean_size: 4,
                mean_gap: 100.0,
            },
            popularity_skew: 0.8,
            horizon: 36_000_000.0,
            max_requests: Some(10_000),
            rng_seed: 1,
            cold_start_range: [500.0, 1500.0],
            eviction_range: [500.0, 1500.0],
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::Invalid(m.to_string()));
        if self.function_count == 0 {
            return bad("function_count must be positive");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if !(0.0..1.0).contains(&self.exec_jitter) {
            return bad("exec_jitter must be in [0, 1)");
        }
        if !(self.popularity_skew >= 0.0) {
            return bad("popularity_skew must be non-negative");
        }
        if self.max_requests == Some(0) {
            return bad("max_requests must be positive");
        }
        for [lo, hi] in [self.cold_start_range, self.eviction_range] {
            if !(lo >= 0.0 && lo <= hi) {
                return bad("time ranges must satisfy 0 <= lower <= upper");
            }
        }
        match self.arrivals {
            ArrivalProcess::Poisson { rate } if !(rate > 0.0) => bad("rate must be positive"),
            ArrivalProcess::Bursts {
                burst_rate,
                mean_size,
                mean_gap,
            } if !(burst_rate > 0.0 && mean_size > 0 && mean_gap > 0.0) => {
                bad("burst parameters must be positive")
            }
            _ => self.exec.validate(),
        }
    }
}

/// A ready-to-run workload.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub requests: Vec<Request>,
    pub profiles: Vec<FunctionProfile>,
    /// Capacity the workload was built for, if any.
    pub capacity: Option<usize>,
}

struct Popularity(Option<Zipf<f64>>, usize);

impl Popularity {
    fn new(n: usize, skew: f64) -> Self {
        let zipf = (skew > 0.0 && n > 1).then(|| Zipf::new(n as f64, skew).expect("valid zipf"));
        Popularity(zipf, n)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        match &self.0 {
            Some(z) => (z.sample(rng) as u32 - 1).min(self.1 as u32 - 1),
            None => rng.random_range(0..self.1 as u32),
        }
    }
}

/// Generates requests and profiles from `spec`. Output depends only on the
/// spec. Function popularity rank is shuffled against execution time so
/// that both long and short functions can be popular.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Vec<Request>, Vec<FunctionProfile>), TraceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let n = spec.function_count;
    let means: Vec<Time> = (0..n).map(|_| spec.exec.sample(&mut rng)).collect();
    let mut profile_rng = rng.clone();
    profile_rng.set_stream(1);
    let draw = |rng: &mut ChaCha8Rng, [lo, hi]: [Time; 2]| if lo == hi { lo } else { rng.random_range(lo..hi) };
    let profiles = (0..n)
        .map(|i| {
            let cold = draw(&mut profile_rng, spec.cold_start_range);
            let evict = draw(&mut profile_rng, spec.eviction_range);
            FunctionProfile::new(i as u32, cold, evict)
        })
        .collect();

    let popularity = Popularity::new(n, spec.popularity_skew);
    let cap = spec.max_requests.unwrap_or(usize::MAX);
    let mut events: Vec<(Time, u32)> = Vec::new();
    match spec.arrivals {
        ArrivalProcess::Poisson { rate } => {
            let gap = Exp::new(rate).expect("positive rate");
            let mut t = gap.sample(&mut rng);
            while t < spec.horizon && events.len() < cap {
                events.push((t, popularity.sample(&mut rng)));
                t += gap.sample(&mut rng);
            }
        }
        ArrivalProcess::Bursts {
            burst_rate,
            mean_size,
            mean_gap,
        } => {
            let between = Exp::new(burst_rate).expect("positive rate");
            let within = Exp::new(1.0 / mean_gap).expect("positive gap");
            let mut t = between.sample(&mut rng);
            while t < spec.horizon && events.len() < cap {
                let f = popularity.sample(&mut rng);
                let size = rng.random_range(1..=2 * mean_size - 1);
                let mut s = t;
                for _ in 0..size {
                    if s >= spec.horizon {
                        break;
                    }
                    events.push((s, f));
                    s += within.sample(&mut rng);
                }
                t += between.sample(&mut rng);
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    events.truncate(cap);

    let requests = events
        .into_iter()
        .enumerate()
        .map(|(i, (t, f))| {
            let jitter = if spec.exec_jitter > 0.0 {
                rng.random_range(-spec.exec_jitter..spec.exec_jitter)
            } else {
                0.0
            };
            let exec = (means[f as usize] * (1.0 + jitter)).max(MIN_DURATION);
            Request::new(i as u64, FunctionId(f), t, exec)
        })
        .collect();
    Ok((requests, profiles))
}

/// Two long requests of one function followed by three short requests of
/// another on a single-slot server. Waiting behind the long function is
/// what the short requests lose under arrival-order scheduling.
pub fn long_short_workload() -> Workload {
    let long = FunctionId(0);
    let short = FunctionId(1);
    Workload {
        requests: vec![
            Request::new(0, long, 0.0, 8_000.0),
            Request::new(1, long, 100.0, 8_000.0),
            Request::new(2, short, 200.0, 200.0),
            Request::new(3, short, 300.0, 200.0),
            Request::new(4, short, 400.0, 200.0),
        ],
        profiles: vec![FunctionProfile::new(0, 600.0, 800.0), FunctionProfile::new(1, 500.0, 500.0)],
        capacity: Some(1),
    }
}

pub const PRESETS: [&str; 2] = ["long-short", "bursty"];

/// Looks up a named workload. `seed` replaces the synthetic seed.
pub fn preset(name: &str, seed: Option<u64>) -> Result<Workload, TraceError> {
    match name {
        "long-short" => Ok(long_short_workload()),
        "bursty" => {
            let mut spec = SyntheticSpec::bursty();
            if let Some(s) = seed {
                spec.rng_seed = s;
            }
            let (requests, profiles) = generate_synthetic(&spec)?;
            Ok(Workload {
                requests,
                profiles,
                capacity: None,
            })
        }
        other => Err(TraceError::Invalid(format!(
            "unknown preset {other:?} (expected one of {})",
            PRESETS.join(", ")
        ))),
    }
}
