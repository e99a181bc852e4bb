//! Staged-ramp load generator and report writer.
//!
//! A plan describes the classic staged stress shape: pause, start an
//! initial thread group, add a fixed batch per interval (each batch
//! spread over a short window), hold at the target, then ramp down N
//! threads per second. Each virtual user is one OS thread running a
//! closed request loop against the engine's HTTP API.
//!
//! The report mirrors the usual aggregate table: Samples, Average,
//! Median, 90th/99th percentile, Min, Max, Anomaly Rate, Throughput and
//! Receive/Send KB/s, per label plus a TOTAL row. Percentiles are
//! nearest-rank.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Credential {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestSpec {
    Query { date: String, departure: String, arrival: String },
    Purchase {
        train_id: String,
        date: String,
        departure: String,
        arrival: String,
        seat_type: String,
        passengers: u32,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixEntry {
    pub label: String,
    pub weight: u32,
    /// Think time after each request of this kind (a JMeter-style timer);
    /// also the knob that keeps purchase attempts below seat capacity.
    #[serde(default)]
    pub think_time_ms: u64,
    #[serde(flatten)]
    pub request: RequestSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadPlan {
    pub base_url: String,
    pub target_threads: u32,
    pub startup_delay_s: f64,
    pub initial_threads: u32,
    pub step_threads: u32,
    pub step_interval_s: f64,
    pub step_window_s: f64,
    pub hold_s: f64,
    pub rampdown_per_s: u32,
    #[serde(default)]
    pub error_rate_ceiling_pct: Option<f64>,
    #[serde(default)]
    pub users: Vec<Credential>,
    pub mix: Vec<MixEntry>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("engine unreachable at {url}: {cause}")]
    EngineUnreachable { url: String, cause: String },
    #[error("no samples collected")]
    EmptySamples,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl LoadPlan {
    pub fn validate(&self) -> Result<(), BenchError> {
        let positive = [
            ("target_threads", self.target_threads as f64),
            ("initial_threads", self.initial_threads as f64),
            ("step_threads", self.step_threads as f64),
            ("step_interval_s", self.step_interval_s),
            ("step_window_s", self.step_window_s),
            ("rampdown_per_s", self.rampdown_per_s as f64),
        ];
        for (name, value) in positive {
            if value <= 0.0 {
                return Err(BenchError::InvalidPlan(format!("{name} must be positive")));
            }
        }
        if self.startup_delay_s < 0.0 || self.hold_s < 0.0 {
            return Err(BenchError::InvalidPlan("delays must be non-negative".into()));
        }
        if self.step_window_s > self.step_interval_s {
            return Err(BenchError::InvalidPlan("step_window_s must be <= step_interval_s".into()));
        }
        if self.initial_threads > self.target_threads {
            return Err(BenchError::InvalidPlan("initial_threads exceeds target".into()));
        }
        if self.mix.is_empty() || self.mix.iter().all(|m| m.weight == 0) {
            return Err(BenchError::InvalidPlan("request mix has no positive weight".into()));
        }
        Ok(())
    }
}

/// One virtual user's lifetime, in milliseconds relative to test start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VuPhase {
    pub index: u32,
    pub start_ms: u64,
    pub stop_ms: u64,
}

/// Pure ramp arithmetic: the initial group starts together after the
/// startup delay; each later batch starts at interval boundaries, spread
/// evenly inside the step window; after the hold, threads stop newest-
/// first at `rampdown_per_s` per second.
pub fn ramp_schedule(plan: &LoadPlan) -> Vec<VuPhase> {
    let t0 = (plan.startup_delay_s * 1000.0) as u64;
    let mut starts: Vec<u64> = (0..plan.initial_threads).map(|_| t0).collect();
    let mut batch = 1u64;
    while (starts.len() as u32) < plan.target_threads {
        let remaining = plan.target_threads - starts.len() as u32;
        let size = plan.step_threads.min(remaining);
        let batch_start = t0 + (batch as f64 * plan.step_interval_s * 1000.0) as u64;
        let window_ms = plan.step_window_s * 1000.0;
        for j in 0..size {
            starts.push(batch_start + (j as f64 * window_ms / size as f64) as u64);
        }
        batch += 1;
    }
    let reach = *starts.iter().max().expect("at least one thread");
    let hold_end = reach + (plan.hold_s * 1000.0) as u64;

    // Newest-started threads stop first, rampdown_per_s per second.
    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse((starts[i], i)));
    let mut stops = vec![0u64; starts.len()];
    for (rank, &i) in order.iter().enumerate() {
        stops[i] = hold_end + (rank as u64 / plan.rampdown_per_s as u64) * 1000;
    }

    starts
        .into_iter()
        .zip(stops)
        .enumerate()
        .map(|(i, (start_ms, stop_ms))| VuPhase { index: i as u32, start_ms, stop_ms })
        .collect()
}

/// Active thread count at instant `t_ms` (starts inclusive, stops exclusive).
pub fn thread_count_at(schedule: &[VuPhase], t_ms: u64) -> usize {
    schedule.iter().filter(|p| p.start_ms <= t_ms && t_ms < p.stop_ms).count()
}

/// One request outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub label: String,
    pub start_ms: u64,
    pub rt_ms: u64,
    pub ok: bool,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

/// Weighted pick over the mix; zero-weight entries are never chosen.
pub fn pick_mix<'a>(mix: &'a [MixEntry], rng: &mut impl Rng) -> &'a MixEntry {
    let total: u64 = mix.iter().map(|m| m.weight as u64).sum();
    let mut roll = rng.random_range(0..total);
    for entry in mix {
        let w = entry.weight as u64;
        if roll < w {
            return entry;
        }
        roll -= w;
    }
    unreachable!("weights sum checked by validate")
}

fn execute(
    client: &reqwest::blocking::Client,
    base_url: &str,
    token: Option<&str>,
    spec: &RequestSpec,
) -> (bool, u64, u64) {
    let with_auth = |mut req: reqwest::blocking::RequestBuilder| {
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        req
    };
    match spec {
        RequestSpec::Query { date, departure, arrival } => {
            let req = with_auth(client.get(format!("{base_url}/trains/query")).query(&[
                ("date", date.as_str()),
                ("departure", departure.as_str()),
                ("arrival", arrival.as_str()),
            ]));
            match req.send() {
                Ok(resp) => {
                    let ok = resp.status().is_success();
                    let body_len = resp.bytes().map(|b| b.len() as u64).unwrap_or(0);
                    (ok, body_len, 0)
                }
                Err(_) => (false, 0, 0),
            }
        }
        RequestSpec::Purchase { train_id, date, departure, arrival, seat_type, passengers } => {
            // Dedup-token fetch is setup, not part of the timed sample.
            let dedup = with_auth(client.post(format!("{base_url}/tickets/dedup-token")))
                .send()
                .ok()
                .and_then(|r| r.json::<serde_json::Value>().ok())
                .and_then(|v| v["token"].as_str().map(str::to_string));
            let Some(dedup) = dedup else {
                return (false, 0, 0);
            };
            let body = serde_json::json!({
                "dedup": dedup,
                "train_id": train_id,
                "date": date,
                "departure": departure,
                "arrival": arrival,
                "seat_type": seat_type,
                "passengers": (0..*passengers).map(|i| serde_json::json!({
                    "name": format!("vu-passenger-{i}"),
                    "id_number": format!("11010119900101{:04}", i),
                    "ticket_type": "ADULT",
                })).collect::<Vec<_>>(),
            });
            let payload = body.to_string();
            let bytes_out = payload.len() as u64;
            let req = with_auth(
                client
                    .post(format!("{base_url}/tickets/purchase"))
                    .header("content-type", "application/json")
                    .body(payload),
            );
            match req.send() {
                Ok(resp) => {
                    let ok = resp.status().is_success();
                    let body_len = resp.bytes().map(|b| b.len() as u64).unwrap_or(0);
                    (ok, body_len, bytes_out)
                }
                Err(_) => (false, 0, bytes_out),
            }
        }
    }
}

/// Executes the staged ramp against a live engine, returning every raw
/// sample. Aborts up front when the engine is unreachable.
pub fn run_plan(plan: &LoadPlan) -> Result<Vec<Sample>, BenchError> {
    plan.validate()?;
    let probe = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(5))
        .build()
        .expect("client builds");
    probe.get(format!("{}/metrics", plan.base_url)).send().map_err(|e| {
        BenchError::EngineUnreachable { url: plan.base_url.clone(), cause: e.to_string() }
    })?;

    let schedule = ramp_schedule(plan);
    let epoch = Instant::now();
    let (tx, rx) = mpsc::channel::<Sample>();
    let mut handles = Vec::new();
    for phase in &schedule {
        let phase = *phase;
        let plan = plan.clone();
        let tx = tx.clone();
        handles.push(std::thread::spawn(move || {
            let now = epoch.elapsed().as_millis() as u64;
            if phase.start_ms > now {
                std::thread::sleep(Duration::from_millis(phase.start_ms - now));
            }
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(10))
                .build()
                .expect("client builds");
            let token = if plan.users.is_empty() {
                None
            } else {
                let cred = &plan.users[phase.index as usize % plan.users.len()];
                client
                    .post(format!("{}/auth/login", plan.base_url))
                    .json(&serde_json::json!({
                        "username": cred.username,
                        "password": cred.password,
                    }))
                    .send()
                    .ok()
                    .and_then(|r| r.json::<serde_json::Value>().ok())
                    .and_then(|v| v["token"].as_str().map(str::to_string))
            };
            let mut rng = ChaCha8Rng::seed_from_u64(0xbe9c_0000 + phase.index as u64);
            loop {
                let now = epoch.elapsed().as_millis() as u64;
                if now >= phase.stop_ms {
                    break;
                }
                let entry = pick_mix(&plan.mix, &mut rng);
                let begin = Instant::now();
                let (ok, bytes_in, bytes_out) =
                    execute(&client, &plan.base_url, token.as_deref(), &entry.request);
                let _ = tx.send(Sample {
                    label: entry.label.clone(),
                    start_ms: now,
                    rt_ms: begin.elapsed().as_millis() as u64,
                    ok,
                    bytes_in,
                    bytes_out,
                });
                if entry.think_time_ms > 0 {
                    std::thread::sleep(Duration::from_millis(entry.think_time_ms));
                }
            }
        }));
    }
    drop(tx);
    for handle in handles {
        let _ = handle.join();
    }
    let mut samples: Vec<Sample> = rx.into_iter().collect();
    samples.sort_by_key(|s| (s.start_ms, s.label.clone()));
    Ok(samples)
}

/// Nearest-rank percentile: the ceil(p*N/100)-th smallest value.
pub fn nearest_rank(sorted: &[u64], p: u32) -> u64 {
    assert!(!sorted.is_empty() && p >= 1 && p <= 100);
    let rank = (p as u64 * sorted.len() as u64).div_ceil(100).max(1) as usize;
    sorted[rank - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub samples: u64,
    pub average_ms: f64,
    pub median_ms: u64,
    pub p90_ms: u64,
    pub p99_ms: u64,
    pub min_ms: u64,
    pub max_ms: u64,
    pub error_rate_pct: f64,
    pub throughput_rps: f64,
    pub receive_kb_s: f64,
    pub send_kb_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
}

pub const REPORT_COLUMNS: [&str; 12] = [
    "Label",
    "Samples",
    "Average",
    "Median",
    "90th Percentile",
    "99th Percentile",
    "Min",
    "Max",
    "Anomaly Rate",
    "Throughput",
    "Receive KB/s",
    "Send KB/s",
];

fn row_from(label: &str, samples: &[&Sample]) -> ReportRow {
    let mut rts: Vec<u64> = samples.iter().map(|s| s.rt_ms).collect();
    rts.sort_unstable();
    let n = rts.len() as u64;
    let first_start = samples.iter().map(|s| s.start_ms).min().unwrap();
    let last_end = samples.iter().map(|s| s.start_ms + s.rt_ms).max().unwrap();
    let active_s = ((last_end - first_start) as f64 / 1000.0).max(0.001);
    let errors = samples.iter().filter(|s| !s.ok).count() as u64;
    let bytes_in: u64 = samples.iter().map(|s| s.bytes_in).sum();
    let bytes_out: u64 = samples.iter().map(|s| s.bytes_out).sum();
    ReportRow {
        label: label.to_string(),
        samples: n,
        average_ms: rts.iter().sum::<u64>() as f64 / n as f64,
        median_ms: nearest_rank(&rts, 50),
        p90_ms: nearest_rank(&rts, 90),
        p99_ms: nearest_rank(&rts, 99),
        min_ms: rts[0],
        max_ms: *rts.last().unwrap(),
        error_rate_pct: errors as f64 * 100.0 / n as f64,
        throughput_rps: n as f64 / active_s,
        receive_kb_s: bytes_in as f64 / 1024.0 / active_s,
        send_kb_s: bytes_out as f64 / 1024.0 / active_s,
    }
}

/// Aggregates raw samples into per-label rows plus a TOTAL row computed
/// over the full sample set.
pub fn summarize(samples: &[Sample]) -> Result<RunReport, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptySamples);
    }
    let mut by_label: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        by_label.entry(&s.label).or_default().push(s);
    }
    let mut rows: Vec<ReportRow> =
        by_label.iter().map(|(label, group)| row_from(label, group)).collect();
    let all: Vec<&Sample> = samples.iter().collect();
    rows.push(row_from("TOTAL", &all));
    Ok(RunReport { rows })
}

impl RunReport {
    pub fn total(&self) -> &ReportRow {
        self.rows.last().expect("TOTAL row present")
    }

    /// Byte-stable CSV: fixed column order, fixed number formatting.
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.2},{},{},{},{},{},{:.2}%,{:.2},{:.2},{:.2}\n",
                r.label,
                r.samples,
                r.average_ms,
                r.median_ms,
                r.p90_ms,
                r.p99_ms,
                r.min_ms,
                r.max_ms,
                r.error_rate_pct,
                r.throughput_rps,
                r.receive_kb_s,
                r.send_kb_s,
            ));
        }
        out
    }
}
