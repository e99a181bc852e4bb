//! Acceptance suite: runs every criterion sequentially at its stated
//! tolerance and prints one pass/fail line per criterion (visible with
//! `cargo test --test acceptance -- --nocapture`). The test fails if any
//! criterion fails, after all criteria have reported.

mod common;

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use railgate_core::aes::{encrypt_block, decrypt_block, FieldCodec, KeySchedule};
use railgate_core::bench::{
    ramp_schedule, run_plan, summarize, thread_count_at, Credential, LoadPlan, MixEntry,
    RequestSpec, REPORT_COLUMNS,
};
use railgate_core::bloom::BloomFilter;
use railgate_core::clock::{system_clock, Clock, ManualClock};
use railgate_core::engine::config::EngineConfig;
use railgate_core::engine::http::HttpServer;
use railgate_core::engine::Engine;
use railgate_core::flow::{BreakerStateKind, FlowController, FlowRule, RejectReason};
use railgate_core::idgen::{decompose, SnowflakeGenerator, SnowflakeLayout, DEFAULT_EPOCH_MS};
use railgate_core::inventory::{
    remaining_oracle, CarriageSpec, Inventory, SeatPos, SeatType, SegmentKey, TokenDecision,
    TrainPlan,
};
use railgate_core::kvcache::{CacheStore, FieldValue};
use railgate_core::mqbus::MessageBus;
use railgate_core::orders::{OrderStatus, PaymentResult};
use railgate_core::recordstore::{cdc, RecordStore};

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(u32, &str, fn())> = vec![
        (1, "zero oversell under concurrent purchase storm", c01_zero_oversell),
        (2, "cross-segment consistency, exhaustive sequences", c02_cross_segment_exhaustive),
        (3, "CDC convergence under redelivery and restarts", c03_cdc_convergence),
        (4, "snowflake uniqueness, monotonicity, capacity", c04_snowflake),
        (5, "bloom filter sizing and measured FPR", c05_bloom),
        (6, "cache penetration defense", c06_cache_penetration),
        (7, "AES vectors and field codec roundtrips", c07_aes),
        (8, "flow control breaker cycle and QPS window", c08_flow_control),
        (9, "order state machine under interleaving", c09_order_state_machine),
        (10, "staged load run, report format and error rates", c10_staged_load),
    ];

    let mut failures = Vec::new();
    for (n, name, body) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(body);
        let elapsed = started.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("criterion {n:2} ({name}): PASS [{elapsed:.1}s]"),
            Err(cause) => {
                let message = cause
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| cause.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                println!("criterion {n:2} ({name}): FAIL [{elapsed:.1}s] - {message}");
                failures.push(n);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

fn users_toml(count: usize) -> String {
    (0..count)
        .map(|i| {
            format!(
                r#"
[[seed.users]]
username = "vu{i}"
password = "pw{i}"
id_number = "1101011990010112{i:02}"
phone = "138001380{i:02}"
"#
            )
        })
        .collect()
}

fn stress_engine(extra_toml: &str) -> Arc<Engine> {
    let toml = format!(
        r#"
listen_addr = "127.0.0.1:0"
worker_threads = 8

[shards]
db_count = 2
tables_per_db = 4

[bloom]
capacity = 100000
fpr = 0.01

[flow.query]
qps_limit = 100000000
max_concurrency = 100000

[flow.purchase]
qps_limit = 100000000
max_concurrency = 100000

[flow.order]
qps_limit = 100000000
max_concurrency = 100000
{}
{extra_toml}
"#,
        users_toml(8)
    );
    let engine = Engine::new(EngineConfig::from_toml(&toml).unwrap(), system_clock()).unwrap();
    engine.start_background();
    engine.drain_cdc();
    engine
}

fn login(client: &reqwest::blocking::Client, base: &str, user: usize) -> String {
    let resp: serde_json::Value = client
        .post(format!("{base}/auth/login"))
        .json(&serde_json::json!({"username": format!("vu{}", user % 8), "password": format!("pw{}", user % 8)}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    resp["token"].as_str().expect("login token").to_string()
}

// Criterion 1 — 64 virtual users, 10,000 purchase requests, 500 seats on
// one segment: exactly 500 orders, 500 token grants, a clean seat map,
// zero oversell alarms.
fn c01_zero_oversell() {
    let engine = stress_engine(
        r#"
[[seed.trains]]
train_id = "G500"
service_date = "2026-10-01"
stations = ["A", "B"]

[[seed.trains.carriages]]
carriage_no = 1
seat_type = "SECOND"
seat_count = 100

[[seed.trains.carriages]]
carriage_no = 2
seat_type = "SECOND"
seat_count = 100

[[seed.trains.carriages]]
carriage_no = 3
seat_type = "SECOND"
seat_count = 100

[[seed.trains.carriages]]
carriage_no = 4
seat_type = "SECOND"
seat_count = 100

[[seed.trains.carriages]]
carriage_no = 5
seat_type = "SECOND"
seat_count = 100
"#,
    );
    let server = HttpServer::start(engine.clone()).unwrap();
    let base = server.base_url();
    let started = Instant::now();

    let attempts = Arc::new(AtomicU64::new(0));
    let successes: Arc<Mutex<Vec<(String, Vec<(u64, u64)>)>>> = Arc::new(Mutex::new(Vec::new()));
    let mut handles = Vec::new();
    for vu in 0..64usize {
        let base = base.clone();
        let attempts = attempts.clone();
        let successes = successes.clone();
        handles.push(std::thread::spawn(move || {
            let client = reqwest::blocking::Client::new();
            let token = login(&client, &base, vu);
            loop {
                if attempts.fetch_add(1, Ordering::SeqCst) >= 10_000 {
                    break;
                }
                let dedup: serde_json::Value = client
                    .post(format!("{base}/tickets/dedup-token"))
                    .bearer_auth(&token)
                    .send()
                    .unwrap()
                    .json()
                    .unwrap();
                let resp = client
                    .post(format!("{base}/tickets/purchase"))
                    .bearer_auth(&token)
                    .json(&serde_json::json!({
                        "dedup": dedup["token"],
                        "train_id": "G500",
                        "date": "2026-10-01",
                        "departure": "A",
                        "arrival": "B",
                        "seat_type": "SECOND",
                        "passengers": [{"name": "p", "id_number": "110101199001011234"}],
                    }))
                    .send()
                    .unwrap();
                if resp.status().is_success() {
                    let body: serde_json::Value = resp.json().unwrap();
                    let seats = body["seats"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|s| (s["carriage"].as_u64().unwrap(), s["seat_no"].as_u64().unwrap()))
                        .collect();
                    successes
                        .lock()
                        .unwrap()
                        .push((body["order_no"].as_str().unwrap().to_string(), seats));
                } else {
                    let body: serde_json::Value = resp.json().unwrap();
                    assert_eq!(body["error"]["code"], "SOLD_OUT", "unexpected failure: {body}");
                }
            }
        }));
    }
    for handle in handles {
        handle.join().unwrap();
    }
    let elapsed = started.elapsed().as_secs_f64();

    let successes = successes.lock().unwrap();
    assert_eq!(successes.len(), 500, "exactly the seat capacity becomes orders");

    let metrics = engine.metrics_json();
    assert_eq!(metrics["token_grants"], 500);
    assert_eq!(metrics["token_rejections"], 9_500);
    assert_eq!(metrics["orders_created"], 500);
    assert_eq!(metrics["oversell_alarms"], 0);

    // Seat-map oracle: every assignment is a distinct physical seat.
    let mut seat_set = HashSet::new();
    for (_, seats) in successes.iter() {
        for seat in seats {
            assert!(seat_set.insert(*seat), "seat {seat:?} double-booked");
        }
    }
    assert_eq!(seat_set.len(), 500);
    let occupancy = engine.inventory.occupancy_snapshot("G500", "2026-10-01").unwrap();
    assert_eq!(occupancy.seats.iter().filter(|s| s.mask != 0).count(), 500);

    engine.drain_cdc();
    let report = engine.verify_convergence();
    assert!(report.convergent(), "mismatches: {:?}", report.mismatches);
    assert_eq!(
        engine.cache.hash_get("tickets:G500:2026-10-01", "A_B_SECOND"),
        Some(FieldValue::Int(0))
    );
    assert!(elapsed < 60.0, "storm took {elapsed:.1}s, expected < 60s");

    server.stop();
    engine.shutdown();
}

// Criterion 2 — every purchase/cancel sequence of length <= 6 on a
// 4-station, 3-seat train; cached remaining counts must equal the
// brute-force oracle at every quiescent point.
struct SegmentWorld {
    clock: Arc<ManualClock>,
    store: Arc<RecordStore>,
    cache: Arc<CacheStore>,
    bus: Arc<MessageBus>,
    inventory: Inventory,
    applier: cdc::CacheApplier,
    filter: HashSet<String>,
    plan: TrainPlan,
    live: Vec<(SegmentKey, Vec<SeatPos>)>,
}

impl SegmentWorld {
    fn new() -> Self {
        let clock = ManualClock::new(DEFAULT_EPOCH_MS + 1_000);
        let store = Arc::new(RecordStore::new(clock.clone()));
        let cache = Arc::new(CacheStore::new(clock.clone()));
        let bus = Arc::new(MessageBus::new(clock.clone()));
        let inventory = Inventory::new(store.clone(), cache.clone());
        let plan = TrainPlan {
            train_id: "G4".into(),
            service_date: "2026-10-02".into(),
            stations: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            carriages: vec![CarriageSpec {
                carriage_no: 1,
                seat_type: SeatType::Second,
                seat_count: 3,
            }],
        };
        inventory.register_plan(plan.clone()).unwrap();
        let applier = cdc::CacheApplier::new(cache.clone());
        let filter: HashSet<String> = ["t_ticket_remaining".to_string()].into();
        let mut world =
            Self { clock, store, cache, bus, inventory, applier, filter, plan, live: Vec::new() };
        world.drain();
        world
    }

    fn drain(&mut self) {
        self.store.pump_changes(&self.bus, &self.filter);
        cdc::consume_once(
            &self.bus,
            &self.applier,
            "cdc.t_ticket_remaining",
            "cache",
            usize::MAX,
            60_000,
        );
    }

    fn segment(&self, idx: usize) -> SegmentKey {
        let pairs = self.plan.segments();
        let (d, a) = pairs[idx];
        SegmentKey {
            departure: self.plan.stations[d].clone(),
            arrival: self.plan.stations[a].clone(),
            seat_type: SeatType::Second,
        }
    }

    /// Symbols 0..=5: purchase one ticket on segment i; 6: cancel the
    /// oldest live order; 7: cancel the newest.
    fn apply(&mut self, symbol: usize) {
        self.clock.advance(1);
        match symbol {
            0..=5 => {
                let key = self.segment(symbol);
                if self.inventory.deduct_tokens("G4", "2026-10-02", &key, 1).unwrap()
                    == TokenDecision::Granted
                {
                    match self.inventory.allocate_seats("G4", "2026-10-02", &key, 1, &[]) {
                        Ok(seats) => self.live.push((key, seats)),
                        Err(_) => {
                            self.inventory.refund_tokens("G4", "2026-10-02", &key, 1).unwrap()
                        }
                    }
                }
            }
            6 => {
                if !self.live.is_empty() {
                    let (key, seats) = self.live.remove(0);
                    self.inventory.release_seats("G4", "2026-10-02", &key, &seats).unwrap();
                }
            }
            7 => {
                if let Some((key, seats)) = self.live.pop() {
                    self.inventory.release_seats("G4", "2026-10-02", &key, &seats).unwrap();
                }
            }
            _ => unreachable!(),
        }
        self.drain();
    }

    fn check(&self, context: &str) {
        let occupancy = self.inventory.occupancy_snapshot("G4", "2026-10-02").unwrap();
        for idx in 0..6 {
            let key = self.segment(idx);
            let expected = remaining_oracle(&self.plan, &occupancy, &key) as i64;
            let cached = match self.cache.hash_get("tickets:G4:2026-10-02", &key.field()) {
                Some(FieldValue::Int(v)) => v,
                other => panic!("{context}: cache field {} is {other:?}", key.field()),
            };
            assert_eq!(cached, expected, "{context}: segment {}", key.field());
        }
    }
}

fn c02_cross_segment_exhaustive() {
    const SYMBOLS: usize = 8;
    const MAX_LEN: usize = 6;
    let started = Instant::now();
    let sequences_run = Arc::new(AtomicU64::new(0));

    // Sequences are independent; split the space by leading symbol.
    let mut workers = Vec::new();
    for worker in 0..2usize {
        let sequences_run = sequences_run.clone();
        workers.push(std::thread::spawn(move || {
            for first in (worker..SYMBOLS).step_by(2) {
                for len in 1..=MAX_LEN {
                    // Enumerate the remaining len-1 positions in base 8.
                    let tail_count = SYMBOLS.pow(len as u32 - 1);
                    for mut code in 0..tail_count {
                        let mut seq = Vec::with_capacity(len);
                        seq.push(first);
                        for _ in 1..len {
                            seq.push(code % SYMBOLS);
                            code /= SYMBOLS;
                        }
                        let mut world = SegmentWorld::new();
                        world.check("initial state");
                        for (step, &symbol) in seq.iter().enumerate() {
                            world.apply(symbol);
                            world.check(&format!("seq {seq:?} step {step}"));
                        }
                        sequences_run.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        }));
    }
    for w in workers {
        w.join().unwrap();
    }

    let total: u64 = (1..=MAX_LEN as u32).map(|l| (SYMBOLS as u64).pow(l)).sum();
    assert_eq!(sequences_run.load(Ordering::Relaxed), total);
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "exhaustive run took {elapsed:.1}s, budget 300s");
}

// Criterion 3 — randomized 10,000-operation workloads with injected
// redelivery and applier restarts converge for 20 seeds.
fn c03_cdc_convergence() {
    for seed in 0..20u64 {
        let h = common::CdcHarness::new(&["A", "B", "C", "D"], 6);
        let executed = common::run_faulty_workload(&h, seed, 10_000);
        assert_eq!(executed, 10_000);
        let report = h.quiesce();
        assert!(
            report.convergent(),
            "seed {seed}: {} mismatches, first: {:?}",
            report.mismatches.len(),
            report.mismatches.first()
        );
        for logical in &h.filter {
            assert_eq!(h.bus.pending(&format!("cdc.{logical}"), common::GROUP), 0);
        }
    }
}

// Criterion 4 — 8 generators x 1,000,000 IDs: no duplicates, strict
// per-generator monotonicity; one generator sustains the full 4096
// IDs-per-millisecond sequence capacity without error.
fn c04_snowflake() {
    let mut handles = Vec::new();
    for worker in 0..8u64 {
        handles.push(std::thread::spawn(move || {
            let generator = SnowflakeGenerator::new(
                SnowflakeLayout::default(),
                0,
                worker,
                system_clock(),
            )
            .unwrap();
            let mut ids = Vec::with_capacity(1_000_000);
            let mut last = -1i64;
            for _ in 0..1_000_000 {
                let id = generator.next_id().unwrap();
                assert!(id > last, "monotonicity violated on worker {worker}");
                last = id;
                ids.push(id);
            }
            ids
        }));
    }
    let mut all: Vec<i64> = Vec::with_capacity(8_000_000);
    for handle in handles {
        all.extend(handle.join().unwrap());
    }
    assert_eq!(all.len(), 8_000_000);
    all.sort_unstable();
    let unique = all.windows(2).all(|w| w[0] != w[1]);
    assert!(unique, "duplicate snowflake ids across 8 generators");

    // Capacity: a frozen millisecond yields all 4096 sequence values.
    let clock = ManualClock::new(DEFAULT_EPOCH_MS + 5);
    let generator =
        SnowflakeGenerator::new(SnowflakeLayout::default(), 1, 1, clock.clone()).unwrap();
    let mut seen = HashSet::new();
    for _ in 0..4096 {
        let id = generator.next_id().unwrap();
        let parts = decompose(id, generator.layout());
        assert_eq!(parts.timestamp_offset_ms, 5);
        assert!(seen.insert(parts.sequence));
    }
    assert_eq!(seen.len(), 4096);
}

// Criterion 5 — sized for n=100,000 at p=0.01: zero false negatives and
// measured FPR within [0.005, 0.02] on 100,000 absent keys.
fn c05_bloom() {
    let n = 100_000u32;
    let filter = BloomFilter::with_capacity(n as u64, 0.01).unwrap();
    for i in 0..n {
        filter.insert(format!("user-{i}").as_bytes());
    }
    for i in 0..n {
        assert!(
            filter.maybe_contains(format!("user-{i}").as_bytes()),
            "false negative at {i}"
        );
    }
    let false_positives = (0..100_000u32)
        .filter(|i| filter.maybe_contains(format!("ghost-{i}").as_bytes()))
        .count();
    let measured = false_positives as f64 / 100_000.0;
    assert!(
        (0.005..=0.02).contains(&measured),
        "measured FPR {measured} outside [0.005, 0.02]"
    );
}

// Criterion 6 — after warm-up, 10,000 queries for nonexistent routes
// leave the store-read counter untouched.
fn c06_cache_penetration() {
    let engine = stress_engine(
        r#"
[[seed.trains]]
train_id = "G301"
service_date = "2026-10-03"
stations = ["North", "Center", "South"]

[[seed.trains.carriages]]
carriage_no = 1
seat_type = "SECOND"
seat_count = 50
"#,
    );
    let server = HttpServer::start(engine.clone()).unwrap();
    let base = server.base_url();
    let client = reqwest::blocking::Client::new();
    let token = login(&client, &base, 0);

    // Warm-up: a real query fills the route cache.
    let warm: serde_json::Value = client
        .get(format!("{base}/trains/query"))
        .bearer_auth(&token)
        .query(&[("date", "2026-10-03"), ("departure", "North"), ("arrival", "South")])
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(warm["trains"][0]["train_id"], "G301");

    let before = engine.metrics_json()["store_reads"].as_u64().unwrap();
    let counter = Arc::new(AtomicU64::new(0));
    let mut handles = Vec::new();
    for _ in 0..4 {
        let base = base.clone();
        let token = token.clone();
        let counter = counter.clone();
        handles.push(std::thread::spawn(move || {
            let client = reqwest::blocking::Client::new();
            loop {
                let i = counter.fetch_add(1, Ordering::SeqCst);
                if i >= 10_000 {
                    break;
                }
                let resp: serde_json::Value = client
                    .get(format!("{base}/trains/query"))
                    .bearer_auth(&token)
                    .query(&[
                        ("date", "2026-10-03"),
                        ("departure", format!("Ghost-{i}").as_str()),
                        ("arrival", "South"),
                    ])
                    .send()
                    .unwrap()
                    .json()
                    .unwrap();
                assert_eq!(resp["trains"].as_array().unwrap().len(), 0);
            }
        }));
    }
    for handle in handles {
        handle.join().unwrap();
    }

    let metrics = engine.metrics_json();
    let after = metrics["store_reads"].as_u64().unwrap();
    assert_eq!(after - before, 0, "store reads leaked through the bloom front");
    assert!(metrics["bloom_short_circuits"].as_u64().unwrap() >= 10_000);

    server.stop();
    engine.shutdown();
}

// Criterion 7 — the standard 128-bit vector bit-exactly, 1,000 random
// block roundtrips, 1,000 field-codec roundtrips on ID-number strings.
fn c07_aes() {
    let key: Vec<u8> = (0..16u8).collect();
    let ks = KeySchedule::new(&key).unwrap();
    let plaintext: [u8; 16] = [
        0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd,
        0xee, 0xff,
    ];
    let ct = encrypt_block(&plaintext, &ks).unwrap();
    assert_eq!(hex::encode(ct), "69c4e0d86a7b0430d8cdb78070b4c55a");
    assert_eq!(decrypt_block(&ct, &ks).unwrap(), plaintext);

    let mut rng = ChaCha8Rng::seed_from_u64(0xacce97);
    for _ in 0..1000 {
        let mut block = [0u8; 16];
        rng.fill_bytes(&mut block);
        assert_eq!(decrypt_block(&encrypt_block(&block, &ks).unwrap(), &ks).unwrap(), block);
    }

    let codec = FieldCodec::new(&key).unwrap();
    for _ in 0..1000 {
        let len = rng.random_range(15..=18);
        let id: String = (0..len).map(|_| char::from(b'0' + rng.random_range(0..10))).collect();
        let encoded = codec.encode_field(&id).unwrap();
        assert_eq!(codec.decode_field(&encoded).unwrap(), id);
    }
}

// Criterion 8 — scripted virtual-clock scenarios: the full breaker cycle
// CLOSED -> OPEN -> HALF_OPEN -> CLOSED and exact QPS window limits.
fn c08_flow_control() {
    let fc = FlowController::new();
    fc.register("core", FlowRule { qps_limit: 10, ..FlowRule::default() });

    // Exact QPS accounting at the window edges.
    let mut permits = Vec::new();
    for i in 0..10 {
        permits.push(fc.admit("core", 1_000 + i).unwrap().unwrap());
    }
    assert_eq!(fc.admit("core", 1_050).unwrap().unwrap_err(), RejectReason::Qps);
    assert_eq!(fc.admit("core", 1_999).unwrap().unwrap_err(), RejectReason::Qps);
    for p in permits {
        fc.record_outcome(p, 1, true, 1_050);
    }
    let next = fc.admit("core", 2_000).unwrap();
    assert!(next.is_ok(), "burst bucket must leave the window after 1s");
    fc.record_outcome(next.unwrap(), 1, true, 2_000);

    // Full breaker cycle on a virtual clock.
    fc.register("fragile", FlowRule::default());
    let mut history = vec![fc.breaker_state("fragile").unwrap().state];
    for i in 0..10 {
        let p = fc.admit("fragile", 10_000 + i).unwrap().unwrap();
        fc.record_outcome(p, 700, false, 10_000 + i); // slow and failing
    }
    history.push(fc.breaker_state("fragile").unwrap().state);
    assert_eq!(fc.admit("fragile", 12_000).unwrap().unwrap_err(), RejectReason::Breaker);

    let reopen = 10_009 + 5_000;
    let probes: Vec<_> = (0..3).map(|_| fc.admit("fragile", reopen).unwrap().unwrap()).collect();
    history.push(fc.breaker_state("fragile").unwrap().state);
    assert_eq!(fc.admit("fragile", reopen).unwrap().unwrap_err(), RejectReason::Breaker);
    for p in probes {
        fc.record_outcome(p, 5, true, reopen + 1);
    }
    history.push(fc.breaker_state("fragile").unwrap().state);
    assert_eq!(
        history,
        vec![
            BreakerStateKind::Closed,
            BreakerStateKind::Open,
            BreakerStateKind::HalfOpen,
            BreakerStateKind::Closed,
        ]
    );
}

// Criterion 9 — >= 10,000 randomized pay/cancel/close schedules: no
// illegal transition, exactly one winner, and full resource restoration
// on terminal non-PAID states.
fn c09_order_state_machine() {
    let trials = 10_000u64;
    let mut paid = 0u64;
    let mut cancelled = 0u64;
    let mut closed = 0u64;
    for trial in 0..trials {
        let h = common::CdcHarness::new(&["A", "B", "C"], 3);
        let key = h.segment(0, 2, SeatType::Second);
        let user_id = 42;
        let order_no = h.purchase(user_id, &key, 1).expect("fresh world grants");
        // Make the order eligible for close before the race starts.
        h.clock.advance(common::PAYMENT_DEADLINE_MS + 1);

        let barrier = Arc::new(std::sync::Barrier::new(3));
        let spin = move |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial * 31 + seed);
            let spins = rng.random_range(0..2_000u32);
            for _ in 0..spins {
                std::hint::spin_loop();
            }
        };

        let pay_handle = {
            let orders = h.orders.clone();
            let order_no = order_no.clone();
            let barrier = barrier.clone();
            std::thread::spawn(move || {
                barrier.wait();
                spin(1);
                orders.payment_callback(&order_no, PaymentResult::Success, &format!("cb-{order_no}"))
            })
        };
        let cancel_handle = {
            let orders = h.orders.clone();
            let order_no = order_no.clone();
            let barrier = barrier.clone();
            std::thread::spawn(move || {
                barrier.wait();
                spin(2);
                orders.cancel_order(&order_no, user_id)
            })
        };
        let close_handle = {
            let orders = h.orders.clone();
            let clock = h.clock.clone();
            let barrier = barrier.clone();
            std::thread::spawn(move || {
                barrier.wait();
                spin(3);
                orders.close_expired(clock.now_ms())
            })
        };

        let pay_result = pay_handle.join().unwrap().unwrap();
        let cancel_result = cancel_handle.join().unwrap();
        let close_result = close_handle.join().unwrap().unwrap();

        let final_status = h.orders.get_order(&order_no).unwrap().unwrap().status;
        let pay_won = pay_result == OrderStatus::Paid;
        let cancel_won = cancel_result.is_ok();
        let close_won = close_result.contains(&order_no);
        let winners = [pay_won, cancel_won, close_won].iter().filter(|&&w| w).count();
        assert_eq!(winners, 1, "trial {trial}: winners {pay_won}/{cancel_won}/{close_won}");

        let expected_status = if pay_won {
            OrderStatus::Paid
        } else if cancel_won {
            OrderStatus::Cancelled
        } else {
            OrderStatus::Closed
        };
        assert_eq!(final_status, expected_status, "trial {trial}");
        // The callback reported the true final state even when it lost.
        assert_eq!(pay_result, final_status, "trial {trial}: callback response");

        // Resource accounting: PAID keeps the seat, anything else restores
        // occupancy and tokens exactly.
        let occupied = h
            .inventory
            .occupancy_snapshot(common::TRAIN, common::DATE)
            .unwrap()
            .seats
            .iter()
            .filter(|s| s.mask != 0)
            .count();
        let tokens = h.inventory.token_count(common::TRAIN, common::DATE, &key).unwrap();
        if pay_won {
            paid += 1;
            assert_eq!((occupied, tokens), (1, 2), "trial {trial}: paid keeps resources");
        } else {
            if cancel_won {
                cancelled += 1;
            } else {
                closed += 1;
            }
            assert_eq!((occupied, tokens), (0, 3), "trial {trial}: resources restored");
            let report = h.quiesce();
            assert!(report.convergent(), "trial {trial}: {:?}", report.mismatches.first());
        }
    }
    assert_eq!(paid + cancelled + closed, trials);
    // The schedule randomization must actually exercise different winners.
    assert!(paid > 0 && (cancelled + closed) > 0, "degenerate interleavings: {paid}/{cancelled}/{closed}");
}

// Criterion 10 — scaled staged run: query path finishes with 0.00% errors
// and the report carries the full column set; purchase path stays within
// the 2.01% anomaly ceiling.
fn c10_staged_load() {
    let engine = stress_engine(
        r#"
[[seed.trains]]
train_id = "G10Q"
service_date = "2026-10-04"
stations = ["East", "Mid", "West"]

[[seed.trains.carriages]]
carriage_no = 1
seat_type = "SECOND"
seat_count = 100

[[seed.trains]]
train_id = "G10P"
service_date = "2026-10-04"
stations = ["P1", "P2"]

[[seed.trains.carriages]]
carriage_no = 1
seat_type = "SECOND"
seat_count = 5000

[[seed.trains.carriages]]
carriage_no = 2
seat_type = "SECOND"
seat_count = 5000
"#,
    );
    let server = HttpServer::start(engine.clone()).unwrap();
    let base = server.base_url();
    let users: Vec<Credential> = (0..8)
        .map(|i| Credential { username: format!("vu{i}"), password: format!("pw{i}") })
        .collect();

    // Scaled query schedule: 20 -> 100 virtual users.
    let query_plan = LoadPlan {
        base_url: base.clone(),
        target_threads: 100,
        startup_delay_s: 0.5,
        initial_threads: 20,
        step_threads: 20,
        step_interval_s: 2.0,
        step_window_s: 0.5,
        hold_s: 5.0,
        rampdown_per_s: 20,
        error_rate_ceiling_pct: Some(0.0),
        users: users.clone(),
        mix: vec![MixEntry {
            label: "train-query".into(),
            weight: 1,
            think_time_ms: 0,
            request: RequestSpec::Query {
                date: "2026-10-04".into(),
                departure: "East".into(),
                arrival: "West".into(),
            },
        }],
    };
    // Dry-run the schedule shape before going live.
    let schedule = ramp_schedule(&query_plan);
    assert_eq!(thread_count_at(&schedule, 499), 0);
    assert_eq!(thread_count_at(&schedule, 500), 20);
    let reach = schedule.iter().map(|p| p.start_ms).max().unwrap();
    assert_eq!(thread_count_at(&schedule, reach), 100);

    let samples = run_plan(&query_plan).unwrap();
    let report = summarize(&samples).unwrap();
    let csv = report.to_csv();
    assert_eq!(csv.lines().next().unwrap(), REPORT_COLUMNS.join(","));
    assert!(report.rows.iter().any(|r| r.label == "train-query"));
    assert_eq!(report.total().label, "TOTAL");
    let query_errors = report.total().error_rate_pct;
    assert_eq!(query_errors, 0.0, "query path must finish clean, got {query_errors:.2}%");
    assert!(report.total().samples > 1_000, "staged run produced too few samples");
    println!("query-path report:\n{csv}");

    // Purchase path: think time keeps attempts far below the 10,000-seat
    // capacity, so anomalies can only come from real failures.
    let purchase_plan = LoadPlan {
        base_url: base.clone(),
        target_threads: 20,
        startup_delay_s: 0.5,
        initial_threads: 4,
        step_threads: 4,
        step_interval_s: 1.0,
        step_window_s: 0.5,
        hold_s: 3.0,
        rampdown_per_s: 10,
        error_rate_ceiling_pct: Some(2.01),
        users,
        mix: vec![MixEntry {
            label: "ticket-purchase".into(),
            weight: 1,
            think_time_ms: 30,
            request: RequestSpec::Purchase {
                train_id: "G10P".into(),
                date: "2026-10-04".into(),
                departure: "P1".into(),
                arrival: "P2".into(),
                seat_type: "SECOND".into(),
                passengers: 1,
            },
        }],
    };
    let samples = run_plan(&purchase_plan).unwrap();
    let report = summarize(&samples).unwrap();
    println!("purchase-path report:\n{}", report.to_csv());
    let purchase_errors = report.total().error_rate_pct;
    assert!(
        purchase_errors <= 2.01,
        "purchase anomaly rate {purchase_errors:.2}% exceeds the 2.01% ceiling"
    );
    assert!(report.total().samples > 100);

    let metrics = engine.metrics_json();
    assert_eq!(metrics["oversell_alarms"], 0);
    server.stop();
    engine.shutdown();
}
