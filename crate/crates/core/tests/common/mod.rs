//! Shared harness for CDC convergence runs: an order-level workload over
//! a manual clock, a consumer that randomly loses acks (crash-before-ack)
//! and restarts, and a final quiesce + verify step.

use std::collections::HashSet;
use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use railgate_core::aes::FieldCodec;
use railgate_core::clock::{Clock, ManualClock};
use railgate_core::idgen::{SnowflakeGenerator, SnowflakeLayout, DEFAULT_EPOCH_MS};
use railgate_core::inventory::{
    CarriageSpec, Inventory, SeatType, SegmentKey, TokenDecision, TrainPlan,
};
use railgate_core::kvcache::CacheStore;
use railgate_core::mqbus::MessageBus;
use railgate_core::orders::{OrderService, PassengerInput, PaymentResult, TicketType};
use railgate_core::recordstore::{cdc, convergence, RecordStore};
use railgate_core::shard::ShardTopology;

pub const TRAIN: &str = "G55";
pub const DATE: &str = "2026-10-01";
pub const GROUP: &str = "cache";
pub const FAULT_VISIBILITY_MS: u64 = 1_000;
pub const PAYMENT_DEADLINE_MS: u64 = 600_000;

pub struct CdcHarness {
    pub clock: Arc<ManualClock>,
    pub store: Arc<RecordStore>,
    pub cache: Arc<CacheStore>,
    pub bus: Arc<MessageBus>,
    pub inventory: Arc<Inventory>,
    pub orders: Arc<OrderService>,
    pub applier: cdc::CacheApplier,
    pub filter: HashSet<String>,
    pub stations: Vec<String>,
}

impl CdcHarness {
    pub fn new(stations: &[&str], seats_per_type: u32) -> Self {
        let clock = ManualClock::new(DEFAULT_EPOCH_MS + 1_000_000);
        let store = Arc::new(RecordStore::new(clock.clone()));
        let cache = Arc::new(CacheStore::new(clock.clone()));
        let bus = Arc::new(MessageBus::new(clock.clone()));
        let inventory = Arc::new(Inventory::new(store.clone(), cache.clone()));
        inventory
            .register_plan(TrainPlan {
                train_id: TRAIN.into(),
                service_date: DATE.into(),
                stations: stations.iter().map(|s| s.to_string()).collect(),
                carriages: vec![
                    CarriageSpec {
                        carriage_no: 1,
                        seat_type: SeatType::Second,
                        seat_count: seats_per_type,
                    },
                    CarriageSpec {
                        carriage_no: 2,
                        seat_type: SeatType::First,
                        seat_count: seats_per_type,
                    },
                ],
            })
            .unwrap();
        let codec = Arc::new(FieldCodec::new(&[3u8; 16]).unwrap());
        let idgen = Arc::new(
            SnowflakeGenerator::new(SnowflakeLayout::default(), 0, 7, clock.clone()).unwrap(),
        );
        let orders = Arc::new(OrderService::new(
            store.clone(),
            cache.clone(),
            inventory.clone(),
            codec,
            idgen,
            clock.clone(),
            ShardTopology { db_count: 2, tables_per_db: 4 },
            PAYMENT_DEADLINE_MS,
            u64::MAX / 4,
        ));
        let applier = cdc::CacheApplier::new(cache.clone());
        let filter: HashSet<String> =
            ["t_ticket_remaining", "t_user", "t_train"].into_iter().map(String::from).collect();
        Self {
            clock,
            store,
            cache,
            bus,
            inventory,
            orders,
            applier,
            filter,
            stations: stations.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn segment(&self, d: usize, a: usize, seat_type: SeatType) -> SegmentKey {
        SegmentKey {
            departure: self.stations[d].clone(),
            arrival: self.stations[a].clone(),
            seat_type,
        }
    }

    /// Full purchase: tokens, seats, order row. Returns the order number
    /// when admission succeeded.
    pub fn purchase(&self, user_id: u64, key: &SegmentKey, count: u32) -> Option<String> {
        if self.inventory.deduct_tokens(TRAIN, DATE, key, count).unwrap()
            == TokenDecision::Rejected
        {
            return None;
        }
        let seats = match self.inventory.allocate_seats(TRAIN, DATE, key, count, &[]) {
            Ok(seats) => seats,
            Err(_) => {
                self.inventory.refund_tokens(TRAIN, DATE, key, count).unwrap();
                return None;
            }
        };
        let dedup = self.orders.issue_dedup_token().unwrap();
        let passengers: Vec<PassengerInput> = (0..count)
            .map(|i| PassengerInput {
                name: format!("p{i}"),
                id_number: format!("11010119900101{i:04}"),
                ticket_type: TicketType::Adult,
            })
            .collect();
        let order = self
            .orders
            .create_order(user_id, TRAIN, DATE, key, &passengers, &seats, &dedup)
            .unwrap();
        Some(order.order_no)
    }

    pub fn pay(&self, order_no: &str) {
        let callback = format!("cb-{order_no}");
        let _ = self.orders.payment_callback(order_no, PaymentResult::Success, &callback);
    }

    pub fn cancel(&self, order_no: &str, user_id: u64) {
        let _ = self.orders.cancel_order(order_no, user_id);
    }

    /// One faulty consumer pass: polls every CDC topic, applies, but
    /// "crashes before ack" with probability `ack_drop_p` (the message
    /// stays pending and will be redelivered after the visibility
    /// timeout, exercising the stale-skip path).
    pub fn faulty_consume(&self, rng: &mut ChaCha8Rng, ack_drop_p: f64) {
        for logical in &self.filter {
            let topic = format!("cdc.{logical}");
            for msg in self.bus.poll(&topic, GROUP, 64, FAULT_VISIBILITY_MS) {
                match self.applier.apply_change_message(&msg) {
                    Ok(_) => {
                        if !rng.random_bool(ack_drop_p) {
                            self.bus.ack(&topic, GROUP, msg.offset);
                        }
                    }
                    Err(_) => {
                        self.bus.publish(cdc::DEAD_LETTER_TOPIC, &msg.payload);
                        self.bus.ack(&topic, GROUP, msg.offset);
                    }
                }
            }
        }
    }

    /// Makes every lost-ack message visible again, then drains to
    /// quiescence and closes anything past its deadline.
    pub fn quiesce(&self) -> convergence::ConvergenceReport {
        self.clock.advance(FAULT_VISIBILITY_MS);
        self.orders.close_expired(self.clock.now_ms()).unwrap();
        cdc::drain_pipeline(&self.store, &self.bus, &self.applier, &self.filter, GROUP);
        convergence::verify_convergence(&self.store, &self.cache)
    }
}

/// Randomized order-level workload with injected pump/consume faults.
/// Returns the number of operations executed.
pub fn run_faulty_workload(h: &CdcHarness, seed: u64, ops: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut live: Vec<(String, u64)> = Vec::new();
    let station_count = h.stations.len();
    let mut executed = 0;
    for _ in 0..ops {
        executed += 1;
        h.clock.advance(rng.random_range(1..=200));
        match rng.random_range(0..100u32) {
            // Purchase on a random segment.
            0..=54 => {
                let d = rng.random_range(0..station_count - 1);
                let a = rng.random_range(d + 1..station_count);
                let seat_type = if rng.random_bool(0.5) { SeatType::Second } else { SeatType::First };
                let key = h.segment(d, a, seat_type);
                let count = rng.random_range(1..=2);
                let user_id = rng.random_range(1..=20_000);
                if let Some(order_no) = h.purchase(user_id, &key, count) {
                    live.push((order_no, user_id));
                }
            }
            // Cancel a random live order.
            55..=69 => {
                if !live.is_empty() {
                    let idx = rng.random_range(0..live.len());
                    let (order_no, user_id) = live.swap_remove(idx);
                    h.cancel(&order_no, user_id);
                }
            }
            // Pay a random live order.
            70..=79 => {
                if !live.is_empty() {
                    let idx = rng.random_range(0..live.len());
                    let (order_no, _) = live.swap_remove(idx);
                    h.pay(&order_no);
                }
            }
            // Deadline sweep: jump the clock, close expired orders.
            80..=84 => {
                h.clock.advance(PAYMENT_DEADLINE_MS + 1);
                h.orders.close_expired(h.clock.now_ms()).unwrap();
                live.clear();
            }
            // Pump a batch of changes to the bus.
            85..=92 => {
                h.store.pump_changes(&h.bus, &h.filter);
            }
            // Faulty consumer pass; occasionally "restart" by jumping the
            // clock past the visibility timeout so lost deliveries return.
            _ => {
                h.faulty_consume(&mut rng, 0.2);
                if rng.random_bool(0.3) {
                    h.clock.advance(FAULT_VISIBILITY_MS + 1);
                }
            }
        }
    }
    executed
}
