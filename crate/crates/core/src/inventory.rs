//! Seat-level inventory and the token-container admission layer.
//!
//! Tokens are per-segment remaining counters in a cache hash keyed
//! `tokens:<train_id>:<date>` with fields `<dep>_<arr>_<seat_type>`. A
//! purchase deducts tokens on its own segment field only (a pure admission
//! gate); the seat table committed through the record store is the
//! authority for cross-segment coupling. After an allocation commits, CDC
//! recomputes every affected segment's cached remaining count from the
//! after-images.
//!
//! `remaining_oracle` is the independent brute-force count used by the
//! differential and convergence tests; it deliberately checks legs one by
//! one instead of using the allocator's bitmask arithmetic.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kvcache::{CacheError, CacheStore, FieldValue, IncrOutcome};
use crate::recordstore::{Columns, Mutation, RecordStore, Scalar, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeatType {
    #[serde(rename = "BUSINESS")]
    Business,
    #[serde(rename = "FIRST")]
    First,
    #[serde(rename = "SECOND")]
    Second,
}

impl SeatType {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeatType::Business => "BUSINESS",
            SeatType::First => "FIRST",
            SeatType::Second => "SECOND",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "BUSINESS" => Some(SeatType::Business),
            "FIRST" => Some(SeatType::First),
            "SECOND" => Some(SeatType::Second),
            _ => None,
        }
    }
}

impl std::fmt::Display for SeatType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarriageSpec {
    pub carriage_no: u32,
    pub seat_type: SeatType,
    pub seat_count: u32,
}

/// One train service on one date: ordered stations and carriage layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub train_id: String,
    pub service_date: String,
    pub stations: Vec<String>,
    pub carriages: Vec<CarriageSpec>,
}

/// Seats travel over legs: leg i is the hop between stations i and i+1,
/// so a plan with S stations has S-1 legs, each a bit in a seat's mask.
pub const MAX_STATIONS: usize = 64;

impl TrainPlan {
    pub fn validate(&self) -> Result<(), InventoryError> {
        if self.stations.len() < 2 {
            return Err(InventoryError::BadPlan("at least two stations required".into()));
        }
        if self.stations.len() > MAX_STATIONS {
            return Err(InventoryError::BadPlan(format!(
                "at most {MAX_STATIONS} stations supported"
            )));
        }
        let unique: HashSet<&String> = self.stations.iter().collect();
        if unique.len() != self.stations.len() {
            return Err(InventoryError::BadPlan("stations must be unique".into()));
        }
        if self.carriages.is_empty() {
            return Err(InventoryError::BadPlan("at least one carriage required".into()));
        }
        let carriage_nos: HashSet<u32> = self.carriages.iter().map(|c| c.carriage_no).collect();
        if carriage_nos.len() != self.carriages.len() {
            return Err(InventoryError::BadPlan("carriage numbers must be unique".into()));
        }
        if self.carriages.iter().any(|c| c.seat_count == 0) {
            return Err(InventoryError::BadPlan("carriages must hold at least one seat".into()));
        }
        Ok(())
    }

    pub fn legs(&self) -> usize {
        self.stations.len() - 1
    }

    pub fn station_index(&self, name: &str) -> Option<usize> {
        self.stations.iter().position(|s| s == name)
    }

    /// Bitmask of the legs covered by travel from station `d` to `a`.
    pub fn leg_mask(&self, d: usize, a: usize) -> u64 {
        debug_assert!(d < a && a < self.stations.len());
        ((1u64 << a) - 1) ^ ((1u64 << d) - 1)
    }

    pub fn seat_types(&self) -> Vec<SeatType> {
        let mut types: Vec<SeatType> = Vec::new();
        for c in &self.carriages {
            if !types.contains(&c.seat_type) {
                types.push(c.seat_type);
            }
        }
        types.sort();
        types
    }

    /// All ordered station pairs (d, a) with d < a, by index.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for d in 0..self.stations.len() {
            for a in (d + 1)..self.stations.len() {
                out.push((d, a));
            }
        }
        out
    }

    pub fn plan_key(&self) -> String {
        format!("{}:{}", self.train_id, self.service_date)
    }
}

/// "Departure - Arrival - Seat Type": the sellable inventory bucket.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegmentKey {
    pub departure: String,
    pub arrival: String,
    pub seat_type: SeatType,
}

impl SegmentKey {
    /// Hash-field name inside the token container and remaining-ticket
    /// cache: `<dep>_<arr>_<seat_type>`.
    pub fn field(&self) -> String {
        format!("{}_{}_{}", self.departure, self.arrival, self.seat_type)
    }
}

/// Cache key of a train-date's token container.
pub fn token_container_key(train_id: &str, service_date: &str) -> String {
    format!("tokens:{train_id}:{service_date}")
}

/// Cache key of a train-date's remaining-ticket hash.
pub fn remaining_tickets_key(train_id: &str, service_date: &str) -> String {
    format!("tickets:{train_id}:{service_date}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeatPos {
    pub carriage: u32,
    pub seat_no: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeatState {
    pub pos: SeatPos,
    pub seat_type: SeatType,
    pub mask: u64,
}

/// Snapshot of every seat's occupied-leg bitset for one train-date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeatOccupancy {
    pub legs: usize,
    pub seats: Vec<SeatState>,
}

impl SeatOccupancy {
    pub fn empty(plan: &TrainPlan) -> Self {
        let mut seats = Vec::new();
        for c in &plan.carriages {
            for seat_no in 1..=c.seat_count {
                seats.push(SeatState {
                    pos: SeatPos { carriage: c.carriage_no, seat_no },
                    seat_type: c.seat_type,
                    mask: 0,
                });
            }
        }
        Self { legs: plan.legs(), seats }
    }

    pub fn leg_occupied(&self, seat: &SeatState, leg: usize) -> bool {
        seat.mask & (1u64 << leg) != 0
    }
}

/// Brute-force remaining count: seats of the key's type whose legs within
/// [departure, arrival) are all free, checked leg by leg. Pure function of
/// the occupancy; independent of the allocator and of any cached counts.
pub fn remaining_oracle(plan: &TrainPlan, occupancy: &SeatOccupancy, key: &SegmentKey) -> u64 {
    let Some(d) = plan.station_index(&key.departure) else {
        return 0;
    };
    let Some(a) = plan.station_index(&key.arrival) else {
        return 0;
    };
    if d >= a {
        return 0;
    }
    let mut free = 0;
    for seat in &occupancy.seats {
        if seat.seat_type != key.seat_type {
            continue;
        }
        let mut all_free = true;
        for leg in d..a {
            if occupancy.leg_occupied(seat, leg) {
                all_free = false;
                break;
            }
        }
        if all_free {
            free += 1;
        }
    }
    free
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenDecision {
    Granted,
    Rejected,
}

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("invalid train plan: {0}")]
    BadPlan(String),
    #[error("unknown train {train_id} on {service_date}")]
    UnknownTrain { train_id: String, service_date: String },
    #[error("unknown station {0:?} for this train")]
    UnknownStation(String),
    #[error("departure {departure:?} must precede arrival {arrival:?}")]
    BadSegment { departure: String, arrival: String },
    #[error("train has no {0} seats")]
    TypeNotOnTrain(SeatType),
    #[error("token container not initialized for {0}")]
    ContainerNotInitialized(String),
    #[error("seats exhausted despite granted tokens (cross-segment race)")]
    SoldOutAfterGrant,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Counters surfaced via /metrics.
#[derive(Debug, Default)]
pub struct InventoryCounters {
    pub token_grants: AtomicU64,
    pub token_rejections: AtomicU64,
    pub token_refunds: AtomicU64,
    /// Allocation failures after a token grant. Must stay 0 in
    /// single-segment workloads.
    pub oversell_alarms: AtomicU64,
}

pub struct Inventory {
    store: Arc<RecordStore>,
    cache: Arc<CacheStore>,
    plans: Mutex<HashMap<String, Arc<TrainPlan>>>,
    /// Per train-date allocation serialization points.
    alloc_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    pub counters: InventoryCounters,
}

pub mod schema {
    pub const T_TRAIN: &str = "t_train";
    pub const T_TRAIN_STATION: &str = "t_train_station";
    pub const T_SEAT: &str = "t_seat";
    pub const T_TICKET_REMAINING: &str = "t_ticket_remaining";

    pub fn create_tables(store: &crate::recordstore::RecordStore) {
        for t in [T_TRAIN, T_TRAIN_STATION, T_SEAT, T_TICKET_REMAINING] {
            store.create_table(t, t);
        }
    }
}

impl Inventory {
    pub fn new(store: Arc<RecordStore>, cache: Arc<CacheStore>) -> Self {
        schema::create_tables(&store);
        Self {
            store,
            cache,
            plans: Mutex::new(HashMap::new()),
            alloc_locks: Mutex::new(HashMap::new()),
            counters: InventoryCounters::default(),
        }
    }

    pub fn plan(&self, train_id: &str, service_date: &str) -> Result<Arc<TrainPlan>, InventoryError> {
        self.plans
            .lock()
            .expect("plan registry poisoned")
            .get(&format!("{train_id}:{service_date}"))
            .cloned()
            .ok_or_else(|| InventoryError::UnknownTrain {
                train_id: train_id.to_string(),
                service_date: service_date.to_string(),
            })
    }

    pub fn plan_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> =
            self.plans.lock().expect("plan registry poisoned").keys().cloned().collect();
        keys.sort();
        keys
    }

    fn alloc_lock(&self, plan_key: &str) -> Arc<Mutex<()>> {
        self.alloc_locks
            .lock()
            .expect("alloc lock registry poisoned")
            .entry(plan_key.to_string())
            .or_default()
            .clone()
    }

    /// Seeds the store rows for a plan (train, stations, seats, remaining
    /// counts) in one commit, then fills the token container.
    pub fn register_plan(&self, plan: TrainPlan) -> Result<(), InventoryError> {
        plan.validate()?;
        let plan = Arc::new(plan);
        let pk = plan.plan_key();
        {
            let mut plans = self.plans.lock().expect("plan registry poisoned");
            if plans.contains_key(&pk) {
                return Err(InventoryError::BadPlan(format!("plan {pk} already registered")));
            }
            plans.insert(pk.clone(), plan.clone());
        }

        let mut mutations = Vec::new();
        let mut train_cols = Columns::new();
        train_cols.insert("train_id".into(), plan.train_id.as_str().into());
        train_cols.insert("service_date".into(), plan.service_date.as_str().into());
        train_cols.insert("station_count".into(), Scalar::Int(plan.stations.len() as i64));
        mutations.push(Mutation::Insert {
            table: schema::T_TRAIN.into(),
            pk: pk.clone(),
            columns: train_cols,
        });

        for (idx, station) in plan.stations.iter().enumerate() {
            let mut cols = Columns::new();
            cols.insert("train_id".into(), plan.train_id.as_str().into());
            cols.insert("service_date".into(), plan.service_date.as_str().into());
            cols.insert("station_index".into(), Scalar::Int(idx as i64));
            cols.insert("station".into(), station.as_str().into());
            mutations.push(Mutation::Insert {
                table: schema::T_TRAIN_STATION.into(),
                pk: format!("{pk}:{idx}"),
                columns: cols,
            });
        }

        let occupancy = SeatOccupancy::empty(&plan);
        for seat in &occupancy.seats {
            mutations.push(Mutation::Insert {
                table: schema::T_SEAT.into(),
                pk: seat_pk(&pk, seat.pos),
                columns: seat_columns(&plan, seat),
            });
        }

        for seat_type in plan.seat_types() {
            for (d, a) in plan.segments() {
                let key = SegmentKey {
                    departure: plan.stations[d].clone(),
                    arrival: plan.stations[a].clone(),
                    seat_type,
                };
                let count = free_count(&occupancy.seats, seat_type, plan.leg_mask(d, a));
                mutations.push(Mutation::Insert {
                    table: schema::T_TICKET_REMAINING.into(),
                    pk: remaining_pk(&pk, &key),
                    columns: remaining_columns(&plan, &key, count),
                });
            }
        }

        self.store.commit_with_change(mutations)?;
        self.init_segment_tokens(&plan.train_id, &plan.service_date)?;
        Ok(())
    }

    /// (Re)derives every token field from current occupancy. Returns the
    /// number of fields written.
    pub fn init_segment_tokens(
        &self,
        train_id: &str,
        service_date: &str,
    ) -> Result<usize, InventoryError> {
        let plan = self.plan(train_id, service_date)?;
        let occupancy = self.occupancy_snapshot(train_id, service_date)?;
        let container = token_container_key(train_id, service_date);
        let mut written = 0;
        for seat_type in plan.seat_types() {
            for (d, a) in plan.segments() {
                let key = SegmentKey {
                    departure: plan.stations[d].clone(),
                    arrival: plan.stations[a].clone(),
                    seat_type,
                };
                let count = free_count(&occupancy.seats, seat_type, plan.leg_mask(d, a));
                self.cache.hash_set(&container, &key.field(), FieldValue::Int(count as i64));
                written += 1;
            }
        }
        Ok(written)
    }

    /// Reads the authoritative seat rows into a [`SeatOccupancy`].
    pub fn occupancy_snapshot(
        &self,
        train_id: &str,
        service_date: &str,
    ) -> Result<SeatOccupancy, InventoryError> {
        let plan = self.plan(train_id, service_date)?;
        let rows = self.store.scan_prefix(schema::T_SEAT, &format!("{}:", plan.plan_key()));
        let mut seats = Vec::with_capacity(rows.len());
        for (_, row) in rows {
            seats.push(seat_from_columns(&row.columns)?);
        }
        seats.sort_by_key(|s| s.pos);
        Ok(SeatOccupancy { legs: plan.legs(), seats })
    }

    fn validate_segment(
        &self,
        plan: &TrainPlan,
        key: &SegmentKey,
    ) -> Result<(usize, usize), InventoryError> {
        let d = plan
            .station_index(&key.departure)
            .ok_or_else(|| InventoryError::UnknownStation(key.departure.clone()))?;
        let a = plan
            .station_index(&key.arrival)
            .ok_or_else(|| InventoryError::UnknownStation(key.arrival.clone()))?;
        if d >= a {
            return Err(InventoryError::BadSegment {
                departure: key.departure.clone(),
                arrival: key.arrival.clone(),
            });
        }
        if !plan.seat_types().contains(&key.seat_type) {
            return Err(InventoryError::TypeNotOnTrain(key.seat_type));
        }
        Ok((d, a))
    }

    /// Admission gate: one atomic conditional decrement on the requested
    /// segment's own token field, floor 0. Rejection changes nothing.
    pub fn deduct_tokens(
        &self,
        train_id: &str,
        service_date: &str,
        key: &SegmentKey,
        count: u32,
    ) -> Result<TokenDecision, InventoryError> {
        assert!(count >= 1, "deduction count must be at least 1");
        let container = token_container_key(train_id, service_date);
        if !self.cache.exists(&container) {
            return Err(InventoryError::ContainerNotInitialized(container));
        }
        match self.cache.hash_incr_if_at_least(&container, &key.field(), 0, -(count as i64))? {
            IncrOutcome::Applied(_) => {
                self.counters.token_grants.fetch_add(count as u64, Ordering::SeqCst);
                Ok(TokenDecision::Granted)
            }
            IncrOutcome::Insufficient => {
                self.counters.token_rejections.fetch_add(count as u64, Ordering::SeqCst);
                Ok(TokenDecision::Rejected)
            }
        }
    }

    /// Returns tokens after a failed pipeline step or a release.
    pub fn refund_tokens(
        &self,
        train_id: &str,
        service_date: &str,
        key: &SegmentKey,
        count: u32,
    ) -> Result<(), InventoryError> {
        if count == 0 {
            return Ok(());
        }
        let container = token_container_key(train_id, service_date);
        self.cache.hash_incr_if_at_least(&container, &key.field(), 0, count as i64)?;
        self.counters.token_refunds.fetch_add(count as u64, Ordering::SeqCst);
        Ok(())
    }

    pub fn token_count(&self, train_id: &str, service_date: &str, key: &SegmentKey) -> Option<i64> {
        match self.cache.hash_get(&token_container_key(train_id, service_date), &key.field()) {
            Some(FieldValue::Int(v)) => Some(v),
            _ => None,
        }
    }

    /// Locks `count` seats whose legs over the segment are all free,
    /// honoring preferred positions when they qualify, and commits the
    /// seat-row updates plus recomputed remaining counts in one commit.
    /// Serialized per train-date. The caller must hold granted tokens.
    pub fn allocate_seats(
        &self,
        train_id: &str,
        service_date: &str,
        key: &SegmentKey,
        count: u32,
        preference: &[SeatPos],
    ) -> Result<Vec<SeatPos>, InventoryError> {
        let plan = self.plan(train_id, service_date)?;
        let (d, a) = self.validate_segment(&plan, key)?;
        let seg_mask = plan.leg_mask(d, a);
        let plan_key = plan.plan_key();
        let guard = self.alloc_lock(&plan_key);
        let _held = guard.lock().expect("allocation lock poisoned");

        let occupancy = self.occupancy_snapshot(train_id, service_date)?;
        let mut chosen: Vec<SeatPos> = Vec::with_capacity(count as usize);
        let qualifies = |seat: &SeatState| seat.seat_type == key.seat_type && seat.mask & seg_mask == 0;
        for pos in preference {
            if chosen.len() == count as usize {
                break;
            }
            if let Some(seat) = occupancy.seats.iter().find(|s| s.pos == *pos) {
                if qualifies(seat) && !chosen.contains(pos) {
                    chosen.push(*pos);
                }
            }
        }
        for seat in &occupancy.seats {
            if chosen.len() == count as usize {
                break;
            }
            if qualifies(seat) && !chosen.contains(&seat.pos) {
                chosen.push(seat.pos);
            }
        }
        if chosen.len() < count as usize {
            self.counters.oversell_alarms.fetch_add(1, Ordering::SeqCst);
            return Err(InventoryError::SoldOutAfterGrant);
        }

        let mut updated = occupancy.clone();
        for seat in updated.seats.iter_mut() {
            if chosen.contains(&seat.pos) {
                seat.mask |= seg_mask;
            }
        }
        self.commit_occupancy_delta(&plan, &occupancy, &updated, key.seat_type, d, a)?;
        Ok(chosen)
    }

    /// Clears the segment's leg bits for each assignment that still holds
    /// them and refunds that many tokens. Releasing an already-released
    /// assignment is a no-op, so double release is safe.
    pub fn release_seats(
        &self,
        train_id: &str,
        service_date: &str,
        key: &SegmentKey,
        assignments: &[SeatPos],
    ) -> Result<usize, InventoryError> {
        let plan = self.plan(train_id, service_date)?;
        let (d, a) = self.validate_segment(&plan, key)?;
        let seg_mask = plan.leg_mask(d, a);
        let plan_key = plan.plan_key();
        let guard = self.alloc_lock(&plan_key);
        let _held = guard.lock().expect("allocation lock poisoned");

        let occupancy = self.occupancy_snapshot(train_id, service_date)?;
        let mut updated = occupancy.clone();
        let mut released = 0;
        for seat in updated.seats.iter_mut() {
            if assignments.contains(&seat.pos) && seat.mask & seg_mask == seg_mask {
                seat.mask &= !seg_mask;
                released += 1;
            }
        }
        if released == 0 {
            return Ok(0);
        }
        self.commit_occupancy_delta(&plan, &occupancy, &updated, key.seat_type, d, a)?;
        drop(_held);
        self.refund_tokens(train_id, service_date, key, released as u32)?;
        Ok(released)
    }

    /// Commits changed seat rows plus updated remaining counts for every
    /// segment of the seat type that overlaps the touched legs.
    fn commit_occupancy_delta(
        &self,
        plan: &TrainPlan,
        before: &SeatOccupancy,
        after: &SeatOccupancy,
        seat_type: SeatType,
        d: usize,
        a: usize,
    ) -> Result<(), InventoryError> {
        let plan_key = plan.plan_key();
        let mut mutations = Vec::new();
        for (old, new) in before.seats.iter().zip(&after.seats) {
            if old.mask != new.mask {
                mutations.push(Mutation::Update {
                    table: schema::T_SEAT.into(),
                    pk: seat_pk(&plan_key, new.pos),
                    columns: seat_columns(plan, new),
                });
            }
        }
        for (d2, a2) in plan.segments() {
            if a2 <= d || d2 >= a {
                continue; // no leg overlap, count unchanged
            }
            let seg = SegmentKey {
                departure: plan.stations[d2].clone(),
                arrival: plan.stations[a2].clone(),
                seat_type,
            };
            let count = free_count(&after.seats, seat_type, plan.leg_mask(d2, a2));
            mutations.push(Mutation::Update {
                table: schema::T_TICKET_REMAINING.into(),
                pk: remaining_pk(&plan_key, &seg),
                columns: remaining_columns(plan, &seg, count),
            });
        }
        self.store.commit_with_change(mutations)?;
        Ok(())
    }
}

/// Allocator-side free count: seats of the type whose mask has no bit in
/// common with the segment mask.
pub fn free_count(seats: &[SeatState], seat_type: SeatType, seg_mask: u64) -> u64 {
    seats.iter().filter(|s| s.seat_type == seat_type && s.mask & seg_mask == 0).count() as u64
}

fn seat_pk(plan_key: &str, pos: SeatPos) -> String {
    format!("{plan_key}:{}:{}", pos.carriage, pos.seat_no)
}

fn remaining_pk(plan_key: &str, key: &SegmentKey) -> String {
    format!("{plan_key}:{}:{}:{}", key.departure, key.arrival, key.seat_type)
}

fn seat_columns(plan: &TrainPlan, seat: &SeatState) -> Columns {
    let mut cols = Columns::new();
    cols.insert("train_id".into(), plan.train_id.as_str().into());
    cols.insert("service_date".into(), plan.service_date.as_str().into());
    cols.insert("carriage".into(), Scalar::Int(seat.pos.carriage as i64));
    cols.insert("seat_no".into(), Scalar::Int(seat.pos.seat_no as i64));
    cols.insert("seat_type".into(), seat.seat_type.as_str().into());
    cols.insert("occupied_mask".into(), Scalar::Int(seat.mask as i64));
    cols
}

fn remaining_columns(plan: &TrainPlan, key: &SegmentKey, count: u64) -> Columns {
    let mut cols = Columns::new();
    cols.insert("train_id".into(), plan.train_id.as_str().into());
    cols.insert("service_date".into(), plan.service_date.as_str().into());
    cols.insert("departure".into(), key.departure.as_str().into());
    cols.insert("arrival".into(), key.arrival.as_str().into());
    cols.insert("seat_type".into(), key.seat_type.as_str().into());
    cols.insert("count".into(), Scalar::Int(count as i64));
    cols
}

pub fn seat_from_columns(cols: &Columns) -> Result<SeatState, InventoryError> {
    let get_int = |name: &str| {
        cols.get(name)
            .and_then(Scalar::as_int)
            .ok_or_else(|| InventoryError::BadPlan(format!("seat row missing {name}")))
    };
    let seat_type = cols
        .get("seat_type")
        .and_then(Scalar::as_text)
        .and_then(SeatType::parse)
        .ok_or_else(|| InventoryError::BadPlan("seat row missing seat_type".into()))?;
    Ok(SeatState {
        pos: SeatPos { carriage: get_int("carriage")? as u32, seat_no: get_int("seat_no")? as u32 },
        seat_type,
        mask: get_int("occupied_mask")? as u64,
    })
}
