//! Transactional in-process record store whose every committed mutation
//! appends a row-level [`ChangeEvent`] to an ordered change log — the
//! binlog analogue — plus the CDC pump that publishes those events to the
//! bus and the applier that projects them into the cache.
//!
//! Rows carry a version that increases per primary key; full before/after
//! images (version included) ride on every event, which is what lets the
//! applier skip stale redeliveries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::kvcache::{CacheStore, FieldValue};
use crate::mqbus::{BusMessage, MessageBus};

/// Column value: integers and text cover every table in the engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(i64),
    Text(String),
}

impl Scalar {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Scalar::Int(v) => Some(*v),
            Scalar::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            Scalar::Int(_) => None,
        }
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Text(v.to_string())
    }
}

impl From<String> for Scalar {
    fn from(v: String) -> Self {
        Scalar::Text(v)
    }
}

pub type Columns = BTreeMap<String, Scalar>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub columns: Columns,
    pub version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChangeOp {
    #[serde(rename = "INSERT")]
    Insert,
    #[serde(rename = "UPDATE")]
    Update,
    #[serde(rename = "DELETE")]
    Delete,
}

/// Reserved image column carrying the row version.
pub const VERSION_COLUMN: &str = "_version";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeEvent {
    pub sequence: u64,
    pub table: String,
    pub op: ChangeOp,
    pub before: Option<Columns>,
    pub after: Option<Columns>,
    pub commit_time: u64,
}

/// Wire form of a change event. Field names are part of the external CDC
/// contract: {"seq","table","op","before","after","ts"}.
#[derive(Debug, Serialize, Deserialize)]
pub struct CdcRecord {
    pub seq: u64,
    pub table: String,
    pub op: ChangeOp,
    pub before: Option<Columns>,
    pub after: Option<Columns>,
    pub ts: u64,
}

impl ChangeEvent {
    pub fn to_cdc_json(&self) -> String {
        let record = CdcRecord {
            seq: self.sequence,
            table: self.table.clone(),
            op: self.op,
            before: self.before.clone(),
            after: self.after.clone(),
            ts: self.commit_time,
        };
        serde_json::to_string(&record).expect("cdc record serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    Insert { table: String, pk: String, columns: Columns },
    Update { table: String, pk: String, columns: Columns },
    Delete { table: String, pk: String },
}

impl Mutation {
    fn table(&self) -> &str {
        match self {
            Mutation::Insert { table, .. }
            | Mutation::Update { table, .. }
            | Mutation::Delete { table, .. } => table,
        }
    }

    fn pk(&self) -> &str {
        match self {
            Mutation::Insert { pk, .. } | Mutation::Update { pk, .. } | Mutation::Delete { pk, .. } => {
                pk
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("unknown key {pk:?} in table {table:?}")]
    UnknownKey { table: String, pk: String },
    #[error("duplicate key {pk:?} in table {table:?}")]
    DuplicateKey { table: String, pk: String },
}

struct TableState {
    logical: String,
    rows: HashMap<String, Row>,
}

struct StoreInner {
    tables: HashMap<String, TableState>,
    log: Vec<ChangeEvent>,
    pump_pos: usize,
}

pub struct RecordStore {
    clock: Arc<dyn Clock>,
    inner: Mutex<StoreInner>,
    changelog: Option<Mutex<std::fs::File>>,
}

impl RecordStore {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            clock,
            inner: Mutex::new(StoreInner { tables: HashMap::new(), log: Vec::new(), pump_pos: 0 }),
            changelog: None,
        }
    }

    /// Enables the append-only durability log: one CDC JSON event per line.
    pub fn with_changelog_file(clock: Arc<dyn Clock>, path: &std::path::Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut store = Self::new(clock);
        store.changelog = Some(Mutex::new(file));
        Ok(store)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, StoreInner> {
        self.inner.lock().expect("store mutex poisoned")
    }

    /// Registers a physical table under a logical family name. Sharded
    /// tables register one physical table per shard, all with the same
    /// logical name.
    pub fn create_table(&self, physical: &str, logical: &str) {
        let mut inner = self.lock();
        inner
            .tables
            .entry(physical.to_string())
            .or_insert_with(|| TableState { logical: logical.to_string(), rows: HashMap::new() });
    }

    pub fn logical_name(&self, physical: &str) -> Option<String> {
        self.lock().tables.get(physical).map(|t| t.logical.clone())
    }

    pub fn table_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.lock().tables.keys().cloned().collect();
        names.sort();
        names
    }

    /// Applies all mutations atomically and appends one change event per
    /// mutation in commit order. Any invalid mutation rejects the whole
    /// commit with no state change and no events.
    pub fn commit_with_change(&self, mutations: Vec<Mutation>) -> Result<Vec<ChangeEvent>, StoreError> {
        let now = self.clock.now_ms();
        let mut inner = self.lock();

        // Stage against an overlay so earlier mutations in the commit are
        // visible to later ones while nothing touches the tables yet.
        let mut overlay: HashMap<(String, String), Option<Row>> = HashMap::new();
        let mut staged: Vec<(Mutation, Option<Row>, Option<Row>)> = Vec::new();
        for m in mutations {
            let table = m.table().to_string();
            let pk = m.pk().to_string();
            if !inner.tables.contains_key(&table) {
                return Err(StoreError::UnknownTable(table));
            }
            let current: Option<Row> = match overlay.get(&(table.clone(), pk.clone())) {
                Some(projected) => projected.clone(),
                None => inner.tables[&table].rows.get(&pk).cloned(),
            };
            let next: Option<Row> = match &m {
                Mutation::Insert { columns, .. } => {
                    if current.is_some() {
                        return Err(StoreError::DuplicateKey { table, pk });
                    }
                    Some(Row { columns: columns.clone(), version: 1 })
                }
                Mutation::Update { columns, .. } => {
                    let cur = current.clone().ok_or(StoreError::UnknownKey {
                        table: table.clone(),
                        pk: pk.clone(),
                    })?;
                    Some(Row { columns: columns.clone(), version: cur.version + 1 })
                }
                Mutation::Delete { .. } => {
                    if current.is_none() {
                        return Err(StoreError::UnknownKey { table, pk });
                    }
                    None
                }
            };
            overlay.insert((table, pk), next.clone());
            staged.push((m, current, next));
        }

        let mut events = Vec::with_capacity(staged.len());
        let base_seq = inner.log.len() as u64;
        for (i, (m, before, after)) in staged.into_iter().enumerate() {
            let image = |row: &Row| -> Columns {
                let mut cols = row.columns.clone();
                cols.insert(VERSION_COLUMN.to_string(), Scalar::Int(row.version as i64));
                cols
            };
            let event = ChangeEvent {
                sequence: base_seq + i as u64,
                table: m.table().to_string(),
                op: match m {
                    Mutation::Insert { .. } => ChangeOp::Insert,
                    Mutation::Update { .. } => ChangeOp::Update,
                    Mutation::Delete { .. } => ChangeOp::Delete,
                },
                before: before.as_ref().map(image),
                after: after.as_ref().map(image),
                commit_time: now,
            };
            let table_state = inner.tables.get_mut(m.table()).expect("validated above");
            match after {
                Some(row) => {
                    table_state.rows.insert(m.pk().to_string(), row);
                }
                None => {
                    table_state.rows.remove(m.pk());
                }
            }
            events.push(event);
        }
        inner.log.extend(events.iter().cloned());
        drop(inner);

        if let Some(file) = &self.changelog {
            let mut file = file.lock().expect("changelog mutex poisoned");
            for event in &events {
                writeln!(file, "{}", event.to_cdc_json()).expect("changelog write");
            }
        }
        Ok(events)
    }

    pub fn get_row(&self, table: &str, pk: &str) -> Option<Row> {
        self.lock().tables.get(table)?.rows.get(pk).cloned()
    }

    pub fn scan_table(&self, table: &str) -> Vec<(String, Row)> {
        let inner = self.lock();
        let Some(t) = inner.tables.get(table) else {
            return Vec::new();
        };
        let mut rows: Vec<(String, Row)> =
            t.rows.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        rows
    }

    pub fn scan_prefix(&self, table: &str, pk_prefix: &str) -> Vec<(String, Row)> {
        let inner = self.lock();
        let Some(t) = inner.tables.get(table) else {
            return Vec::new();
        };
        let mut rows: Vec<(String, Row)> = t
            .rows
            .iter()
            .filter(|(k, _)| k.starts_with(pk_prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        rows
    }

    pub fn log_len(&self) -> usize {
        self.lock().log.len()
    }

    pub fn log_snapshot(&self) -> Vec<ChangeEvent> {
        self.lock().log.clone()
    }

    /// Publishes every unpumped event whose table's logical family is in
    /// `filter` to topic `cdc.<logical>`; events outside the filter are
    /// skipped but the pump position still advances past them.
    pub fn pump_changes(&self, bus: &MessageBus, filter: &HashSet<String>) -> usize {
        let (pending, logical_by_table): (Vec<ChangeEvent>, HashMap<String, String>) = {
            let mut inner = self.lock();
            let pending = inner.log[inner.pump_pos..].to_vec();
            inner.pump_pos = inner.log.len();
            let map = inner
                .tables
                .iter()
                .map(|(physical, t)| (physical.clone(), t.logical.clone()))
                .collect();
            (pending, map)
        };
        let mut published = 0;
        for event in pending {
            let logical = logical_by_table
                .get(&event.table)
                .cloned()
                .unwrap_or_else(|| event.table.clone());
            if filter.contains(&logical) {
                bus.publish(&format!("cdc.{logical}"), &event.to_cdc_json());
                published += 1;
            }
        }
        published
    }
}

pub mod cdc {
    //! CDC consumer side: parses bus messages carrying [`CdcRecord`]s and
    //! projects them into cache entries with a per-row version guard, so
    //! redelivered or reordered events can never regress the cache.

    use super::*;

    pub const DEAD_LETTER_TOPIC: &str = "cdc.dead";

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum ApplyOutcome {
        Applied,
        SkippedStale,
    }

    #[derive(Debug, Error)]
    pub enum ApplyError {
        #[error("poison message: {0}")]
        Poison(String),
    }

    /// Strips a `_<digits>_<digits>` shard suffix, mapping a physical
    /// table name back to its logical family.
    pub fn logical_table_name(physical: &str) -> &str {
        let mut parts = physical.rsplitn(3, '_');
        let last = parts.next();
        let second = parts.next();
        let rest = parts.next();
        match (rest, second, last) {
            (Some(rest), Some(s), Some(l))
                if !s.is_empty()
                    && !l.is_empty()
                    && s.chars().all(|c| c.is_ascii_digit())
                    && l.chars().all(|c| c.is_ascii_digit()) =>
            {
                rest
            }
            _ => physical,
        }
    }

    fn text<'a>(cols: &'a Columns, name: &str) -> Result<&'a str, ApplyError> {
        cols.get(name)
            .and_then(Scalar::as_text)
            .ok_or_else(|| ApplyError::Poison(format!("missing text column {name:?}")))
    }

    fn int(cols: &Columns, name: &str) -> Result<i64, ApplyError> {
        cols.get(name)
            .and_then(Scalar::as_int)
            .ok_or_else(|| ApplyError::Poison(format!("missing int column {name:?}")))
    }

    /// Canonical JSON for a cached row: image columns minus the version.
    pub fn row_cache_json(columns: &Columns) -> String {
        let mut cols = columns.clone();
        cols.remove(VERSION_COLUMN);
        serde_json::to_string(&cols).expect("columns serialize")
    }

    pub struct CacheApplier {
        cache: Arc<CacheStore>,
    }

    impl CacheApplier {
        pub fn new(cache: Arc<CacheStore>) -> Self {
            Self { cache }
        }

        /// Projects one CDC message into the cache. Idempotent under
        /// redelivery and safe under reordering: the version guard skips
        /// anything at or below the version already applied for that row.
        pub fn apply_change_message(&self, msg: &BusMessage) -> Result<ApplyOutcome, ApplyError> {
            let record: CdcRecord = serde_json::from_str(&msg.payload)
                .map_err(|e| ApplyError::Poison(format!("bad cdc json: {e}")))?;
            let image = record
                .after
                .as_ref()
                .or(record.before.as_ref())
                .ok_or_else(|| ApplyError::Poison("event carries no image".into()))?;
            let version = int(image, VERSION_COLUMN)?;

            match logical_table_name(&record.table) {
                "t_ticket_remaining" => {
                    let train = text(image, "train_id")?;
                    let date = text(image, "service_date")?;
                    let field = format!(
                        "{}_{}_{}",
                        text(image, "departure")?,
                        text(image, "arrival")?,
                        text(image, "seat_type")?
                    );
                    let key = format!("tickets:{train}:{date}");
                    let ver_key = format!("cdcver:{key}:{field}");
                    let fresh = match record.op {
                        ChangeOp::Delete => {
                            self.cache.versioned_hash_del(&ver_key, version + 1, &key, &field)
                        }
                        _ => {
                            let count = int(image, "count")?;
                            self.cache.versioned_hash_set(
                                &ver_key,
                                version,
                                &key,
                                &field,
                                FieldValue::Int(count),
                            )
                        }
                    };
                    Ok(if fresh { ApplyOutcome::Applied } else { ApplyOutcome::SkippedStale })
                }
                "t_user" => {
                    let username = text(image, "username")?;
                    let key = format!("user:{username}");
                    let ver_key = format!("cdcver:{key}");
                    let fresh = match record.op {
                        ChangeOp::Delete => self.cache.versioned_kv_del(&ver_key, version + 1, &key),
                        _ => self.cache.versioned_kv_set(
                            &ver_key,
                            version,
                            &key,
                            &row_cache_json(image),
                        ),
                    };
                    Ok(if fresh { ApplyOutcome::Applied } else { ApplyOutcome::SkippedStale })
                }
                "t_train" => {
                    let train = text(image, "train_id")?;
                    let date = text(image, "service_date")?;
                    let key = format!("train:{train}:{date}");
                    let ver_key = format!("cdcver:{key}");
                    let fresh = match record.op {
                        ChangeOp::Delete => self.cache.versioned_kv_del(&ver_key, version + 1, &key),
                        _ => self.cache.versioned_kv_set(
                            &ver_key,
                            version,
                            &key,
                            &row_cache_json(image),
                        ),
                    };
                    Ok(if fresh { ApplyOutcome::Applied } else { ApplyOutcome::SkippedStale })
                }
                // Tables with no cache projection.
                _ => Ok(ApplyOutcome::Applied),
            }
        }
    }

    /// Outcome counts of one consumer drain pass.
    #[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
    pub struct DrainStats {
        pub applied: u64,
        pub stale: u64,
        pub dead: u64,
    }

    /// Polls one topic once, applying and acking everything received.
    /// Poison messages are forwarded to the dead-letter topic and acked.
    pub fn consume_once(
        bus: &MessageBus,
        applier: &CacheApplier,
        topic: &str,
        group: &str,
        max: usize,
        visibility_ms: u64,
    ) -> DrainStats {
        let mut stats = DrainStats::default();
        for msg in bus.poll(topic, group, max, visibility_ms) {
            match applier.apply_change_message(&msg) {
                Ok(ApplyOutcome::Applied) => stats.applied += 1,
                Ok(ApplyOutcome::SkippedStale) => stats.stale += 1,
                Err(ApplyError::Poison(_)) => {
                    bus.publish(DEAD_LETTER_TOPIC, &msg.payload);
                    stats.dead += 1;
                }
            }
            bus.ack(topic, group, msg.offset);
        }
        stats
    }

    /// Pumps and consumes until the pipeline is quiescent: no unpumped
    /// events and no unacked messages on any filtered topic.
    pub fn drain_pipeline(
        store: &RecordStore,
        bus: &MessageBus,
        applier: &CacheApplier,
        filter: &HashSet<String>,
        group: &str,
    ) -> DrainStats {
        let mut total = DrainStats::default();
        loop {
            let pumped = store.pump_changes(bus, filter);
            let mut consumed = 0;
            for logical in filter {
                let topic = format!("cdc.{logical}");
                let stats = consume_once(bus, applier, &topic, group, usize::MAX, 60_000);
                consumed += stats.applied + stats.stale + stats.dead;
                total.applied += stats.applied;
                total.stale += stats.stale;
                total.dead += stats.dead;
            }
            if pumped == 0 && consumed == 0 {
                let idle =
                    filter.iter().all(|logical| bus.pending(&format!("cdc.{logical}"), group) == 0);
                if idle {
                    return total;
                }
            }
        }
    }
}

pub mod convergence {
    //! Quiescent-state checker: recomputes every cache projection from a
    //! full store scan and reports disagreements. A clean report is the
    //! eventual-consistency contract between store and cache.

    use super::*;
    use crate::inventory::{
        remaining_oracle, seat_from_columns, CarriageSpec, SeatOccupancy, SegmentKey, SeatType,
        TrainPlan,
    };

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct Mismatch {
        pub key: String,
        pub cached: Option<String>,
        pub derived: String,
    }

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct ConvergenceReport {
        pub checked_keys: usize,
        pub mismatches: Vec<Mismatch>,
    }

    impl ConvergenceReport {
        pub fn convergent(&self) -> bool {
            self.mismatches.is_empty()
        }
    }

    fn field_int(cache: &CacheStore, key: &str, field: &str) -> Option<i64> {
        match cache.hash_get(key, field) {
            Some(FieldValue::Int(v)) => Some(v),
            _ => None,
        }
    }

    fn physical_tables(store: &RecordStore, logical: &str) -> Vec<String> {
        store
            .table_names()
            .into_iter()
            .filter(|t| store.logical_name(t).as_deref() == Some(logical))
            .collect()
    }

    fn row_anywhere(store: &RecordStore, logical: &str, pk: &str) -> Option<Row> {
        physical_tables(store, logical).iter().find_map(|t| store.get_row(t, pk))
    }

    /// Rebuilds a plan's stations and occupancy from the store rows alone.
    fn plan_from_store(store: &RecordStore, train_id: &str, date: &str) -> Option<(TrainPlan, SeatOccupancy)> {
        let plan_key = format!("{train_id}:{date}");
        let mut stations: Vec<(i64, String)> = store
            .scan_prefix("t_train_station", &format!("{plan_key}:"))
            .into_iter()
            .filter_map(|(_, row)| {
                Some((
                    row.columns.get("station_index")?.as_int()?,
                    row.columns.get("station")?.as_text()?.to_string(),
                ))
            })
            .collect();
        stations.sort();
        if stations.len() < 2 {
            return None;
        }
        let stations: Vec<String> = stations.into_iter().map(|(_, s)| s).collect();

        let mut seats = Vec::new();
        for (_, row) in store.scan_prefix("t_seat", &format!("{plan_key}:")) {
            seats.push(seat_from_columns(&row.columns).ok()?);
        }
        seats.sort_by_key(|s| s.pos);
        let mut carriage_counts: BTreeMap<(u32, SeatType), u32> = BTreeMap::new();
        for s in &seats {
            *carriage_counts.entry((s.pos.carriage, s.seat_type)).or_default() += 1;
        }
        let carriages = carriage_counts
            .into_iter()
            .map(|((carriage_no, seat_type), seat_count)| CarriageSpec {
                carriage_no,
                seat_type,
                seat_count,
            })
            .collect();
        let plan = TrainPlan {
            train_id: train_id.to_string(),
            service_date: date.to_string(),
            stations,
            carriages,
        };
        let occupancy = SeatOccupancy { legs: plan.legs(), seats };
        Some((plan, occupancy))
    }

    /// Compares every cache entry derived from store tables against a
    /// fresh recomputation. Precondition: the CDC pipeline is quiescent.
    pub fn verify_convergence(store: &RecordStore, cache: &CacheStore) -> ConvergenceReport {
        let mut checked = 0;
        let mut mismatches = Vec::new();

        // Remaining-ticket hashes: every segment of every train, oracle
        // recomputed from the seat bitsets.
        let mut known_ticket_keys: HashSet<String> = HashSet::new();
        for (pk, row) in store.scan_table("t_train") {
            let (Some(train_id), Some(date)) = (
                row.columns.get("train_id").and_then(Scalar::as_text),
                row.columns.get("service_date").and_then(Scalar::as_text),
            ) else {
                continue;
            };
            let Some((plan, occupancy)) = plan_from_store(store, train_id, date) else {
                mismatches.push(Mismatch {
                    key: format!("train-plan:{pk}"),
                    cached: None,
                    derived: "unreconstructible plan".into(),
                });
                continue;
            };
            let cache_key = crate::inventory::remaining_tickets_key(train_id, date);
            known_ticket_keys.insert(cache_key.clone());
            let cached_fields = cache.hash_get_all(&cache_key).unwrap_or_default();
            let mut expected_fields: HashSet<String> = HashSet::new();
            for seat_type in plan.seat_types() {
                for (d, a) in plan.segments() {
                    let seg = SegmentKey {
                        departure: plan.stations[d].clone(),
                        arrival: plan.stations[a].clone(),
                        seat_type,
                    };
                    let field = seg.field();
                    expected_fields.insert(field.clone());
                    let derived = remaining_oracle(&plan, &occupancy, &seg) as i64;
                    checked += 1;
                    let cached = field_int(cache, &cache_key, &field);
                    if cached != Some(derived) {
                        mismatches.push(Mismatch {
                            key: format!("{cache_key}[{field}]"),
                            cached: cached.map(|v| v.to_string()),
                            derived: derived.to_string(),
                        });
                    }
                }
            }
            for field in cached_fields.keys() {
                if !expected_fields.contains(field) {
                    mismatches.push(Mismatch {
                        key: format!("{cache_key}[{field}]"),
                        cached: Some(format!("{:?}", cached_fields[field])),
                        derived: "no such segment".into(),
                    });
                }
            }
        }
        for key in cache.keys_with_prefix("tickets:") {
            if !known_ticket_keys.contains(&key) {
                mismatches.push(Mismatch {
                    key,
                    cached: Some("<hash>".into()),
                    derived: "no such train".into(),
                });
            }
        }

        // Cached rows (read-through or CDC-projected): when present they
        // must match the canonical row JSON.
        for (prefix, logical) in [("user:", "t_user"), ("train:", "t_train")] {
            for key in cache.keys_with_prefix(prefix) {
                let pk = &key[prefix.len()..];
                checked += 1;
                let cached = cache.kv_get(&key);
                let derived = row_anywhere(store, logical, pk)
                    .map(|row| serde_json::to_string(&row.columns).expect("row serializes"));
                match (&cached, &derived) {
                    (Some(c), Some(d)) if c == d => {}
                    _ => mismatches.push(Mismatch {
                        key,
                        cached,
                        derived: derived.unwrap_or_else(|| "row absent".into()),
                    }),
                }
            }
        }

        ConvergenceReport { checked_keys: checked, mismatches }
    }
}
