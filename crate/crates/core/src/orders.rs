//! Order lifecycle: creation with a duplicate-submission guard, payment
//! confirmation, cancellation rollback, delayed close, and passenger-to-
//! order routing for ticket lookup.
//!
//! Transitions run under a per-order mutex and only along
//! PENDING_PAYMENT -> {PAID, CANCELLED, CLOSED}; the latter three are
//! terminal. Whenever an order leaves PENDING_PAYMENT without being paid,
//! its seat release commits before the status commit, so tokens never get
//! ahead of free seats.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aes::{AesError, FieldCodec};
use crate::clock::Clock;
use crate::idgen::{IdGenError, SnowflakeGenerator};
use crate::inventory::{Inventory, InventoryError, SeatPos, SeatType, SegmentKey};
use crate::kvcache::{CacheStore, CasOutcome};
use crate::recordstore::{Columns, Mutation, RecordStore, Row, Scalar, StoreError};
use crate::shard::{route_by_trailing_digits, ShardError, ShardRoute, ShardTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderStatus {
    #[serde(rename = "PENDING_PAYMENT")]
    PendingPayment,
    #[serde(rename = "PAID")]
    Paid,
    #[serde(rename = "CANCELLED")]
    Cancelled,
    #[serde(rename = "CLOSED")]
    Closed,
}

impl OrderStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrderStatus::PendingPayment => "PENDING_PAYMENT",
            OrderStatus::Paid => "PAID",
            OrderStatus::Cancelled => "CANCELLED",
            OrderStatus::Closed => "CLOSED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "PENDING_PAYMENT" => Some(OrderStatus::PendingPayment),
            "PAID" => Some(OrderStatus::Paid),
            "CANCELLED" => Some(OrderStatus::Cancelled),
            "CLOSED" => Some(OrderStatus::Closed),
            _ => None,
        }
    }

    pub fn terminal(&self) -> bool {
        !matches!(self, OrderStatus::PendingPayment)
    }
}

impl std::fmt::Display for OrderStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TicketType {
    #[serde(rename = "ADULT")]
    Adult,
    #[serde(rename = "CHILD")]
    Child,
    #[serde(rename = "STUDENT")]
    Student,
}

impl TicketType {
    pub fn as_str(&self) -> &'static str {
        match self {
            TicketType::Adult => "ADULT",
            TicketType::Child => "CHILD",
            TicketType::Student => "STUDENT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ADULT" => Some(TicketType::Adult),
            "CHILD" => Some(TicketType::Child),
            "STUDENT" => Some(TicketType::Student),
            _ => None,
        }
    }
}

/// Full fare in cents by seat class; children and students ride half fare.
pub fn ticket_price_cents(seat_type: SeatType, ticket_type: TicketType) -> i64 {
    let base = match seat_type {
        SeatType::Business => 30_000,
        SeatType::First => 20_000,
        SeatType::Second => 10_000,
    };
    match ticket_type {
        TicketType::Adult => base,
        TicketType::Child | TicketType::Student => base / 2,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassengerInput {
    pub name: String,
    pub id_number: String,
    pub ticket_type: TicketType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderItem {
    pub index: u32,
    pub passenger_name_enc: String,
    pub passenger_id_enc: String,
    pub ticket_type: TicketType,
    pub price_cents: i64,
    pub seat: SeatPos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    pub order_no: String,
    pub user_id: u64,
    pub train_id: String,
    pub service_date: String,
    pub segment: SegmentKey,
    pub status: OrderStatus,
    pub created_at: u64,
    pub deadline_ms: u64,
    pub items: Vec<OrderItem>,
}

/// Query view with sensitive fields decrypted and anonymized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderView {
    pub order_no: String,
    pub status: String,
    pub train_id: String,
    pub service_date: String,
    pub departure: String,
    pub arrival: String,
    pub seat_type: String,
    pub created_at: u64,
    pub passengers: Vec<PassengerView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PassengerView {
    pub name: String,
    pub id_number_masked: String,
    pub ticket_type: String,
    pub carriage: u32,
    pub seat_no: u32,
    pub price_cents: i64,
}

/// First four and last four characters survive; the middle is starred.
/// Inputs of eight or fewer characters are fully starred.
pub fn mask_id_number(id: &str) -> String {
    let chars: Vec<char> = id.chars().collect();
    if chars.len() <= 8 {
        return "*".repeat(chars.len());
    }
    let first: String = chars[..4].iter().collect();
    let last: String = chars[chars.len() - 4..].iter().collect();
    format!("{first}{}{last}", "*".repeat(chars.len() - 8))
}

/// Deterministic digest used as the passenger-route lookup key.
pub fn passenger_digest(id_number: &str) -> String {
    hex::encode(Sha256::digest(id_number.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaymentResult {
    Success,
    Failure,
}

#[derive(Debug, Error)]
pub enum OrderError {
    #[error("purchase form expired; reload and retry")]
    StaleForm,
    #[error("duplicate submission")]
    DuplicateSubmission,
    #[error("order {0} not found")]
    NotFound(String),
    #[error("order belongs to another user")]
    PermissionDenied,
    #[error("invalid transition from {current}")]
    InvalidTransition { current: OrderStatus },
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Aes(#[from] AesError),
    #[error(transparent)]
    IdGen(#[from] IdGenError),
    #[error(transparent)]
    Shard(#[from] ShardError),
}

#[derive(Debug, Default)]
pub struct OrderCounters {
    pub created: AtomicU64,
    pub paid: AtomicU64,
    pub cancelled: AtomicU64,
    pub closed: AtomicU64,
    pub manual_refunds: AtomicU64,
    pub duplicate_submissions: AtomicU64,
}

pub mod schema {
    use crate::shard::ShardTopology;

    pub const T_ORDER: &str = "t_order";
    pub const T_ORDER_ITEM: &str = "t_order_item";
    pub const T_ORDER_ITEM_PASSENGER: &str = "t_order_item_passenger";
    pub const T_PAY: &str = "t_pay";
    pub const T_MANUAL_REFUND: &str = "t_manual_refund";

    pub fn physical(logical: &str, route: crate::shard::ShardRoute) -> String {
        format!("{logical}_{}_{}", route.db_index, route.table_index)
    }

    /// Creates the order-family tables: the sharded order/item tables (one
    /// physical table per shard cell) plus the unsharded routing, payment,
    /// and manual-refund tables.
    pub fn create_tables(store: &crate::recordstore::RecordStore, topology: ShardTopology) {
        for db in 0..topology.db_count {
            for table in 0..topology.tables_per_db {
                let route = crate::shard::ShardRoute { db_index: db, table_index: table };
                store.create_table(&physical(T_ORDER, route), T_ORDER);
                store.create_table(&physical(T_ORDER_ITEM, route), T_ORDER_ITEM);
            }
        }
        for t in [T_ORDER_ITEM_PASSENGER, T_PAY, T_MANUAL_REFUND] {
            store.create_table(t, t);
        }
    }
}

pub struct OrderService {
    store: Arc<RecordStore>,
    cache: Arc<CacheStore>,
    inventory: Arc<Inventory>,
    codec: Arc<FieldCodec>,
    idgen: Arc<SnowflakeGenerator>,
    clock: Arc<dyn Clock>,
    topology: ShardTopology,
    payment_deadline_ms: u64,
    dedup_ttl_ms: u64,
    order_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    pub counters: OrderCounters,
}

impl OrderService {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: Arc<RecordStore>,
        cache: Arc<CacheStore>,
        inventory: Arc<Inventory>,
        codec: Arc<FieldCodec>,
        idgen: Arc<SnowflakeGenerator>,
        clock: Arc<dyn Clock>,
        topology: ShardTopology,
        payment_deadline_ms: u64,
        dedup_ttl_ms: u64,
    ) -> Self {
        schema::create_tables(&store, topology);
        Self {
            store,
            cache,
            inventory,
            codec,
            idgen,
            clock,
            topology,
            payment_deadline_ms,
            dedup_ttl_ms,
            order_locks: Mutex::new(HashMap::new()),
            counters: OrderCounters::default(),
        }
    }

    fn order_lock(&self, order_no: &str) -> Arc<Mutex<()>> {
        self.order_locks
            .lock()
            .expect("order lock registry poisoned")
            .entry(order_no.to_string())
            .or_default()
            .clone()
    }

    fn route(&self, order_no: &str) -> Result<ShardRoute, OrderError> {
        Ok(route_by_trailing_digits(order_no, self.topology)?)
    }

    /// One token per purchase-page load; consumed exactly once.
    pub fn issue_dedup_token(&self) -> Result<String, OrderError> {
        let token = format!("{:x}", self.idgen.next_id()?);
        self.cache.kv_set(&format!("dedup:{token}"), "unused", Some(self.dedup_ttl_ms));
        Ok(token)
    }

    fn consume_dedup(&self, token: &str) -> Result<(), OrderError> {
        match self.cache.kv_compare_swap(&format!("dedup:{token}"), "unused", "consumed") {
            CasOutcome::Swapped => Ok(()),
            CasOutcome::Mismatch(_) => {
                self.counters.duplicate_submissions.fetch_add(1, Ordering::SeqCst);
                Err(OrderError::DuplicateSubmission)
            }
            CasOutcome::Missing => Err(OrderError::StaleForm),
        }
    }

    /// Order number: snowflake ID concatenated with the last six decimal
    /// digits of the user ID, zero-padded.
    fn next_order_no(&self, user_id: u64) -> Result<String, OrderError> {
        Ok(format!("{}{:06}", self.idgen.next_id()?, user_id % 1_000_000))
    }

    /// Persists order, items, and passenger routes in one commit. The
    /// caller already holds granted tokens and the seat assignments.
    pub fn create_order(
        &self,
        user_id: u64,
        train_id: &str,
        service_date: &str,
        segment: &SegmentKey,
        passengers: &[PassengerInput],
        assignments: &[SeatPos],
        dedup_token: &str,
    ) -> Result<Order, OrderError> {
        assert_eq!(passengers.len(), assignments.len(), "one seat per passenger");
        self.consume_dedup(dedup_token)?;

        let now = self.clock.now_ms();
        let order_no = self.next_order_no(user_id)?;
        let route = self.route(&order_no)?;
        let deadline_ms = now + self.payment_deadline_ms;

        let mut items = Vec::with_capacity(passengers.len());
        let mut mutations = Vec::new();

        let mut order_cols = Columns::new();
        order_cols.insert("order_no".into(), order_no.as_str().into());
        order_cols.insert("user_id".into(), Scalar::Int(user_id as i64));
        order_cols.insert("train_id".into(), train_id.into());
        order_cols.insert("service_date".into(), service_date.into());
        order_cols.insert("departure".into(), segment.departure.as_str().into());
        order_cols.insert("arrival".into(), segment.arrival.as_str().into());
        order_cols.insert("seat_type".into(), segment.seat_type.as_str().into());
        order_cols.insert("status".into(), OrderStatus::PendingPayment.as_str().into());
        order_cols.insert("created_at".into(), Scalar::Int(now as i64));
        order_cols.insert("deadline_ms".into(), Scalar::Int(deadline_ms as i64));
        order_cols.insert("passenger_count".into(), Scalar::Int(passengers.len() as i64));
        mutations.push(Mutation::Insert {
            table: schema::physical(schema::T_ORDER, route),
            pk: order_no.clone(),
            columns: order_cols,
        });

        for (i, (p, seat)) in passengers.iter().zip(assignments).enumerate() {
            let name_enc = self.codec.encode_field(&p.name)?.to_hex();
            let id_enc = self.codec.encode_field(&p.id_number)?.to_hex();
            let price = ticket_price_cents(segment.seat_type, p.ticket_type);
            let mut cols = Columns::new();
            cols.insert("order_no".into(), order_no.as_str().into());
            cols.insert("item_index".into(), Scalar::Int(i as i64));
            cols.insert("passenger_name_enc".into(), name_enc.as_str().into());
            cols.insert("passenger_id_enc".into(), id_enc.as_str().into());
            cols.insert("ticket_type".into(), p.ticket_type.as_str().into());
            cols.insert("price_cents".into(), Scalar::Int(price));
            cols.insert("carriage".into(), Scalar::Int(seat.carriage as i64));
            cols.insert("seat_no".into(), Scalar::Int(seat.seat_no as i64));
            mutations.push(Mutation::Insert {
                table: schema::physical(schema::T_ORDER_ITEM, route),
                pk: format!("{order_no}:{i}"),
                columns: cols,
            });

            let digest = passenger_digest(&p.id_number);
            let mut route_cols = Columns::new();
            route_cols.insert("id_digest".into(), digest.as_str().into());
            route_cols.insert("order_no".into(), order_no.as_str().into());
            route_cols.insert("created_at".into(), Scalar::Int(now as i64));
            mutations.push(Mutation::Insert {
                table: schema::T_ORDER_ITEM_PASSENGER.into(),
                pk: format!("{digest}:{order_no}"),
                columns: route_cols,
            });

            items.push(OrderItem {
                index: i as u32,
                passenger_name_enc: name_enc,
                passenger_id_enc: id_enc,
                ticket_type: p.ticket_type,
                price_cents: price,
                seat: *seat,
            });
        }

        self.store.commit_with_change(mutations)?;
        self.counters.created.fetch_add(1, Ordering::SeqCst);
        Ok(Order {
            order_no,
            user_id,
            train_id: train_id.to_string(),
            service_date: service_date.to_string(),
            segment: segment.clone(),
            status: OrderStatus::PendingPayment,
            created_at: now,
            deadline_ms,
            items,
        })
    }

    pub fn get_order(&self, order_no: &str) -> Result<Option<Order>, OrderError> {
        let route = self.route(order_no)?;
        let Some(row) = self.store.get_row(&schema::physical(schema::T_ORDER, route), order_no)
        else {
            return Ok(None);
        };
        let items = self
            .store
            .scan_prefix(&schema::physical(schema::T_ORDER_ITEM, route), &format!("{order_no}:"))
            .into_iter()
            .filter_map(|(_, r)| item_from_row(&r))
            .collect();
        Ok(Some(order_from_row(order_no, &row, items)?))
    }

    /// Idempotent by callback_id: the first call for an ID records the
    /// payment row and (on success from PENDING_PAYMENT) flips the order
    /// to PAID, which turns the seat locks into confirmed deductions.
    /// Replays and callbacks on terminal states return the current state;
    /// a success landing on a CLOSED or CANCELLED order goes to the
    /// manual-refund queue.
    pub fn payment_callback(
        &self,
        order_no: &str,
        result: PaymentResult,
        callback_id: &str,
    ) -> Result<OrderStatus, OrderError> {
        let lock = self.order_lock(order_no);
        let _held = lock.lock().expect("order lock poisoned");

        if let Some(row) = self.store.get_row(schema::T_PAY, callback_id) {
            let status = row
                .columns
                .get("resulting_status")
                .and_then(Scalar::as_text)
                .and_then(OrderStatus::parse)
                .ok_or_else(|| OrderError::NotFound(order_no.to_string()))?;
            return Ok(status);
        }

        let order =
            self.get_order(order_no)?.ok_or_else(|| OrderError::NotFound(order_no.to_string()))?;
        let now = self.clock.now_ms();
        let success = result == PaymentResult::Success;

        let resulting = if order.status == OrderStatus::PendingPayment && success {
            OrderStatus::Paid
        } else {
            order.status
        };

        let mut mutations = Vec::new();
        let mut pay_cols = Columns::new();
        pay_cols.insert("callback_id".into(), callback_id.into());
        pay_cols.insert("order_no".into(), order_no.into());
        pay_cols.insert(
            "result".into(),
            if success { "SUCCESS" } else { "FAILURE" }.into(),
        );
        pay_cols.insert("resulting_status".into(), resulting.as_str().into());
        pay_cols.insert("created_at".into(), Scalar::Int(now as i64));
        mutations.push(Mutation::Insert {
            table: schema::T_PAY.into(),
            pk: callback_id.to_string(),
            columns: pay_cols,
        });

        if resulting == OrderStatus::Paid && order.status == OrderStatus::PendingPayment {
            mutations.push(self.status_update(&order, OrderStatus::Paid)?);
        } else if success && order.status.terminal() && order.status != OrderStatus::Paid {
            // Money arrived for an order the engine already released:
            // queue it for a manual refund instead of resurrecting it.
            let mut refund_cols = Columns::new();
            refund_cols.insert("callback_id".into(), callback_id.into());
            refund_cols.insert("order_no".into(), order_no.into());
            refund_cols.insert("created_at".into(), Scalar::Int(now as i64));
            mutations.push(Mutation::Insert {
                table: schema::T_MANUAL_REFUND.into(),
                pk: callback_id.to_string(),
                columns: refund_cols,
            });
            self.counters.manual_refunds.fetch_add(1, Ordering::SeqCst);
        }

        self.store.commit_with_change(mutations)?;
        if resulting == OrderStatus::Paid && order.status == OrderStatus::PendingPayment {
            self.counters.paid.fetch_add(1, Ordering::SeqCst);
        }
        Ok(resulting)
    }

    /// Owner-only; only from PENDING_PAYMENT. Seat release (with token
    /// refund) commits before the status flips to CANCELLED.
    pub fn cancel_order(&self, order_no: &str, user_id: u64) -> Result<OrderStatus, OrderError> {
        let lock = self.order_lock(order_no);
        let _held = lock.lock().expect("order lock poisoned");

        let order =
            self.get_order(order_no)?.ok_or_else(|| OrderError::NotFound(order_no.to_string()))?;
        if order.user_id != user_id {
            return Err(OrderError::PermissionDenied);
        }
        if order.status != OrderStatus::PendingPayment {
            return Err(OrderError::InvalidTransition { current: order.status });
        }
        self.release_order_resources(&order)?;
        self.store.commit_with_change(vec![self.status_update(&order, OrderStatus::Cancelled)?])?;
        self.counters.cancelled.fetch_add(1, Ordering::SeqCst);
        Ok(OrderStatus::Cancelled)
    }

    /// Closes every pending order whose payment deadline has passed,
    /// releasing its seats and tokens. Returns the closed order numbers.
    pub fn close_expired(&self, now: u64) -> Result<Vec<String>, OrderError> {
        let mut closed = Vec::new();
        for table in self.order_tables() {
            for (order_no, row) in self.store.scan_table(&table) {
                let pending = row.columns.get("status").and_then(Scalar::as_text)
                    == Some(OrderStatus::PendingPayment.as_str());
                let expired = row
                    .columns
                    .get("deadline_ms")
                    .and_then(Scalar::as_int)
                    .is_some_and(|d| (d as u64) <= now);
                if !(pending && expired) {
                    continue;
                }
                let lock = self.order_lock(&order_no);
                let _held = lock.lock().expect("order lock poisoned");
                // Re-read under the lock; a payment may have won the race.
                let Some(order) = self.get_order(&order_no)? else {
                    continue;
                };
                if order.status != OrderStatus::PendingPayment || order.deadline_ms > now {
                    continue;
                }
                self.release_order_resources(&order)?;
                self.store
                    .commit_with_change(vec![self.status_update(&order, OrderStatus::Closed)?])?;
                self.counters.closed.fetch_add(1, Ordering::SeqCst);
                closed.push(order_no);
            }
        }
        Ok(closed)
    }

    /// Looks up orders through the passenger routing table, newest first,
    /// with ID numbers anonymized for display.
    pub fn find_orders_by_passenger(&self, id_number: &str) -> Result<Vec<OrderView>, OrderError> {
        let digest = passenger_digest(id_number);
        let mut views = Vec::new();
        for (_, row) in
            self.store.scan_prefix(schema::T_ORDER_ITEM_PASSENGER, &format!("{digest}:"))
        {
            let Some(order_no) = row.columns.get("order_no").and_then(Scalar::as_text) else {
                continue;
            };
            let Some(order) = self.get_order(order_no)? else {
                continue;
            };
            let mut passengers = Vec::new();
            for item in &order.items {
                let name = self
                    .codec
                    .decode_field(&crate::aes::EncryptedField::from_hex(&item.passenger_name_enc)?)?;
                let id_plain = self
                    .codec
                    .decode_field(&crate::aes::EncryptedField::from_hex(&item.passenger_id_enc)?)?;
                passengers.push(PassengerView {
                    name,
                    id_number_masked: mask_id_number(&id_plain),
                    ticket_type: item.ticket_type.as_str().to_string(),
                    carriage: item.seat.carriage,
                    seat_no: item.seat.seat_no,
                    price_cents: item.price_cents,
                });
            }
            views.push(OrderView {
                order_no: order.order_no.clone(),
                status: order.status.as_str().to_string(),
                train_id: order.train_id.clone(),
                service_date: order.service_date.clone(),
                departure: order.segment.departure.clone(),
                arrival: order.segment.arrival.clone(),
                seat_type: order.segment.seat_type.as_str().to_string(),
                created_at: order.created_at,
                passengers,
            });
        }
        views.sort_by(|a, b| b.created_at.cmp(&a.created_at).then(b.order_no.cmp(&a.order_no)));
        Ok(views)
    }

    pub fn manual_refund_queue(&self) -> Vec<String> {
        self.store
            .scan_table(schema::T_MANUAL_REFUND)
            .into_iter()
            .filter_map(|(_, r)| r.columns.get("order_no")?.as_text().map(str::to_string))
            .collect()
    }

    fn order_tables(&self) -> Vec<String> {
        let mut tables = Vec::new();
        for db in 0..self.topology.db_count {
            for table in 0..self.topology.tables_per_db {
                tables.push(schema::physical(
                    schema::T_ORDER,
                    ShardRoute { db_index: db, table_index: table },
                ));
            }
        }
        tables
    }

    fn status_update(&self, order: &Order, status: OrderStatus) -> Result<Mutation, OrderError> {
        let route = self.route(&order.order_no)?;
        let table = schema::physical(schema::T_ORDER, route);
        let row = self
            .store
            .get_row(&table, &order.order_no)
            .ok_or_else(|| OrderError::NotFound(order.order_no.clone()))?;
        let mut columns = row.columns;
        columns.insert("status".into(), status.as_str().into());
        Ok(Mutation::Update { table, pk: order.order_no.clone(), columns })
    }

    fn release_order_resources(&self, order: &Order) -> Result<(), OrderError> {
        let seats: Vec<SeatPos> = order.items.iter().map(|i| i.seat).collect();
        self.inventory.release_seats(
            &order.train_id,
            &order.service_date,
            &order.segment,
            &seats,
        )?;
        Ok(())
    }
}

fn order_from_row(order_no: &str, row: &Row, items: Vec<OrderItem>) -> Result<Order, OrderError> {
    let text = |name: &str| {
        row.columns
            .get(name)
            .and_then(Scalar::as_text)
            .map(str::to_string)
            .ok_or_else(|| OrderError::NotFound(order_no.to_string()))
    };
    let int = |name: &str| {
        row.columns
            .get(name)
            .and_then(Scalar::as_int)
            .ok_or_else(|| OrderError::NotFound(order_no.to_string()))
    };
    let seat_type = SeatType::parse(&text("seat_type")?)
        .ok_or_else(|| OrderError::NotFound(order_no.to_string()))?;
    let status = OrderStatus::parse(&text("status")?)
        .ok_or_else(|| OrderError::NotFound(order_no.to_string()))?;
    Ok(Order {
        order_no: order_no.to_string(),
        user_id: int("user_id")? as u64,
        train_id: text("train_id")?,
        service_date: text("service_date")?,
        segment: SegmentKey { departure: text("departure")?, arrival: text("arrival")?, seat_type },
        status,
        created_at: int("created_at")? as u64,
        deadline_ms: int("deadline_ms")? as u64,
        items,
    })
}

fn item_from_row(row: &Row) -> Option<OrderItem> {
    Some(OrderItem {
        index: row.columns.get("item_index")?.as_int()? as u32,
        passenger_name_enc: row.columns.get("passenger_name_enc")?.as_text()?.to_string(),
        passenger_id_enc: row.columns.get("passenger_id_enc")?.as_text()?.to_string(),
        ticket_type: TicketType::parse(row.columns.get("ticket_type")?.as_text()?)?,
        price_cents: row.columns.get("price_cents")?.as_int()?,
        seat: SeatPos {
            carriage: row.columns.get("carriage")?.as_int()? as u32,
            seat_no: row.columns.get("seat_no")?.as_int()? as u32,
        },
    })
}
