//! The engine: composes every component into the read and write
//! pipelines behind an HTTP/JSON facade.
//!
//! Read path: gateway -> flow admission -> Bloom route check -> cache ->
//! store fill on miss. Write path: gateway -> flow admission -> token
//! deduction -> seat allocation -> order creation, with refunds on any
//! failure past the deduction. All five domain areas (membership,
//! ticketing, orders, payment, gateway) run in one process behind these
//! internal interfaces.

pub mod config;
pub mod http;

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aes::FieldCodec;
use crate::bloom::BloomFilter;
use crate::clock::Clock;
use crate::flow::{DenyReason, FlowController, Gateway, AccessPolicy, Permit, RejectReason};
use crate::idgen::SnowflakeGenerator;
use crate::inventory::{
    remaining_tickets_key, Inventory, InventoryError, SeatPos, SeatType, SegmentKey, TokenDecision,
    TrainPlan,
};
use crate::kvcache::CacheStore;
use crate::mqbus::MessageBus;
use crate::orders::{
    OrderError, OrderService, OrderView, PassengerInput, PaymentResult, TicketType,
};
use crate::recordstore::{cdc, convergence, Columns, Mutation, RecordStore, Scalar};
use crate::shard::{route_by_username, ShardRoute};

use config::EngineConfig;

/// Stable machine-readable error surface of the HTTP API.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub retryable: bool,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    fn new(code: &str, status: u16, retryable: bool, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), message: message.into(), retryable, status }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("BAD_REQUEST", 400, false, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new("INTERNAL", 500, false, message)
    }

    /// True for infrastructure failures that should count against the
    /// breaker, as opposed to business rejections.
    pub fn is_system(&self) -> bool {
        self.status >= 500
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<DenyReason> for ApiError {
    fn from(reason: DenyReason) -> Self {
        match reason {
            DenyReason::Blacklist => ApiError::new("DENY_BLACKLIST", 403, false, "access denied"),
            DenyReason::Auth => {
                ApiError::new("AUTH_REQUIRED", 401, false, "valid session token required")
            }
        }
    }
}

impl From<RejectReason> for ApiError {
    fn from(reason: RejectReason) -> Self {
        match reason {
            RejectReason::Qps => ApiError::new("FLOW_LIMITED", 429, true, "request rate limited"),
            RejectReason::Concurrency => {
                ApiError::new("FLOW_LIMITED", 429, true, "concurrency limited")
            }
            RejectReason::Breaker => {
                ApiError::new("BREAKER_OPEN", 503, true, "resource circuit breaker open")
            }
        }
    }
}

impl From<OrderError> for ApiError {
    fn from(err: OrderError) -> Self {
        match &err {
            OrderError::StaleForm => ApiError::new("STALE_FORM", 410, false, err.to_string()),
            OrderError::DuplicateSubmission => {
                ApiError::new("DUPLICATE_SUBMISSION", 409, false, err.to_string())
            }
            OrderError::NotFound(_) => ApiError::new("NOT_FOUND", 404, false, err.to_string()),
            OrderError::PermissionDenied => {
                ApiError::new("PERMISSION_DENIED", 403, false, err.to_string())
            }
            OrderError::InvalidTransition { .. } => {
                ApiError::new("INVALID_TRANSITION", 409, false, err.to_string())
            }
            OrderError::Inventory(inner) => inventory_api_error(inner, &err),
            _ => ApiError::internal(err.to_string()),
        }
    }
}

fn inventory_api_error(inner: &InventoryError, err: &dyn std::fmt::Display) -> ApiError {
    match inner {
        InventoryError::SoldOutAfterGrant => {
            ApiError::new("SOLD_OUT", 409, false, "tickets sold out for this segment")
        }
        InventoryError::UnknownTrain { .. }
        | InventoryError::UnknownStation(_)
        | InventoryError::BadSegment { .. }
        | InventoryError::TypeNotOnTrain(_)
        | InventoryError::BadPlan(_) => ApiError::bad_request(err.to_string()),
        InventoryError::ContainerNotInitialized(_) => {
            ApiError::new("CONTAINER_NOT_INITIALIZED", 503, true, err.to_string())
        }
        _ => ApiError::internal(err.to_string()),
    }
}

impl From<InventoryError> for ApiError {
    fn from(err: InventoryError) -> Self {
        let text = err.to_string();
        inventory_api_error(&err, &text)
    }
}

/// Per-request context the HTTP layer extracts for the gateway.
#[derive(Debug, Clone)]
pub struct RequestCtx {
    pub ip: String,
    pub path: String,
    pub token: Option<String>,
}

impl RequestCtx {
    pub fn new(ip: &str, path: &str, token: Option<&str>) -> Self {
        Self { ip: ip.into(), path: path.into(), token: token.map(String::from) }
    }
}

#[derive(Debug, Default)]
pub struct EngineMetrics {
    /// Persistent-store reads on serving paths (query fills, user loads,
    /// availability checks); the cache-penetration criterion watches this.
    pub store_reads: AtomicU64,
    pub bloom_short_circuits: AtomicU64,
    pub queries: AtomicU64,
    pub purchases_attempted: AtomicU64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RegisterRequest {
    pub username: String,
    pub password: String,
    pub id_number: String,
    pub phone: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegisterResponse {
    pub user_id: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoginResponse {
    pub token: String,
    pub user_id: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct QueryParams {
    pub date: String,
    pub departure: String,
    pub arrival: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainQueryRow {
    pub train_id: String,
    pub departure: String,
    pub arrival: String,
    /// Remaining count per seat type for the requested segment.
    pub remaining: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PassengerRequest {
    pub name: String,
    pub id_number: String,
    #[serde(default = "default_ticket_type")]
    pub ticket_type: String,
}

fn default_ticket_type() -> String {
    "ADULT".to_string()
}

#[derive(Debug, Clone, Deserialize)]
pub struct PurchaseRequest {
    pub dedup: String,
    pub train_id: String,
    pub date: String,
    pub departure: String,
    pub arrival: String,
    pub seat_type: String,
    pub passengers: Vec<PassengerRequest>,
    #[serde(default)]
    pub preference: Vec<SeatPos>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PurchaseResponse {
    pub order_no: String,
    pub status: String,
    pub deadline_ms: u64,
    pub seats: Vec<SeatPos>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PayCallbackRequest {
    pub order_no: String,
    /// "SUCCESS" or "FAILURE".
    pub result: String,
    pub callback_id: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderStateResponse {
    pub order_no: String,
    pub status: String,
}

pub const MAX_PASSENGERS_PER_ORDER: usize = 5;

struct UserRecord {
    user_id: u64,
}

pub struct Engine {
    pub config: EngineConfig,
    pub clock: Arc<dyn Clock>,
    pub cache: Arc<CacheStore>,
    pub bus: Arc<MessageBus>,
    pub store: Arc<RecordStore>,
    pub inventory: Arc<Inventory>,
    pub orders: Arc<OrderService>,
    pub flow: Arc<FlowController>,
    pub gateway: Arc<Gateway>,
    pub idgen: Arc<SnowflakeGenerator>,
    pub codec: Arc<FieldCodec>,
    pub metrics: EngineMetrics,
    route_bloom: BloomFilter,
    username_bloom: BloomFilter,
    applier: cdc::CacheApplier,
    cdc_filter: HashSet<String>,
    registration_lock: Mutex<()>,
    shutdown: AtomicBool,
    threads: Mutex<Vec<std::thread::JoinHandle<()>>>,
}

const CDC_GROUP: &str = "cache";

impl Engine {
    pub fn new(config: EngineConfig, clock: Arc<dyn Clock>) -> Result<Arc<Self>, ApiError> {
        config.validate().map_err(|e| ApiError::internal(e.to_string()))?;

        let store = Arc::new(match &config.persistence_path {
            Some(path) => {
                RecordStore::with_changelog_file(clock.clone(), std::path::Path::new(path))
                    .map_err(|e| ApiError::internal(format!("changelog open failed: {e}")))?
            }
            None => RecordStore::new(clock.clone()),
        });
        let cache = Arc::new(CacheStore::new(clock.clone()));
        let bus = Arc::new(MessageBus::new(clock.clone()));

        // Sharded membership tables; order tables are created by the
        // order service from the same topology.
        for db in 0..config.shards.db_count {
            for table in 0..config.shards.tables_per_db {
                let route = ShardRoute { db_index: db, table_index: table };
                store.create_table(&format!("t_user_{}_{}", route.db_index, route.table_index), "t_user");
                store.create_table(
                    &format!("t_passenger_{}_{}", route.db_index, route.table_index),
                    "t_passenger",
                );
            }
        }

        let idgen = Arc::new(
            SnowflakeGenerator::new(
                config.snowflake.layout(),
                config.snowflake.datacenter_id,
                config.snowflake.worker_id,
                clock.clone(),
            )
            .map_err(|e| ApiError::internal(e.to_string()))?,
        );
        let codec = Arc::new(
            FieldCodec::new(&config.field_key().map_err(|e| ApiError::internal(e.to_string()))?)
                .map_err(|e| ApiError::internal(e.to_string()))?,
        );

        let inventory = Arc::new(Inventory::new(store.clone(), cache.clone()));
        let orders = Arc::new(OrderService::new(
            store.clone(),
            cache.clone(),
            inventory.clone(),
            codec.clone(),
            idgen.clone(),
            clock.clone(),
            config.shards,
            config.orders.payment_deadline_ms,
            config.orders.dedup_ttl_ms,
        ));

        let flow = Arc::new(FlowController::new());
        for (resource, rule) in &config.flow {
            flow.register(resource, rule.rule());
        }

        let policy = AccessPolicy {
            whitelist: config.gateway.whitelist.iter().cloned().collect(),
            blacklist: config.gateway.blacklist.iter().cloned().collect(),
        };
        let gateway = Arc::new(Gateway::new(policy, cache.clone(), config.gateway.session_ttl_ms));

        let route_bloom = BloomFilter::with_capacity(config.bloom.capacity, config.bloom.fpr)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let username_bloom = BloomFilter::with_capacity(config.bloom.capacity, config.bloom.fpr)
            .map_err(|e| ApiError::internal(e.to_string()))?;

        let engine = Arc::new(Self {
            clock,
            cache: cache.clone(),
            bus,
            store,
            inventory,
            orders,
            flow,
            gateway,
            idgen,
            codec,
            metrics: EngineMetrics::default(),
            route_bloom,
            username_bloom,
            applier: cdc::CacheApplier::new(cache),
            cdc_filter: ["t_ticket_remaining", "t_user", "t_train"]
                .into_iter()
                .map(String::from)
                .collect(),
            registration_lock: Mutex::new(()),
            shutdown: AtomicBool::new(false),
            threads: Mutex::new(Vec::new()),
            config,
        });

        for plan in engine.config.seed.trains.clone() {
            engine.register_train(plan)?;
        }
        for user in engine.config.seed.users.clone() {
            engine.register_user_internal(
                &user.username,
                &user.password,
                &user.id_number,
                &user.phone,
            )?;
        }
        Ok(engine)
    }

    /// Registers a plan and warms the route Bloom filter with every
    /// sellable (date, departure, arrival) key.
    pub fn register_train(&self, plan: TrainPlan) -> Result<(), ApiError> {
        let stations = plan.stations.clone();
        let date = plan.service_date.clone();
        self.inventory.register_plan(plan)?;
        for d in 0..stations.len() {
            for a in (d + 1)..stations.len() {
                self.route_bloom.insert(route_key(&date, &stations[d], &stations[a]).as_bytes());
            }
        }
        Ok(())
    }

    fn user_table(&self, username: &str) -> Result<String, ApiError> {
        let route = route_by_username(username, self.config.shards)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        Ok(format!("t_user_{}_{}", route.db_index, route.table_index))
    }

    fn register_user_internal(
        &self,
        username: &str,
        password: &str,
        id_number: &str,
        phone: &str,
    ) -> Result<u64, ApiError> {
        if username.is_empty() || password.is_empty() {
            return Err(ApiError::bad_request("username and password required"));
        }
        let table = self.user_table(username)?;
        let _held = self.registration_lock.lock().expect("registration lock poisoned");

        // Bloom says "definitely new" for most fresh names; only maybe-
        // taken names cost a store read.
        if self.username_bloom.maybe_contains(username.as_bytes()) {
            self.metrics.store_reads.fetch_add(1, Ordering::SeqCst);
            if self.store.get_row(&table, username).is_some() {
                return Err(ApiError::new("USERNAME_TAKEN", 409, false, "username already in use"));
            }
        }

        let user_id = self.idgen.next_id().map_err(|e| ApiError::internal(e.to_string()))? as u64;
        let mut cols = Columns::new();
        cols.insert("username".into(), username.into());
        cols.insert("user_id".into(), Scalar::Int(user_id as i64));
        cols.insert("password_digest".into(), hex::encode(Sha256::digest(password)).into());
        cols.insert(
            "id_number_enc".into(),
            self.codec
                .encode_field(id_number)
                .map_err(|e| ApiError::bad_request(e.to_string()))?
                .to_hex()
                .into(),
        );
        cols.insert(
            "phone_enc".into(),
            self.codec
                .encode_field(phone)
                .map_err(|e| ApiError::bad_request(e.to_string()))?
                .to_hex()
                .into(),
        );
        let mut mutations = vec![Mutation::Insert {
            table,
            pk: username.to_string(),
            columns: cols,
        }];

        // The registrant doubles as their own first passenger.
        let passenger_route = route_by_username(username, self.config.shards)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let mut pcols = Columns::new();
        pcols.insert("username".into(), username.into());
        pcols.insert("passenger_index".into(), Scalar::Int(0));
        pcols.insert(
            "id_number_enc".into(),
            self.codec
                .encode_field(id_number)
                .map_err(|e| ApiError::bad_request(e.to_string()))?
                .to_hex()
                .into(),
        );
        mutations.push(Mutation::Insert {
            table: format!("t_passenger_{}_{}", passenger_route.db_index, passenger_route.table_index),
            pk: format!("{username}:0"),
            columns: pcols,
        });

        self.store
            .commit_with_change(mutations)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        self.username_bloom.insert(username.as_bytes());
        Ok(user_id)
    }

    pub fn handle_register(
        &self,
        ctx: &RequestCtx,
        req: &RegisterRequest,
    ) -> Result<RegisterResponse, ApiError> {
        self.gateway.filter(&ctx.ip, &ctx.path, ctx.token.as_deref())?;
        let user_id =
            self.register_user_internal(&req.username, &req.password, &req.id_number, &req.phone)?;
        Ok(RegisterResponse { user_id })
    }

    pub fn handle_login(
        &self,
        ctx: &RequestCtx,
        req: &LoginRequest,
    ) -> Result<LoginResponse, ApiError> {
        self.gateway.filter(&ctx.ip, &ctx.path, ctx.token.as_deref())?;
        let failed = || ApiError::new("AUTH_FAILED", 401, false, "unknown user or wrong password");
        // Bloom front: unknown usernames never reach cache or store.
        if !self.username_bloom.maybe_contains(req.username.as_bytes()) {
            self.metrics.bloom_short_circuits.fetch_add(1, Ordering::SeqCst);
            return Err(failed());
        }
        let row = self.cached_user_row(&req.username).ok_or_else(failed)?;
        let digest = hex::encode(Sha256::digest(&req.password));
        if row.get("password_digest").and_then(Scalar::as_text) != Some(digest.as_str()) {
            return Err(failed());
        }
        let user_id = row.get("user_id").and_then(Scalar::as_int).unwrap_or(0) as u64;
        let token = format!("{:x}", self.idgen.next_id().map_err(|e| ApiError::internal(e.to_string()))?);
        self.gateway.store_session(&token, &req.username);
        Ok(LoginResponse { token, user_id })
    }

    /// Read-through user load: cache first, then store, writing back
    /// under the same version guard the CDC applier uses.
    fn cached_user_row(&self, username: &str) -> Option<Columns> {
        let key = format!("user:{username}");
        if let Some(json) = self.cache.kv_get(&key) {
            return serde_json::from_str(&json).ok();
        }
        self.metrics.store_reads.fetch_add(1, Ordering::SeqCst);
        let table = self.user_table(username).ok()?;
        let row = self.store.get_row(&table, username)?;
        let json = serde_json::to_string(&row.columns).ok()?;
        self.cache.versioned_kv_set(&format!("cdcver:{key}"), row.version as i64, &key, &json);
        serde_json::from_str(&json).ok()
    }

    fn require_user(&self, ctx: &RequestCtx) -> Result<(String, UserRecord), ApiError> {
        let username = self
            .gateway
            .filter(&ctx.ip, &ctx.path, ctx.token.as_deref())?
            .ok_or_else(|| ApiError::new("AUTH_REQUIRED", 401, false, "session required"))?;
        let row = self
            .cached_user_row(&username)
            .ok_or_else(|| ApiError::new("AUTH_REQUIRED", 401, false, "user no longer exists"))?;
        let user_id = row.get("user_id").and_then(Scalar::as_int).unwrap_or(0) as u64;
        Ok((username, UserRecord { user_id }))
    }

    fn admit(&self, resource: &str) -> Result<Permit, ApiError> {
        self.flow
            .admit(resource, self.clock.now_ms())
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(ApiError::from)
    }

    fn finish(&self, permit: Permit, started_ms: u64, ok: bool) {
        let now = self.clock.now_ms();
        self.flow.record_outcome(permit, now.saturating_sub(started_ms), ok, now);
    }

    /// Query pipeline: Bloom route check first; an absent route answers
    /// immediately with an empty result and never touches cache or store.
    pub fn handle_query_trains(
        &self,
        ctx: &RequestCtx,
        params: &QueryParams,
    ) -> Result<Vec<TrainQueryRow>, ApiError> {
        self.require_user(ctx)?;
        let started = self.clock.now_ms();
        let permit = self.admit("query")?;
        self.metrics.queries.fetch_add(1, Ordering::SeqCst);
        let result = self.query_trains_inner(params);
        let ok = result.as_ref().map(|_| true).unwrap_or_else(|e| !e.is_system());
        self.finish(permit, started, ok);
        result
    }

    fn query_trains_inner(&self, params: &QueryParams) -> Result<Vec<TrainQueryRow>, ApiError> {
        let key = route_key(&params.date, &params.departure, &params.arrival);
        if !self.route_bloom.maybe_contains(key.as_bytes()) {
            self.metrics.bloom_short_circuits.fetch_add(1, Ordering::SeqCst);
            return Ok(Vec::new());
        }

        let cache_key = format!("route:{key}");
        let train_ids: Vec<String> = match self.cache.kv_get(&cache_key) {
            Some(json) => serde_json::from_str(&json)
                .map_err(|e| ApiError::internal(format!("route cache corrupt: {e}")))?,
            None => {
                let ids = self.scan_trains_serving(params);
                let json = serde_json::to_string(&ids).expect("ids serialize");
                self.cache.kv_set(&cache_key, &json, Some(self.config.cache.route_ttl_ms));
                ids
            }
        };

        let mut rows = Vec::new();
        for train_id in train_ids {
            let remaining = self.remaining_for(&train_id, params)?;
            rows.push(TrainQueryRow {
                train_id,
                departure: params.departure.clone(),
                arrival: params.arrival.clone(),
                remaining,
            });
        }
        Ok(rows)
    }

    /// Store scan for trains serving the segment on the date. Counted as
    /// one store read; the result is cached with a TTL.
    fn scan_trains_serving(&self, params: &QueryParams) -> Vec<String> {
        self.metrics.store_reads.fetch_add(1, Ordering::SeqCst);
        let mut ids = Vec::new();
        for plan_key in self.inventory.plan_keys() {
            let Ok((train_id, date)) = split_plan_key(&plan_key) else {
                continue;
            };
            if date != params.date {
                continue;
            }
            let Ok(plan) = self.inventory.plan(train_id, date) else {
                continue;
            };
            let (Some(d), Some(a)) =
                (plan.station_index(&params.departure), plan.station_index(&params.arrival))
            else {
                continue;
            };
            if d < a {
                ids.push(train_id.to_string());
            }
        }
        ids.sort();
        ids
    }

    fn remaining_for(
        &self,
        train_id: &str,
        params: &QueryParams,
    ) -> Result<BTreeMap<String, i64>, ApiError> {
        let mut remaining = BTreeMap::new();
        let hash_key = remaining_tickets_key(train_id, &params.date);
        let prefix = format!("{}_{}_", params.departure, params.arrival);
        match self.cache.hash_get_all(&hash_key) {
            Some(fields) => {
                for (field, value) in fields {
                    if let (Some(seat_type), crate::kvcache::FieldValue::Int(count)) =
                        (field.strip_prefix(&prefix), value)
                    {
                        remaining.insert(seat_type.to_string(), count);
                    }
                }
            }
            None => {
                // Cache cold (CDC not yet drained): fall back to the store.
                self.metrics.store_reads.fetch_add(1, Ordering::SeqCst);
                let pk_prefix = format!(
                    "{train_id}:{}:{}:{}:",
                    params.date, params.departure, params.arrival
                );
                for (_, row) in self.store.scan_prefix("t_ticket_remaining", &pk_prefix) {
                    if let (Some(seat_type), Some(count)) = (
                        row.columns.get("seat_type").and_then(Scalar::as_text),
                        row.columns.get("count").and_then(Scalar::as_int),
                    ) {
                        remaining.insert(seat_type.to_string(), count);
                    }
                }
            }
        }
        Ok(remaining)
    }

    /// Purchase pipeline per the token-container design: tokens gate
    /// admission, the seat allocator is authoritative, and any failure
    /// after the deduction refunds before the error response.
    pub fn handle_purchase(
        &self,
        ctx: &RequestCtx,
        req: &PurchaseRequest,
    ) -> Result<PurchaseResponse, ApiError> {
        let (_, user) = self.require_user(ctx)?;
        let started = self.clock.now_ms();
        let permit = self.admit("purchase")?;
        self.metrics.purchases_attempted.fetch_add(1, Ordering::SeqCst);
        let result = self.purchase_inner(&user, req);
        let ok = result.as_ref().map(|_| true).unwrap_or_else(|e| !e.is_system());
        self.finish(permit, started, ok);
        result
    }

    fn purchase_inner(
        &self,
        user: &UserRecord,
        req: &PurchaseRequest,
    ) -> Result<PurchaseResponse, ApiError> {
        if req.passengers.is_empty() || req.passengers.len() > MAX_PASSENGERS_PER_ORDER {
            return Err(ApiError::bad_request(format!(
                "passenger count must be 1..={MAX_PASSENGERS_PER_ORDER}"
            )));
        }
        let seat_type = SeatType::parse(&req.seat_type)
            .ok_or_else(|| ApiError::bad_request(format!("unknown seat type {:?}", req.seat_type)))?;
        let segment = SegmentKey {
            departure: req.departure.clone(),
            arrival: req.arrival.clone(),
            seat_type,
        };
        let passengers: Vec<PassengerInput> = req
            .passengers
            .iter()
            .map(|p| {
                Ok(PassengerInput {
                    name: p.name.clone(),
                    id_number: p.id_number.clone(),
                    ticket_type: TicketType::parse(&p.ticket_type).ok_or_else(|| {
                        ApiError::bad_request(format!("unknown ticket type {:?}", p.ticket_type))
                    })?,
                })
            })
            .collect::<Result<_, ApiError>>()?;
        let count = passengers.len() as u32;

        // Admission: one atomic conditional decrement for all passengers.
        match self.inventory.deduct_tokens(&req.train_id, &req.date, &segment, count)? {
            TokenDecision::Granted => {}
            TokenDecision::Rejected => {
                return Err(ApiError::new("SOLD_OUT", 409, false, "tickets sold out"));
            }
        }

        let seats = match self.inventory.allocate_seats(
            &req.train_id,
            &req.date,
            &segment,
            count,
            &req.preference,
        ) {
            Ok(seats) => seats,
            Err(e) => {
                self.inventory.refund_tokens(&req.train_id, &req.date, &segment, count)?;
                return Err(e.into());
            }
        };

        match self.orders.create_order(
            user.user_id,
            &req.train_id,
            &req.date,
            &segment,
            &passengers,
            &seats,
            &req.dedup,
        ) {
            Ok(order) => Ok(PurchaseResponse {
                order_no: order.order_no,
                status: order.status.as_str().to_string(),
                deadline_ms: order.deadline_ms,
                seats,
            }),
            Err(e) => {
                // Seat release refunds the tokens as well.
                self.inventory.release_seats(&req.train_id, &req.date, &segment, &seats)?;
                Err(e.into())
            }
        }
    }

    pub fn handle_dedup_token(&self, ctx: &RequestCtx) -> Result<serde_json::Value, ApiError> {
        self.require_user(ctx)?;
        let token = self.orders.issue_dedup_token()?;
        Ok(serde_json::json!({ "token": token }))
    }

    pub fn handle_cancel(
        &self,
        ctx: &RequestCtx,
        order_no: &str,
    ) -> Result<OrderStateResponse, ApiError> {
        let (_, user) = self.require_user(ctx)?;
        let started = self.clock.now_ms();
        let permit = self.admit("order")?;
        let result = self
            .orders
            .cancel_order(order_no, user.user_id)
            .map(|status| OrderStateResponse {
                order_no: order_no.to_string(),
                status: status.as_str().to_string(),
            })
            .map_err(ApiError::from);
        let ok = result.as_ref().map(|_| true).unwrap_or_else(|e| !e.is_system());
        self.finish(permit, started, ok);
        result
    }

    /// Simulated payment: records the provider callback with a fresh
    /// callback ID and applies it.
    pub fn handle_pay(
        &self,
        ctx: &RequestCtx,
        order_no: &str,
    ) -> Result<OrderStateResponse, ApiError> {
        let (_, user) = self.require_user(ctx)?;
        let started = self.clock.now_ms();
        let permit = self.admit("order")?;
        let result = (|| {
            let order = self
                .orders
                .get_order(order_no)?
                .ok_or(OrderError::NotFound(order_no.to_string()))?;
            if order.user_id != user.user_id {
                return Err(OrderError::PermissionDenied);
            }
            let callback_id = format!("pay-{:x}", self.idgen.next_id()?);
            let status = self.orders.payment_callback(order_no, PaymentResult::Success, &callback_id)?;
            Ok(OrderStateResponse { order_no: order_no.to_string(), status: status.as_str().to_string() })
        })()
        .map_err(|e: OrderError| ApiError::from(e));
        let ok = result.as_ref().map(|_| true).unwrap_or_else(|e| !e.is_system());
        self.finish(permit, started, ok);
        result
    }

    /// Idempotent provider-callback endpoint (whitelisted; the provider
    /// has no session).
    pub fn handle_pay_callback(
        &self,
        ctx: &RequestCtx,
        req: &PayCallbackRequest,
    ) -> Result<OrderStateResponse, ApiError> {
        self.gateway.filter(&ctx.ip, &ctx.path, ctx.token.as_deref())?;
        let result = match req.result.as_str() {
            "SUCCESS" => PaymentResult::Success,
            "FAILURE" => PaymentResult::Failure,
            other => return Err(ApiError::bad_request(format!("unknown result {other:?}"))),
        };
        let status = self.orders.payment_callback(&req.order_no, result, &req.callback_id)?;
        Ok(OrderStateResponse {
            order_no: req.order_no.clone(),
            status: status.as_str().to_string(),
        })
    }

    pub fn handle_find_by_passenger(
        &self,
        ctx: &RequestCtx,
        id_number: &str,
    ) -> Result<Vec<OrderView>, ApiError> {
        self.require_user(ctx)?;
        let started = self.clock.now_ms();
        let permit = self.admit("order")?;
        let result = self.orders.find_orders_by_passenger(id_number).map_err(ApiError::from);
        let ok = result.is_ok();
        self.finish(permit, started, ok);
        result
    }

    pub fn metrics_json(&self) -> serde_json::Value {
        let mut breaker_states = serde_json::Map::new();
        for resource in self.flow.resources() {
            if let Ok(state) = self.flow.breaker_state(&resource) {
                breaker_states
                    .insert(resource, serde_json::Value::String(state.state.as_str().to_string()));
            }
        }
        serde_json::json!({
            "store_reads": self.metrics.store_reads.load(Ordering::SeqCst),
            "bloom_short_circuits": self.metrics.bloom_short_circuits.load(Ordering::SeqCst),
            "queries": self.metrics.queries.load(Ordering::SeqCst),
            "purchases_attempted": self.metrics.purchases_attempted.load(Ordering::SeqCst),
            "token_grants": self.inventory.counters.token_grants.load(Ordering::SeqCst),
            "token_rejections": self.inventory.counters.token_rejections.load(Ordering::SeqCst),
            "token_refunds": self.inventory.counters.token_refunds.load(Ordering::SeqCst),
            "oversell_alarms": self.inventory.counters.oversell_alarms.load(Ordering::SeqCst),
            "orders_created": self.orders.counters.created.load(Ordering::SeqCst),
            "orders_paid": self.orders.counters.paid.load(Ordering::SeqCst),
            "orders_cancelled": self.orders.counters.cancelled.load(Ordering::SeqCst),
            "orders_closed": self.orders.counters.closed.load(Ordering::SeqCst),
            "manual_refunds": self.orders.counters.manual_refunds.load(Ordering::SeqCst),
            "duplicate_submissions": self.orders.counters.duplicate_submissions.load(Ordering::SeqCst),
            "dead_letters": self.bus.depth(cdc::DEAD_LETTER_TOPIC),
            "breaker_states": serde_json::Value::Object(breaker_states),
        })
    }

    /// Runs the CDC pipeline to quiescence on the calling thread. Tests
    /// and shutdown use this; live traffic is served by the background
    /// pump and applier threads.
    pub fn drain_cdc(&self) -> cdc::DrainStats {
        cdc::drain_pipeline(&self.store, &self.bus, &self.applier, &self.cdc_filter, CDC_GROUP)
    }

    pub fn verify_convergence(&self) -> convergence::ConvergenceReport {
        convergence::verify_convergence(&self.store, &self.cache)
    }

    /// Starts the CDC pump, applier pool, cache sweeper, and order-close
    /// scheduler.
    pub fn start_background(self: &Arc<Self>) {
        let mut threads = self.threads.lock().expect("threads registry poisoned");

        {
            let engine = self.clone();
            threads.push(std::thread::spawn(move || {
                while !engine.shutdown.load(Ordering::SeqCst) {
                    engine.store.pump_changes(&engine.bus, &engine.cdc_filter);
                    std::thread::sleep(std::time::Duration::from_millis(
                        engine.config.cdc.poll_interval_ms.max(1),
                    ));
                }
                engine.store.pump_changes(&engine.bus, &engine.cdc_filter);
            }));
        }

        for _ in 0..self.config.cdc.applier_threads {
            let engine = self.clone();
            threads.push(std::thread::spawn(move || {
                let topics: Vec<String> =
                    engine.cdc_filter.iter().map(|t| format!("cdc.{t}")).collect();
                let drain = |engine: &Engine| {
                    for topic in &topics {
                        cdc::consume_once(
                            &engine.bus,
                            &engine.applier,
                            topic,
                            CDC_GROUP,
                            256,
                            engine.config.cdc.visibility_timeout_ms,
                        );
                    }
                };
                while !engine.shutdown.load(Ordering::SeqCst) {
                    drain(&engine);
                    std::thread::sleep(std::time::Duration::from_millis(
                        engine.config.cdc.poll_interval_ms.max(1),
                    ));
                }
                drain(&engine);
            }));
        }

        {
            let engine = self.clone();
            threads.push(std::thread::spawn(move || {
                while !engine.shutdown.load(Ordering::SeqCst) {
                    engine.cache.expire_sweep(engine.clock.now_ms());
                    std::thread::sleep(std::time::Duration::from_millis(
                        engine.config.cache.sweep_interval_ms,
                    ));
                }
            }));
        }

        {
            let engine = self.clone();
            threads.push(std::thread::spawn(move || {
                while !engine.shutdown.load(Ordering::SeqCst) {
                    let _ = engine.orders.close_expired(engine.clock.now_ms());
                    std::thread::sleep(std::time::Duration::from_millis(
                        engine.config.orders.close_scan_interval_ms,
                    ));
                }
            }));
        }
    }

    /// Stops background threads after a final CDC drain.
    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let mut threads = self.threads.lock().expect("threads registry poisoned");
        for handle in threads.drain(..) {
            let _ = handle.join();
        }
        self.drain_cdc();
    }
}

pub fn route_key(date: &str, departure: &str, arrival: &str) -> String {
    format!("{date}:{departure}:{arrival}")
}

fn split_plan_key(plan_key: &str) -> Result<(&str, &str), ApiError> {
    plan_key
        .split_once(':')
        .ok_or_else(|| ApiError::internal(format!("malformed plan key {plan_key:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::idgen::DEFAULT_EPOCH_MS;

    fn test_config() -> EngineConfig {
        EngineConfig::from_toml(
            r#"
[shards]
db_count = 2
tables_per_db = 4

[bloom]
capacity = 10000
fpr = 0.01

[[seed.users]]
username = "alice"
password = "wonderland"
id_number = "110101199001011234"
phone = "13800138000"

[[seed.trains]]
train_id = "G101"
service_date = "2026-09-01"
stations = ["Beijing", "Jinan", "Shanghai"]

[[seed.trains.carriages]]
carriage_no = 1
seat_type = "SECOND"
seat_count = 10
"#,
        )
        .unwrap()
    }

    fn engine() -> (Arc<Engine>, Arc<ManualClock>) {
        let clock = ManualClock::new(DEFAULT_EPOCH_MS + 10_000_000);
        let e = Engine::new(test_config(), clock.clone()).unwrap();
        (e, clock)
    }

    fn login(e: &Arc<Engine>) -> String {
        let ctx = RequestCtx::new("127.0.0.1", "/auth/login", None);
        e.handle_login(
            &ctx,
            &LoginRequest { username: "alice".into(), password: "wonderland".into() },
        )
        .unwrap()
        .token
    }

    fn authed(path: &str, token: &str) -> RequestCtx {
        RequestCtx::new("127.0.0.1", path, Some(token))
    }

    #[test]
    fn login_and_query_pipeline() {
        let (e, _) = engine();
        e.drain_cdc();
        let token = login(&e);
        let rows = e
            .handle_query_trains(
                &authed("/trains/query", &token),
                &QueryParams {
                    date: "2026-09-01".into(),
                    departure: "Beijing".into(),
                    arrival: "Shanghai".into(),
                },
            )
            .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].train_id, "G101");
        assert_eq!(rows[0].remaining.get("SECOND"), Some(&10));
    }

    #[test]
    fn nonexistent_route_short_circuits_without_store_reads() {
        let (e, _) = engine();
        e.drain_cdc();
        let token = login(&e);
        let before = e.metrics.store_reads.load(Ordering::SeqCst);
        for i in 0..100 {
            let rows = e
                .handle_query_trains(
                    &authed("/trains/query", &token),
                    &QueryParams {
                        date: "2026-09-01".into(),
                        departure: format!("Nowhere-{i}"),
                        arrival: "Shanghai".into(),
                    },
                )
                .unwrap();
            assert!(rows.is_empty());
        }
        assert_eq!(e.metrics.store_reads.load(Ordering::SeqCst), before);
        assert!(e.metrics.bloom_short_circuits.load(Ordering::SeqCst) >= 100);
    }

    #[test]
    fn warm_cache_query_performs_zero_store_reads() {
        let (e, _) = engine();
        e.drain_cdc();
        let token = login(&e);
        let params = QueryParams {
            date: "2026-09-01".into(),
            departure: "Beijing".into(),
            arrival: "Jinan".into(),
        };
        e.handle_query_trains(&authed("/trains/query", &token), &params).unwrap();
        let before = e.metrics.store_reads.load(Ordering::SeqCst);
        for _ in 0..50 {
            e.handle_query_trains(&authed("/trains/query", &token), &params).unwrap();
        }
        assert_eq!(e.metrics.store_reads.load(Ordering::SeqCst), before);
    }

    fn purchase_req(e: &Arc<Engine>, token: &str, passengers: u32) -> PurchaseRequest {
        let dedup = e
            .handle_dedup_token(&authed("/tickets/dedup-token", token))
            .unwrap()["token"]
            .as_str()
            .unwrap()
            .to_string();
        PurchaseRequest {
            dedup,
            train_id: "G101".into(),
            date: "2026-09-01".into(),
            departure: "Beijing".into(),
            arrival: "Shanghai".into(),
            seat_type: "SECOND".into(),
            passengers: (0..passengers)
                .map(|i| PassengerRequest {
                    name: format!("p{i}"),
                    id_number: format!("11010119900101{i:04}"),
                    ticket_type: "ADULT".into(),
                })
                .collect(),
            preference: Vec::new(),
        }
    }

    #[test]
    fn purchase_then_pay_then_metrics() {
        let (e, _) = engine();
        e.drain_cdc();
        let token = login(&e);
        let req = purchase_req(&e, &token, 2);
        let resp = e.handle_purchase(&authed("/tickets/purchase", &token), &req).unwrap();
        assert_eq!(resp.status, "PENDING_PAYMENT");
        assert_eq!(resp.seats.len(), 2);
        let paid = e
            .handle_pay(&authed(&format!("/pay/{}", resp.order_no), &token), &resp.order_no)
            .unwrap();
        assert_eq!(paid.status, "PAID");
        e.drain_cdc();
        let report = e.verify_convergence();
        assert!(report.convergent(), "{:?}", report.mismatches);
        let metrics = e.metrics_json();
        assert_eq!(metrics["token_grants"], 2);
        assert_eq!(metrics["orders_paid"], 1);
        assert_eq!(metrics["oversell_alarms"], 0);
        assert_eq!(metrics["breaker_states"]["purchase"], "CLOSED");
    }

    #[test]
    fn duplicate_dedup_token_refunds_everything() {
        let (e, _) = engine();
        e.drain_cdc();
        let token = login(&e);
        let req = purchase_req(&e, &token, 1);
        e.handle_purchase(&authed("/tickets/purchase", &token), &req).unwrap();
        let err = e.handle_purchase(&authed("/tickets/purchase", &token), &req).unwrap_err();
        assert_eq!(err.code, "DUPLICATE_SUBMISSION");
        // First purchase holds one seat; the duplicate released its own.
        let seg = SegmentKey {
            departure: "Beijing".into(),
            arrival: "Shanghai".into(),
            seat_type: SeatType::Second,
        };
        assert_eq!(e.inventory.token_count("G101", "2026-09-01", &seg), Some(9));
        e.drain_cdc();
        assert!(e.verify_convergence().convergent());
    }

    #[test]
    fn sold_out_when_tokens_exhausted() {
        let (e, _) = engine();
        e.drain_cdc();
        let token = login(&e);
        for _ in 0..2 {
            let req = purchase_req(&e, &token, 5);
            e.handle_purchase(&authed("/tickets/purchase", &token), &req).unwrap();
        }
        let req = purchase_req(&e, &token, 1);
        let err = e.handle_purchase(&authed("/tickets/purchase", &token), &req).unwrap_err();
        assert_eq!(err.code, "SOLD_OUT");
        assert_eq!(e.metrics_json()["oversell_alarms"], 0);
    }

    #[test]
    fn cancel_restores_inventory_through_pipeline() {
        let (e, _) = engine();
        e.drain_cdc();
        let token = login(&e);
        let req = purchase_req(&e, &token, 3);
        let resp = e.handle_purchase(&authed("/tickets/purchase", &token), &req).unwrap();
        let cancelled = e
            .handle_cancel(
                &authed(&format!("/orders/{}/cancel", resp.order_no), &token),
                &resp.order_no,
            )
            .unwrap();
        assert_eq!(cancelled.status, "CANCELLED");
        e.drain_cdc();
        assert!(e.verify_convergence().convergent());
        let seg = SegmentKey {
            departure: "Beijing".into(),
            arrival: "Shanghai".into(),
            seat_type: SeatType::Second,
        };
        assert_eq!(e.inventory.token_count("G101", "2026-09-01", &seg), Some(10));
    }

    #[test]
    fn registration_closes_username_penetration_hole() {
        let (e, _) = engine();
        let ctx = RequestCtx::new("127.0.0.1", "/auth/register", None);
        let before = e.metrics.store_reads.load(Ordering::SeqCst);
        // Fresh name: bloom says definitely-new, no store read needed.
        e.handle_register(
            &ctx,
            &RegisterRequest {
                username: "bob".into(),
                password: "pw".into(),
                id_number: "110101199501011234".into(),
                phone: "13900139000".into(),
            },
        )
        .unwrap();
        assert_eq!(e.metrics.store_reads.load(Ordering::SeqCst), before);
        // Taken name: bloom hit, store confirms, rejected.
        let err = e
            .handle_register(
                &ctx,
                &RegisterRequest {
                    username: "bob".into(),
                    password: "pw".into(),
                    id_number: "110101199501011234".into(),
                    phone: "13900139000".into(),
                },
            )
            .unwrap_err();
        assert_eq!(err.code, "USERNAME_TAKEN");
        // New user can log in.
        let login_ctx = RequestCtx::new("127.0.0.1", "/auth/login", None);
        assert!(e
            .handle_login(&login_ctx, &LoginRequest { username: "bob".into(), password: "pw".into() })
            .is_ok());
        // Unknown usernames short-circuit at the bloom filter.
        let before_reads = e.metrics.store_reads.load(Ordering::SeqCst);
        let err = e
            .handle_login(
                &login_ctx,
                &LoginRequest { username: "definitely-not-there".into(), password: "x".into() },
            )
            .unwrap_err();
        assert_eq!(err.code, "AUTH_FAILED");
        assert_eq!(e.metrics.store_reads.load(Ordering::SeqCst), before_reads);
    }

    #[test]
    fn gateway_rejections_surface_as_api_errors() {
        let (e, _) = engine();
        let err = e
            .handle_query_trains(
                &RequestCtx::new("127.0.0.1", "/trains/query", None),
                &QueryParams { date: "d".into(), departure: "a".into(), arrival: "b".into() },
            )
            .unwrap_err();
        assert_eq!(err.code, "AUTH_REQUIRED");
        assert_eq!(err.status, 401);
    }

    #[test]
    fn pay_callback_is_idempotent_via_http_shape() {
        let (e, _) = engine();
        e.drain_cdc();
        let token = login(&e);
        let req = purchase_req(&e, &token, 1);
        let resp = e.handle_purchase(&authed("/tickets/purchase", &token), &req).unwrap();
        let cb_ctx = RequestCtx::new("127.0.0.1", "/pay/callback", None);
        for _ in 0..3 {
            let state = e
                .handle_pay_callback(
                    &cb_ctx,
                    &PayCallbackRequest {
                        order_no: resp.order_no.clone(),
                        result: "SUCCESS".into(),
                        callback_id: "cb-once".into(),
                    },
                )
                .unwrap();
            assert_eq!(state.status, "PAID");
        }
        assert_eq!(e.metrics_json()["orders_paid"], 1);
    }
}
