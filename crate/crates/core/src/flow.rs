//! Per-resource admission control: sliding-window QPS limiting at 100 ms
//! bucket granularity, an in-flight concurrency cap, a response-time/error
//! circuit breaker with open/half-open recovery, and the gateway
//! allow/deny-list filter.
//!
//! Every operation takes `now` explicitly so tests can drive the full
//! breaker state machine on a virtual clock.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};
use thiserror::Error;

use crate::kvcache::CacheStore;

pub const BUCKET_MS: u64 = 100;
pub const BUCKET_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRule {
    /// Admissions allowed per 1 s sliding window.
    pub qps_limit: u32,
    pub max_concurrency: u32,
    /// Outcomes slower than this count toward the slow fraction.
    pub rt_threshold_ms: u64,
    /// Error-or-slow fraction that trips the breaker.
    pub breaker_error_ratio: f64,
    /// Minimum windowed samples before the breaker may trip.
    pub breaker_min_samples: u32,
    pub open_duration_ms: u64,
    pub half_open_probes: u32,
}

impl Default for FlowRule {
    fn default() -> Self {
        Self {
            qps_limit: 1000,
            max_concurrency: 256,
            rt_threshold_ms: 500,
            breaker_error_ratio: 0.5,
            breaker_min_samples: 10,
            open_duration_ms: 5000,
            half_open_probes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Qps,
    Concurrency,
    Breaker,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("no flow rule registered for resource {0:?}")]
    UnknownResource(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakerStateKind {
    Closed,
    Open,
    HalfOpen,
}

impl BreakerStateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Closed => "CLOSED",
            Self::Open => "OPEN",
            Self::HalfOpen => "HALF_OPEN",
        }
    }
}

/// Snapshot of a resource's breaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BreakerState {
    pub state: BreakerStateKind,
    pub opened_at: Option<u64>,
    /// Remaining probe admissions while half-open.
    pub probe_budget: u32,
}

#[derive(Debug, Clone, Copy, Default)]
struct Bucket {
    stamp: u64,
    admitted: u32,
    done: u32,
    errors: u32,
    slow: u32,
}

#[derive(Debug, Clone, Copy)]
enum Breaker {
    Closed,
    Open { opened_at: u64 },
    HalfOpen { issued: u32, succeeded: u32 },
}

struct ResourceState {
    rule: FlowRule,
    in_flight: u32,
    buckets: [Bucket; BUCKET_COUNT],
    breaker: Breaker,
}

impl ResourceState {
    fn bucket_mut(&mut self, idx: u64) -> &mut Bucket {
        let slot = (idx as usize) % BUCKET_COUNT;
        if self.buckets[slot].stamp != idx {
            self.buckets[slot] = Bucket { stamp: idx, ..Bucket::default() };
        }
        &mut self.buckets[slot]
    }

    /// Sums over buckets stamped within the trailing window ending at `idx`.
    fn window(&self, idx: u64) -> (u32, u32, u32, u32) {
        let oldest = idx.saturating_sub(BUCKET_COUNT as u64 - 1);
        self.buckets
            .iter()
            .filter(|b| b.stamp >= oldest && b.stamp <= idx)
            .fold((0, 0, 0, 0), |(a, d, e, s), b| {
                (a + b.admitted, d + b.done, e + b.errors, s + b.slow)
            })
    }
}

/// An admission. Consumed by `record_outcome`; if dropped unrecorded the
/// in-flight slot is released anyway.
pub struct Permit {
    resource: String,
    probe: bool,
    shared: Arc<Mutex<HashMap<String, ResourceState>>>,
    armed: bool,
}

impl Permit {
    pub fn is_probe(&self) -> bool {
        self.probe
    }
}

impl std::fmt::Debug for Permit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Permit")
            .field("resource", &self.resource)
            .field("probe", &self.probe)
            .finish()
    }
}

impl Drop for Permit {
    fn drop(&mut self) {
        if self.armed {
            if let Some(state) =
                self.shared.lock().expect("flow mutex poisoned").get_mut(&self.resource)
            {
                state.in_flight = state.in_flight.saturating_sub(1);
            }
        }
    }
}

pub struct FlowController {
    shared: Arc<Mutex<HashMap<String, ResourceState>>>,
}

impl FlowController {
    pub fn new() -> Self {
        Self { shared: Arc::new(Mutex::new(HashMap::new())) }
    }

    pub fn register(&self, resource: &str, rule: FlowRule) {
        self.shared.lock().expect("flow mutex poisoned").insert(
            resource.to_string(),
            ResourceState {
                rule,
                in_flight: 0,
                buckets: [Bucket::default(); BUCKET_COUNT],
                breaker: Breaker::Closed,
            },
        );
    }

    /// Admission check. A rejection carries the first matching reason:
    /// breaker, then window QPS, then concurrency.
    pub fn admit(&self, resource: &str, now: u64) -> Result<Result<Permit, RejectReason>, FlowError> {
        let mut map = self.shared.lock().expect("flow mutex poisoned");
        let state =
            map.get_mut(resource).ok_or_else(|| FlowError::UnknownResource(resource.into()))?;
        let idx = now / BUCKET_MS;

        let mut probe = false;
        match state.breaker {
            Breaker::Open { opened_at } => {
                if now.saturating_sub(opened_at) >= state.rule.open_duration_ms {
                    state.breaker = Breaker::HalfOpen { issued: 1, succeeded: 0 };
                    probe = true;
                } else {
                    return Ok(Err(RejectReason::Breaker));
                }
            }
            Breaker::HalfOpen { issued, succeeded } => {
                if issued < state.rule.half_open_probes {
                    state.breaker = Breaker::HalfOpen { issued: issued + 1, succeeded };
                    probe = true;
                } else {
                    return Ok(Err(RejectReason::Breaker));
                }
            }
            Breaker::Closed => {
                let (admitted, _, _, _) = state.window(idx);
                if admitted + 1 > state.rule.qps_limit {
                    return Ok(Err(RejectReason::Qps));
                }
                if state.in_flight >= state.rule.max_concurrency {
                    return Ok(Err(RejectReason::Concurrency));
                }
            }
        }

        state.bucket_mut(idx).admitted += 1;
        state.in_flight += 1;
        Ok(Ok(Permit {
            resource: resource.to_string(),
            probe,
            shared: self.shared.clone(),
            armed: true,
        }))
    }

    /// Completes a permit with its measured outcome and drives breaker
    /// transitions. Taking the permit by value makes double-recording
    /// unrepresentable.
    pub fn record_outcome(&self, mut permit: Permit, rt_ms: u64, ok: bool, now: u64) {
        let mut map = self.shared.lock().expect("flow mutex poisoned");
        let Some(state) = map.get_mut(&permit.resource) else {
            permit.armed = false;
            return;
        };
        permit.armed = false;
        state.in_flight = state.in_flight.saturating_sub(1);

        let slow = rt_ms > state.rule.rt_threshold_ms;
        let idx = now / BUCKET_MS;
        let bucket = state.bucket_mut(idx);
        bucket.done += 1;
        if !ok {
            bucket.errors += 1;
        }
        if slow {
            bucket.slow += 1;
        }

        match state.breaker {
            Breaker::Closed => {
                let (_, done, errors, slows) = state.window(idx);
                if done >= state.rule.breaker_min_samples {
                    let done = done as f64;
                    let worst = (errors as f64 / done).max(slows as f64 / done);
                    if worst >= state.rule.breaker_error_ratio {
                        state.breaker = Breaker::Open { opened_at: now };
                    }
                }
            }
            Breaker::HalfOpen { issued, succeeded } if permit.probe => {
                if ok && !slow {
                    let succeeded = succeeded + 1;
                    if succeeded >= state.rule.half_open_probes {
                        // Recovered: discard the window that tripped us.
                        state.breaker = Breaker::Closed;
                        state.buckets = [Bucket::default(); BUCKET_COUNT];
                    } else {
                        state.breaker = Breaker::HalfOpen { issued, succeeded };
                    }
                } else {
                    state.breaker = Breaker::Open { opened_at: now };
                }
            }
            _ => {}
        }
    }

    pub fn breaker_state(&self, resource: &str) -> Result<BreakerState, FlowError> {
        let map = self.shared.lock().expect("flow mutex poisoned");
        let state =
            map.get(resource).ok_or_else(|| FlowError::UnknownResource(resource.into()))?;
        Ok(match state.breaker {
            Breaker::Closed => BreakerState {
                state: BreakerStateKind::Closed,
                opened_at: None,
                probe_budget: 0,
            },
            Breaker::Open { opened_at } => BreakerState {
                state: BreakerStateKind::Open,
                opened_at: Some(opened_at),
                probe_budget: 0,
            },
            Breaker::HalfOpen { issued, .. } => BreakerState {
                state: BreakerStateKind::HalfOpen,
                opened_at: None,
                probe_budget: state.rule.half_open_probes.saturating_sub(issued),
            },
        })
    }

    pub fn in_flight(&self, resource: &str) -> Result<u32, FlowError> {
        let map = self.shared.lock().expect("flow mutex poisoned");
        map.get(resource)
            .map(|s| s.in_flight)
            .ok_or_else(|| FlowError::UnknownResource(resource.into()))
    }

    pub fn resources(&self) -> Vec<String> {
        let map = self.shared.lock().expect("flow mutex poisoned");
        let mut names: Vec<String> = map.keys().cloned().collect();
        names.sort();
        names
    }
}

impl Default for FlowController {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    Blacklist,
    Auth,
}

#[derive(Debug, Clone, Default)]
pub struct AccessPolicy {
    pub whitelist: HashSet<String>,
    pub blacklist: HashSet<String>,
}

/// Gateway entry filter: blacklist beats whitelist beats the session-token
/// check. Sessions are opaque tokens stored in the cache with a TTL, so
/// expiry falls out of cache semantics.
pub struct Gateway {
    policy: AccessPolicy,
    cache: Arc<CacheStore>,
    session_ttl_ms: u64,
}

impl Gateway {
    pub fn new(policy: AccessPolicy, cache: Arc<CacheStore>, session_ttl_ms: u64) -> Self {
        Self { policy, cache, session_ttl_ms }
    }

    pub fn store_session(&self, token: &str, username: &str) {
        self.cache.kv_set(&format!("session:{token}"), username, Some(self.session_ttl_ms));
    }

    pub fn session_user(&self, token: &str) -> Option<String> {
        self.cache.kv_get(&format!("session:{token}"))
    }

    /// `principal` is the request's pre-auth identity (here: its path).
    /// Returns the authenticated username when a valid token was required.
    pub fn filter(
        &self,
        ip: &str,
        principal: &str,
        auth_token: Option<&str>,
    ) -> Result<Option<String>, DenyReason> {
        if self.policy.blacklist.contains(ip) || self.policy.blacklist.contains(principal) {
            return Err(DenyReason::Blacklist);
        }
        if self.policy.whitelist.contains(ip) || self.policy.whitelist.contains(principal) {
            return Ok(None);
        }
        let token = auth_token.ok_or(DenyReason::Auth)?;
        let user = self.session_user(token).ok_or(DenyReason::Auth)?;
        if self.policy.blacklist.contains(&user) {
            return Err(DenyReason::Blacklist);
        }
        Ok(Some(user))
    }
}
