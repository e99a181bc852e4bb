//! In-process key-value cache with string and hash-map values, millisecond
//! TTL expiry, and atomic conditional hash-field arithmetic.
//!
//! Every command executes under a single serialization point per store
//! (one coarse mutex), which is the in-process equivalent of a
//! single-threaded cache server: callers on any thread observe a single
//! total order of operations. The conditional decrement used by the token
//! container is a first-class primitive here rather than a scripted
//! read-check-write.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

use crate::clock::Clock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldValue {
    Int(i64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Value {
    Str(String),
    Hash(HashMap<String, FieldValue>),
}

#[derive(Debug)]
struct Entry {
    value: Value,
    expires_at: Option<u64>,
}

impl Entry {
    fn expired(&self, now: u64) -> bool {
        self.expires_at.is_some_and(|deadline| deadline <= now)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("value at {key}{} is not an integer", field.as_deref().map(|f| format!("[{f}]")).unwrap_or_default())]
    WrongType { key: String, field: Option<String> },
}

/// Result of a conditional hash-field increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncrOutcome {
    /// Delta applied; carries the new field value.
    Applied(i64),
    /// Applying the delta would drop the field below the floor; nothing changed.
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CasOutcome {
    Swapped,
    Mismatch(String),
    Missing,
}

pub struct CacheStore {
    clock: Arc<dyn Clock>,
    inner: Mutex<HashMap<String, Entry>>,
}

impl CacheStore {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self { clock, inner: Mutex::new(HashMap::new()) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Entry>> {
        self.inner.lock().expect("cache mutex poisoned")
    }

    /// Reads through expiry: drops the entry and returns None when its
    /// deadline has passed.
    fn live_entry<'a>(
        map: &'a mut HashMap<String, Entry>,
        key: &str,
        now: u64,
    ) -> Option<&'a mut Entry> {
        if map.get(key).is_some_and(|e| e.expired(now)) {
            map.remove(key);
            return None;
        }
        map.get_mut(key)
    }

    pub fn kv_set(&self, key: &str, value: &str, ttl_ms: Option<u64>) {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        map.insert(
            key.to_string(),
            Entry { value: Value::Str(value.to_string()), expires_at: ttl_ms.map(|t| now + t) },
        );
    }

    pub fn kv_get(&self, key: &str) -> Option<String> {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        match Self::live_entry(&mut map, key, now)? {
            Entry { value: Value::Str(s), .. } => Some(s.clone()),
            _ => None,
        }
    }

    pub fn kv_del(&self, key: &str) -> bool {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        if Self::live_entry(&mut map, key, now).is_some() {
            map.remove(key);
            true
        } else {
            false
        }
    }

    pub fn exists(&self, key: &str) -> bool {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        Self::live_entry(&mut map, key, now).is_some()
    }

    /// Atomic compare-and-swap on a string value, keeping the entry's TTL.
    pub fn kv_compare_swap(&self, key: &str, expected: &str, new: &str) -> CasOutcome {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        match Self::live_entry(&mut map, key, now) {
            None => CasOutcome::Missing,
            Some(entry) => match &mut entry.value {
                Value::Str(s) if s == expected => {
                    *s = new.to_string();
                    CasOutcome::Swapped
                }
                Value::Str(s) => CasOutcome::Mismatch(s.clone()),
                Value::Hash(_) => CasOutcome::Mismatch(String::new()),
            },
        }
    }

    pub fn hash_set(&self, key: &str, field: &str, value: FieldValue) {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        if map.get(key).is_some_and(|e| e.expired(now)) {
            map.remove(key);
        }
        let entry = map
            .entry(key.to_string())
            .or_insert_with(|| Entry { value: Value::Hash(HashMap::new()), expires_at: None });
        match &mut entry.value {
            Value::Hash(h) => {
                h.insert(field.to_string(), value);
            }
            Value::Str(_) => {
                entry.value = Value::Hash(HashMap::from([(field.to_string(), value)]));
                entry.expires_at = None;
            }
        }
    }

    pub fn hash_get(&self, key: &str, field: &str) -> Option<FieldValue> {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        match Self::live_entry(&mut map, key, now)? {
            Entry { value: Value::Hash(h), .. } => h.get(field).cloned(),
            _ => None,
        }
    }

    pub fn hash_get_all(&self, key: &str) -> Option<HashMap<String, FieldValue>> {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        match Self::live_entry(&mut map, key, now)? {
            Entry { value: Value::Hash(h), .. } => Some(h.clone()),
            _ => None,
        }
    }

    pub fn hash_del_field(&self, key: &str, field: &str) -> bool {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        match Self::live_entry(&mut map, key, now) {
            Some(Entry { value: Value::Hash(h), .. }) => h.remove(field).is_some(),
            _ => false,
        }
    }

    /// Atomically applies `delta` to an integer hash field unless the
    /// result would fall below `floor`. A missing key or field counts as 0.
    pub fn hash_incr_if_at_least(
        &self,
        key: &str,
        field: &str,
        floor: i64,
        delta: i64,
    ) -> Result<IncrOutcome, CacheError> {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        if map.get(key).is_some_and(|e| e.expired(now)) {
            map.remove(key);
        }
        let current = match map.get(key) {
            None => 0,
            Some(Entry { value: Value::Hash(h), .. }) => match h.get(field) {
                None => 0,
                Some(FieldValue::Int(v)) => *v,
                Some(FieldValue::Text(_)) => {
                    return Err(CacheError::WrongType {
                        key: key.to_string(),
                        field: Some(field.to_string()),
                    })
                }
            },
            Some(Entry { value: Value::Str(_), .. }) => {
                return Err(CacheError::WrongType { key: key.to_string(), field: None })
            }
        };
        let new = current + delta;
        if new < floor {
            return Ok(IncrOutcome::Insufficient);
        }
        let entry = map
            .entry(key.to_string())
            .or_insert_with(|| Entry { value: Value::Hash(HashMap::new()), expires_at: None });
        if let Value::Hash(h) = &mut entry.value {
            h.insert(field.to_string(), FieldValue::Int(new));
        }
        Ok(IncrOutcome::Applied(new))
    }

    /// Removes every entry whose deadline is at or before `now`; returns
    /// the eviction count.
    pub fn expire_sweep(&self, now: u64) -> usize {
        let mut map = self.lock();
        let before = map.len();
        map.retain(|_, e| !e.expired(now));
        before - map.len()
    }

    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        let now = self.clock.now_ms();
        let map = self.lock();
        let mut keys: Vec<String> = map
            .iter()
            .filter(|(k, e)| k.starts_with(prefix) && !e.expired(now))
            .map(|(k, _)| k.clone())
            .collect();
        keys.sort();
        keys
    }

    fn version_at_least(map: &mut HashMap<String, Entry>, ver_key: &str, version: i64) -> bool {
        match map.get(ver_key) {
            Some(Entry { value: Value::Str(s), .. }) => {
                s.parse::<i64>().map(|cur| cur >= version).unwrap_or(false)
            }
            _ => false,
        }
    }

    fn store_version(map: &mut HashMap<String, Entry>, ver_key: &str, version: i64) {
        map.insert(
            ver_key.to_string(),
            Entry { value: Value::Str(version.to_string()), expires_at: None },
        );
    }

    /// Version-guarded hash write: applies only when `version` is newer
    /// than the guard at `ver_key`. Guard check, guard update, and the
    /// write happen under one lock, so stale writers can never clobber a
    /// newer value. Returns false when skipped as stale.
    pub fn versioned_hash_set(
        &self,
        ver_key: &str,
        version: i64,
        key: &str,
        field: &str,
        value: FieldValue,
    ) -> bool {
        let now = self.clock.now_ms();
        let mut map = self.lock();
        if Self::version_at_least(&mut map, ver_key, version) {
            return false;
        }
        Self::store_version(&mut map, ver_key, version);
        if map.get(key).is_some_and(|e| e.expired(now)) {
            map.remove(key);
        }
        let entry = map
            .entry(key.to_string())
            .or_insert_with(|| Entry { value: Value::Hash(HashMap::new()), expires_at: None });
        if let Value::Hash(h) = &mut entry.value {
            h.insert(field.to_string(), value);
        }
        true
    }

    /// Version-guarded string write; see [`Self::versioned_hash_set`].
    pub fn versioned_kv_set(&self, ver_key: &str, version: i64, key: &str, value: &str) -> bool {
        let mut map = self.lock();
        if Self::version_at_least(&mut map, ver_key, version) {
            return false;
        }
        Self::store_version(&mut map, ver_key, version);
        map.insert(
            key.to_string(),
            Entry { value: Value::Str(value.to_string()), expires_at: None },
        );
        true
    }

    /// Version-guarded delete of a whole key.
    pub fn versioned_kv_del(&self, ver_key: &str, version: i64, key: &str) -> bool {
        let mut map = self.lock();
        if Self::version_at_least(&mut map, ver_key, version) {
            return false;
        }
        Self::store_version(&mut map, ver_key, version);
        map.remove(key);
        true
    }

    /// Version-guarded delete of a single hash field.
    pub fn versioned_hash_del(&self, ver_key: &str, version: i64, key: &str, field: &str) -> bool {
        let mut map = self.lock();
        if Self::version_at_least(&mut map, ver_key, version) {
            return false;
        }
        Self::store_version(&mut map, ver_key, version);
        if let Some(Entry { value: Value::Hash(h), .. }) = map.get_mut(key) {
            h.remove(field);
        }
        true
    }
}
