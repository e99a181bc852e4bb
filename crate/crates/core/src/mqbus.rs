//! Minimal in-process topic bus: per-topic FIFO offsets, consumer groups
//! with independent fan-out, and at-least-once delivery via visibility
//! timeouts. Unacked messages become redeliverable once their visibility
//! window lapses, which is what the CDC convergence tests exploit for
//! fault injection.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use crate::clock::Clock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusMessage {
    pub topic: String,
    pub offset: u64,
    pub payload: String,
    pub enqueue_time: u64,
}

struct StoredMessage {
    payload: Arc<str>,
    enqueue_time: u64,
}

#[derive(Default)]
struct GroupState {
    acked: HashSet<u64>,
    /// offset -> instant the message becomes visible again.
    invisible_until: HashMap<u64, u64>,
    /// Everything below this offset is acked.
    low_water: u64,
}

impl GroupState {
    fn compact(&mut self) {
        while self.acked.remove(&self.low_water) {
            self.low_water += 1;
        }
    }
}

#[derive(Default)]
struct TopicState {
    log: Vec<StoredMessage>,
    groups: HashMap<String, GroupState>,
}

pub struct MessageBus {
    clock: Arc<dyn Clock>,
    inner: Mutex<HashMap<String, TopicState>>,
}

impl MessageBus {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self { clock, inner: Mutex::new(HashMap::new()) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, TopicState>> {
        self.inner.lock().expect("bus mutex poisoned")
    }

    /// Appends a message; topics auto-create. Returns the dense offset.
    pub fn publish(&self, topic: &str, payload: &str) -> u64 {
        assert!(!topic.is_empty(), "topic name must be non-empty");
        let now = self.clock.now_ms();
        let mut topics = self.lock();
        let state = topics.entry(topic.to_string()).or_default();
        let offset = state.log.len() as u64;
        state.log.push(StoredMessage { payload: Arc::from(payload), enqueue_time: now });
        offset
    }

    /// Returns up to `max` unacked, currently visible messages in offset
    /// order, making each invisible to this group for `visibility_ms`.
    pub fn poll(&self, topic: &str, group: &str, max: usize, visibility_ms: u64) -> Vec<BusMessage> {
        let now = self.clock.now_ms();
        let mut topics = self.lock();
        let Some(state) = topics.get_mut(topic) else {
            return Vec::new();
        };
        let log_len = state.log.len() as u64;
        let group_state = state.groups.entry(group.to_string()).or_default();
        group_state.compact();

        let mut out = Vec::new();
        for offset in group_state.low_water..log_len {
            if out.len() >= max {
                break;
            }
            if group_state.acked.contains(&offset) {
                continue;
            }
            if group_state.invisible_until.get(&offset).is_some_and(|&until| until > now) {
                continue;
            }
            group_state.invisible_until.insert(offset, now + visibility_ms);
            let stored = &state.log[offset as usize];
            out.push(BusMessage {
                topic: topic.to_string(),
                offset,
                payload: stored.payload.to_string(),
                enqueue_time: stored.enqueue_time,
            });
        }
        out
    }

    /// Permanently removes a delivered message from a group's view.
    /// Unknown offsets and repeated acks are no-ops.
    pub fn ack(&self, topic: &str, group: &str, offset: u64) {
        let mut topics = self.lock();
        let Some(state) = topics.get_mut(topic) else {
            return;
        };
        if offset >= state.log.len() as u64 {
            return;
        }
        let group_state = state.groups.entry(group.to_string()).or_default();
        if offset >= group_state.low_water {
            group_state.invisible_until.remove(&offset);
            group_state.acked.insert(offset);
            group_state.compact();
        }
    }

    /// Total messages ever published to the topic.
    pub fn depth(&self, topic: &str) -> u64 {
        self.lock().get(topic).map_or(0, |s| s.log.len() as u64)
    }

    /// Messages not yet acked by the group (delivered-but-unacked included).
    pub fn pending(&self, topic: &str, group: &str) -> u64 {
        let mut topics = self.lock();
        let Some(state) = topics.get_mut(topic) else {
            return 0;
        };
        let log_len = state.log.len() as u64;
        match state.groups.get_mut(group) {
            None => log_len,
            Some(g) => {
                g.compact();
                (g.low_water..log_len).filter(|o| !g.acked.contains(o)).count() as u64
            }
        }
    }
}
