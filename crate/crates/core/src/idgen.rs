//! Snowflake-style generator for globally unique, per-worker monotonically
//! increasing 64-bit IDs with a customizable bit layout.
//!
//! An ID packs, from high to low: a zero sign bit, milliseconds since a
//! custom epoch, a datacenter ID, a worker ID, and a per-millisecond
//! sequence. The default layout is 41/5/5/12.

use std::sync::{Arc, Mutex};
use thiserror::Error;

use crate::clock::Clock;

/// Default custom epoch: 2024-01-01T00:00:00Z.
pub const DEFAULT_EPOCH_MS: u64 = 1_704_067_200_000;

/// Largest backwards clock jump (ms) the generator rides out by spinning.
pub const CLOCK_REGRESSION_TOLERANCE_MS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnowflakeLayout {
    pub epoch_ms: u64,
    pub timestamp_bits: u32,
    pub datacenter_bits: u32,
    pub worker_bits: u32,
    pub sequence_bits: u32,
}

impl Default for SnowflakeLayout {
    fn default() -> Self {
        Self {
            epoch_ms: DEFAULT_EPOCH_MS,
            timestamp_bits: 41,
            datacenter_bits: 5,
            worker_bits: 5,
            sequence_bits: 12,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("bit widths must sum to 63 plus the sign bit, got {sum}")]
    WidthSum { sum: u32 },
    #[error("{field} width must be at least 1 bit")]
    ZeroWidth { field: &'static str },
    #[error("epoch {epoch_ms} is in the future (now {now_ms})")]
    EpochInFuture { epoch_ms: u64, now_ms: u64 },
}

impl SnowflakeLayout {
    /// Checks the structural invariants: widths sum to 63 (sign bit makes
    /// 64), timestamp/datacenter/worker are non-empty, and the epoch is
    /// not in the future.
    pub fn validate(&self, now_ms: u64) -> Result<(), LayoutError> {
        let sum = self.timestamp_bits + self.datacenter_bits + self.worker_bits + self.sequence_bits;
        if sum != 63 {
            return Err(LayoutError::WidthSum { sum });
        }
        if self.timestamp_bits == 0 {
            return Err(LayoutError::ZeroWidth { field: "timestamp" });
        }
        if self.datacenter_bits == 0 {
            return Err(LayoutError::ZeroWidth { field: "datacenter" });
        }
        if self.worker_bits == 0 {
            return Err(LayoutError::ZeroWidth { field: "worker" });
        }
        if self.epoch_ms > now_ms {
            return Err(LayoutError::EpochInFuture { epoch_ms: self.epoch_ms, now_ms });
        }
        Ok(())
    }

    pub fn timestamp_shift(&self) -> u32 {
        self.datacenter_bits + self.worker_bits + self.sequence_bits
    }

    pub fn datacenter_shift(&self) -> u32 {
        self.worker_bits + self.sequence_bits
    }

    pub fn worker_shift(&self) -> u32 {
        self.sequence_bits
    }

    pub fn max_datacenter_id(&self) -> u64 {
        (1 << self.datacenter_bits) - 1
    }

    pub fn max_worker_id(&self) -> u64 {
        (1 << self.worker_bits) - 1
    }

    pub fn max_sequence(&self) -> u64 {
        if self.sequence_bits == 0 {
            0
        } else {
            (1 << self.sequence_bits) - 1
        }
    }
}

/// Decomposition of an ID under a given layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdParts {
    pub timestamp_offset_ms: u64,
    pub datacenter_id: u64,
    pub worker_id: u64,
    pub sequence: u64,
}

pub fn decompose(id: i64, layout: &SnowflakeLayout) -> IdParts {
    let id = id as u64;
    let mask = |bits: u32| -> u64 {
        if bits == 0 {
            0
        } else {
            (1u64 << bits) - 1
        }
    };
    IdParts {
        timestamp_offset_ms: (id >> layout.timestamp_shift()) & mask(layout.timestamp_bits),
        datacenter_id: (id >> layout.datacenter_shift()) & mask(layout.datacenter_bits),
        worker_id: (id >> layout.worker_shift()) & mask(layout.worker_bits),
        sequence: id & mask(layout.sequence_bits),
    }
}

pub fn recompose(parts: &IdParts, layout: &SnowflakeLayout) -> i64 {
    ((parts.timestamp_offset_ms << layout.timestamp_shift())
        | (parts.datacenter_id << layout.datacenter_shift())
        | (parts.worker_id << layout.worker_shift())
        | parts.sequence) as i64
}

#[derive(Debug, Error)]
pub enum IdGenError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("{field} id {value} exceeds maximum {max} for the configured width")]
    IdentityOutOfRange { field: &'static str, value: u64, max: u64 },
    #[error("clock moved backwards by {delta_ms} ms, beyond the {tolerance_ms} ms tolerance")]
    ClockRegression { delta_ms: u64, tolerance_ms: u64 },
}

struct GenState {
    last_timestamp: u64,
    sequence: u64,
}

/// Thread-safe snowflake generator with a fixed (datacenter, worker)
/// identity. `next_id` is strictly increasing per generator instance.
pub struct SnowflakeGenerator {
    layout: SnowflakeLayout,
    datacenter_id: u64,
    worker_id: u64,
    clock: Arc<dyn Clock>,
    state: Mutex<GenState>,
}

impl SnowflakeGenerator {
    pub fn new(
        layout: SnowflakeLayout,
        datacenter_id: u64,
        worker_id: u64,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, IdGenError> {
        layout.validate(clock.now_ms())?;
        if datacenter_id > layout.max_datacenter_id() {
            return Err(IdGenError::IdentityOutOfRange {
                field: "datacenter",
                value: datacenter_id,
                max: layout.max_datacenter_id(),
            });
        }
        if worker_id > layout.max_worker_id() {
            return Err(IdGenError::IdentityOutOfRange {
                field: "worker",
                value: worker_id,
                max: layout.max_worker_id(),
            });
        }
        Ok(Self {
            layout,
            datacenter_id,
            worker_id,
            clock,
            state: Mutex::new(GenState { last_timestamp: 0, sequence: 0 }),
        })
    }

    pub fn layout(&self) -> &SnowflakeLayout {
        &self.layout
    }

    pub fn next_id(&self) -> Result<i64, IdGenError> {
        let mut state = self.state.lock().expect("idgen mutex poisoned");
        let mut now = self.clock.now_ms();

        if now < state.last_timestamp {
            let delta = state.last_timestamp - now;
            if delta > CLOCK_REGRESSION_TOLERANCE_MS {
                return Err(IdGenError::ClockRegression {
                    delta_ms: delta,
                    tolerance_ms: CLOCK_REGRESSION_TOLERANCE_MS,
                });
            }
            // Small regression: spin until the clock catches up.
            while now < state.last_timestamp {
                std::hint::spin_loop();
                now = self.clock.now_ms();
            }
        }

        if now == state.last_timestamp {
            state.sequence = (state.sequence + 1) & self.layout.max_sequence();
            if state.sequence == 0 {
                // Sequence exhausted within this millisecond; wait for the next one.
                while now <= state.last_timestamp {
                    std::hint::spin_loop();
                    now = self.clock.now_ms();
                }
            }
        } else {
            state.sequence = 0;
        }

        state.last_timestamp = now;

        let parts = IdParts {
            timestamp_offset_ms: now - self.layout.epoch_ms,
            datacenter_id: self.datacenter_id,
            worker_id: self.worker_id,
            sequence: state.sequence,
        };
        Ok(recompose(&parts, &self.layout))
    }
}
