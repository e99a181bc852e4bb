//! Deterministic routing of rows to logical database/table shards.
//!
//! The user table routes on a stable 64-bit FNV-1a hash of the username;
//! order-family tables route on the numeric value of the key's trailing
//! six decimal digits. Because an order number ends with the last six
//! digits of its owner's user ID, a user's orders land in the shard
//! derivable from the user ID alone — no scatter-gather on lookup.

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct ShardTopology {
    pub db_count: u32,
    pub tables_per_db: u32,
}

impl ShardTopology {
    pub fn validate(&self) -> Result<(), ShardError> {
        if self.db_count == 0 || !self.db_count.is_power_of_two() {
            return Err(ShardError::BadTopology { field: "db_count", value: self.db_count });
        }
        if self.tables_per_db == 0 || !self.tables_per_db.is_power_of_two() {
            return Err(ShardError::BadTopology {
                field: "tables_per_db",
                value: self.tables_per_db,
            });
        }
        Ok(())
    }
}

impl Default for ShardTopology {
    fn default() -> Self {
        Self { db_count: 2, tables_per_db: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardRoute {
    pub db_index: u32,
    pub table_index: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShardError {
    #[error("{field} must be a power of two >= 1, got {value}")]
    BadTopology { field: &'static str, value: u32 },
    #[error("username must be non-empty")]
    EmptyUsername,
    #[error("routing key {key:?} does not end in at least six decimal digits")]
    MalformedKey { key: String },
}

/// FNV-1a 64-bit: the published offset basis and prime, byte-at-a-time.
/// Stable across runs and platforms; vectors pinned in tests.
pub fn fnv1a64(data: &[u8]) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    data.iter().fold(OFFSET_BASIS, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

pub fn route_by_username(username: &str, topology: ShardTopology) -> Result<ShardRoute, ShardError> {
    if username.is_empty() {
        return Err(ShardError::EmptyUsername);
    }
    let hash = fnv1a64(username.as_bytes());
    Ok(ShardRoute {
        db_index: (hash % topology.db_count as u64) as u32,
        table_index: ((hash / topology.db_count as u64) % topology.tables_per_db as u64) as u32,
    })
}

/// Routes by the integer value of the key's trailing six decimal digits.
pub fn route_by_trailing_digits(key: &str, topology: ShardTopology) -> Result<ShardRoute, ShardError> {
    let digits: Vec<char> =
        key.chars().rev().take_while(|c| c.is_ascii_digit()).take(6).collect();
    if digits.len() < 6 {
        return Err(ShardError::MalformedKey { key: key.to_string() });
    }
    let value: u64 = digits.iter().rev().collect::<String>().parse().unwrap();
    Ok(ShardRoute {
        db_index: (value % topology.db_count as u64) as u32,
        table_index: ((value / topology.db_count as u64) % topology.tables_per_db as u64) as u32,
    })
}
