//! High-concurrency train ticket sale engine.
//!
//! Single-process analogue of a sharded, cached, message-driven ticketing
//! backend: snowflake ID generation, Bloom-guarded reads, an in-process
//! key-value cache and message bus, a transactional record store with a
//! row-level change log (the binlog analogue), token-container admission
//! for oversell prevention, order lifecycle management, per-resource flow
//! control, and a staged load-test harness.

pub mod aes;
pub mod bench;
pub mod bloom;
pub mod clock;
pub mod engine;
pub mod flow;
pub mod idgen;
pub mod inventory;
pub mod kvcache;
pub mod mqbus;
pub mod orders;
pub mod recordstore;
pub mod shard;
