//! Python bindings for the engine's core primitives: snowflake IDs,
//! Bloom filters, the AES field codec, shard routing, and the
//! anonymization helper. Built as `railgate_py`.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use railgate_core::aes;
use railgate_core::bloom;
use railgate_core::clock::system_clock;
use railgate_core::idgen;
use railgate_core::orders::mask_id_number as mask_impl;
use railgate_core::shard;

#[pyclass(name = "SnowflakeGenerator")]
struct PySnowflakeGenerator {
    inner: idgen::SnowflakeGenerator,
}

#[pymethods]
impl PySnowflakeGenerator {
    #[new]
    #[pyo3(signature = (datacenter_id, worker_id, epoch_ms=None, timestamp_bits=41, datacenter_bits=5, worker_bits=5, sequence_bits=12))]
    fn new(
        datacenter_id: u64,
        worker_id: u64,
        epoch_ms: Option<u64>,
        timestamp_bits: u32,
        datacenter_bits: u32,
        worker_bits: u32,
        sequence_bits: u32,
    ) -> PyResult<Self> {
        let layout = idgen::SnowflakeLayout {
            epoch_ms: epoch_ms.unwrap_or(idgen::DEFAULT_EPOCH_MS),
            timestamp_bits,
            datacenter_bits,
            worker_bits,
            sequence_bits,
        };
        let inner =
            idgen::SnowflakeGenerator::new(layout, datacenter_id, worker_id, system_clock())
                .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn next_id(&self) -> PyResult<i64> {
        self.inner.next_id().map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn decompose<'py>(&self, py: Python<'py>, id: i64) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let parts = idgen::decompose(id, self.inner.layout());
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("timestamp_offset_ms", parts.timestamp_offset_ms)?;
        dict.set_item("datacenter_id", parts.datacenter_id)?;
        dict.set_item("worker_id", parts.worker_id)?;
        dict.set_item("sequence", parts.sequence)?;
        Ok(dict)
    }
}

#[pyclass(name = "BloomFilter")]
struct PyBloomFilter {
    inner: Arc<bloom::BloomFilter>,
}

#[pymethods]
impl PyBloomFilter {
    #[new]
    fn new(capacity: u64, fpr: f64) -> PyResult<Self> {
        let inner = bloom::BloomFilter::with_capacity(capacity, fpr)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner: Arc::new(inner) })
    }

    #[getter]
    fn bits(&self) -> u64 {
        self.inner.params().m
    }

    #[getter]
    fn hashes(&self) -> u32 {
        self.inner.params().k
    }

    fn insert(&self, key: &str) {
        self.inner.insert(key.as_bytes());
    }

    fn maybe_contains(&self, key: &str) -> bool {
        self.inner.maybe_contains(key.as_bytes())
    }

    fn popcount(&self) -> u64 {
        self.inner.popcount()
    }
}

/// (m, k) sizing for `n` expected elements at target false-positive
/// probability `p`.
#[pyfunction]
fn bloom_size_for(n: u64, p: f64) -> PyResult<(u64, u32)> {
    let params = bloom::size_for(n, p).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((params.m, params.k))
}

#[pyfunction]
fn bloom_predicted_fpr(m: u64, k: u32, n: u64) -> f64 {
    bloom::predicted_fpr(m, k, n)
}

#[pyfunction]
fn murmur3_x64_128(key: &str, seed: u64) -> (u64, u64) {
    bloom::murmur3_x64_128(key.as_bytes(), seed)
}

#[pyclass(name = "FieldCodec")]
struct PyFieldCodec {
    codec: aes::FieldCodec,
    schedule: aes::KeySchedule,
}

#[pymethods]
impl PyFieldCodec {
    #[new]
    fn new(key_hex: &str) -> PyResult<Self> {
        let key = hex::decode(key_hex).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let codec =
            aes::FieldCodec::new(&key).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let schedule =
            aes::KeySchedule::new(&key).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { codec, schedule })
    }

    /// Deterministic field encryption; returns lowercase hex.
    fn encode(&self, plaintext: &str) -> PyResult<String> {
        self.codec
            .encode_field(plaintext)
            .map(|f| f.to_hex())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn decode(&self, ciphertext_hex: &str) -> PyResult<String> {
        let field = aes::EncryptedField::from_hex(ciphertext_hex)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        self.codec.decode_field(&field).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Raw single-block encryption (16-byte block as hex).
    fn encrypt_block(&self, block_hex: &str) -> PyResult<String> {
        let block = hex::decode(block_hex).map_err(|e| PyValueError::new_err(e.to_string()))?;
        aes::encrypt_block(&block, &self.schedule)
            .map(hex::encode)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn decrypt_block(&self, block_hex: &str) -> PyResult<String> {
        let block = hex::decode(block_hex).map_err(|e| PyValueError::new_err(e.to_string()))?;
        aes::decrypt_block(&block, &self.schedule)
            .map(hex::encode)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

#[pyfunction]
fn route_by_username(username: &str, db_count: u32, tables_per_db: u32) -> PyResult<(u32, u32)> {
    let topology = shard::ShardTopology { db_count, tables_per_db };
    topology.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let route = shard::route_by_username(username, topology)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((route.db_index, route.table_index))
}

#[pyfunction]
fn route_by_trailing_digits(key: &str, db_count: u32, tables_per_db: u32) -> PyResult<(u32, u32)> {
    let topology = shard::ShardTopology { db_count, tables_per_db };
    topology.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let route = shard::route_by_trailing_digits(key, topology)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((route.db_index, route.table_index))
}

#[pyfunction]
fn fnv1a64(data: &str) -> u64 {
    shard::fnv1a64(data.as_bytes())
}

/// First four and last four characters survive; the middle is starred.
#[pyfunction]
fn mask_id_number(id: &str) -> String {
    mask_impl(id)
}

#[pymodule]
fn railgate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySnowflakeGenerator>()?;
    m.add_class::<PyBloomFilter>()?;
    m.add_class::<PyFieldCodec>()?;
    m.add_function(wrap_pyfunction!(bloom_size_for, m)?)?;
    m.add_function(wrap_pyfunction!(bloom_predicted_fpr, m)?)?;
    m.add_function(wrap_pyfunction!(murmur3_x64_128, m)?)?;
    m.add_function(wrap_pyfunction!(route_by_username, m)?)?;
    m.add_function(wrap_pyfunction!(route_by_trailing_digits, m)?)?;
    m.add_function(wrap_pyfunction!(fnv1a64, m)?)?;
    m.add_function(wrap_pyfunction!(mask_id_number, m)?)?;
    Ok(())
}
