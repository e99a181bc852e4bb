//! Engine configuration: validated at startup, fail-fast on anything
//! inconsistent. The TOML key set mirrors this struct tree; see the
//! README for a worked example.

use std::collections::HashMap;

use serde::Deserialize;
use thiserror::Error;

use crate::flow::FlowRule;
use crate::idgen::SnowflakeLayout;
use crate::inventory::TrainPlan;
use crate::shard::ShardTopology;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default = "default_listen")]
    pub listen_addr: String,
    #[serde(default = "default_workers")]
    pub worker_threads: usize,
    /// When set, every change event is also appended here as JSON lines.
    #[serde(default)]
    pub persistence_path: Option<String>,
    #[serde(default)]
    pub snowflake: SnowflakeConfig,
    #[serde(default)]
    pub bloom: BloomConfig,
    #[serde(default)]
    pub shards: ShardTopology,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub orders: OrdersConfig,
    #[serde(default)]
    pub encryption: EncryptionConfig,
    #[serde(default)]
    pub gateway: GatewayConfig,
    /// Per-resource admission rules, keyed by resource name.
    #[serde(default = "default_flow_rules")]
    pub flow: HashMap<String, FlowRuleConfig>,
    #[serde(default)]
    pub cdc: CdcConfig,
    #[serde(default)]
    pub seed: SeedConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnowflakeConfig {
    pub epoch_ms: u64,
    pub timestamp_bits: u32,
    pub datacenter_bits: u32,
    pub worker_bits: u32,
    pub sequence_bits: u32,
    pub datacenter_id: u64,
    pub worker_id: u64,
}

impl Default for SnowflakeConfig {
    fn default() -> Self {
        let l = SnowflakeLayout::default();
        Self {
            epoch_ms: l.epoch_ms,
            timestamp_bits: l.timestamp_bits,
            datacenter_bits: l.datacenter_bits,
            worker_bits: l.worker_bits,
            sequence_bits: l.sequence_bits,
            datacenter_id: 0,
            worker_id: 0,
        }
    }
}

impl SnowflakeConfig {
    pub fn layout(&self) -> SnowflakeLayout {
        SnowflakeLayout {
            epoch_ms: self.epoch_ms,
            timestamp_bits: self.timestamp_bits,
            datacenter_bits: self.datacenter_bits,
            worker_bits: self.worker_bits,
            sequence_bits: self.sequence_bits,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BloomConfig {
    /// Expected element count per filter (routes, usernames).
    pub capacity: u64,
    /// Target false-positive probability.
    pub fpr: f64,
}

impl Default for BloomConfig {
    fn default() -> Self {
        Self { capacity: 100_000, fpr: 0.01 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    /// TTL for read-through route/train caches.
    pub route_ttl_ms: u64,
    pub sweep_interval_ms: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self { route_ttl_ms: 60_000, sweep_interval_ms: 1_000 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrdersConfig {
    /// Unpaid orders close after this long.
    pub payment_deadline_ms: u64,
    pub dedup_ttl_ms: u64,
    pub close_scan_interval_ms: u64,
}

impl Default for OrdersConfig {
    fn default() -> Self {
        Self { payment_deadline_ms: 600_000, dedup_ttl_ms: 1_800_000, close_scan_interval_ms: 1_000 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncryptionConfig {
    /// AES key for sensitive columns, hex; 16/24/32 bytes.
    pub field_key_hex: String,
}

impl Default for EncryptionConfig {
    fn default() -> Self {
        Self { field_key_hex: "000102030405060708090a0b0c0d0e0f".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_whitelist")]
    pub whitelist: Vec<String>,
    #[serde(default)]
    pub blacklist: Vec<String>,
    #[serde(default = "default_session_ttl")]
    pub session_ttl_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            whitelist: default_whitelist(),
            blacklist: Vec::new(),
            session_ttl_ms: default_session_ttl(),
        }
    }
}

fn default_whitelist() -> Vec<String> {
    ["/auth/login", "/auth/register", "/pay/callback", "/metrics"]
        .into_iter()
        .map(String::from)
        .collect()
}

fn default_session_ttl() -> u64 {
    3_600_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowRuleConfig {
    pub qps_limit: u32,
    pub max_concurrency: u32,
    #[serde(default = "default_rt_threshold")]
    pub rt_threshold_ms: u64,
    #[serde(default = "default_breaker_ratio")]
    pub breaker_error_ratio: f64,
    #[serde(default = "default_breaker_min_samples")]
    pub breaker_min_samples: u32,
    #[serde(default = "default_open_duration")]
    pub open_duration_ms: u64,
    #[serde(default = "default_probes")]
    pub half_open_probes: u32,
}

fn default_rt_threshold() -> u64 {
    500
}
fn default_breaker_ratio() -> f64 {
    0.5
}
fn default_breaker_min_samples() -> u32 {
    10
}
fn default_open_duration() -> u64 {
    5_000
}
fn default_probes() -> u32 {
    3
}

impl FlowRuleConfig {
    pub fn rule(&self) -> FlowRule {
        FlowRule {
            qps_limit: self.qps_limit,
            max_concurrency: self.max_concurrency,
            rt_threshold_ms: self.rt_threshold_ms,
            breaker_error_ratio: self.breaker_error_ratio,
            breaker_min_samples: self.breaker_min_samples,
            open_duration_ms: self.open_duration_ms,
            half_open_probes: self.half_open_probes,
        }
    }
}

fn default_flow_rules() -> HashMap<String, FlowRuleConfig> {
    let generous = |qps| FlowRuleConfig {
        qps_limit: qps,
        max_concurrency: 512,
        rt_threshold_ms: default_rt_threshold(),
        breaker_error_ratio: default_breaker_ratio(),
        breaker_min_samples: default_breaker_min_samples(),
        open_duration_ms: default_open_duration(),
        half_open_probes: default_probes(),
    };
    HashMap::from([
        ("query".to_string(), generous(50_000)),
        ("purchase".to_string(), generous(20_000)),
        ("order".to_string(), generous(20_000)),
    ])
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdcConfig {
    pub applier_threads: usize,
    pub poll_interval_ms: u64,
    pub visibility_timeout_ms: u64,
}

impl Default for CdcConfig {
    fn default() -> Self {
        Self { applier_threads: 2, poll_interval_ms: 1, visibility_timeout_ms: 5_000 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    #[serde(default)]
    pub users: Vec<SeedUser>,
    #[serde(default)]
    pub trains: Vec<TrainPlan>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedUser {
    pub username: String,
    pub password: String,
    pub id_number: String,
    pub phone: String,
}

fn default_listen() -> String {
    "127.0.0.1:8910".to_string()
}

fn default_workers() -> usize {
    8
}

impl Default for EngineConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid snowflake layout: {0}")]
    Snowflake(#[from] crate::idgen::LayoutError),
    #[error("invalid bloom parameters: {0}")]
    Bloom(#[from] crate::bloom::BloomError),
    #[error("invalid shard topology: {0}")]
    Shard(#[from] crate::shard::ShardError),
    #[error("invalid encryption key: {0}")]
    Key(String),
    #[error("flow rule {resource:?}: {problem}")]
    Flow { resource: String, problem: String },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn field_key(&self) -> Result<Vec<u8>, ConfigError> {
        let key = hex::decode(&self.encryption.field_key_hex)
            .map_err(|e| ConfigError::Key(e.to_string()))?;
        if ![16, 24, 32].contains(&key.len()) {
            return Err(ConfigError::Key(format!("key must be 16/24/32 bytes, got {}", key.len())));
        }
        Ok(key)
    }

    /// Structural validation; the snowflake epoch is checked against the
    /// clock when the generator is built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.snowflake.layout().validate(u64::MAX)?;
        crate::bloom::size_for(self.bloom.capacity, self.bloom.fpr)?;
        self.shards.validate()?;
        self.field_key()?;
        for (resource, rule) in &self.flow {
            if rule.qps_limit == 0 || rule.max_concurrency == 0 {
                return Err(ConfigError::Flow {
                    resource: resource.clone(),
                    problem: "qps_limit and max_concurrency must be positive".into(),
                });
            }
            if !(rule.breaker_error_ratio > 0.0 && rule.breaker_error_ratio <= 1.0) {
                return Err(ConfigError::Flow {
                    resource: resource.clone(),
                    problem: "breaker_error_ratio must be in (0, 1]".into(),
                });
            }
            if rule.breaker_min_samples == 0
                || rule.half_open_probes == 0
                || rule.open_duration_ms == 0
                || rule.rt_threshold_ms == 0
            {
                return Err(ConfigError::Flow {
                    resource: resource.clone(),
                    problem: "breaker thresholds must be positive".into(),
                });
            }
        }
        if self.worker_threads == 0 {
            return Err(ConfigError::NonPositive("worker_threads"));
        }
        if self.cache.route_ttl_ms == 0 || self.cache.sweep_interval_ms == 0 {
            return Err(ConfigError::NonPositive("cache intervals"));
        }
        if self.orders.payment_deadline_ms == 0
            || self.orders.dedup_ttl_ms == 0
            || self.orders.close_scan_interval_ms == 0
        {
            return Err(ConfigError::NonPositive("order timers"));
        }
        if self.cdc.applier_threads == 0 || self.cdc.visibility_timeout_ms == 0 {
            return Err(ConfigError::NonPositive("cdc parameters"));
        }
        for plan in &self.seed.trains {
            plan.validate().map_err(|e| ConfigError::Flow {
                resource: format!("seed train {}", plan.train_id),
                problem: e.to_string(),
            })?;
        }
        Ok(())
    }
}
