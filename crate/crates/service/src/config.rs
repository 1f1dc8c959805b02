use std::path::PathBuf;

use crate::auth::HashCost;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MEDIA_CAP_BYTES: u64 = 100 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceConfig {
    pub port: u16,
    /// `None` keeps everything in memory.
    pub storage_root: Option<PathBuf>,
    pub media_cap_bytes: u64,
    pub hash_cost: HashCost,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            storage_root: None,
            media_cap_bytes: DEFAULT_MEDIA_CAP_BYTES,
            hash_cost: HashCost::Standard,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{var}={value:?} is not valid: {reason}")]
pub struct ConfigError {
    pub var: &'static str,
    pub value: String,
    pub reason: String,
}

impl ServiceConfig {
    /// Reads `FIELDLAB_PORT`, `FIELDLAB_STORAGE_ROOT` and
    /// `FIELDLAB_MEDIA_CAP_BYTES`; unset variables keep their defaults.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        if let Some(v) = lookup("FIELDLAB_PORT") {
            config.port = v.trim().parse().map_err(|e: std::num::ParseIntError| ConfigError {
                var: "FIELDLAB_PORT",
                value: v.clone(),
                reason: e.to_string(),
            })?;
        }
        if let Some(v) = lookup("FIELDLAB_STORAGE_ROOT").filter(|v| !v.trim().is_empty()) {
            config.storage_root = Some(PathBuf::from(v));
        }
        if let Some(v) = lookup("FIELDLAB_MEDIA_CAP_BYTES") {
            let cap: u64 = v.trim().parse().map_err(|e: std::num::ParseIntError| ConfigError {
                var: "FIELDLAB_MEDIA_CAP_BYTES",
                value: v.clone(),
                reason: e.to_string(),
            })?;
            if cap == 0 {
                return Err(ConfigError {
                    var: "FIELDLAB_MEDIA_CAP_BYTES",
                    value: v,
                    reason: "must be positive".into(),
                });
            }
            config.media_cap_bytes = cap;
        }
        Ok(config)
    }
}
