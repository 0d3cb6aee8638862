//! Configuration shared by the CLI and the service.
//!
//! One TOML file carries the pipeline settings plus an optional `[service]`
//! table. The LLM key is never read from it.

use std::path::Path;

use invoice_core::model::{ConfigError, LlmMode, PipelineConfig, SecretKey};
use serde::{Deserialize, Serialize};

/// Environment variable holding the LLM key.
pub const KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub workers: usize,
    /// Static bearer token required on /v1 routes when set.
    pub bearer_token: Option<String>,
    pub max_upload_bytes: usize,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            workers: 4,
            bearer_token: None,
            max_upload_bytes: 50 * 1024 * 1024,
        }
    }
}

/// Load `path` (defaults when absent) and attach the key from the
/// environment.
pub fn load(path: Option<&Path>) -> Result<(PipelineConfig, ServiceSettings), ConfigError> {
    let (mut cfg, service) = match path {
        None => (PipelineConfig::default(), ServiceSettings::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            parse(&text).map_err(|message| ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            })?
        }
    };
    cfg.llm_auth_key = key_from_env();
    cfg.validate()?;
    if service.workers == 0 {
        return Err(ConfigError::Invalid("service.workers must be at least 1".into()));
    }
    Ok((cfg, service))
}

fn parse(text: &str) -> Result<(PipelineConfig, ServiceSettings), String> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let service = match table.remove("service") {
        Some(v) => v.try_into().map_err(|e: toml::de::Error| format!("[service]: {e}"))?,
        None => ServiceSettings::default(),
    };
    let cfg = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| e.to_string())?;
    Ok((cfg, service))
}

pub fn key_from_env() -> Option<SecretKey> {
    std::env::var(KEY_ENV).ok().filter(|k| !k.trim().is_empty()).map(SecretKey::new)
}

/// `live` or `replay:<dir>`.
pub fn parse_llm_mode(s: &str) -> Result<LlmMode, String> {
    match s.split_once(':') {
        None if s == "live" => Ok(LlmMode::Live),
        None if s == "refusal" => Ok(LlmMode::Refusal),
        Some(("replay", dir)) if !dir.is_empty() => Ok(LlmMode::Replay { dir: dir.into() }),
        _ => Err(format!("expected live, refusal or replay:<dir>, got {s:?}")),
    }
}
