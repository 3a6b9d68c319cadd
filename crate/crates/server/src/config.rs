use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use colloquy::gateway::HEARTBEAT_INTERVAL_MS;
use colloquy::platform::PlatformConfig;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("production mode requires [tls] with cert_path and key_path")]
    ProductionWithoutTls,
    #[error("tls file {0} does not exist")]
    MissingTlsFile(PathBuf),
    #[error("heartbeat interval must be positive")]
    BadHeartbeat,
    #[error("secrets: {0}")]
    Secrets(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsConfig {
    pub cert_path: PathBuf,
    pub key_path: PathBuf,
}

/// Service configuration. Secrets are never read from here; they come from
/// the environment.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    /// Snapshot file holding accounts, studies, rooms and surveys.
    pub data_path: PathBuf,
    pub production: bool,
    pub tls: Option<TlsConfig>,
    pub heartbeat_interval_ms: u64,
    /// Periodic snapshot interval; 0 saves only at shutdown.
    pub save_interval_s: u64,
    pub platform: PlatformConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_path: PathBuf::from("colloquy-data.json"),
            production: false,
            tls: None,
            heartbeat_interval_ms: HEARTBEAT_INTERVAL_MS,
            save_interval_s: 60,
            platform: PlatformConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Read {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Read { message, .. } => ConfigError::Read {
                path: path.to_owned(),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.heartbeat_interval_ms == 0 {
            return Err(ConfigError::BadHeartbeat);
        }
        match (&self.tls, self.production) {
            (None, true) => Err(ConfigError::ProductionWithoutTls),
            (Some(tls), _) => {
                for p in [&tls.cert_path, &tls.key_path] {
                    if !p.exists() {
                        return Err(ConfigError::MissingTlsFile(p.clone()));
                    }
                }
                Ok(())
            }
            (None, false) => Ok(()),
        }
    }
}
