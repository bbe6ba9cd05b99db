//! Server configuration, read from TOML.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use keyforge_core::tagtree::{TagError, TagSpace, TagSpaceConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("tag space: {0}")]
    TagSpace(#[from] TagError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    /// HTTP listen address for `/rpc`, `/params` and `/expiry`.
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Optional Unix socket speaking newline-delimited JSON-RPC.
    #[serde(default)]
    pub socket: Option<PathBuf>,
    /// Encrypted keystore file.
    pub keystore: PathBuf,
    /// Environment variable holding the keystore passphrase.
    #[serde(default = "default_passphrase_env")]
    pub passphrase_env: String,
    /// Alternative to `passphrase_env`: a file whose first line is the passphrase.
    #[serde(default)]
    pub passphrase_file: Option<PathBuf>,
    /// Root of the expiry publication streams.
    pub data_dir: PathBuf,
    /// Delivery bound Δ̂ in seconds.
    #[serde(default = "default_delta_hat")]
    pub delta_hat_secs: i64,
    /// Publication cadence; defaults to the chunk length.
    #[serde(default)]
    pub expiry_interval_secs: Option<i64>,
    /// Token required by `kf.rotate` and `kf.publishNow`. Admin calls are refused when unset.
    #[serde(default)]
    pub admin_token: Option<String>,
    /// Honor the `now` field in requests. For test deployments only.
    #[serde(default)]
    pub allow_client_clock: bool,
    /// Pin the server clock to this UTC second (test deployments).
    #[serde(default)]
    pub fixed_clock: Option<i64>,
    /// Seconds a fetched parameter record stays cached; `None` keeps it until rotation.
    #[serde(default)]
    pub param_ttl_secs: Option<i64>,
    /// Key servers of other domains: domain → base URL.
    #[serde(default)]
    pub peers: BTreeMap<String, String>,
    pub tag_space: TagSpaceConfig,
}

fn default_listen() -> SocketAddr {
    "127.0.0.1:8470".parse().expect("literal address")
}

fn default_passphrase_env() -> String {
    "KF_PASSPHRASE".into()
}

fn default_delta_hat() -> i64 {
    keyforge_core::keyforge::DEFAULT_DELTA_HAT
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServerConfig = toml::from_str(text)?;
        cfg.space()?;
        if cfg.delta_hat_secs <= 0 {
            return Err(ConfigError::Invalid("delta_hat_secs must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths are taken relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [Some(&mut cfg.keystore), Some(&mut cfg.data_dir), cfg.socket.as_mut(), cfg.passphrase_file.as_mut()]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn space(&self) -> Result<TagSpace, ConfigError> {
        Ok(self.tag_space.build()?)
    }

    /// The keystore passphrase from the configured file or environment variable.
    pub fn passphrase(&self) -> Result<zeroize::Zeroizing<String>, ConfigError> {
        if let Some(path) = &self.passphrase_file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.clone(),
                source,
            })?;
            return Ok(zeroize::Zeroizing::new(text.lines().next().unwrap_or("").to_string()));
        }
        std::env::var(&self.passphrase_env)
            .map(zeroize::Zeroizing::new)
            .map_err(|_| ConfigError::Invalid(format!("passphrase variable {} is not set", self.passphrase_env)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
        listen = "127.0.0.1:0"
        keystore = "keys.kfks"
        data_dir = "data"
        admin_token = "t"
        [peers]
        "example.org" = "http://127.0.0.1:9000"
        [tag_space]
        layout = "uniform"
        epoch_start = "2024-01-01T00:00:00Z"
        depth = 4
    "#;

    #[test]
    fn parses_sample() {
        let cfg = ServerConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.delta_hat_secs, 900);
        assert_eq!(cfg.space().unwrap().branching(), 17);
        assert_eq!(cfg.peers.len(), 1);
        assert!(!cfg.allow_client_clock);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_layouts() {
        assert!(ServerConfig::from_toml(&format!("bogus = 1\n{SAMPLE}")).is_err());
        let bad = SAMPLE.replace("depth = 4", "");
        assert!(matches!(ServerConfig::from_toml(&bad), Err(ConfigError::TagSpace(_))));
    }
}
