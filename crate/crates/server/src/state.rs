use std::sync::Arc;

use keyforge_core::keyforge::{self, Clock, KeyForgeConfig, ManualClock, SystemClock};
use keyforge_core::keystore::{Keystore, KeystoreError, DEFAULT_ITERATIONS};
use keyforge_core::rpc::PublishResult;
use keyforge_core::tagtree::TagSpace;
use thiserror::Error;
use zeroize::Zeroizing;

use crate::config::{ConfigError, ServerConfig};
use crate::directory::{Layered, LocalDirectory, ParamCache, PeerDirectory};
use crate::keys::KeyTable;
use crate::publish::PublicationStore;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Keystore(#[from] KeystoreError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Setup(String),
}

/// Everything a request handler needs. Shared behind an `Arc`.
pub struct AppState {
    pub config: ServerConfig,
    pub kf: KeyForgeConfig,
    pub keys: Arc<KeyTable>,
    pub local: LocalDirectory,
    pub cache: ParamCache,
    pub store: PublicationStore,
    keystore: tokio::sync::Mutex<Keystore>,
    passphrase: Zeroizing<String>,
    pub keystore_iterations: u32,
    /// Serializes publication: the scheduler and `kf.publishNow` are one logical writer.
    publish_lock: tokio::sync::Mutex<()>,
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState").field("domains", &self.keys.domains()).finish_non_exhaustive()
    }
}

impl AppState {
    /// Loads the keystore named by the config and picks the clock it asks for.
    pub fn from_config(config: ServerConfig) -> Result<Arc<Self>, ServerError> {
        let passphrase = config.passphrase()?;
        let keystore = Keystore::load(&config.keystore, passphrase.as_bytes())?;
        let clock: Arc<dyn Clock> = match config.fixed_clock {
            Some(t) => Arc::new(ManualClock::new(t)),
            None => Arc::new(SystemClock),
        };
        Self::new(config, keystore, passphrase, clock)
    }

    pub fn new(
        config: ServerConfig,
        keystore: Keystore,
        passphrase: Zeroizing<String>,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Self>, ServerError> {
        let space = config.space()?;
        for domain in keystore.domains() {
            let key = keystore.current(&domain).expect("listed domain");
            if key.keys.depth() != space.depth() {
                return Err(ServerError::Setup(format!(
                    "key for {domain} has depth {}, tag space needs {}",
                    key.keys.depth(),
                    space.depth()
                )));
            }
        }
        let mut kf = KeyForgeConfig::new(space.clone(), clock)
            .with_delta_hat(config.delta_hat_secs)
            .map_err(|e| ServerError::Setup(e.to_string()))?;
        if let Some(secs) = config.expiry_interval_secs {
            kf = kf.with_expiry_interval(secs).map_err(|e| ServerError::Setup(e.to_string()))?;
        }
        let keys = Arc::new(KeyTable::from_keystore(&keystore));
        let directory = Layered {
            local: LocalDirectory::new(keys.clone(), space.clone()),
            peers: PeerDirectory::new(&config.peers).map_err(|e| ServerError::Setup(e.to_string()))?,
        };
        Ok(Arc::new(AppState {
            local: LocalDirectory::new(keys.clone(), space),
            cache: ParamCache::new(Arc::new(directory), config.param_ttl_secs),
            store: PublicationStore::new(&config.data_dir),
            keys,
            kf,
            keystore: tokio::sync::Mutex::new(keystore),
            passphrase,
            keystore_iterations: DEFAULT_ITERATIONS,
            publish_lock: tokio::sync::Mutex::new(()),
            config,
        }))
    }

    pub fn space(&self) -> &TagSpace {
        &self.kf.space
    }

    pub fn now(&self) -> i64 {
        self.kf.now()
    }

    /// Publishes expiry information for `domain` if new chunks have completed. Without `force`,
    /// waits until a full expiry interval's worth of chunks is due.
    pub async fn publish(&self, domain: &str, now: i64, force: bool) -> Result<PublishResult, ServerError> {
        let key = self
            .keys
            .get(domain)
            .ok_or_else(|| ServerError::Setup(format!("unknown domain {domain}")))?;
        let _writer = self.publish_lock.lock().await;
        let last = self.store.latest_covered(&key.domain, key.generation)?;
        let due = keyforge::due_leaf_count(self.space(), now);
        let step = (self.kf.expiry_interval / self.space().chunk_duration()).max(1) as u64;
        let published = due > last && (force || due - last >= step);
        if published {
            let kf = self.kf.clone();
            let k = key.clone();
            let eta = tokio::task::spawn_blocking(move || {
                let leaves: Vec<_> = (0..due).map(|i| kf.space.leaf_at(i).expect("due leaf")).collect();
                keyforge_core::ffs::expire(&k.keys, &kf.space, &leaves)
            })
            .await
            .map_err(|e| ServerError::Setup(e.to_string()))?
            .map_err(|e| ServerError::Setup(e.to_string()))?;
            self.store.append(&key.domain, key.generation, due, &eta)?;
            tracing::info!(domain = %key.domain, covered = due, entries = eta.len(), "published expiry");
        }
        let list = self.store.list(&key.domain, key.generation)?;
        Ok(PublishResult {
            published,
            stream_len: list.len(),
            covered_chunks: list.last().map_or(0, |p| p.covered),
        })
    }

    /// Adds a key generation for `domain`, persists the keystore and makes the new key current.
    pub async fn rotate(&self, domain: &str, now: i64) -> Result<(u32, [u8; 32]), ServerError> {
        let mut store = self.keystore.lock().await;
        let depth = self.space().depth();
        let key = store.generate(domain, depth, now, None).clone();
        let (path, pass, iters) = (
            self.config.keystore.clone(),
            self.passphrase.clone(),
            self.keystore_iterations,
        );
        let snapshot = store.clone();
        tokio::task::spawn_blocking(move || snapshot.save(&path, pass.as_bytes(), iters))
            .await
            .map_err(|e| ServerError::Setup(e.to_string()))??;
        let out = (key.generation, key.keys.mvk().to_bytes());
        self.keys.install(key);
        self.cache.invalidate(domain);
        Ok(out)
    }
}
