//! Where verification parameters come from, and the cache in front of it.
//!
//! A [`Directory`] answers "which parameters does `domain` publish for `prefix`": locally held
//! domains derive them from their keys, other domains are fetched from peer key servers over
//! HTTP. [`ParamCache`] sits in front so repeated verifications do not go back to the directory.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use keyforge_client::{ClientError, KfClient};
use keyforge_core::keyforge::ParamRecord;
use keyforge_core::tagtree::{Tag, TagSpace};
use thiserror::Error;

use crate::keys::KeyTable;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("unknown domain {0}")]
    UnknownDomain(String),
    #[error("no parameters for prefix {0:?}")]
    UnknownPrefix(String),
    #[error("directory unreachable: {0}")]
    Transport(String),
    #[error("directory returned an invalid record: {0}")]
    Invalid(String),
}

#[async_trait]
pub trait Directory: Send + Sync {
    async fn fetch(&self, domain: &str, prefix: &Tag) -> Result<ParamRecord, FetchError>;
}

/// Parameters for domains whose keys this server holds.
pub struct LocalDirectory {
    keys: Arc<KeyTable>,
    space: TagSpace,
}

impl LocalDirectory {
    pub fn new(keys: Arc<KeyTable>, space: TagSpace) -> Self {
        LocalDirectory { keys, space }
    }

    pub fn lookup(&self, domain: &str, prefix: &Tag) -> Result<ParamRecord, FetchError> {
        let key = self
            .keys
            .get(domain)
            .ok_or_else(|| FetchError::UnknownDomain(domain.to_string()))?;
        if !prefix.is_empty() {
            self.space
                .validate(prefix)
                .map_err(|_| FetchError::UnknownPrefix(prefix.to_string()))?;
        }
        ParamRecord::derive(&key.keys, &key.domain, prefix).map_err(|e| FetchError::UnknownPrefix(e.to_string()))
    }
}

#[async_trait]
impl Directory for LocalDirectory {
    async fn fetch(&self, domain: &str, prefix: &Tag) -> Result<ParamRecord, FetchError> {
        self.lookup(domain, prefix)
    }
}

/// Peer key servers, one base URL per domain.
pub struct PeerDirectory {
    peers: BTreeMap<String, KfClient>,
}

impl PeerDirectory {
    pub fn new(peers: &BTreeMap<String, String>) -> Result<Self, FetchError> {
        let peers = peers
            .iter()
            .map(|(d, url)| {
                KfClient::new(url)
                    .map(|c| (d.to_ascii_lowercase(), c))
                    .map_err(|e| FetchError::Transport(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(PeerDirectory { peers })
    }
}

#[async_trait]
impl Directory for PeerDirectory {
    async fn fetch(&self, domain: &str, prefix: &Tag) -> Result<ParamRecord, FetchError> {
        let domain = domain.to_ascii_lowercase();
        let client = self
            .peers
            .get(&domain)
            .ok_or_else(|| FetchError::UnknownDomain(domain.clone()))?;
        let record = match client.params(&domain, prefix).await {
            Ok(r) => r,
            Err(ClientError::NotFound(_)) => return Err(FetchError::UnknownPrefix(prefix.to_string())),
            Err(e) => return Err(FetchError::Transport(e.to_string())),
        };
        // A peer may only speak for its own domain, and its certificates must check out.
        if record.domain != domain || &record.prefix != prefix || record.verify().is_none() {
            return Err(FetchError::Invalid(format!("{domain}/{prefix}")));
        }
        Ok(record)
    }
}

/// Local domains first, then peers.
pub struct Layered {
    pub local: LocalDirectory,
    pub peers: PeerDirectory,
}

#[async_trait]
impl Directory for Layered {
    async fn fetch(&self, domain: &str, prefix: &Tag) -> Result<ParamRecord, FetchError> {
        match self.local.fetch(domain, prefix).await {
            Err(FetchError::UnknownDomain(_)) => self.peers.fetch(domain, prefix).await,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub hits: u64,
    /// Directory round trips (cache misses).
    pub fetches: u64,
}

struct Entry {
    record: ParamRecord,
    fetched_at: i64,
}

pub struct ParamCache {
    directory: Arc<dyn Directory>,
    entries: Mutex<HashMap<(String, String), Entry>>,
    ttl: Option<i64>,
    hits: AtomicU64,
    fetches: AtomicU64,
}

impl ParamCache {
    pub fn new(directory: Arc<dyn Directory>, ttl: Option<i64>) -> Self {
        ParamCache {
            directory,
            entries: Mutex::new(HashMap::new()),
            ttl,
            hits: AtomicU64::new(0),
            fetches: AtomicU64::new(0),
        }
    }

    pub async fn get(&self, domain: &str, prefix: &Tag, now: i64) -> Result<ParamRecord, FetchError> {
        let key = (domain.to_ascii_lowercase(), prefix.to_string());
        {
            let entries = self.entries.lock().expect("cache lock");
            if let Some(e) = entries.get(&key) {
                if self.ttl.is_none_or(|ttl| now - e.fetched_at < ttl) {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(e.record.clone());
                }
            }
        }
        self.fetches.fetch_add(1, Ordering::Relaxed);
        let record = self.directory.fetch(&key.0, prefix).await?;
        self.entries.lock().expect("cache lock").insert(
            key,
            Entry {
                record: record.clone(),
                fetched_at: now,
            },
        );
        Ok(record)
    }

    /// Drops everything cached for `domain` (after a key rotation).
    pub fn invalidate(&self, domain: &str) {
        let d = domain.to_ascii_lowercase();
        self.entries.lock().expect("cache lock").retain(|(dom, _), _| *dom != d);
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            fetches: self.fetches.load(Ordering::Relaxed),
        }
    }
}
