//! Live signing keys, one current generation per domain.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use keyforge_core::keystore::{DomainKey, Keystore};

#[derive(Debug, Default)]
pub struct KeyTable {
    inner: RwLock<HashMap<String, Arc<DomainKey>>>,
}

impl KeyTable {
    pub fn from_keystore(store: &Keystore) -> Self {
        let table = KeyTable::default();
        for domain in store.domains() {
            if let Some(k) = store.current(&domain) {
                table.install(k.clone());
            }
        }
        table
    }

    pub fn get(&self, domain: &str) -> Option<Arc<DomainKey>> {
        self.inner
            .read()
            .expect("key table lock")
            .get(&domain.to_ascii_lowercase())
            .cloned()
    }

    /// Makes `key` the current generation for its domain.
    pub fn install(&self, key: DomainKey) {
        self.inner
            .write()
            .expect("key table lock")
            .insert(key.domain.to_ascii_lowercase(), Arc::new(key));
    }

    pub fn domains(&self) -> Vec<String> {
        let mut d: Vec<String> = self.inner.read().expect("key table lock").keys().cloned().collect();
        d.sort();
        d
    }
}
