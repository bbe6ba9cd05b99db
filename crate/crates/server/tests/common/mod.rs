#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use keyforge_core::keyforge::ManualClock;
use keyforge_core::keystore::Keystore;
use keyforge_server::{AppState, ServerConfig};
use tempfile::TempDir;
use zeroize::Zeroizing;

/// 2024-01-01T00:00:00Z.
pub const EPOCH: i64 = 1_704_067_200;
pub const TOKEN: &str = "admin-secret";

pub struct Harness {
    pub state: Arc<AppState>,
    pub clock: ManualClock,
    pub dir: TempDir,
    pub addr: SocketAddr,
}

impl Harness {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn client(&self) -> keyforge_client::KfClient {
        keyforge_client::KfClient::new(&self.url()).unwrap()
    }
}

pub struct Setup<'a> {
    pub domains: &'a [&'a str],
    pub layout: &'a str,
    pub allow_client_clock: bool,
    pub peers: BTreeMap<String, String>,
    pub start: i64,
}

impl Default for Setup<'_> {
    fn default() -> Self {
        Setup {
            domains: &["a.test"],
            layout: "layout = \"calendar\"",
            allow_client_clock: false,
            peers: BTreeMap::new(),
            start: EPOCH + 3 * 86_400 + 1_000,
        }
    }
}

pub fn seed_for(domain: &str) -> [u8; 32] {
    let mut seed = [0u8; 32];
    for (i, b) in domain.bytes().enumerate() {
        seed[i % 32] ^= b;
    }
    seed
}

pub fn config_text(dir: &std::path::Path, s: &Setup<'_>) -> String {
    let peers: String = s.peers.iter().map(|(d, u)| format!("\"{d}\" = \"{u}\"\n")).collect();
    format!(
        r#"
listen = "127.0.0.1:0"
keystore = "{ks}"
data_dir = "{data}"
admin_token = "{TOKEN}"
allow_client_clock = {allow}
[peers]
{peers}
[tag_space]
{layout}
epoch_start = "2024-01-01T00:00:00Z"
"#,
        ks = dir.join("keys.kfks").display(),
        data = dir.join("data").display(),
        allow = s.allow_client_clock,
        layout = s.layout,
    )
}

pub async fn start(s: Setup<'_>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let config = ServerConfig::from_toml(&config_text(dir.path(), &s)).unwrap();
    let depth = config.space().unwrap().depth();
    let mut ks = Keystore::new();
    for d in s.domains {
        ks.generate(d, depth, 0, Some(seed_for(d)));
    }
    let clock = ManualClock::new(s.start);
    let mut state = AppState::new(config, ks, Zeroizing::new("pw".into()), Arc::new(clock.clone())).unwrap();
    Arc::get_mut(&mut state).expect("fresh state").keystore_iterations = 1_000;
    let (addr, _) = keyforge_server::spawn_http(state.clone(), "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    Harness { state, clock, dir, addr }
}
