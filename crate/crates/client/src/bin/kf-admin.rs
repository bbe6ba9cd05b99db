use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use keyforge_client::KfClient;
use keyforge_core::keystore::{Keystore, DEFAULT_ITERATIONS};
use keyforge_core::rpc::AdminParams;
use keyforge_core::tagtree::TagSpaceConfig;
use serde::Deserialize;
use zeroize::Zeroizing;

/// Key administration: create keys locally, or ask a running key server to rotate keys or
/// publish expiry information now.
#[derive(Parser)]
#[command(name = "kf-admin", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Add a key generation for a domain to a keystore file (created if missing).
    GenKeys {
        /// Server config; its keystore path and tag space are used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Keystore path (overrides the config).
        #[arg(long)]
        keystore: Option<PathBuf>,
        #[arg(long, required = true)]
        domain: Vec<String>,
        /// Tree depth, when no config is given.
        #[arg(long)]
        depth: Option<usize>,
        /// Environment variable holding the passphrase.
        #[arg(long, default_value = "KF_PASSPHRASE")]
        passphrase_env: String,
        /// PBKDF2 iterations for sealing the keystore.
        #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
        iterations: u32,
    },
    /// Switch a domain to a fresh master key on the running server.
    Rotate(Remote),
    /// Publish expiry information for all completed chunks immediately.
    PublishNow(Remote),
}

#[derive(clap::Args)]
struct Remote {
    #[arg(long, default_value = "http://127.0.0.1:8470")]
    keyserver: String,
    #[arg(long)]
    domain: String,
    /// Admin token (default: $KF_ADMIN_TOKEN).
    #[arg(long)]
    token: Option<String>,
    /// Clock override in UTC seconds; the server must allow client clocks.
    #[arg(long)]
    now: Option<i64>,
}

/// The parts of a server config this tool reads.
#[derive(Deserialize)]
struct ServerConfigSubset {
    keystore: PathBuf,
    tag_space: TagSpaceConfig,
}

fn resolve(config: Option<&Path>, keystore: Option<PathBuf>, depth: Option<usize>) -> Result<(PathBuf, usize), String> {
    let subset = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut s: ServerConfigSubset = toml::from_str(&text).map_err(|e| e.to_string())?;
            if s.keystore.is_relative() {
                s.keystore = path.parent().unwrap_or(Path::new(".")).join(&s.keystore);
            }
            Some(s)
        }
        None => None,
    };
    let depth = match (&subset, depth) {
        (_, Some(d)) => d,
        (Some(s), None) => s.tag_space.build().map_err(|e| e.to_string())?.depth(),
        (None, None) => return Err("give --config or --depth".into()),
    };
    let path = keystore
        .or(subset.map(|s| s.keystore))
        .ok_or("give --config or --keystore")?;
    Ok((path, depth))
}

fn admin_params(r: &Remote) -> AdminParams {
    AdminParams {
        domain: r.domain.clone(),
        token: r.token.clone().or_else(|| std::env::var("KF_ADMIN_TOKEN").ok()).unwrap_or_default(),
        now: r.now,
    }
}

async fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    match args.cmd {
        Cmd::GenKeys {
            config,
            keystore,
            domain,
            depth,
            passphrase_env,
            iterations,
        } => {
            let (path, depth) = resolve(config.as_deref(), keystore, depth)?;
            let pass = Zeroizing::new(
                std::env::var(&passphrase_env).map_err(|_| format!("set {passphrase_env} to the keystore passphrase"))?,
            );
            let mut store = if path.exists() {
                Keystore::load(&path, pass.as_bytes())?
            } else {
                Keystore::new()
            };
            let created = chrono_now();
            for d in &domain {
                let key = store.generate(d, depth, created, None);
                println!("{},{},{}", key.domain, key.generation, hex(&key.keys.mvk().to_bytes()));
            }
            store.save(&path, pass.as_bytes(), iterations)?;
        }
        Cmd::Rotate(r) => {
            let res = KfClient::new(&r.keyserver)?.rotate(&admin_params(&r)).await?;
            println!("{},{},{}", res.domain, res.generation, hex(&res.master_key));
        }
        Cmd::PublishNow(r) => {
            let res = KfClient::new(&r.keyserver)?.publish_now(&admin_params(&r)).await?;
            println!("published={} stream_len={} covered_chunks={}", res.published, res.stream_len, res.covered_chunks);
        }
    }
    Ok(())
}

fn chrono_now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs() as i64)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[tokio::main(flavor = "current_thread")]
async fn main() -> ExitCode {
    match run(Args::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kf-admin: {e}");
            ExitCode::FAILURE
        }
    }
}
