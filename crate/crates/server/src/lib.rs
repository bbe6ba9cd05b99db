//! The KeyForge key server: signs mail digests for the domains it holds keys for, verifies
//! signatures from any domain it can resolve, answers forge requests, and publishes expiry
//! information on a fixed cadence.

pub mod config;
pub mod directory;
pub mod dispatch;
pub mod http;
pub mod keys;
pub mod publish;
pub mod socket;
pub mod state;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

pub use config::ServerConfig;
pub use state::{AppState, ServerError};

/// Runs the publication scheduler: checks every `tick` whether new expiry is due for any domain.
pub fn spawn_scheduler(state: Arc<AppState>, tick: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            interval.tick().await;
            let now = state.now();
            for domain in state.keys.domains() {
                if let Err(e) = state.publish(&domain, now, false).await {
                    tracing::warn!(%domain, "expiry publication failed: {e}");
                }
            }
        }
    })
}

/// Serves HTTP on an already bound listener.
pub async fn serve_http(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, http::router(state)).await
}

/// Binds `addr` and serves HTTP in the background; returns the bound address.
pub async fn spawn_http(
    state: Arc<AppState>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    Ok((bound, tokio::spawn(serve_http(state, listener))))
}

/// Everything `kf-server` runs: HTTP, the optional Unix socket, and the scheduler.
pub async fn run(config: ServerConfig) -> Result<(), ServerError> {
    let state = AppState::from_config(config)?;
    let tick = Duration::from_secs(state.kf.expiry_interval.clamp(1, 60) as u64);
    spawn_scheduler(state.clone(), tick);
    if let Some(path) = state.config.socket.clone() {
        let listener = socket::bind(&path)?;
        tracing::info!(path = %path.display(), "serving JSON-RPC on unix socket");
        tokio::spawn(socket::serve(state.clone(), listener));
    }
    let listener = tokio::net::TcpListener::bind(state.config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, domains = ?state.keys.domains(), "key server listening");
    serve_http(state, listener).await?;
    Ok(())
}
