//! Newline-delimited JSON-RPC over a Unix socket: one request per line, one response per line.

use std::path::Path;
use std::sync::Arc;

use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{UnixListener, UnixStream};

use crate::dispatch::{self, MAX_REQUEST_BYTES};
use crate::state::AppState;

pub fn bind(path: &Path) -> std::io::Result<UnixListener> {
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    UnixListener::bind(path)
}

pub async fn serve(state: Arc<AppState>, listener: UnixListener) -> std::io::Result<()> {
    loop {
        let (stream, _) = listener.accept().await?;
        let state = state.clone();
        tokio::spawn(async move {
            if let Err(e) = connection(state, stream).await {
                tracing::debug!("socket connection ended: {e}");
            }
        });
    }
}

async fn connection(state: Arc<AppState>, stream: UnixStream) -> std::io::Result<()> {
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = (&mut reader)
            .take(MAX_REQUEST_BYTES as u64 + 1)
            .read_until(b'\n', &mut line)
            .await?;
        if n == 0 {
            return Ok(());
        }
        let text = String::from_utf8_lossy(&line);
        if text.trim().is_empty() {
            continue;
        }
        let mut out = dispatch::handle_text(&state, text.trim_end()).await;
        out.push('\n');
        write.write_all(out.as_bytes()).await?;
        if line.len() > MAX_REQUEST_BYTES {
            // The rest of an oversized line cannot be resynchronized; drop the connection.
            return Ok(());
        }
    }
}
