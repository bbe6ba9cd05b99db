//! HTTP front end: `POST /rpc`, the parameter directory and the expiry streams.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use keyforge_core::tagtree::Tag;
use serde::Serialize;

use crate::directory::FetchError;
use crate::dispatch::{self, MAX_REQUEST_BYTES};
use crate::state::AppState;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/rpc", post(rpc))
        .route("/params/:domain", get(params_root))
        .route("/params/:domain/*prefix", get(params))
        .route("/expiry/:domain", get(expiry_list))
        .route("/expiry/:domain/:index", get(expiry))
        .route("/healthz", get(|| async { "ok" }))
        .layer(DefaultBodyLimit::max(MAX_REQUEST_BYTES))
        .with_state(state)
}

async fn rpc(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let text = String::from_utf8_lossy(&body);
    let out = dispatch::handle_text(&state, &text).await;
    ([(header::CONTENT_TYPE, "application/json")], out).into_response()
}

fn binary(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response()
}

fn not_found(msg: impl Into<String>) -> Response {
    (StatusCode::NOT_FOUND, msg.into()).into_response()
}

/// `root` (or an empty path) names the root prefix; otherwise `a/b/c`.
pub fn parse_prefix(text: &str) -> Option<Tag> {
    let text = text.trim_matches('/');
    if text.is_empty() || text == "root" {
        return Some(Tag::new(vec![]));
    }
    text.parse().ok()
}

fn serve_params(state: &AppState, domain: &str, prefix: &str) -> Response {
    let Some(prefix) = parse_prefix(prefix) else {
        return (StatusCode::BAD_REQUEST, "bad prefix").into_response();
    };
    match state.local.lookup(domain, &prefix) {
        Ok(record) => binary(record.to_bytes()),
        Err(e @ (FetchError::UnknownDomain(_) | FetchError::UnknownPrefix(_))) => not_found(e.to_string()),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn params_root(State(state): State<Arc<AppState>>, Path(domain): Path<String>) -> Response {
    serve_params(&state, &domain, "root")
}

async fn params(State(state): State<Arc<AppState>>, Path((domain, prefix)): Path<(String, String)>) -> Response {
    serve_params(&state, &domain, &prefix)
}

#[derive(Serialize)]
struct StreamListing {
    domain: String,
    generation: u32,
    entries: Vec<StreamEntry>,
}

#[derive(Serialize)]
struct StreamEntry {
    index: usize,
    covered_chunks: u64,
}

async fn expiry_list(State(state): State<Arc<AppState>>, Path(domain): Path<String>) -> Response {
    let Some(key) = state.keys.get(&domain) else {
        return not_found("unknown domain");
    };
    match state.store.list(&key.domain, key.generation) {
        Ok(list) => Json(StreamListing {
            domain: key.domain.clone(),
            generation: key.generation,
            entries: list
                .into_iter()
                .map(|p| StreamEntry {
                    index: p.index,
                    covered_chunks: p.covered,
                })
                .collect(),
        })
        .into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// `index` is the position in the stream, or `latest`.
async fn expiry(State(state): State<Arc<AppState>>, Path((domain, index)): Path<(String, String)>) -> Response {
    let Some(key) = state.keys.get(&domain) else {
        return not_found("unknown domain");
    };
    let index = if index == "latest" {
        match state.store.list(&key.domain, key.generation) {
            Ok(list) if !list.is_empty() => list.len() - 1,
            Ok(_) => return not_found("nothing published yet"),
            Err(e) => return (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        }
    } else {
        match index.parse::<usize>() {
            Ok(i) => i,
            Err(_) => return (StatusCode::BAD_REQUEST, "bad index").into_response(),
        }
    };
    match state.store.read(&key.domain, key.generation, index) {
        Ok(Some(bytes)) => binary(bytes),
        Ok(None) => not_found("no such publication"),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}
