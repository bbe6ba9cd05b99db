//! Async client for the key server's JSON-RPC and HTTP interfaces.
//!
//! Endpoints are either an HTTP base URL (`http://host:port`) or a Unix socket
//! (`unix:/path/to/socket`). Parameter and expiry downloads need HTTP.

pub mod filter;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use keyforge_core::ffs::ExpiryInfo;
use keyforge_core::keyforge::ParamRecord;
use keyforge_core::rpc::*;
use keyforge_core::tagtree::Tag;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("server error {code}: {message}")]
    Rpc { code: i64, message: String },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("not found: {0}")]
    NotFound(String),
}

impl ClientError {
    /// The JSON-RPC error code, if the server answered with one.
    pub fn rpc_code(&self) -> Option<i64> {
        match self {
            ClientError::Rpc { code, .. } => Some(*code),
            _ => None,
        }
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

#[derive(Debug, Clone)]
enum Endpoint {
    Http(String),
    Unix(PathBuf),
}

#[derive(Debug)]
pub struct KfClient {
    endpoint: Endpoint,
    http: reqwest::Client,
    next_id: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamListing {
    pub domain: String,
    pub generation: u32,
    pub entries: Vec<StreamEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub index: usize,
    pub covered_chunks: u64,
}

impl KfClient {
    pub fn new(endpoint: &str) -> Result<Self, ClientError> {
        let endpoint = if let Some(path) = endpoint.strip_prefix("unix:") {
            Endpoint::Unix(PathBuf::from(path))
        } else if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            Endpoint::Http(endpoint.trim_end_matches('/').to_string())
        } else {
            return Err(ClientError::Transport(format!(
                "endpoint {endpoint:?} must be http(s)://... or unix:/path"
            )));
        };
        Ok(KfClient {
            endpoint,
            http: reqwest::Client::new(),
            next_id: AtomicU64::new(1),
        })
    }

    /// Sends raw request text and returns the raw response text.
    pub async fn send_text(&self, body: &str) -> Result<String, ClientError> {
        match &self.endpoint {
            Endpoint::Http(base) => Ok(self
                .http
                .post(format!("{base}/rpc"))
                .header("content-type", "application/json")
                .body(body.to_string())
                .send()
                .await?
                .error_for_status()?
                .text()
                .await?),
            Endpoint::Unix(path) => {
                let io = |e: std::io::Error| ClientError::Transport(e.to_string());
                let stream = tokio::net::UnixStream::connect(path).await.map_err(io)?;
                let (read, mut write) = stream.into_split();
                write.write_all(body.trim_end().as_bytes()).await.map_err(io)?;
                write.write_all(b"\n").await.map_err(io)?;
                let mut line = String::new();
                BufReader::new(read).read_line(&mut line).await.map_err(io)?;
                Ok(line)
            }
        }
    }

    pub async fn call_raw(&self, req: &RpcRequest) -> Result<RpcResponse, ClientError> {
        let text = self
            .send_text(&serde_json::to_string(req).expect("request serializes"))
            .await?;
        serde_json::from_str(&text).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    pub async fn call<P: Serialize, R: DeserializeOwned>(&self, method: &str, params: P) -> Result<R, ClientError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let resp = self.call_raw(&RpcRequest::new(method, params, id)).await?;
        if resp.id != id {
            return Err(ClientError::Protocol(format!("response id {} for request {id}", resp.id)));
        }
        match (resp.result, resp.error) {
            (_, Some(e)) => Err(ClientError::Rpc {
                code: e.code,
                message: e.message,
            }),
            (Some(v), None) => serde_json::from_value(v).map_err(|e| ClientError::Protocol(e.to_string())),
            (None, None) => Err(ClientError::Protocol("response without result".into())),
        }
    }

    pub async fn sign(&self, params: &SignParams) -> Result<SignResult, ClientError> {
        self.call(METHOD_SIGN, params).await
    }

    pub async fn verify(&self, params: &VerifyParams) -> Result<VerifyResult, ClientError> {
        self.call(METHOD_VERIFY, params).await
    }

    pub async fn forge_request(&self, params: &ForgeRequestParams) -> Result<ForgeRequestResult, ClientError> {
        self.call(METHOD_FORGE_REQUEST, params).await
    }

    pub async fn publish_now(&self, params: &AdminParams) -> Result<PublishResult, ClientError> {
        self.call(METHOD_PUBLISH_NOW, params).await
    }

    pub async fn rotate(&self, params: &AdminParams) -> Result<RotateResult, ClientError> {
        self.call(METHOD_ROTATE, params).await
    }

    fn base(&self) -> Result<&str, ClientError> {
        match &self.endpoint {
            Endpoint::Http(b) => Ok(b),
            Endpoint::Unix(_) => Err(ClientError::Transport("directory downloads need an HTTP endpoint".into())),
        }
    }

    async fn get_bytes(&self, url: String) -> Result<Vec<u8>, ClientError> {
        let resp = self.http.get(&url).send().await?;
        if resp.status() == reqwest::StatusCode::NOT_FOUND {
            return Err(ClientError::NotFound(url));
        }
        Ok(resp.error_for_status()?.bytes().await?.to_vec())
    }

    /// The parameter record `domain` publishes for `prefix` (the root record for an empty tag).
    pub async fn params(&self, domain: &str, prefix: &Tag) -> Result<ParamRecord, ClientError> {
        let path = if prefix.is_empty() { "root".to_string() } else { prefix.to_string() };
        let bytes = self.get_bytes(format!("{}/params/{domain}/{path}", self.base()?)).await?;
        ParamRecord::from_bytes(&bytes).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    pub async fn expiry_list(&self, domain: &str) -> Result<StreamListing, ClientError> {
        let bytes = self.get_bytes(format!("{}/expiry/{domain}", self.base()?)).await?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    /// A publication by stream position.
    pub async fn expiry(&self, domain: &str, index: usize) -> Result<ExpiryInfo, ClientError> {
        let bytes = self.get_bytes(format!("{}/expiry/{domain}/{index}", self.base()?)).await?;
        ExpiryInfo::from_bytes(&bytes).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    pub async fn latest_expiry(&self, domain: &str) -> Result<ExpiryInfo, ClientError> {
        let bytes = self.get_bytes(format!("{}/expiry/{domain}/latest", self.base()?)).await?;
        ExpiryInfo::from_bytes(&bytes).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}
