//! JSON-RPC 2.0 dispatch. Transport-agnostic: HTTP and the Unix socket both hand raw request
//! text to [`handle_text`] and send back whatever it returns.

use std::sync::Arc;

use keyforge_core::ffs::FfsError;
use keyforge_core::keyforge::{self, ForgeRequest, KeyForgeError, ParamRecord};
use keyforge_core::mailproto::{self, addr_domain, addr_spec, KeyForgeHeader, KeyResolver, VerifyOutcome};
use keyforge_core::crypto::GroupElement;
use keyforge_core::rpc::{self, *};
use keyforge_core::tagtree::{Tag, TagError};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::directory::FetchError;
use crate::state::AppState;

/// Largest accepted request body, in bytes.
pub const MAX_REQUEST_BYTES: usize = 1 << 20;

#[derive(Debug)]
struct Failure {
    code: i64,
    message: String,
}

impl Failure {
    fn new(code: i64, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<FetchError> for Failure {
    fn from(e: FetchError) -> Self {
        match e {
            FetchError::UnknownDomain(_) => Failure::new(UNKNOWN_DOMAIN, e.to_string()),
            _ => Failure::new(RESOLUTION_FAILED, e.to_string()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

/// Handles one request (or batch) and returns the serialized response.
pub async fn handle_text(state: &Arc<AppState>, text: &str) -> String {
    if text.len() > MAX_REQUEST_BYTES {
        return to_text(&RpcResponse::err(Value::Null, INVALID_REQUEST, "request too large"));
    }
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return to_text(&RpcResponse::err(Value::Null, PARSE_ERROR, e.to_string())),
    };
    match value {
        Value::Array(items) if items.is_empty() => {
            to_text(&RpcResponse::err(Value::Null, INVALID_REQUEST, "empty batch"))
        }
        Value::Array(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(handle_value(state, item).await);
            }
            serde_json::to_string(&out).expect("responses serialize")
        }
        other => to_text(&handle_value(state, other).await),
    }
}

fn to_text(resp: &RpcResponse) -> String {
    serde_json::to_string(resp).expect("response serializes")
}

pub async fn handle_value(state: &Arc<AppState>, value: Value) -> RpcResponse {
    let id = match value.get("id") {
        Some(id @ (Value::Null | Value::Number(_) | Value::String(_))) => id.clone(),
        _ => Value::Null,
    };
    let req: RpcRequest = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return RpcResponse::err(id, INVALID_REQUEST, e.to_string()),
    };
    if req.jsonrpc != "2.0" {
        return RpcResponse::err(id, INVALID_REQUEST, "jsonrpc must be \"2.0\"");
    }
    let result = match req.method.as_str() {
        rpc::METHOD_SIGN => run(state, req.params, sign).await,
        rpc::METHOD_VERIFY => run(state, req.params, verify).await,
        rpc::METHOD_FORGE_REQUEST => run(state, req.params, forge_request).await,
        rpc::METHOD_PUBLISH_NOW => run(state, req.params, publish_now).await,
        rpc::METHOD_ROTATE => run(state, req.params, rotate).await,
        other => Err(Failure::new(METHOD_NOT_FOUND, format!("no method {other:?}"))),
    };
    match result {
        Ok(v) => RpcResponse::ok(id, v),
        Err(f) => RpcResponse::err(id, f.code, f.message),
    }
}

async fn run<P, R, F, Fut>(state: &Arc<AppState>, params: Value, f: F) -> Outcome<Value>
where
    P: DeserializeOwned,
    R: Serialize,
    F: FnOnce(Arc<AppState>, P) -> Fut,
    Fut: std::future::Future<Output = Outcome<R>>,
{
    let params: P = serde_json::from_value(params).map_err(|e| Failure::new(INVALID_PARAMS, e.to_string()))?;
    let r = f(state.clone(), params).await?;
    Ok(serde_json::to_value(r).expect("result serializes"))
}

fn request_time(state: &AppState, now: Option<i64>) -> Outcome<i64> {
    match now {
        None => Ok(state.now()),
        Some(t) if state.config.allow_client_clock => Ok(t),
        Some(_) => Err(Failure::new(CLOCK_OVERRIDE_DISABLED, "client clock overrides are disabled")),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Outcome<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Failure::new(INTERNAL_ERROR, e.to_string()))
}

fn kf_failure(e: KeyForgeError) -> Failure {
    match e {
        KeyForgeError::Tag(TagError::OutOfSpan(_)) | KeyForgeError::Ffs(FfsError::Tag(TagError::OutOfSpan(_))) => {
            Failure::new(OUT_OF_SPAN, format!("{e}; key rotation is due"))
        }
        other => Failure::new(INTERNAL_ERROR, other.to_string()),
    }
}

async fn sign(state: Arc<AppState>, p: SignParams) -> Outcome<SignResult> {
    let now = request_time(&state, p.now)?;
    let key = state
        .keys
        .get(&p.domain)
        .ok_or_else(|| Failure::new(UNKNOWN_DOMAIN, format!("no key for {}", p.domain)))?;
    let st = state.clone();
    let ksig = blocking(move || keyforge::kf_sign_at(&key.keys, &key.domain, &p.digest, &st.kf, now))
        .await?
        .map_err(kf_failure)?;
    let expires = state.space().time_range(&ksig.tag).map_or(0, |(_, end)| end);
    Ok(SignResult {
        domain: ksig.domain,
        tag: ksig.tag.to_string(),
        expires,
        signature: ksig.sig.to_bytes(),
    })
}

/// Verification material fetched ahead of the (synchronous) verification itself.
struct Prefetched {
    domain: String,
    mvk: GroupElement,
    record: Option<ParamRecord>,
}

impl KeyResolver for Prefetched {
    fn master_key(&self, domain: &str) -> Option<GroupElement> {
        domain.eq_ignore_ascii_case(&self.domain).then_some(self.mvk)
    }

    fn params(&self, domain: &str, prefix: &Tag) -> Option<ParamRecord> {
        self.record
            .clone()
            .filter(|r| domain.eq_ignore_ascii_case(&self.domain) && &r.prefix == prefix)
    }
}

async fn master_key(state: &AppState, domain: &str, now: i64) -> Result<GroupElement, FetchError> {
    let root = state.cache.get(domain, &Tag::new(vec![]), now).await?;
    root.verify().ok_or_else(|| FetchError::Invalid(format!("{domain} root record")))
}

fn reject(reason: mailproto::FailReason) -> VerifyResult {
    VerifyResult {
        ok: false,
        reason: Some(reason.code().to_string()),
    }
}

async fn verify(state: Arc<AppState>, p: VerifyParams) -> Outcome<VerifyResult> {
    let now = request_time(&state, p.now)?;
    let mvk = master_key(&state, &p.domain, now).await?;
    let Ok(tag) = p.tag.parse::<Tag>() else {
        return Ok(reject(mailproto::FailReason::BadSignature));
    };
    let record = match p.anchor {
        Some(anchor) if anchor <= tag.len() => match state.cache.get(&p.domain, &tag.prefix(anchor), now).await {
            Ok(r) => Some(r),
            Err(FetchError::UnknownPrefix(_)) => None,
            Err(e) => return Err(e.into()),
        },
        _ => None,
    };
    let expires = p
        .expires
        .or_else(|| state.space().time_range(&tag).map(|(_, end)| end))
        .unwrap_or(0);
    let header = KeyForgeHeader {
        version: mailproto::HEADER_VERSION,
        domain: p.domain.to_ascii_lowercase(),
        tag,
        expires,
        digest: p.digest,
        anchor: p.anchor,
        signature: p.signature,
    };
    let resolver = Prefetched {
        domain: header.domain.clone(),
        mvk,
        record,
    };
    let st = state.clone();
    let outcome = blocking(move || mailproto::verify_header(&header, &resolver, &st.kf, now)).await?;
    Ok(match outcome {
        VerifyOutcome::Pass => VerifyResult { ok: true, reason: None },
        VerifyOutcome::Fail(r) => reject(r),
    })
}

async fn forge_request(state: Arc<AppState>, p: ForgeRequestParams) -> Outcome<ForgeRequestResult> {
    let now = request_time(&state, p.now)?;
    let key = state
        .keys
        .get(&p.domain)
        .ok_or_else(|| Failure::new(UNKNOWN_DOMAIN, format!("no key for {}", p.domain)))?;
    let req = ForgeRequest::from_bytes(&p.request).map_err(|e| Failure::new(INVALID_PARAMS, e.to_string()))?;
    let requester_domain = addr_domain(&addr_spec(&req.requester))
        .ok_or_else(|| Failure::new(FORGE_REJECTED, "requester has no domain"))?
        .to_string();
    let mvk = match master_key(&state, &requester_domain, now).await {
        Ok(k) => k,
        Err(FetchError::UnknownDomain(d)) => return Err(Failure::new(FORGE_REJECTED, format!("unknown requester domain {d}"))),
        Err(e) => return Err(e.into()),
    };
    let resolver = Prefetched {
        domain: requester_domain,
        mvk,
        record: None,
    };
    let st = state.clone();
    let resp = blocking(move || keyforge::forge_on_request(&key.keys, &key.domain, &req, &resolver, &st.kf, now))
        .await?
        .map_err(|e| Failure::new(FORGE_REJECTED, e.to_string()))?;
    Ok(ForgeRequestResult {
        emails: resp.emails.iter().map(|m| B64Bytes(m.render())).collect(),
    })
}

fn authorize(state: &AppState, token: &str) -> Outcome<()> {
    match &state.config.admin_token {
        Some(t) if !t.is_empty() && constant_time_eq(t.as_bytes(), token.as_bytes()) => Ok(()),
        _ => Err(Failure::new(UNAUTHORIZED, "admin token required")),
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn publish_now(state: Arc<AppState>, p: AdminParams) -> Outcome<PublishResult> {
    authorize(&state, &p.token)?;
    let now = request_time(&state, p.now)?;
    if state.keys.get(&p.domain).is_none() {
        return Err(Failure::new(UNKNOWN_DOMAIN, format!("no key for {}", p.domain)));
    }
    state
        .publish(&p.domain, now, true)
        .await
        .map_err(|e| Failure::new(INTERNAL_ERROR, e.to_string()))
}

async fn rotate(state: Arc<AppState>, p: AdminParams) -> Outcome<RotateResult> {
    authorize(&state, &p.token)?;
    let now = request_time(&state, p.now)?;
    let (generation, mvk) = state
        .rotate(&p.domain, now)
        .await
        .map_err(|e| Failure::new(INTERNAL_ERROR, e.to_string()))?;
    Ok(RotateResult {
        domain: p.domain.to_ascii_lowercase(),
        generation,
        master_key: mvk.to_vec(),
    })
}
