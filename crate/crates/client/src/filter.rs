//! The mail filter's two passes, as library functions so the CLI and tests share them.

use std::path::Path;

use keyforge_core::mailproto::{
    self, canonical_digest, parse_message, DigestError, FailReason, HeaderError, HeaderField, KeyForgeHeader, ParseError,
    VerifyOutcome, SIGNATURE_HEADER,
};
use keyforge_core::rpc::{SignParams, VerifyParams, UNKNOWN_DOMAIN};
use serde::Deserialize;
use thiserror::Error;

use crate::{ClientError, KfClient};

/// `kf-filter` configuration file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Key server endpoint (`http://...` or `unix:/path`).
    pub keyserver: Option<String>,
    /// Signing domain; defaults to the domain of the From address.
    pub domain: Option<String>,
    /// Emit compact signatures that omit this many leading certificate levels.
    pub anchor: Option<usize>,
}

impl FilterConfig {
    pub fn load(path: &Path) -> Result<Self, FilterError> {
        let text = std::fs::read_to_string(path).map_err(|e| FilterError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| FilterError::Config(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("cannot parse message: {0}")]
    Parse(#[from] ParseError),
    #[error("message cannot be signed: {0}")]
    Unsignable(#[from] DigestError),
    #[error("no signing domain: set one in the config or give the message a From address")]
    NoDomain,
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("key server returned an unusable signature: {0}")]
    Header(#[from] HeaderError),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Default)]
pub struct SignOptions {
    pub domain: Option<String>,
    pub anchor: Option<usize>,
    pub now: Option<i64>,
}

/// Signs a raw message through the key server and returns it with the signature header first.
/// An existing signature header is replaced.
pub async fn sign_raw(client: &KfClient, raw: &[u8], opts: &SignOptions) -> Result<Vec<u8>, FilterError> {
    let mut msg = parse_message(raw)?;
    msg.remove_headers(SIGNATURE_HEADER);
    let digest = canonical_digest(&msg)?;
    let domain = match &opts.domain {
        Some(d) => d.clone(),
        None => msg
            .header("From")
            .and_then(|f| mailproto::addr_domain(&mailproto::addr_spec(&f.value())).map(str::to_string))
            .ok_or(FilterError::NoDomain)?,
    };
    let signed = client
        .sign(&SignParams {
            domain,
            digest,
            now: opts.now,
        })
        .await?;
    let mut header = KeyForgeHeader {
        version: mailproto::HEADER_VERSION,
        domain: signed.domain,
        tag: signed
            .tag
            .parse()
            .map_err(|_| HeaderError(format!("tag {:?}", signed.tag)))?,
        expires: signed.expires,
        digest,
        anchor: None,
        signature: signed.signature,
    };
    if let Some(anchor) = opts.anchor {
        header = header.compact(anchor)?;
    }
    msg.headers.insert(0, HeaderField::new(SIGNATURE_HEADER, &header.render()));
    Ok(msg.render())
}

/// Checks a received message. Local checks (header presence, digest) come first; the key
/// server resolves the sender's parameters and checks tag and signature.
pub async fn verify_raw(client: &KfClient, raw: &[u8], now: Option<i64>) -> Result<VerifyOutcome, FilterError> {
    use VerifyOutcome::Fail;
    let msg = parse_message(raw)?;
    let Some(field) = msg.header(SIGNATURE_HEADER) else {
        return Ok(Fail(FailReason::MissingHeader));
    };
    let Ok(header) = KeyForgeHeader::parse(&field.value()) else {
        return Ok(Fail(FailReason::BadSignature));
    };
    let mut unsigned = msg.clone();
    unsigned.remove_headers(SIGNATURE_HEADER);
    match canonical_digest(&unsigned) {
        Ok(d) if d == header.digest => {}
        _ => return Ok(Fail(FailReason::DigestMismatch)),
    }
    let params = VerifyParams {
        domain: header.domain,
        digest: header.digest,
        tag: header.tag.to_string(),
        expires: Some(header.expires),
        signature: header.signature,
        anchor: header.anchor,
        now,
    };
    match client.verify(&params).await {
        Ok(r) if r.ok => Ok(VerifyOutcome::Pass),
        Ok(r) => r
            .reason
            .as_deref()
            .and_then(FailReason::from_code)
            .map(Fail)
            .ok_or_else(|| ClientError::Protocol(format!("unknown reason {:?}", r.reason)).into()),
        Err(e) if e.rpc_code() == Some(UNKNOWN_DOMAIN) => Ok(Fail(FailReason::UnknownDomain)),
        Err(e) => Err(e.into()),
    }
}
