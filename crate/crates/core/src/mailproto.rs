//! Minimal message handling for the mail filter: parsing, canonical digests, the
//! `X-KeyForge-Signature` header, and the sign/verify pipeline.
//!
//! Only a small RFC 5322 subset is understood. Bodies are opaque bytes; header values are kept
//! exactly as received (including folding) so that re-rendering a parsed message reproduces it.

use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::{Decoder, Encoder};
use crate::hibs::{ChainLink, HibsMasterKeys, HibsSignature};
use crate::keyforge::{self, KeyForgeConfig, KeyForgeError, KeyForgeSignature, ParamRecord};
use crate::crypto::{GroupElement, Signature};
use crate::tagtree::Tag;

pub const SIGNATURE_HEADER: &str = "X-KeyForge-Signature";
pub const HEADER_VERSION: u32 = 1;

/// Header fields covered by the canonical digest, in digest order.
pub const SIGNED_HEADERS: [&str; 5] = ["from", "to", "subject", "date", "message-id"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("header line without a colon")]
    MissingColon,
    #[error("empty header name")]
    EmptyName,
    #[error("invalid byte in header name")]
    BadNameByte,
    #[error("continuation line before any header")]
    OrphanContinuation,
    #[error("header is not valid UTF-8")]
    NonUtf8Header,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderField {
    name: String,
    /// Everything after the colon, folding preserved, without the final line break.
    raw: String,
}

impl HeaderField {
    pub fn new(name: &str, value: &str) -> Self {
        HeaderField {
            name: name.to_string(),
            raw: format!(" {value}"),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn raw_value(&self) -> &str {
        &self.raw
    }

    /// Unfolded value with surrounding whitespace removed.
    pub fn value(&self) -> String {
        self.raw.replace("\r\n", "").trim().to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MailMessage {
    pub headers: Vec<HeaderField>,
    pub body: Vec<u8>,
}

impl MailMessage {
    pub fn new(headers: &[(&str, &str)], body: &[u8]) -> Self {
        MailMessage {
            headers: headers.iter().map(|(n, v)| HeaderField::new(n, v)).collect(),
            body: body.to_vec(),
        }
    }

    /// First header with this name (case-insensitive).
    pub fn header(&self, name: &str) -> Option<&HeaderField> {
        self.headers.iter().find(|h| h.name.eq_ignore_ascii_case(name))
    }

    pub fn remove_headers(&mut self, name: &str) {
        self.headers.retain(|h| !h.name.eq_ignore_ascii_case(name));
    }

    pub fn render(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.body.len() + 64 * self.headers.len());
        for h in &self.headers {
            out.extend_from_slice(h.name.as_bytes());
            out.push(b':');
            out.extend_from_slice(h.raw.as_bytes());
            out.extend_from_slice(b"\r\n");
        }
        out.extend_from_slice(b"\r\n");
        out.extend_from_slice(&self.body);
        out
    }
}

/// Splits `raw` into lines, yielding `(start_offset, line_without_terminator)`.
fn lines(raw: &[u8]) -> impl Iterator<Item = (usize, &[u8], usize)> {
    let mut pos = 0;
    std::iter::from_fn(move || {
        if pos >= raw.len() {
            return None;
        }
        let start = pos;
        let (end, next) = match raw[pos..].iter().position(|&b| b == b'\n') {
            Some(i) => {
                let nl = pos + i;
                let end = if nl > start && raw[nl - 1] == b'\r' { nl - 1 } else { nl };
                (end, nl + 1)
            }
            None => (raw.len(), raw.len()),
        };
        pos = next;
        Some((start, &raw[start..end], next))
    })
}

/// Converts bare LF line endings to CRLF.
pub fn normalize_crlf(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + body.len() / 32);
    for (i, &b) in body.iter().enumerate() {
        if b == b'\n' && (i == 0 || body[i - 1] != b'\r') {
            out.push(b'\r');
        }
        out.push(b);
    }
    out
}

pub fn parse_message(raw: &[u8]) -> Result<MailMessage, ParseError> {
    let mut headers: Vec<HeaderField> = Vec::new();
    let mut body_start = raw.len();
    for (start, line, next) in lines(raw) {
        if line.is_empty() {
            body_start = next;
            break;
        }
        let text = std::str::from_utf8(line).map_err(|e| ParseError {
            offset: start + e.valid_up_to(),
            kind: ParseErrorKind::NonUtf8Header,
        })?;
        if line[0] == b' ' || line[0] == b'\t' {
            let last = headers.last_mut().ok_or(ParseError {
                offset: start,
                kind: ParseErrorKind::OrphanContinuation,
            })?;
            last.raw.push_str("\r\n");
            last.raw.push_str(text);
            continue;
        }
        let colon = text.find(':').ok_or(ParseError {
            offset: start,
            kind: ParseErrorKind::MissingColon,
        })?;
        let name = &text[..colon];
        if name.is_empty() {
            return Err(ParseError { offset: start, kind: ParseErrorKind::EmptyName });
        }
        if let Some(i) = name.bytes().position(|b| !(33..=126).contains(&b)) {
            return Err(ParseError { offset: start + i, kind: ParseErrorKind::BadNameByte });
        }
        headers.push(HeaderField {
            name: name.to_string(),
            raw: text[colon + 1..].to_string(),
        });
    }
    Ok(MailMessage {
        headers,
        body: normalize_crlf(&raw[body_start.min(raw.len())..]),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DigestError {
    #[error("message has no {0} header")]
    MissingHeader(&'static str),
}

fn normalize_ws(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// SHA-256 over the fixed header subset (whitespace-normalized) and the exact body bytes.
pub fn canonical_digest(msg: &MailMessage) -> Result<[u8; 32], DigestError> {
    for required in ["From", "To"] {
        if msg.header(required).is_none() {
            return Err(DigestError::MissingHeader(required));
        }
    }
    let mut enc = Encoder::new();
    enc.put_bytes(b"kf/mail/v1");
    for name in SIGNED_HEADERS {
        match msg.header(name) {
            Some(h) => {
                enc.put_u8(1).put_bytes(name.as_bytes()).put_bytes(normalize_ws(&h.value()).as_bytes());
            }
            None => {
                enc.put_u8(0).put_bytes(name.as_bytes());
            }
        }
    }
    enc.put_bytes(&msg.body);
    Ok(Sha256::digest(enc.finish()).into())
}

/// The `X-KeyForge-Signature` header value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyForgeHeader {
    pub version: u32,
    pub domain: String,
    pub tag: Tag,
    /// End of the tag's chunk (UTC seconds); a hint for receivers.
    pub expires: i64,
    pub digest: [u8; 32],
    /// Number of leading tag levels whose certificates are omitted (fetched as cached params).
    pub anchor: Option<usize>,
    /// Full [`HibsSignature`] encoding, or the compact form when `anchor` is set.
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed signature header: {0}")]
pub struct HeaderError(pub String);

impl KeyForgeHeader {
    /// Renders as folded `k=v` parameters.
    pub fn render(&self) -> String {
        let mut s = format!(
            "v={}; d={}; t={}; x={}; h={};",
            self.version,
            self.domain,
            self.tag,
            self.expires,
            B64.encode(self.digest)
        );
        if let Some(a) = self.anchor {
            s.push_str(&format!(" p={a};"));
        }
        s.push_str("\r\n\tb=");
        let b = B64.encode(&self.signature);
        for (i, chunk) in b.as_bytes().chunks(72).enumerate() {
            if i > 0 {
                s.push_str("\r\n\t");
            }
            s.push_str(std::str::from_utf8(chunk).expect("base64 is ascii"));
        }
        s
    }

    pub fn parse(value: &str) -> Result<Self, HeaderError> {
        let err = |m: &str| HeaderError(m.to_string());
        let unfolded = value.replace("\r\n", "");
        let mut version = None;
        let mut domain = None;
        let mut tag = None;
        let mut expires = None;
        let mut digest = None;
        let mut anchor = None;
        let mut signature = None;
        for part in unfolded.split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (k, v) = part.split_once('=').ok_or_else(|| err("parameter without '='"))?;
            let k = k.trim();
            let v = v.trim();
            let compact: String = v.chars().filter(|c| !c.is_ascii_whitespace()).collect();
            let dup = |set: bool| if set { Err(err("duplicate parameter")) } else { Ok(()) };
            match k {
                "v" => {
                    dup(version.is_some())?;
                    version = Some(v.parse::<u32>().map_err(|_| err("bad version"))?);
                }
                "d" => {
                    dup(domain.is_some())?;
                    if v.is_empty() || !v.bytes().all(|b| b.is_ascii_alphanumeric() || b"-._".contains(&b)) {
                        return Err(err("bad domain"));
                    }
                    domain = Some(v.to_ascii_lowercase());
                }
                "t" => {
                    dup(tag.is_some())?;
                    tag = Some(v.parse::<Tag>().map_err(|_| err("bad tag"))?);
                }
                "x" => {
                    dup(expires.is_some())?;
                    expires = Some(v.parse::<i64>().map_err(|_| err("bad expiry"))?);
                }
                "h" => {
                    dup(digest.is_some())?;
                    let bytes = B64.decode(&compact).map_err(|_| err("bad digest"))?;
                    digest = Some(<[u8; 32]>::try_from(bytes.as_slice()).map_err(|_| err("bad digest length"))?);
                }
                "p" => {
                    dup(anchor.is_some())?;
                    anchor = Some(v.parse::<usize>().map_err(|_| err("bad anchor"))?);
                }
                "b" => {
                    dup(signature.is_some())?;
                    signature = Some(B64.decode(&compact).map_err(|_| err("bad signature encoding"))?);
                }
                _ => {} // unknown parameters are ignored for forward compatibility
            }
        }
        let version = version.ok_or_else(|| err("missing v"))?;
        if version != HEADER_VERSION {
            return Err(err("unsupported version"));
        }
        Ok(KeyForgeHeader {
            version,
            domain: domain.ok_or_else(|| err("missing d"))?,
            tag: tag.ok_or_else(|| err("missing t"))?,
            expires: expires.ok_or_else(|| err("missing x"))?,
            digest: digest.ok_or_else(|| err("missing h"))?,
            anchor,
            signature: signature.ok_or_else(|| err("missing b"))?,
        })
    }

    pub fn from_signature(ksig: &KeyForgeSignature, digest: [u8; 32], cfg: &KeyForgeConfig) -> Self {
        let expires = cfg.space.time_range(&ksig.tag).map_or(0, |(_, end)| end);
        KeyForgeHeader {
            version: HEADER_VERSION,
            domain: ksig.domain.clone(),
            tag: ksig.tag.clone(),
            expires,
            digest,
            anchor: None,
            signature: ksig.sig.to_bytes(),
        }
    }

    /// Drops the first `anchor` certificate links; receivers fetch them as a [`ParamRecord`].
    pub fn compact(mut self, anchor: usize) -> Result<Self, HeaderError> {
        if self.anchor.is_some() {
            return Err(HeaderError("already compact".into()));
        }
        let sig = HibsSignature::from_bytes(&self.signature).map_err(|e| HeaderError(e.to_string()))?;
        if anchor > sig.chain.len() {
            return Err(HeaderError("anchor deeper than signature".into()));
        }
        let mut enc = Encoder::new();
        enc.put_u32((sig.chain.len() - anchor) as u32);
        for link in &sig.chain[anchor..] {
            enc.put_fixed(&link.level_pk.to_bytes());
            link.cert.encode(&mut enc);
        }
        sig.leaf_sig.encode(&mut enc);
        self.signature = enc.finish();
        self.anchor = Some(anchor);
        Ok(self)
    }
}

fn decode_compact(bytes: &[u8]) -> Option<(Vec<ChainLink>, Signature)> {
    let mut dec = Decoder::new(bytes);
    let n = dec.get_count(96).ok()?;
    let mut links = Vec::with_capacity(n);
    for _ in 0..n {
        let level_pk = GroupElement::from_bytes(dec.get_fixed(32).ok()?).ok()?;
        let cert = Signature::decode(&mut dec).ok()?;
        links.push(ChainLink { level_pk, cert });
    }
    let leaf = Signature::decode(&mut dec).ok()?;
    dec.finish().ok()?;
    Some((links, leaf))
}

/// Looks up verification material for sending domains.
pub trait KeyResolver {
    fn master_key(&self, domain: &str) -> Option<GroupElement>;

    /// Cached parameters for `prefix`; only needed for compact headers.
    fn params(&self, _domain: &str, _prefix: &Tag) -> Option<ParamRecord> {
        None
    }
}

impl<F> KeyResolver for F
where
    F: Fn(&str) -> Option<GroupElement>,
{
    fn master_key(&self, domain: &str) -> Option<GroupElement> {
        self(domain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailReason {
    MissingHeader,
    DigestMismatch,
    TagExpiredAtReceipt,
    BadSignature,
    UnknownDomain,
}

impl FailReason {
    pub fn code(&self) -> &'static str {
        match self {
            FailReason::MissingHeader => "missing-header",
            FailReason::DigestMismatch => "digest-mismatch",
            FailReason::TagExpiredAtReceipt => "tag-expired-at-receipt",
            FailReason::BadSignature => "bad-signature",
            FailReason::UnknownDomain => "unknown-domain",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [
            FailReason::MissingHeader,
            FailReason::DigestMismatch,
            FailReason::TagExpiredAtReceipt,
            FailReason::BadSignature,
            FailReason::UnknownDomain,
        ]
        .into_iter()
        .find(|r| r.code() == code)
    }
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    Pass,
    Fail(FailReason),
}

impl VerifyOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, VerifyOutcome::Pass)
    }
}

#[derive(Debug, Error)]
pub enum SignError {
    #[error(transparent)]
    Digest(#[from] DigestError),
    #[error(transparent)]
    KeyForge(#[from] KeyForgeError),
}

/// Attaches a signature header built from an already computed signature (e.g. one returned by the
/// key server). Any existing signature header is replaced.
pub fn attach_signature(msg: &MailMessage, ksig: &KeyForgeSignature, cfg: &KeyForgeConfig) -> Result<MailMessage, DigestError> {
    let digest = canonical_digest(msg)?;
    let header = KeyForgeHeader::from_signature(ksig, digest, cfg);
    let mut out = msg.clone();
    out.remove_headers(SIGNATURE_HEADER);
    out.headers.insert(0, HeaderField::new(SIGNATURE_HEADER, &header.render()));
    Ok(out)
}

/// Signs at the configured clock's current time.
pub fn sign_message(
    msg: &MailMessage,
    sk: &HibsMasterKeys,
    domain: &str,
    cfg: &KeyForgeConfig,
) -> Result<MailMessage, SignError> {
    sign_message_at(msg, sk, domain, cfg, cfg.now())
}

pub fn sign_message_at(
    msg: &MailMessage,
    sk: &HibsMasterKeys,
    domain: &str,
    cfg: &KeyForgeConfig,
    now: i64,
) -> Result<MailMessage, SignError> {
    let digest = canonical_digest(msg)?;
    let ksig = keyforge::kf_sign_at(sk, domain, &digest, cfg, now)?;
    Ok(attach_signature(msg, &ksig, cfg)?)
}

/// Extracts the signature from a header, expanding compact headers through the resolver.
fn header_signature(header: &KeyForgeHeader, mvk: &GroupElement, resolver: &dyn KeyResolver) -> Option<HibsSignature> {
    match header.anchor {
        None => HibsSignature::from_bytes(&header.signature).ok(),
        Some(anchor) => {
            let (tail, leaf_sig) = decode_compact(&header.signature)?;
            if anchor > header.tag.len() {
                return None;
            }
            let record = resolver.params(&header.domain, &header.tag.prefix(anchor))?;
            if record.mvk != *mvk || record.prefix != header.tag.prefix(anchor) {
                return None;
            }
            let mut chain = record.links;
            chain.extend(tail);
            Some(HibsSignature { chain, leaf_sig })
        }
    }
}

pub fn verify_message(
    msg: &MailMessage,
    resolver: &dyn KeyResolver,
    cfg: &KeyForgeConfig,
    now: i64,
) -> VerifyOutcome {
    use VerifyOutcome::Fail;
    let Some(field) = msg.header(SIGNATURE_HEADER) else {
        return Fail(FailReason::MissingHeader);
    };
    let Ok(header) = KeyForgeHeader::parse(&field.value()) else {
        return Fail(FailReason::BadSignature);
    };
    let mut unsigned = msg.clone();
    unsigned.remove_headers(SIGNATURE_HEADER);
    match canonical_digest(&unsigned) {
        Ok(d) if d == header.digest => {}
        _ => return Fail(FailReason::DigestMismatch),
    }
    verify_header(&header, resolver, cfg, now)
}

/// The checks after digest comparison: key resolution, tag validity, receipt window and the
/// signature over `header.digest`. The key server runs this for `kf.verify`.
pub fn verify_header(
    header: &KeyForgeHeader,
    resolver: &dyn KeyResolver,
    cfg: &KeyForgeConfig,
    now: i64,
) -> VerifyOutcome {
    use VerifyOutcome::Fail;
    let Some(mvk) = resolver.master_key(&header.domain) else {
        return Fail(FailReason::UnknownDomain);
    };
    if cfg.space.validate(&header.tag).is_err()
        || cfg.space.time_range(&header.tag).map(|(_, end)| end) != Some(header.expires)
    {
        return Fail(FailReason::BadSignature);
    }
    if !keyforge::within_window(cfg, &header.tag, now) {
        return Fail(FailReason::TagExpiredAtReceipt);
    }
    let Some(sig) = header_signature(header, &mvk, resolver) else {
        return Fail(FailReason::BadSignature);
    };
    let ksig = KeyForgeSignature {
        tag: header.tag.clone(),
        sig,
        domain: header.domain.clone(),
    };
    if keyforge::kf_verify_at(&mvk, &ksig, &header.digest, cfg, now) {
        VerifyOutcome::Pass
    } else {
        Fail(FailReason::BadSignature)
    }
}

/// The address inside angle brackets, or the whole trimmed value, lowercased.
pub fn addr_spec(value: &str) -> String {
    let v = value.trim();
    let inner = match (v.rfind('<'), v.rfind('>')) {
        (Some(a), Some(b)) if a < b => &v[a + 1..b],
        _ => v,
    };
    inner.trim().to_ascii_lowercase()
}

/// Domain part of an address.
pub fn addr_domain(addr: &str) -> Option<&str> {
    addr.rsplit_once('@').map(|(_, d)| d).filter(|d| !d.is_empty())
}
