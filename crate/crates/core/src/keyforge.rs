//! The KeyForge protocol: time-tagged signing and verification, expiry scheduling, the
//! forge-on-request exchange, and the two simulators that reproduce honest mail from public or
//! requester-accessible information.
//!
//! Every operation reads time through [`KeyForgeConfig::clock`] or takes it explicitly, so tests
//! can pin the clock and compare outputs byte for byte.

use std::fmt;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::GroupElement;
use crate::encoding::{DecodeError, Decoder, Encoder};
use crate::ffs::{self, ExpiryInfo, FfsError};
use crate::hibs::{self, ChainLink, HibsMasterKeys, HibsSecretKey, HibsSignature};
use crate::mailproto::{self, addr_domain, addr_spec, HeaderField, KeyForgeHeader, KeyResolver, MailMessage, SignError};
use crate::tagtree::{Tag, TagError, TagSpace};

/// Default delivery bound: 15 minutes.
pub const DEFAULT_DELTA_HAT: i64 = 900;

pub trait Clock: Send + Sync + fmt::Debug {
    /// Current time in UTC seconds.
    fn now(&self) -> i64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> i64 {
        chrono::Utc::now().timestamp()
    }
}

/// A clock that only moves when told to. Clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicI64>);

impl ManualClock {
    pub fn new(t: i64) -> Self {
        ManualClock(Arc::new(AtomicI64::new(t)))
    }

    pub fn set(&self, t: i64) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, secs: i64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> i64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone)]
pub struct KeyForgeConfig {
    /// Upper bound on delivery latency, in seconds.
    pub delta_hat: i64,
    pub space: TagSpace,
    /// Seconds between expiry publications.
    pub expiry_interval: i64,
    pub clock: Arc<dyn Clock>,
}

#[derive(Debug, Error)]
pub enum KeyForgeError {
    #[error(transparent)]
    Tag(#[from] TagError),
    #[error(transparent)]
    Ffs(#[from] FfsError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl KeyForgeConfig {
    pub fn new(space: TagSpace, clock: Arc<dyn Clock>) -> Self {
        let chunk = space.chunk_duration();
        KeyForgeConfig {
            delta_hat: DEFAULT_DELTA_HAT.min(chunk),
            expiry_interval: chunk,
            space,
            clock,
        }
    }

    pub fn with_delta_hat(mut self, delta_hat: i64) -> Result<Self, KeyForgeError> {
        if delta_hat < 0 || delta_hat > self.space.chunk_duration() {
            return Err(KeyForgeError::Config(format!(
                "delivery bound {delta_hat}s must lie in 0..={}",
                self.space.chunk_duration()
            )));
        }
        self.delta_hat = delta_hat;
        Ok(self)
    }

    pub fn with_expiry_interval(mut self, secs: i64) -> Result<Self, KeyForgeError> {
        if secs < self.space.chunk_duration() {
            return Err(KeyForgeError::Config("expiry interval shorter than a chunk".into()));
        }
        self.expiry_interval = secs;
        Ok(self)
    }

    pub fn now(&self) -> i64 {
        self.clock.now()
    }
}

/// A signature together with its tag and the signing domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyForgeSignature {
    pub tag: Tag,
    pub sig: HibsSignature,
    pub domain: String,
}

impl KeyForgeSignature {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.put_bytes(self.domain.as_bytes())
            .put_bytes(self.tag.to_string().as_bytes());
        self.sig.encode(enc);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let domain = String::from_utf8(dec.get_bytes()?.to_vec()).map_err(|_| DecodeError::Invalid("domain"))?;
        let tag = std::str::from_utf8(dec.get_bytes()?)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(DecodeError::Invalid("tag"))?;
        let sig = HibsSignature::decode(dec)?;
        Ok(KeyForgeSignature { tag, sig, domain })
    }
}

/// Tag used for mail signed at `now`: the chunk containing `now + Δ̂`.
pub fn signing_tag(cfg: &KeyForgeConfig, now: i64) -> Result<Tag, TagError> {
    cfg.space.tag_of_time(now + cfg.delta_hat)
}

pub fn kf_sign(sk: &HibsMasterKeys, domain: &str, msg: &[u8], cfg: &KeyForgeConfig) -> Result<KeyForgeSignature, KeyForgeError> {
    kf_sign_at(sk, domain, msg, cfg, cfg.now())
}

pub fn kf_sign_at(
    sk: &HibsMasterKeys,
    domain: &str,
    msg: &[u8],
    cfg: &KeyForgeConfig,
    now: i64,
) -> Result<KeyForgeSignature, KeyForgeError> {
    kf_sign_with_key(sk.root_key(), domain, msg, cfg, now)
}

/// Signing from any key on the path to the tag — the master key, or a released subtree key.
/// Both give identical output.
pub fn kf_sign_with_key(
    key: &HibsSecretKey,
    domain: &str,
    msg: &[u8],
    cfg: &KeyForgeConfig,
    now: i64,
) -> Result<KeyForgeSignature, KeyForgeError> {
    let tag = signing_tag(cfg, now)?;
    let leaf = ffs::derive(key, &tag.to_identity()).map_err(FfsError::from)?;
    Ok(KeyForgeSignature {
        sig: hibs::sign(&leaf, msg),
        tag,
        domain: domain.to_ascii_lowercase(),
    })
}

/// Whether a verifier at `now` accepts the tag's time: from `Δ̂` before the chunk starts (mail
/// signed for the next chunk and delivered at once) until the chunk ends.
pub fn within_window(cfg: &KeyForgeConfig, tag: &Tag, now: i64) -> bool {
    if tag.len() < cfg.space.time_depth() {
        return false;
    }
    match cfg.space.time_range(tag) {
        Some((start, end)) => start - cfg.delta_hat <= now && now < end,
        None => false,
    }
}

pub fn kf_verify(vk: &GroupElement, ksig: &KeyForgeSignature, msg: &[u8], cfg: &KeyForgeConfig) -> bool {
    kf_verify_at(vk, ksig, msg, cfg, cfg.now())
}

pub fn kf_verify_at(vk: &GroupElement, ksig: &KeyForgeSignature, msg: &[u8], cfg: &KeyForgeConfig, now: i64) -> bool {
    within_window(cfg, &ksig.tag, now) && ffs::verify(vk, &ksig.tag.to_identity(), msg, &ksig.sig)
}

/// Number of leading leaves (in grid order) whose chunks have ended by `now`.
pub fn due_leaf_count(space: &TagSpace, now: i64) -> u64 {
    if now <= space.epoch_start() {
        return 0;
    }
    match space.tag_of_time(now) {
        Ok(live) => space.leaf_index(&live).expect("tag_of_time yields leaves"),
        Err(_) => space.leaf_count(),
    }
}

/// All leaves whose chunk has ended by `now`, in lexicographic order. Never includes the chunk
/// containing `now`.
pub fn expiry_due(cfg: &KeyForgeConfig, now: i64) -> Vec<Tag> {
    let n = due_leaf_count(&cfg.space, now);
    (0..n)
        .map(|i| cfg.space.leaf_at(i).expect("index below leaf count"))
        .collect()
}

/// Expiry information for everything due at `now`.
pub fn expire_due(sk: &HibsMasterKeys, cfg: &KeyForgeConfig, now: i64) -> Result<ExpiryInfo, KeyForgeError> {
    Ok(ffs::expire(sk, &cfg.space, &expiry_due(cfg, now))?)
}

/// Public chain parameters for a tag prefix: enough to check any signature below the prefix
/// given only the remaining certificate links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRecord {
    pub domain: String,
    pub prefix: Tag,
    pub mvk: GroupElement,
    pub links: Vec<ChainLink>,
}

const PARAM_MAGIC: &[u8; 4] = b"KFPR";

impl ParamRecord {
    pub fn derive(sk: &HibsMasterKeys, domain: &str, prefix: &Tag) -> Result<Self, KeyForgeError> {
        let key = ffs::derive(sk.root_key(), &prefix.to_identity()).map_err(FfsError::from)?;
        Ok(ParamRecord {
            domain: domain.to_ascii_lowercase(),
            prefix: prefix.clone(),
            mvk: sk.mvk(),
            links: key.chain().to_vec(),
        })
    }

    /// Checks the certificates and returns the prefix node's public key.
    pub fn verify(&self) -> Option<GroupElement> {
        if self.links.len() != self.prefix.len() {
            return None;
        }
        hibs::walk_chain(&self.mvk, &self.prefix.to_identity(), 0, &self.links)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_fixed(PARAM_MAGIC)
            .put_u8(1)
            .put_bytes(self.domain.as_bytes())
            .put_bytes(self.prefix.to_string().as_bytes())
            .put_fixed(&self.mvk.to_bytes())
            .put_u32(self.links.len() as u32);
        for l in &self.links {
            enc.put_fixed(&l.level_pk.to_bytes());
            l.cert.encode(&mut enc);
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        if dec.get_fixed(4)? != PARAM_MAGIC {
            return Err(DecodeError::BadMagic);
        }
        match dec.get_u8()? {
            1 => {}
            v => return Err(DecodeError::UnsupportedVersion(v)),
        }
        let domain = String::from_utf8(dec.get_bytes()?.to_vec()).map_err(|_| DecodeError::Invalid("domain"))?;
        let prefix_text = std::str::from_utf8(dec.get_bytes()?).map_err(|_| DecodeError::Invalid("prefix"))?;
        let prefix = if prefix_text.is_empty() {
            Tag::new(vec![])
        } else {
            prefix_text.parse().map_err(|_| DecodeError::Invalid("prefix"))?
        };
        let mvk = GroupElement::from_bytes(dec.get_fixed(32)?)?;
        let n = dec.get_count(96)?;
        if n > hibs::MAX_DEPTH {
            return Err(DecodeError::TooLong(n));
        }
        let mut links = Vec::with_capacity(n);
        for _ in 0..n {
            let level_pk = GroupElement::from_bytes(dec.get_fixed(32)?)?;
            let cert = crate::crypto::Signature::decode(&mut dec)?;
            links.push(ChainLink { level_pk, cert });
        }
        dec.finish()?;
        Ok(ParamRecord { domain, prefix, mvk, links })
    }
}

/// Mail metadata: the header fields the sender places on the message (From, To, Subject, ...).
pub type Metadata = Vec<(String, String)>;

/// The message in wire form: bare LF line endings in the body become CRLF, as every transport
/// (and the parser) would make them.
fn unsigned_email(body: &[u8], metadata: &Metadata) -> MailMessage {
    MailMessage {
        headers: metadata.iter().map(|(n, v)| HeaderField::new(n, v)).collect(),
        body: mailproto::normalize_crlf(body),
    }
}

/// The email a sender produces for `(m, μ)` at time `now`, signed from `key` (the master root key
/// for honest sending, or any released key covering the signing tag).
pub fn email_with_key(
    key: &HibsSecretKey,
    domain: &str,
    body: &[u8],
    metadata: &Metadata,
    cfg: &KeyForgeConfig,
    now: i64,
) -> Result<MailMessage, SignError> {
    let msg = unsigned_email(body, metadata);
    let digest = mailproto::canonical_digest(&msg)?;
    let ksig = kf_sign_with_key(key, domain, &digest, cfg, now)?;
    Ok(mailproto::attach_signature(&msg, &ksig, cfg)?)
}

pub fn honest_email(
    sk: &HibsMasterKeys,
    domain: &str,
    body: &[u8],
    metadata: &Metadata,
    cfg: &KeyForgeConfig,
    now: i64,
) -> Result<MailMessage, SignError> {
    email_with_key(sk.root_key(), domain, body, metadata, cfg, now)
}

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("request signature invalid")]
    BadRequestSignature,
    #[error("requesting domain unknown")]
    UnknownRequester,
    #[error("recipient of the requested email must be the requester")]
    RecipientMismatch,
    #[error("requested sender is not in this domain")]
    ForeignSender,
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error("transport: {0}")]
    Transport(String),
}

/// A request to receive a freshly signed copy of `(body, metadata)`, authenticated by the
/// requester's own server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgeRequest {
    pub body: Vec<u8>,
    pub metadata: Metadata,
    pub requester: String,
    pub auth: Option<KeyForgeSignature>,
}

const REQUEST_MAGIC: &[u8; 4] = b"KFFQ";
const RESPONSE_MAGIC: &[u8; 4] = b"KFFA";
pub const FORGE_REQUEST_HEADER: &str = "X-KeyForge-Forge-Request";

impl ForgeRequest {
    pub fn new(body: &[u8], metadata: Metadata, requester: &str) -> Self {
        ForgeRequest {
            body: body.to_vec(),
            metadata,
            requester: addr_spec(requester),
            auth: None,
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_fixed(REQUEST_MAGIC).put_u8(1).put_bytes(&self.body);
        enc.put_u32(self.metadata.len() as u32);
        for (n, v) in &self.metadata {
            enc.put_bytes(n.as_bytes()).put_bytes(v.as_bytes());
        }
        enc.put_bytes(self.requester.as_bytes());
        enc.finish()
    }

    /// Digest the requester's server signs.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"kf/forge-request/v1");
        h.update(self.payload());
        h.finalize().into()
    }

    /// Signs as the requester's server at time `now`.
    pub fn authenticate(
        mut self,
        sk: &HibsMasterKeys,
        domain: &str,
        cfg: &KeyForgeConfig,
        now: i64,
    ) -> Result<Self, KeyForgeError> {
        self.auth = Some(kf_sign_at(sk, domain, &self.digest(), cfg, now)?);
        Ok(self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_bytes(&self.payload());
        match &self.auth {
            Some(a) => {
                enc.put_u8(1);
                a.encode(&mut enc);
            }
            None => {
                enc.put_u8(0);
            }
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut outer = Decoder::new(bytes);
        let payload = outer.get_bytes()?;
        let auth = match outer.get_u8()? {
            0 => None,
            1 => Some(KeyForgeSignature::decode(&mut outer)?),
            _ => return Err(DecodeError::Invalid("auth flag")),
        };
        outer.finish()?;

        let mut dec = Decoder::new(payload);
        if dec.get_fixed(4)? != REQUEST_MAGIC {
            return Err(DecodeError::BadMagic);
        }
        match dec.get_u8()? {
            1 => {}
            v => return Err(DecodeError::UnsupportedVersion(v)),
        }
        let text = |b: &[u8]| String::from_utf8(b.to_vec()).map_err(|_| DecodeError::Invalid("utf-8"));
        let body = dec.get_bytes()?.to_vec();
        let n = dec.get_count(8)?;
        let mut metadata = Vec::with_capacity(n);
        for _ in 0..n {
            let name = text(dec.get_bytes()?)?;
            let value = text(dec.get_bytes()?)?;
            metadata.push((name, value));
        }
        let requester = text(dec.get_bytes()?)?;
        dec.finish()?;
        Ok(ForgeRequest { body, metadata, requester, auth })
    }

    /// Carries the request as an email addressed to the sender's server.
    pub fn to_mail(&self, to: &str) -> MailMessage {
        let encoded = B64.encode(self.to_bytes());
        let mut body = Vec::new();
        for line in encoded.as_bytes().chunks(76) {
            body.extend_from_slice(line);
            body.extend_from_slice(b"\r\n");
        }
        MailMessage::new(
            &[
                ("From", &self.requester),
                ("To", to),
                ("Subject", "forge request"),
                (FORGE_REQUEST_HEADER, "v=1"),
            ],
            &body,
        )
    }

    pub fn from_mail(mail: &MailMessage) -> Result<Self, ForgeError> {
        if mail.header(FORGE_REQUEST_HEADER).map(|h| h.value()) != Some("v=1".into()) {
            return Err(ForgeError::Malformed("not a forge request".into()));
        }
        let compact: Vec<u8> = mail.body.iter().copied().filter(|b| !b.is_ascii_whitespace()).collect();
        let bytes = B64.decode(compact).map_err(|e| ForgeError::Malformed(e.to_string()))?;
        Self::from_bytes(&bytes).map_err(|e| ForgeError::Malformed(e.to_string()))
    }
}

/// Two copies of the requested email, signed as if sent at `t* − Δ̂` and at `t*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgeResponse {
    pub emails: [MailMessage; 2],
}

impl ForgeResponse {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_fixed(RESPONSE_MAGIC).put_u8(1);
        for e in &self.emails {
            enc.put_bytes(&e.render());
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        if dec.get_fixed(4)? != RESPONSE_MAGIC {
            return Err(DecodeError::BadMagic);
        }
        match dec.get_u8()? {
            1 => {}
            v => return Err(DecodeError::UnsupportedVersion(v)),
        }
        let mut next = || -> Result<MailMessage, DecodeError> {
            mailproto::parse_message(dec.get_bytes()?).map_err(|_| DecodeError::Invalid("email"))
        };
        let emails = [next()?, next()?];
        dec.finish()?;
        Ok(ForgeResponse { emails })
    }
}

/// Handles a forge request at time `now`, as the server for `domain`.
///
/// The request must be signed by the server of the requester's domain, and the requested email
/// must be addressed to the requester and only to them. A server that signs requests for its own
/// accounts is trusted not to abuse that; this is not checked.
pub fn forge_on_request(
    sk: &HibsMasterKeys,
    domain: &str,
    req: &ForgeRequest,
    resolver: &dyn KeyResolver,
    cfg: &KeyForgeConfig,
    now: i64,
) -> Result<ForgeResponse, ForgeError> {
    let auth = req.auth.as_ref().ok_or(ForgeError::BadRequestSignature)?;
    let requester = addr_spec(&req.requester);
    let requester_domain = addr_domain(&requester).ok_or(ForgeError::UnknownRequester)?;
    if auth.domain != requester_domain {
        return Err(ForgeError::BadRequestSignature);
    }
    let vk = resolver
        .master_key(requester_domain)
        .ok_or(ForgeError::UnknownRequester)?;
    if !kf_verify_at(&vk, auth, &req.digest(), cfg, now) {
        return Err(ForgeError::BadRequestSignature);
    }
    let field = |name: &str| {
        req.metadata
            .iter()
            .filter(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
            .collect::<Vec<_>>()
    };
    match field("To").as_slice() {
        [to] if !to.contains(',') && addr_spec(to) == requester => {}
        _ => return Err(ForgeError::RecipientMismatch),
    }
    if !field("Cc").is_empty() || !field("Bcc").is_empty() {
        return Err(ForgeError::RecipientMismatch);
    }
    match field("From").as_slice() {
        [from] if addr_domain(&addr_spec(from)).is_some_and(|d| d.eq_ignore_ascii_case(domain)) => {}
        _ => return Err(ForgeError::ForeignSender),
    }
    let early = honest_email(sk, domain, &req.body, &req.metadata, cfg, now - cfg.delta_hat)?;
    let late = honest_email(sk, domain, &req.body, &req.metadata, cfg, now)?;
    Ok(ForgeResponse { emails: [early, late] })
}

/// Delivers forge requests to a sending domain's server.
pub trait ForgeTransport {
    fn request(&self, sender_domain: &str, req: &ForgeRequest) -> Result<ForgeResponse, ForgeError>;
}

/// In-process transport: the request is encoded as mail, handed to the sender's handler at the
/// sender's clock, and the response decoded from its wire form.
pub struct LoopbackTransport<'a> {
    pub sender_sk: &'a HibsMasterKeys,
    pub sender_domain: String,
    pub resolver: &'a dyn KeyResolver,
    pub cfg: KeyForgeConfig,
}

impl ForgeTransport for LoopbackTransport<'_> {
    fn request(&self, sender_domain: &str, req: &ForgeRequest) -> Result<ForgeResponse, ForgeError> {
        if !sender_domain.eq_ignore_ascii_case(&self.sender_domain) {
            return Err(ForgeError::Transport(format!("no route to {sender_domain}")));
        }
        let mail = req.to_mail(&format!("keyforge@{}", self.sender_domain));
        let wire = mailproto::parse_message(&mail.render()).map_err(|e| ForgeError::Transport(e.to_string()))?;
        let parsed = ForgeRequest::from_mail(&wire)?;
        let resp = forge_on_request(self.sender_sk, &self.sender_domain, &parsed, self.resolver, &self.cfg, self.cfg.now())?;
        ForgeResponse::from_bytes(&resp.to_bytes()).map_err(|e| ForgeError::Transport(e.to_string()))
    }
}

fn email_tag(mail: &MailMessage) -> Option<Tag> {
    let field = mail.header(mailproto::SIGNATURE_HEADER)?;
    KeyForgeHeader::parse(&field.value()).ok().map(|h| h.tag)
}

/// Recipient-side simulator: obtains, through the forge-on-request protocol, the email the sender
/// would have produced for `(body, metadata)` at the requester's current time.
#[allow(clippy::too_many_arguments)]
pub fn simulate_recipient(
    transport: &dyn ForgeTransport,
    sender_domain: &str,
    requester_sk: &HibsMasterKeys,
    requester_domain: &str,
    requester: &str,
    body: &[u8],
    metadata: &Metadata,
    cfg: &KeyForgeConfig,
) -> Result<MailMessage, ForgeError> {
    let now = cfg.now();
    let req = ForgeRequest::new(body, metadata.clone(), requester)
        .authenticate(requester_sk, requester_domain, cfg, now)
        .map_err(|e| ForgeError::Sign(e.into()))?;
    let resp = transport.request(sender_domain, &req)?;
    let wanted = signing_tag(cfg, now).map_err(|e| ForgeError::Sign(KeyForgeError::from(e).into()))?;
    resp.emails
        .into_iter()
        .find(|e| email_tag(e).as_ref() == Some(&wanted))
        .ok_or_else(|| ForgeError::Transport("response not within the delivery bound".into()))
}

/// Universal simulator: rebuilds the email sent at time `t` from published expiry information
/// alone. `None` while the signing tag is not yet covered.
pub fn simulate_universal(
    eta: &ExpiryInfo,
    domain: &str,
    body: &[u8],
    metadata: &Metadata,
    cfg: &KeyForgeConfig,
    t: i64,
) -> Option<MailMessage> {
    let tag = signing_tag(cfg, t).ok()?;
    let key = eta.covering(&tag.to_identity())?;
    email_with_key(key, domain, body, metadata, cfg, t).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mailproto::{verify_message, FailReason, VerifyOutcome};

    const JAN_1_2020: i64 = 1_577_836_800;

    fn setup() -> (HibsMasterKeys, KeyForgeConfig, ManualClock) {
        let space = TagSpace::calendar(JAN_1_2020, 2, 96).unwrap();
        let clock = ManualClock::new(JAN_1_2020 + 10 * 86_400 + 1000);
        let cfg = KeyForgeConfig::new(space.clone(), Arc::new(clock.clone()));
        (hibs::setup(space.depth(), Some([5; 32])), cfg, clock)
    }

    fn meta(from: &str, to: &str) -> Metadata {
        vec![
            ("From".into(), from.into()),
            ("To".into(), to.into()),
            ("Subject".into(), "hi".into()),
            ("Date".into(), "Fri, 10 Jan 2020 00:16:40 +0000".into()),
            ("Message-ID".into(), "<1@a.org>".into()),
        ]
    }

    #[test]
    fn honest_email_is_already_in_wire_form() {
        let (sk, cfg, _) = setup();
        let m = honest_email(&sk, "a.org", b"one\ntwo\r\nthree\n", &meta("a@a.org", "b@b.org"), &cfg, cfg.now()).unwrap();
        assert_eq!(m.body, b"one\r\ntwo\r\nthree\r\n");
        assert_eq!(mailproto::parse_message(&m.render()).unwrap().render(), m.render());
    }

    #[test]
    fn boundary_minus_one_second_tags_next_chunk() {
        let (sk, cfg, clock) = setup();
        let chunk_end = JAN_1_2020 + 900;
        clock.set(chunk_end - 1);
        let s = kf_sign(&sk, "a.org", b"m", &cfg).unwrap();
        assert_eq!(s.tag, Tag::new(vec![1, 1, 1, 2]));
        assert!(kf_verify(&sk.mvk(), &s, b"m", &cfg));
        let (_, end) = cfg.space.time_range(&s.tag).unwrap();
        clock.set(end - 1);
        assert!(kf_verify(&sk.mvk(), &s, b"m", &cfg));
        clock.set(end);
        assert!(!kf_verify(&sk.mvk(), &s, b"m", &cfg));
        assert!(!kf_verify_at(&sk.mvk(), &s, b"m", &cfg, chunk_end - 1 - 900));
    }

    #[test]
    fn out_of_span_signing_fails() {
        let (sk, cfg, clock) = setup();
        clock.set(cfg.space.span_end() - 10);
        assert!(matches!(kf_sign(&sk, "a.org", b"m", &cfg), Err(KeyForgeError::Tag(TagError::OutOfSpan(_)))));
    }

    #[test]
    fn expiry_due_examples() {
        let (_, cfg, _) = setup();
        assert!(expiry_due(&cfg, JAN_1_2020).is_empty());
        assert_eq!(expiry_due(&cfg, JAN_1_2020 + 900), vec![Tag::new(vec![1, 1, 1, 1])]);
        assert_eq!(expiry_due(&cfg, JAN_1_2020 + 900 * 5 + 7).len(), 5);
        let day = expiry_due(&cfg, JAN_1_2020 + 86_400);
        assert_eq!(ffs::compress(&cfg.space, &day).unwrap(), vec![Tag::new(vec![1, 1, 1])]);
        // Never the live chunk.
        for now in [JAN_1_2020 + 1, JAN_1_2020 + 45 * 86_400 + 77, cfg.space.span_end() - 1] {
            let live = cfg.space.tag_of_time(now).unwrap();
            let due = expiry_due(&cfg, now);
            assert!(!due.contains(&live));
            let cover = ffs::compress(&cfg.space, &due).unwrap();
            assert!(cover.iter().all(|c| !c.is_prefix_of(&live)));
        }
    }

    #[test]
    fn params_record_round_trip_and_verify() {
        let (sk, _, _) = setup();
        let rec = ParamRecord::derive(&sk, "A.org", &Tag::new(vec![1, 3])).unwrap();
        assert_eq!(rec.domain, "a.org");
        assert!(rec.verify().is_some());
        assert_eq!(ParamRecord::from_bytes(&rec.to_bytes()).unwrap(), rec);
        let root = ParamRecord::derive(&sk, "a.org", &Tag::new(vec![])).unwrap();
        assert_eq!(root.verify(), Some(sk.mvk()));
        assert_eq!(ParamRecord::from_bytes(&root.to_bytes()).unwrap(), root);
    }

    #[test]
    fn forge_request_flow() {
        let (sender, cfg, clock) = setup();
        let requester_sk = hibs::setup(cfg.space.depth(), Some([6; 32]));
        let resolver = |d: &str| match d {
            "a.org" => Some(sender.mvk()),
            "b.org" => Some(requester_sk.mvk()),
            _ => None,
        };
        let now = clock.now();
        let m = meta("alice@a.org", "Bob <bob@b.org>");
        let req = ForgeRequest::new(b"body", m.clone(), "bob@b.org")
            .authenticate(&requester_sk, "b.org", &cfg, now)
            .unwrap();
        assert_eq!(ForgeRequest::from_bytes(&req.to_bytes()).unwrap(), req);
        assert_eq!(ForgeRequest::from_mail(&req.to_mail("k@a.org")).unwrap(), req);

        let resp = forge_on_request(&sender, "a.org", &req, &resolver, &cfg, now).unwrap();
        for e in &resp.emails {
            assert_eq!(verify_message(e, &resolver, &cfg, now), VerifyOutcome::Pass);
        }
        assert_eq!(ForgeResponse::from_bytes(&resp.to_bytes()).unwrap(), resp);

        let unsigned = ForgeRequest::new(b"body", m.clone(), "bob@b.org");
        assert!(matches!(forge_on_request(&sender, "a.org", &unsigned, &resolver, &cfg, now), Err(ForgeError::BadRequestSignature)));

        let wrong_rcpt = ForgeRequest::new(b"body", meta("alice@a.org", "carol@b.org"), "bob@b.org")
            .authenticate(&requester_sk, "b.org", &cfg, now)
            .unwrap();
        assert!(matches!(forge_on_request(&sender, "a.org", &wrong_rcpt, &resolver, &cfg, now), Err(ForgeError::RecipientMismatch)));

        // Signed by a different domain than the requester's.
        let spoofed = ForgeRequest::new(b"body", m.clone(), "bob@b.org")
            .authenticate(&sender, "a.org", &cfg, now)
            .unwrap();
        assert!(matches!(forge_on_request(&sender, "a.org", &spoofed, &resolver, &cfg, now), Err(ForgeError::BadRequestSignature)));

        let mut tampered = req.clone();
        tampered.body = b"other".to_vec();
        assert!(matches!(forge_on_request(&sender, "a.org", &tampered, &resolver, &cfg, now), Err(ForgeError::BadRequestSignature)));

        let foreign = ForgeRequest::new(b"body", meta("eve@c.org", "bob@b.org"), "bob@b.org")
            .authenticate(&requester_sk, "b.org", &cfg, now)
            .unwrap();
        assert!(matches!(forge_on_request(&sender, "a.org", &foreign, &resolver, &cfg, now), Err(ForgeError::ForeignSender)));
    }

    #[test]
    fn recipient_simulator_matches_honest_email() {
        let (sender, cfg, clock) = setup();
        let requester_sk = hibs::setup(cfg.space.depth(), Some([6; 32]));
        let resolver = |d: &str| match d {
            "a.org" => Some(sender.mvk()),
            "b.org" => Some(requester_sk.mvk()),
            _ => None,
        };
        let m = meta("alice@a.org", "bob@b.org");
        let chunk_start = JAN_1_2020 + 20 * 86_400;
        // Requester clock and server clock differ by the delivery delay.
        for (t, delay) in [(chunk_start + 100, 200), (chunk_start + 800, 300), (chunk_start + 899, 900), (chunk_start, 0)] {
            clock.set(t);
            let server_clock = ManualClock::new(t + delay);
            let transport = LoopbackTransport {
                sender_sk: &sender,
                sender_domain: "a.org".into(),
                resolver: &resolver,
                cfg: KeyForgeConfig { clock: Arc::new(server_clock), ..cfg.clone() },
            };
            let sim = simulate_recipient(&transport, "a.org", &requester_sk, "b.org", "bob@b.org", b"hello", &m, &cfg).unwrap();
            let honest = honest_email(&sender, "a.org", b"hello", &m, &cfg, t).unwrap();
            assert_eq!(sim.render(), honest.render(), "t={t} delay={delay}");
        }
    }

    #[test]
    fn universal_simulator_matches_honest_email() {
        let (sender, cfg, _) = setup();
        let m = meta("alice@a.org", "bob@b.org");
        let t = JAN_1_2020 + 3 * 86_400 + 4321;
        let tag = signing_tag(&cfg, t).unwrap();
        let (_, end) = cfg.space.time_range(&tag).unwrap();

        let early = expire_due(&sender, &cfg, end - 1).unwrap();
        assert!(simulate_universal(&early, "a.org", b"x", &m, &cfg, t).is_none());

        let eta = expire_due(&sender, &cfg, end).unwrap();
        let sim = simulate_universal(&eta, "a.org", b"x", &m, &cfg, t).unwrap();
        assert_eq!(sim.render(), honest_email(&sender, "a.org", b"x", &m, &cfg, t).unwrap().render());

        // Expiry info from another key produces mail that does not verify under the real key.
        let other = hibs::setup(cfg.space.depth(), Some([8; 32]));
        let eta_other = expire_due(&other, &cfg, end).unwrap();
        let fake = simulate_universal(&eta_other, "a.org", b"x", &m, &cfg, t).unwrap();
        let resolver = |d: &str| (d == "a.org").then(|| sender.mvk());
        assert_eq!(verify_message(&fake, &resolver, &cfg, t), VerifyOutcome::Fail(FailReason::BadSignature));
    }
}
