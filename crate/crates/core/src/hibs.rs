//! Certificate-chain hierarchical identity-based signatures.
//!
//! Each node of the identity tree owns an ordinary Schnorr key pair. A node's public key is
//! certified by its parent's secret key over the node public key together with the *full*
//! identity path from the root, so a certificate cannot be spliced onto another path.
//! The root key pair is the master key pair.
//!
//! Child keys are a deterministic function of the parent key, the child identity and the
//! caller-supplied randomness `ρ`, which makes [`keygen_star`] path independent: deriving
//! `(a, b, c)` from the master key or from the key for `(a, b)` yields identical bytes.

use std::fmt;

use thiserror::Error;

use crate::crypto::group::{hash_to_scalar, GroupElement, Scalar, POINT_LEN, SCALAR_LEN};
use crate::crypto::prf::{prf, PrfKey};
use crate::crypto::schnorr::{self, SigKeyPair, Signature};
use crate::encoding::{DecodeError, Decoder, Encoder};

/// Upper bound on a single identity component.
pub const MAX_COMPONENT_LEN: usize = 255;
/// Upper bound on scheme depth accepted from untrusted encodings.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HibsError {
    #[error("cannot derive below depth {max}")]
    DepthOverflow { max: usize },
    #[error("key for {key} is not a prefix of {target}")]
    PrefixMismatch { key: String, target: String },
    #[error("expected {expected} randomness values, got {got}")]
    RandomnessLength { expected: usize, got: usize },
    #[error("invalid identity component: {0}")]
    InvalidComponent(&'static str),
}

/// An ordered tuple of identity components `(id_1, ..., id_ℓ)`. The empty tuple names the root.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IdentityTuple(Vec<Vec<u8>>);

impl IdentityTuple {
    pub fn root() -> Self {
        IdentityTuple(Vec::new())
    }

    pub fn new<I, C>(components: I) -> Result<Self, HibsError>
    where
        I: IntoIterator<Item = C>,
        C: Into<Vec<u8>>,
    {
        let components: Vec<Vec<u8>> = components.into_iter().map(Into::into).collect();
        for c in &components {
            check_component(c)?;
        }
        Ok(IdentityTuple(components))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn components(&self) -> &[Vec<u8>] {
        &self.0
    }

    pub fn prefix(&self, len: usize) -> IdentityTuple {
        IdentityTuple(self.0[..len.min(self.0.len())].to_vec())
    }

    pub fn is_prefix_of(&self, other: &IdentityTuple) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn child(&self, id: &[u8]) -> Result<IdentityTuple, HibsError> {
        check_component(id)?;
        let mut c = self.0.clone();
        c.push(id.to_vec());
        Ok(IdentityTuple(c))
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.put_u32(self.0.len() as u32);
        for c in &self.0 {
            enc.put_bytes(c);
        }
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n = dec.get_count(5)?;
        if n > MAX_DEPTH {
            return Err(DecodeError::TooLong(n));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let c = dec.get_bytes()?;
            check_component(c).map_err(|_| DecodeError::Invalid("identity component"))?;
            out.push(c.to_vec());
        }
        Ok(IdentityTuple(out))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }
}

fn check_component(c: &[u8]) -> Result<(), HibsError> {
    if c.is_empty() {
        return Err(HibsError::InvalidComponent("empty"));
    }
    if c.len() > MAX_COMPONENT_LEN {
        return Err(HibsError::InvalidComponent("too long"));
    }
    Ok(())
}

impl fmt::Display for IdentityTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(&String::from_utf8_lossy(c))?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for IdentityTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IdentityTuple{self}")
    }
}

/// One certified level: the node's public key and its parent's certificate over it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainLink {
    pub level_pk: GroupElement,
    pub cert: Signature,
}

impl ChainLink {
    pub const ENCODED_LEN: usize = POINT_LEN + Signature::ENCODED_LEN;

    fn encode(&self, enc: &mut Encoder) {
        enc.put_fixed(&self.level_pk.to_bytes());
        self.cert.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let level_pk = GroupElement::from_bytes(dec.get_fixed(POINT_LEN)?)?;
        let cert = Signature::decode(dec)?;
        Ok(ChainLink { level_pk, cert })
    }
}

fn encode_links(links: &[ChainLink], enc: &mut Encoder) {
    enc.put_u32(links.len() as u32);
    for l in links {
        l.encode(enc);
    }
}

fn decode_links(dec: &mut Decoder<'_>) -> Result<Vec<ChainLink>, DecodeError> {
    let n = dec.get_count(ChainLink::ENCODED_LEN)?;
    if n > MAX_DEPTH {
        return Err(DecodeError::TooLong(n));
    }
    (0..n).map(|_| ChainLink::decode(dec)).collect()
}

fn cert_payload(level_pk: &GroupElement, path: &IdentityTuple) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_bytes(b"kf/hibs/cert")
        .put_fixed(&level_pk.to_bytes());
    path.encode(&mut enc);
    enc.finish()
}

fn message_payload(identity: &IdentityTuple, msg: &[u8]) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_bytes(b"kf/hibs/msg");
    identity.encode(&mut enc);
    enc.put_bytes(msg);
    enc.finish()
}

#[derive(Clone)]
pub struct HibsMasterKeys {
    root: HibsSecretKey,
}

impl HibsMasterKeys {
    pub fn mvk(&self) -> GroupElement {
        self.root.public()
    }

    pub fn msk(&self) -> &Scalar {
        &self.root.leaf_sk
    }

    pub fn prf_key(&self) -> &PrfKey {
        &self.root.prf_key
    }

    pub fn depth(&self) -> usize {
        self.root.max_depth
    }

    /// The master secret viewed as the key for the empty identity tuple.
    pub fn root_key(&self) -> &HibsSecretKey {
        &self.root
    }

    pub fn from_parts(msk: Scalar, prf_key: PrfKey, depth: usize) -> Option<Self> {
        SigKeyPair::from_secret(msk)?;
        Some(HibsMasterKeys {
            root: HibsSecretKey {
                identity: IdentityTuple::root(),
                chain: Vec::new(),
                leaf_sk: msk,
                prf_key,
                max_depth: depth,
            },
        })
    }
}

impl fmt::Debug for HibsMasterKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HibsMasterKeys")
            .field("mvk", &self.mvk())
            .field("depth", &self.depth())
            .finish_non_exhaustive()
    }
}

/// Secret key for an identity tuple: the certified chain from the root, the node's own signing
/// scalar, and the node's PRF key (which only ever yields randomness for its own subtree).
#[derive(Clone, PartialEq, Eq)]
pub struct HibsSecretKey {
    identity: IdentityTuple,
    chain: Vec<ChainLink>,
    leaf_sk: Scalar,
    prf_key: PrfKey,
    max_depth: usize,
}

impl fmt::Debug for HibsSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HibsSecretKey")
            .field("identity", &self.identity)
            .field("levels", &self.chain.len())
            .finish_non_exhaustive()
    }
}

impl HibsSecretKey {
    pub fn identity(&self) -> &IdentityTuple {
        &self.identity
    }

    pub fn level(&self) -> usize {
        self.identity.len()
    }

    pub fn chain(&self) -> &[ChainLink] {
        &self.chain
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn prf_key(&self) -> &PrfKey {
        &self.prf_key
    }

    pub fn public(&self) -> GroupElement {
        GroupElement::mul_base(&self.leaf_sk)
    }

    fn keypair(&self) -> SigKeyPair {
        SigKeyPair::from_secret(self.leaf_sk).expect("derived scalars are nonzero")
    }

    /// Checks that every certificate verifies under `mvk` and that the leaf scalar matches the
    /// last certified public key.
    pub fn verify_chain(&self, mvk: &GroupElement) -> bool {
        if self.chain.len() != self.identity.len() {
            return false;
        }
        match walk_chain(mvk, &self.identity, 0, &self.chain) {
            Some(pk) => pk == self.public(),
            None => false,
        }
    }

    pub fn encode(&self, enc: &mut Encoder) {
        self.identity.encode(enc);
        enc.put_u32(self.max_depth as u32);
        encode_links(&self.chain, enc);
        enc.put_fixed(&self.leaf_sk.to_bytes())
            .put_fixed(self.prf_key.as_bytes());
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let identity = IdentityTuple::decode(dec)?;
        let max_depth = dec.get_u32()? as usize;
        if max_depth > MAX_DEPTH || identity.len() > max_depth {
            return Err(DecodeError::Invalid("depth"));
        }
        let chain = decode_links(dec)?;
        if chain.len() != identity.len() {
            return Err(DecodeError::Invalid("chain length"));
        }
        let leaf_sk = Scalar::from_bytes(dec.get_fixed(SCALAR_LEN)?)?;
        if leaf_sk.is_zero() {
            return Err(DecodeError::InvalidScalar);
        }
        let prf_key = PrfKey::from_bytes(dec.get_array()?);
        Ok(HibsSecretKey {
            identity,
            chain,
            leaf_sk,
            prf_key,
            max_depth,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let k = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HibsSignature {
    pub chain: Vec<ChainLink>,
    pub leaf_sig: Signature,
}

impl HibsSignature {
    pub fn encode(&self, enc: &mut Encoder) {
        encode_links(&self.chain, enc);
        self.leaf_sig.encode(enc);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let chain = decode_links(dec)?;
        let leaf_sig = Signature::decode(dec)?;
        Ok(HibsSignature { chain, leaf_sig })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let s = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(s)
    }

    pub fn encoded_len(&self) -> usize {
        4 + self.chain.len() * ChainLink::ENCODED_LEN + Signature::ENCODED_LEN
    }
}

/// Generates master keys for a depth-`depth` scheme. Deterministic when `seed` is given.
pub fn setup(depth: usize, seed: Option<[u8; 32]>) -> HibsMasterKeys {
    let kp = SigKeyPair::generate(seed);
    let prf_key = match seed {
        Some(s) => PrfKey::from_bytes(prf(&PrfKey::from_bytes(s), b"kf/hibs/master-prf")),
        None => PrfKey::random(),
    };
    HibsMasterKeys::from_parts(*kp.secret(), prf_key, depth).expect("nonzero master scalar")
}

/// Derives the key for `parent.identity ‖ id` using explicit randomness `rho`.
pub fn keygen(
    parent: &HibsSecretKey,
    id: &[u8],
    rho: &[u8; 32],
) -> Result<HibsSecretKey, HibsError> {
    if parent.level() >= parent.max_depth {
        return Err(HibsError::DepthOverflow {
            max: parent.max_depth,
        });
    }
    let identity = parent.identity.child(id)?;
    let path = identity.to_bytes();
    let mut counter = 0u32;
    let leaf_sk = loop {
        let k = hash_to_scalar(
            "kf/hibs/child",
            &[&parent.leaf_sk.to_bytes(), &path, rho, &counter.to_be_bytes()],
        );
        if !k.is_zero() {
            break k;
        }
        counter += 1;
    };
    let level_pk = GroupElement::mul_base(&leaf_sk);
    let cert = parent.keypair().sign(&cert_payload(&level_pk, &identity));
    let mut label = b"kf/hibs/prf".to_vec();
    label.extend_from_slice(&path);
    let prf_key = PrfKey::from_bytes(prf(&parent.prf_key, &label));

    let mut chain = parent.chain.clone();
    chain.push(ChainLink { level_pk, cert });
    Ok(HibsSecretKey {
        identity,
        chain,
        leaf_sk,
        prf_key,
        max_depth: parent.max_depth,
    })
}

/// Walks from `sk` (the key for the length-`ell` prefix of `target`) down to `target`, consuming
/// one randomness value per derived level (`rhos[j]` is used for level `ell + 1 + j`).
pub fn keygen_star(
    sk: &HibsSecretKey,
    ell: usize,
    target: &IdentityTuple,
    rhos: &[[u8; 32]],
) -> Result<HibsSecretKey, HibsError> {
    let expected = target.len().saturating_sub(ell);
    if rhos.len() != expected {
        return Err(HibsError::RandomnessLength {
            expected,
            got: rhos.len(),
        });
    }
    keygen_star_with(sk, ell, target, |i, _, _| rhos[i])
}

/// [`keygen_star`] with randomness drawn lazily from `rho(step, parent_key, child_identity)`.
pub fn keygen_star_with<F>(
    sk: &HibsSecretKey,
    ell: usize,
    target: &IdentityTuple,
    mut rho: F,
) -> Result<HibsSecretKey, HibsError>
where
    F: FnMut(usize, &HibsSecretKey, &IdentityTuple) -> [u8; 32],
{
    if ell != sk.level() || ell > target.len() || !sk.identity.is_prefix_of(target) {
        return Err(HibsError::PrefixMismatch {
            key: sk.identity.to_string(),
            target: target.to_string(),
        });
    }
    if target.len() > sk.max_depth {
        return Err(HibsError::DepthOverflow { max: sk.max_depth });
    }
    let mut key = sk.clone();
    for (step, j) in (ell..target.len()).enumerate() {
        let child_id = target.prefix(j + 1);
        let r = rho(step, &key, &child_id);
        key = keygen(&key, &target.components()[j], &r)?;
    }
    Ok(key)
}

pub fn sign(sk: &HibsSecretKey, msg: &[u8]) -> HibsSignature {
    HibsSignature {
        chain: sk.chain.clone(),
        leaf_sig: sk.keypair().sign(&message_payload(&sk.identity, msg)),
    }
}

/// Verifies certificates `links` for levels `start+1..` of `identity`, starting from the public
/// key of the length-`start` prefix. Returns the last certified key.
pub fn walk_chain(
    start_pk: &GroupElement,
    identity: &IdentityTuple,
    start: usize,
    links: &[ChainLink],
) -> Option<GroupElement> {
    if start + links.len() > identity.len() {
        return None;
    }
    let mut parent = *start_pk;
    for (k, link) in links.iter().enumerate() {
        let path = identity.prefix(start + k + 1);
        if link.level_pk.is_identity()
            || !schnorr::verify(&parent, &cert_payload(&link.level_pk, &path), &link.cert)
        {
            return None;
        }
        parent = link.level_pk;
    }
    Some(parent)
}

pub fn verify(mvk: &GroupElement, identity: &IdentityTuple, msg: &[u8], sig: &HibsSignature) -> bool {
    if sig.chain.len() != identity.len() {
        return false;
    }
    verify_from(mvk, 0, identity, msg, &sig.chain, &sig.leaf_sig)
}

/// Verification anchored at an already-trusted key for the length-`start` prefix of `identity`.
/// `links` must cover exactly the remaining levels.
pub fn verify_from(
    anchor_pk: &GroupElement,
    start: usize,
    identity: &IdentityTuple,
    msg: &[u8],
    links: &[ChainLink],
    leaf_sig: &Signature,
) -> bool {
    if start + links.len() != identity.len() {
        return false;
    }
    match walk_chain(anchor_pk, identity, start, links) {
        Some(leaf_pk) => schnorr::verify(&leaf_pk, &message_payload(identity, msg), leaf_sig),
        None => false,
    }
}
