//! A publicly verifiable timekeeper and TimeForge signatures.
//!
//! The timekeeper commits to one public point `K_s = k_s·G` per epoch and, once epoch `s` has
//! passed, releases a proof from which `k_s` follows. Epoch secrets form a reverse hash chain
//! (`seed_s = H(seed_{s+1})`), so the proof for epoch `s` also yields every earlier epoch secret:
//! a single published proof lets anyone forge for all elapsed time, while later epochs stay
//! unpredictable.
//!
//! A TimeForge signature is a ring signature over `[sender, (recipient,) K_e]` for
//! `e = epoch(t + Δ)`, binding the message together with `t` and `Δ`. The sender signs with the
//! sender key; after epoch `e` is released anyone can produce an indistinguishable signature
//! with `k_e`, and in the three-member variant the recipient can too, at any time.

use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::group::hash_to_scalar;
use crate::crypto::ring::{ring_sign, ring_verify, RingError, RingSignature};
use crate::crypto::{GroupElement, Scalar, SigKeyPair, Signature};
use crate::encoding::{DecodeError, Decoder, Encoder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeForgeError {
    #[error("epoch {epoch} outside 0..{count}")]
    EpochOutOfRange { epoch: i64, count: usize },
    #[error("proof is for epoch {have}, earlier than the required epoch {need}")]
    EarlyProof { have: usize, need: usize },
    #[error("timekeeper proof does not verify")]
    InvalidProof,
    #[error("invalid parameters: {0}")]
    Params(&'static str),
    #[error(transparent)]
    Ring(#[from] RingError),
}

fn hash32(label: &str, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((label.len() as u64).to_be_bytes());
    h.update(label.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn epoch_scalar(seed: &[u8; 32]) -> Scalar {
    hash_to_scalar("kf/tk/epoch-key", &[seed])
}

fn previous_seed(seed: &[u8; 32]) -> [u8; 32] {
    hash32("kf/tk/chain", &[seed])
}

fn merkle_leaf(epoch: usize, key: &GroupElement) -> [u8; 32] {
    hash32("kf/tk/leaf", &[&(epoch as u64).to_be_bytes(), &key.to_bytes()])
}

fn merkle_node(l: &[u8; 32], r: &[u8; 32]) -> [u8; 32] {
    hash32("kf/tk/node", &[l, r])
}

/// All levels of the Merkle tree, leaves first. An odd node is promoted unchanged.
fn merkle_levels(leaves: Vec<[u8; 32]>) -> Vec<Vec<[u8; 32]>> {
    let mut levels = vec![leaves];
    while levels.last().expect("non-empty").len() > 1 {
        let prev = levels.last().expect("non-empty");
        let next = prev
            .chunks(2)
            .map(|p| if p.len() == 2 { merkle_node(&p[0], &p[1]) } else { p[0] })
            .collect();
        levels.push(next);
    }
    levels
}

/// Inclusion proof for one epoch key under the params root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochKeyProof {
    pub epoch: usize,
    pub key: GroupElement,
    /// Sibling hashes from the leaf upward; `None` where the node was promoted without a sibling.
    pub path: Vec<Option<[u8; 32]>>,
}

impl EpochKeyProof {
    pub fn verify(&self, root: &[u8; 32], epoch_count: usize) -> bool {
        if self.epoch >= epoch_count {
            return false;
        }
        let mut h = merkle_leaf(self.epoch, &self.key);
        let mut idx = self.epoch;
        let mut width = epoch_count;
        for sib in &self.path {
            let has_sibling = idx ^ 1 < width;
            match (sib, has_sibling) {
                (Some(s), true) => {
                    h = if idx.is_multiple_of(2) { merkle_node(&h, s) } else { merkle_node(s, &h) };
                }
                (None, false) => {}
                _ => return false,
            }
            idx /= 2;
            width = width.div_ceil(2);
        }
        width == 1 && h == *root
    }
}

/// Public timekeeper parameters: epoch schedule, per-epoch keys, their Merkle root, and the
/// timekeeper's signature over the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PvtkParams {
    pub start: i64,
    pub epoch_duration: i64,
    pub epoch_keys: Vec<GroupElement>,
    pub root: [u8; 32],
    pub timekeeper_pk: GroupElement,
    pub root_sig: Signature,
}

fn root_payload(start: i64, duration: i64, count: usize, root: &[u8; 32]) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_bytes(b"kf/tk/params")
        .put_i64(start)
        .put_i64(duration)
        .put_u64(count as u64)
        .put_fixed(root);
    enc.finish()
}

const PARAMS_MAGIC: &[u8; 4] = b"KFTP";
const RELEASE_MAGIC: &[u8; 4] = b"KFTR";

impl PvtkParams {
    pub fn epoch_count(&self) -> usize {
        self.epoch_keys.len()
    }

    /// `floor((t − start) / duration)`, or `None` outside the horizon.
    pub fn epoch_of(&self, t: i64) -> Option<usize> {
        if t < self.start {
            return None;
        }
        let e = (t - self.start) / self.epoch_duration;
        usize::try_from(e).ok().filter(|&e| e < self.epoch_count())
    }

    /// Recomputes the root from the listed keys and checks the timekeeper's signature.
    pub fn verify(&self) -> bool {
        if self.epoch_keys.is_empty() || self.epoch_duration <= 0 {
            return false;
        }
        let leaves = self.epoch_keys.iter().enumerate().map(|(s, k)| merkle_leaf(s, k)).collect();
        let levels = merkle_levels(leaves);
        levels.last().expect("non-empty")[0] == self.root
            && crate::crypto::schnorr::verify(
                &self.timekeeper_pk,
                &root_payload(self.start, self.epoch_duration, self.epoch_count(), &self.root),
                &self.root_sig,
            )
    }

    pub fn inclusion_proof(&self, epoch: usize) -> Option<EpochKeyProof> {
        let key = *self.epoch_keys.get(epoch)?;
        let leaves = self.epoch_keys.iter().enumerate().map(|(s, k)| merkle_leaf(s, k)).collect();
        let levels = merkle_levels(leaves);
        let mut idx = epoch;
        let mut path = Vec::new();
        for level in &levels[..levels.len() - 1] {
            path.push(level.get(idx ^ 1).copied());
            idx /= 2;
        }
        Some(EpochKeyProof { epoch, key, path })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_fixed(PARAMS_MAGIC)
            .put_u8(1)
            .put_i64(self.start)
            .put_i64(self.epoch_duration)
            .put_u32(self.epoch_keys.len() as u32);
        for k in &self.epoch_keys {
            enc.put_fixed(&k.to_bytes());
        }
        enc.put_fixed(&self.root).put_fixed(&self.timekeeper_pk.to_bytes());
        self.root_sig.encode(&mut enc);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        if dec.get_fixed(4)? != PARAMS_MAGIC {
            return Err(DecodeError::BadMagic);
        }
        match dec.get_u8()? {
            1 => {}
            v => return Err(DecodeError::UnsupportedVersion(v)),
        }
        let start = dec.get_i64()?;
        let epoch_duration = dec.get_i64()?;
        let n = dec.get_count(32)?;
        let epoch_keys = (0..n)
            .map(|_| GroupElement::from_bytes(dec.get_fixed(32)?))
            .collect::<Result<Vec<_>, _>>()?;
        let root = dec.get_array()?;
        let timekeeper_pk = GroupElement::from_bytes(dec.get_fixed(32)?)?;
        let root_sig = Signature::decode(&mut dec)?;
        dec.finish()?;
        Ok(PvtkParams { start, epoch_duration, epoch_keys, root, timekeeper_pk, root_sig })
    }
}

/// Timekeeper trapdoor: the signing key for the params and the top of the seed chain.
pub struct PvtkSecret {
    master: SigKeyPair,
    last_seed: [u8; 32],
    epoch_count: usize,
}

impl std::fmt::Debug for PvtkSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PvtkSecret").field("epoch_count", &self.epoch_count).finish_non_exhaustive()
    }
}

impl PvtkSecret {
    fn seeds(&self) -> Vec<[u8; 32]> {
        let mut seeds = vec![[0u8; 32]; self.epoch_count];
        let mut cur = self.last_seed;
        for s in (0..self.epoch_count).rev() {
            seeds[s] = cur;
            cur = previous_seed(&cur);
        }
        seeds
    }

    fn seed(&self, epoch: usize) -> [u8; 32] {
        (epoch + 1..self.epoch_count).fold(self.last_seed, |s, _| previous_seed(&s))
    }
}

/// The released value for an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PvtkProof {
    pub epoch: usize,
    pub seed: [u8; 32],
}

impl PvtkProof {
    /// The epoch secret `k_epoch`.
    pub fn scalar(&self) -> Scalar {
        epoch_scalar(&self.seed)
    }

    /// Walks the seed chain back to an earlier epoch.
    pub fn rewind(&self, epoch: usize) -> Option<PvtkProof> {
        if epoch > self.epoch {
            return None;
        }
        let seed = (epoch..self.epoch).fold(self.seed, |s, _| previous_seed(&s));
        Some(PvtkProof { epoch, seed })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_fixed(RELEASE_MAGIC).put_u8(1).put_u64(self.epoch as u64).put_fixed(&self.seed);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        if dec.get_fixed(4)? != RELEASE_MAGIC {
            return Err(DecodeError::BadMagic);
        }
        match dec.get_u8()? {
            1 => {}
            v => return Err(DecodeError::UnsupportedVersion(v)),
        }
        let epoch = usize::try_from(dec.get_u64()?).map_err(|_| DecodeError::Invalid("epoch"))?;
        let seed = dec.get_array()?;
        dec.finish()?;
        Ok(PvtkProof { epoch, seed })
    }
}

pub fn tk_setup(
    start: i64,
    epoch_duration: i64,
    epoch_count: usize,
    seed: Option<[u8; 32]>,
) -> Result<(PvtkParams, PvtkSecret), TimeForgeError> {
    if epoch_count == 0 {
        return Err(TimeForgeError::Params("epoch_count must be at least 1"));
    }
    if epoch_duration <= 0 {
        return Err(TimeForgeError::Params("epoch duration must be positive"));
    }
    let master = SigKeyPair::generate(seed.map(|s| hash32("kf/tk/master", &[&s])));
    let last_seed = match seed {
        Some(s) => hash32("kf/tk/anchor", &[&s]),
        None => rand::random(),
    };
    let secret = PvtkSecret { master, last_seed, epoch_count };
    let epoch_keys: Vec<GroupElement> = secret
        .seeds()
        .iter()
        .map(|s| GroupElement::mul_base(&epoch_scalar(s)))
        .collect();
    let leaves = epoch_keys.iter().enumerate().map(|(s, k)| merkle_leaf(s, k)).collect();
    let root = merkle_levels(leaves).last().expect("non-empty")[0];
    let root_sig = secret.master.sign(&root_payload(start, epoch_duration, epoch_count, &root));
    let params = PvtkParams {
        start,
        epoch_duration,
        epoch_keys,
        root,
        timekeeper_pk: secret.master.public(),
        root_sig,
    };
    Ok((params, secret))
}

pub fn tk_prove(secret: &PvtkSecret, epoch: usize) -> Result<PvtkProof, TimeForgeError> {
    if epoch >= secret.epoch_count {
        return Err(TimeForgeError::EpochOutOfRange { epoch: epoch as i64, count: secret.epoch_count });
    }
    Ok(PvtkProof { epoch, seed: secret.seed(epoch) })
}

pub fn tk_verify(params: &PvtkParams, epoch: usize, proof: &PvtkProof) -> bool {
    proof.epoch == epoch
        && params
            .epoch_keys
            .get(epoch)
            .is_some_and(|k| GroupElement::mul_base(&proof.scalar()) == *k)
}

#[derive(Debug, Clone)]
pub struct TfPublicKey {
    pub pk: GroupElement,
    pub params: Arc<PvtkParams>,
}

pub struct TfSecretKey {
    pub kp: SigKeyPair,
}

pub fn tf_keygen(params: Arc<PvtkParams>, seed: Option<[u8; 32]>) -> (TfPublicKey, TfSecretKey) {
    let kp = SigKeyPair::generate(seed);
    (TfPublicKey { pk: kp.public(), params }, TfSecretKey { kp })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeForgeSignature {
    pub proof: RingSignature,
    pub t: i64,
    pub delta: i64,
}

impl TimeForgeSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_i64(self.t).put_i64(self.delta);
        self.proof.encode(&mut enc);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let t = dec.get_i64()?;
        let delta = dec.get_i64()?;
        let proof = RingSignature::decode(&mut dec)?;
        dec.finish()?;
        Ok(TimeForgeSignature { proof, t, delta })
    }
}

fn bound_message(msg: &[u8], t: i64, delta: i64) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_bytes(b"kf/tf/msg").put_bytes(msg).put_i64(t).put_i64(delta);
    enc.finish()
}

fn target_epoch(params: &PvtkParams, t: i64, delta: i64) -> Result<usize, TimeForgeError> {
    let at = t.checked_add(delta).filter(|_| delta >= 0);
    at.and_then(|at| params.epoch_of(at)).ok_or_else(|| TimeForgeError::EpochOutOfRange {
        epoch: at.map_or(i64::MAX, |at| (at - params.start).div_euclid(params.epoch_duration)),
        count: params.epoch_count(),
    })
}

fn ring_for(pk: &TfPublicKey, recipient: Option<&GroupElement>, epoch: usize) -> Vec<GroupElement> {
    let mut ring = vec![pk.pk];
    ring.extend(recipient.copied());
    ring.push(pk.params.epoch_keys[epoch]);
    ring
}

pub fn tf_sign(
    pk: &TfPublicKey,
    sk: &TfSecretKey,
    msg: &[u8],
    t: i64,
    delta: i64,
    recipient: Option<&GroupElement>,
) -> Result<TimeForgeSignature, TimeForgeError> {
    let epoch = target_epoch(&pk.params, t, delta)?;
    let ring = ring_for(pk, recipient, epoch);
    let proof = ring_sign(&ring, 0, sk.kp.secret(), &bound_message(msg, t, delta))?;
    Ok(TimeForgeSignature { proof, t, delta })
}

pub fn tf_verify(pk: &TfPublicKey, msg: &[u8], sig: &TimeForgeSignature, recipient: Option<&GroupElement>) -> bool {
    let Ok(epoch) = target_epoch(&pk.params, sig.t, sig.delta) else {
        return false;
    };
    ring_verify(&ring_for(pk, recipient, epoch), &bound_message(msg, sig.t, sig.delta), &sig.proof)
}

/// Witness for a forgery.
pub enum ForgeWitness<'a> {
    /// A released timekeeper proof for some epoch at or after `epoch(t + Δ)`.
    Timekeeper(&'a PvtkProof),
    /// The recipient's secret key (three-member variant only).
    Recipient(&'a SigKeyPair),
}

pub fn tf_forge(
    pk: &TfPublicKey,
    msg: &[u8],
    t: i64,
    delta: i64,
    witness: ForgeWitness<'_>,
    recipient: Option<&GroupElement>,
) -> Result<TimeForgeSignature, TimeForgeError> {
    let epoch = target_epoch(&pk.params, t, delta)?;
    let ring = ring_for(pk, recipient, epoch);
    let bound = bound_message(msg, t, delta);
    let proof = match witness {
        ForgeWitness::Timekeeper(p) => {
            if !tk_verify(&pk.params, p.epoch, p) {
                return Err(TimeForgeError::InvalidProof);
            }
            let k = p
                .rewind(epoch)
                .ok_or(TimeForgeError::EarlyProof { have: p.epoch, need: epoch })?
                .scalar();
            ring_sign(&ring, ring.len() - 1, &k, &bound)?
        }
        ForgeWitness::Recipient(kp) => {
            if recipient != Some(&kp.public()) {
                return Err(TimeForgeError::Ring(RingError::KeyMismatch(1)));
            }
            ring_sign(&ring, 1, kp.secret(), &bound)?
        }
    };
    Ok(TimeForgeSignature { proof, t, delta })
}
