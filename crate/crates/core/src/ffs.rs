//! Forward-forgeable signatures over the certificate-chain HIBS.
//!
//! Signing under a tag derives the tag's HIBS key from the master key; all per-level randomness
//! comes from the PRF key of the parent node, so any released subtree key reproduces the honest
//! keys (and therefore the honest signatures) of its whole subtree, byte for byte.
//!
//! Expiring a tag set first minimizes it with [`compress`] and then releases one subtree key per
//! remaining node.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::crypto::group::GroupElement;
use crate::crypto::prf::prf;
use crate::encoding::{DecodeError, Decoder, Encoder};
use crate::hibs::{self, HibsError, HibsMasterKeys, HibsSecretKey, HibsSignature, IdentityTuple};
use crate::tagtree::{Tag, TagError, TagSpace};

/// Per-entry size used when comparing against published expiry-size figures.
pub const MODEL_KEY_BYTES: usize = 64;

const EXPIRY_MAGIC: &[u8; 4] = b"KFEX";
const EXPIRY_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FfsError {
    #[error(transparent)]
    Hibs(#[from] HibsError),
    #[error(transparent)]
    Tag(#[from] TagError),
}

pub struct FfsKeyPair {
    pub vk: GroupElement,
    pub sk: HibsMasterKeys,
}

impl std::fmt::Debug for FfsKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FfsKeyPair").field("vk", &self.vk).finish_non_exhaustive()
    }
}

pub fn keygen(depth: usize, seed: Option<[u8; 32]>) -> FfsKeyPair {
    let sk = hibs::setup(depth, seed);
    FfsKeyPair { vk: sk.mvk(), sk }
}

/// Randomness for deriving `child` below `parent`.
fn child_rho(parent: &HibsSecretKey, child: &IdentityTuple) -> [u8; 32] {
    let mut label = b"kf/ffs/rho".to_vec();
    label.extend_from_slice(&child.to_bytes());
    prf(parent.prf_key(), &label)
}

/// Derives the key for `target` from any key whose identity prefixes it.
pub fn derive(from: &HibsSecretKey, target: &IdentityTuple) -> Result<HibsSecretKey, HibsError> {
    hibs::keygen_star_with(from, from.level(), target, |_, parent, child| {
        child_rho(parent, child)
    })
}

pub fn sign(sk: &HibsMasterKeys, tag: &IdentityTuple, msg: &[u8]) -> Result<HibsSignature, FfsError> {
    let key = derive(sk.root_key(), tag)?;
    Ok(hibs::sign(&key, msg))
}

pub fn verify(vk: &GroupElement, tag: &IdentityTuple, msg: &[u8], sig: &HibsSignature) -> bool {
    hibs::verify(vk, tag, msg, sig)
}

/// Minimal exact cover of `tags`: the smallest antichain of non-root nodes covering exactly the
/// same leaves. Internal nodes in the input stand for all of their leaves. Output is sorted.
pub fn compress(space: &TagSpace, tags: &[Tag]) -> Result<Vec<Tag>, FfsError> {
    for t in tags {
        space.validate(t)?;
    }
    let mut sorted: Vec<&Tag> = tags.iter().collect();
    sorted.sort_unstable();
    sorted.dedup();

    // Drop anything already covered by a kept ancestor. In lexicographic order a node's
    // descendants immediately follow it, so comparing with the last kept node suffices.
    let mut kept: Vec<Tag> = Vec::with_capacity(sorted.len());
    for t in sorted {
        if kept.last().is_some_and(|k| k.is_prefix_of(t)) {
            continue;
        }
        kept.push(t.clone());
    }

    // Bottom-up, replace each complete sibling group with its parent.
    let mut nodes: BTreeSet<Tag> = kept.into_iter().collect();
    for len in (2..=space.depth()).rev() {
        let full = space.cardinality(len - 1) as usize;
        let mut groups: Vec<(Tag, usize)> = Vec::new();
        for t in nodes.iter().filter(|t| t.len() == len) {
            let parent = t.prefix(len - 1);
            match groups.last_mut() {
                Some((p, n)) if *p == parent => *n += 1,
                _ => groups.push((parent, 1)),
            }
        }
        for (parent, n) in groups {
            if n == full {
                for c in 1..=full as u32 {
                    nodes.remove(&parent.child(c));
                }
                nodes.insert(parent);
            }
        }
    }
    Ok(nodes.into_iter().collect())
}

/// Released expiry information: one subtree key per compressed prefix, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpiryInfo {
    vk: GroupElement,
    entries: Vec<HibsSecretKey>,
}

impl ExpiryInfo {
    pub fn empty(vk: GroupElement) -> Self {
        ExpiryInfo { vk, entries: Vec::new() }
    }

    /// Builds from keys, sorting them canonically. Fails if the prefixes are not an antichain.
    pub fn from_entries(vk: GroupElement, mut entries: Vec<HibsSecretKey>) -> Result<Self, DecodeError> {
        entries.sort_by(|a, b| a.identity().cmp(b.identity()));
        let info = ExpiryInfo { vk, entries };
        info.check_antichain()?;
        Ok(info)
    }

    fn check_antichain(&self) -> Result<(), DecodeError> {
        // Sorted by identity, so a prefix would sit directly before one of its extensions.
        for w in self.entries.windows(2) {
            if w[0].identity().is_prefix_of(w[1].identity()) {
                return Err(DecodeError::Invalid("expiry prefixes overlap"));
            }
        }
        if self.entries.iter().any(|k| k.identity().is_empty()) {
            return Err(DecodeError::Invalid("expiry entry for the root"));
        }
        Ok(())
    }

    pub fn vk(&self) -> &GroupElement {
        &self.vk
    }

    pub fn entries(&self) -> &[HibsSecretKey] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &IdentityTuple> {
        self.entries.iter().map(HibsSecretKey::identity)
    }

    /// The entry whose prefix covers `tag`, if any.
    pub fn covering(&self, tag: &IdentityTuple) -> Option<&HibsSecretKey> {
        // Entries are sorted and pairwise non-nested, so the only candidate is the greatest
        // entry that sorts at or before `tag`.
        let idx = self.entries.partition_point(|k| k.identity() <= tag);
        idx.checked_sub(1)
            .map(|i| &self.entries[i])
            .filter(|k| k.identity().is_prefix_of(tag))
    }

    /// Checks every entry's certificate chain against `vk`.
    pub fn verify_keys(&self) -> bool {
        self.entries.iter().all(|k| k.verify_chain(&self.vk))
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.put_fixed(EXPIRY_MAGIC)
            .put_u8(EXPIRY_VERSION)
            .put_fixed(&self.vk.to_bytes())
            .put_u32(self.entries.len() as u32);
        for k in &self.entries {
            k.encode(enc);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        if dec.get_fixed(4)? != EXPIRY_MAGIC {
            return Err(DecodeError::BadMagic);
        }
        let version = dec.get_u8()?;
        if version != EXPIRY_VERSION {
            return Err(DecodeError::UnsupportedVersion(version));
        }
        let vk = GroupElement::from_bytes(dec.get_fixed(32)?)?;
        // Smallest possible key: 1-level identity, one link, scalars.
        let n = dec.get_count(4 + 2 + 4 + 4 + 96 + 64)?;
        let entries = (0..n)
            .map(|_| HibsSecretKey::decode(dec))
            .collect::<Result<Vec<_>, _>>()?;
        let info = ExpiryInfo { vk, entries };
        if info
            .entries
            .windows(2)
            .any(|w| w[0].identity() >= w[1].identity())
        {
            return Err(DecodeError::Invalid("expiry entries not in canonical order"));
        }
        info.check_antichain()?;
        Ok(info)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let info = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(info)
    }
}

/// Releases subtree keys for the minimal cover of `tags`.
pub fn expire(sk: &HibsMasterKeys, space: &TagSpace, tags: &[Tag]) -> Result<ExpiryInfo, FfsError> {
    let cover = compress(space, tags)?;
    let entries = cover
        .iter()
        .map(|t| derive(sk.root_key(), &t.to_identity()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExpiryInfo::from_entries(sk.mvk(), entries).expect("compress yields an antichain"))
}

/// Signs under `tag` using only released information; `None` if `tag` has not expired.
pub fn forge(eta: &ExpiryInfo, tag: &IdentityTuple, msg: &[u8]) -> Option<HibsSignature> {
    let from = eta.covering(tag)?;
    let key = derive(from, tag).ok()?;
    Some(hibs::sign(&key, msg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpirySize {
    pub node_count: usize,
    /// Bytes under the fixed per-key model.
    pub model_bytes: usize,
    /// Bytes of the canonical serialized form.
    pub encoded_bytes: usize,
}

pub fn expiry_size(eta: &ExpiryInfo) -> ExpirySize {
    ExpirySize {
        node_count: eta.len(),
        model_bytes: eta.len() * MODEL_KEY_BYTES,
        encoded_bytes: eta.to_bytes().len(),
    }
}

/// Number of compressed nodes for the leaf prefix `[0, j)` of a uniform `B`-ary tree: the base-`B`
/// digit sum of `j` (zero for `j = 0`, and — since the root is never released — `B` for the whole
/// tree).
pub fn prefix_cover_size(branching: u32, depth: u32, j: u64) -> u64 {
    let b = u64::from(branching);
    if b.checked_pow(depth) == Some(j) {
        return b;
    }
    let mut rest = j;
    let mut sum = 0;
    while rest > 0 {
        sum += rest % b;
        rest /= b;
    }
    sum
}
