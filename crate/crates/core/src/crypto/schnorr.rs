//! Deterministic Schnorr signatures over the Ristretto group.
//!
//! The nonce is derived from the secret key and the message, so signing the same message twice
//! with the same key yields the same bytes.

use rand::RngCore;

use super::group::{hash_to_scalar, GroupElement, Scalar, POINT_LEN, SCALAR_LEN};
use crate::encoding::{DecodeError, Decoder, Encoder};

#[derive(Clone, PartialEq, Eq)]
pub struct SigKeyPair {
    sk: Scalar,
    pk: GroupElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub commitment: GroupElement,
    pub response: Scalar,
}

impl SigKeyPair {
    /// Derives a key pair from a 32-byte seed, or from fresh OS randomness when `seed` is `None`.
    pub fn generate(seed: Option<[u8; 32]>) -> Self {
        let seed = seed.unwrap_or_else(|| {
            let mut s = [0u8; 32];
            rand::rngs::OsRng.fill_bytes(&mut s);
            s
        });
        let mut counter = 0u32;
        loop {
            let sk = hash_to_scalar("kf/sig/keygen", &[&seed, &counter.to_be_bytes()]);
            if !sk.is_zero() {
                return Self::from_secret(sk).expect("nonzero scalar");
            }
            counter += 1;
        }
    }

    /// `None` for the zero scalar, whose public key would be the identity.
    pub fn from_secret(sk: Scalar) -> Option<Self> {
        if sk.is_zero() {
            return None;
        }
        Some(SigKeyPair {
            sk,
            pk: GroupElement::mul_base(&sk),
        })
    }

    pub fn public(&self) -> GroupElement {
        self.pk
    }

    pub fn secret(&self) -> &Scalar {
        &self.sk
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        sign(self, msg)
    }
}

impl std::fmt::Debug for SigKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SigKeyPair").field("pk", &self.pk).finish_non_exhaustive()
    }
}

fn challenge(commitment: &GroupElement, pk: &GroupElement, msg: &[u8]) -> Scalar {
    hash_to_scalar(
        "kf/sig/challenge",
        &[&commitment.to_bytes(), &pk.to_bytes(), msg],
    )
}

pub fn sign(kp: &SigKeyPair, msg: &[u8]) -> Signature {
    let nonce = hash_to_scalar("kf/sig/nonce", &[&kp.sk.to_bytes(), &kp.pk.to_bytes(), msg]);
    let commitment = GroupElement::mul_base(&nonce);
    let e = challenge(&commitment, &kp.pk, msg);
    Signature {
        commitment,
        response: nonce + e * kp.sk,
    }
}

pub fn verify(pk: &GroupElement, msg: &[u8], sig: &Signature) -> bool {
    if pk.is_identity() {
        return false;
    }
    let e = challenge(&sig.commitment, pk, msg);
    // s·G - e·pk == R
    GroupElement::vartime_double_base(&sig.response, &(-e), pk) == sig.commitment
}

/// Decodes and verifies in one step; any decoding failure is simply `false`.
pub fn verify_bytes(pk: &GroupElement, msg: &[u8], sig: &[u8]) -> bool {
    Signature::from_bytes(sig).is_ok_and(|s| verify(pk, msg, &s))
}

impl Signature {
    pub const ENCODED_LEN: usize = POINT_LEN + SCALAR_LEN;

    pub fn encode(&self, enc: &mut Encoder) {
        enc.put_fixed(&self.commitment.to_bytes())
            .put_fixed(&self.response.to_bytes());
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let commitment = GroupElement::from_bytes(dec.get_fixed(POINT_LEN)?)?;
        let response = Scalar::from_bytes(dec.get_fixed(SCALAR_LEN)?)?;
        Ok(Signature {
            commitment,
            response,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let sig = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(sig)
    }
}
