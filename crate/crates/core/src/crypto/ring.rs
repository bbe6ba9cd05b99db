//! 1-of-n ring signature built as a Fiat–Shamir OR-composition of Schnorr proofs.
//!
//! Every ring member `j` contributes a commitment `R_j = s_j·G + c_j·P_j`; the signature is valid
//! when the challenges sum to `H(ring, msg, R_1..R_n)`. Non-signing slots are simulated from the
//! random tape, the real slot is closed with the secret key. Challenges and responses are uniform
//! regardless of which slot signed.

use thiserror::Error;

use super::group::{hash_to_scalar, GroupElement, Scalar, SCALAR_LEN};
use crate::encoding::{DecodeError, Decoder, Encoder};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingSignature {
    pub challenges: Vec<Scalar>,
    pub responses: Vec<Scalar>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("signer index {index} out of range for ring of {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("secret key does not match ring member {0}")]
    KeyMismatch(usize),
    #[error("ring is empty")]
    EmptyRing,
}

fn ring_bytes(ring: &[GroupElement]) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_u32(ring.len() as u32);
    for pk in ring {
        enc.put_fixed(&pk.to_bytes());
    }
    enc.finish()
}

fn aggregate_challenge(ring_enc: &[u8], msg: &[u8], commitments: &[GroupElement]) -> Scalar {
    let mut enc = Encoder::new();
    for r in commitments {
        enc.put_fixed(&r.to_bytes());
    }
    hash_to_scalar("kf/ring/challenge", &[ring_enc, msg, &enc.finish()])
}

/// Signs with a tape derived from the secret key, the ring and the message.
pub fn ring_sign(
    ring: &[GroupElement],
    index: usize,
    sk: &Scalar,
    msg: &[u8],
) -> Result<RingSignature, RingError> {
    let tape = hash_to_scalar("kf/ring/tape", &[&sk.to_bytes(), &ring_bytes(ring), msg]).to_bytes();
    ring_sign_with_tape(ring, index, sk, msg, &tape)
}

pub fn ring_sign_with_tape(
    ring: &[GroupElement],
    index: usize,
    sk: &Scalar,
    msg: &[u8],
    tape: &[u8; 32],
) -> Result<RingSignature, RingError> {
    if ring.is_empty() {
        return Err(RingError::EmptyRing);
    }
    if index >= ring.len() {
        return Err(RingError::IndexOutOfRange {
            index,
            size: ring.len(),
        });
    }
    if GroupElement::mul_base(sk) != ring[index] {
        return Err(RingError::KeyMismatch(index));
    }

    let n = ring.len();
    let mut challenges = vec![Scalar::ZERO; n];
    let mut responses = vec![Scalar::ZERO; n];
    let mut commitments = vec![GroupElement::identity(); n];
    for j in (0..n).filter(|&j| j != index) {
        let slot = (j as u32).to_be_bytes();
        challenges[j] = hash_to_scalar("kf/ring/sim-c", &[tape, &slot]);
        responses[j] = hash_to_scalar("kf/ring/sim-s", &[tape, &slot]);
        commitments[j] = GroupElement::vartime_double_base(&responses[j], &challenges[j], &ring[j]);
    }
    let nonce = hash_to_scalar("kf/ring/nonce", &[tape, &sk.to_bytes()]);
    commitments[index] = GroupElement::mul_base(&nonce);

    let total = aggregate_challenge(&ring_bytes(ring), msg, &commitments);
    let others: Scalar = challenges.iter().copied().sum();
    challenges[index] = total - others;
    responses[index] = nonce - challenges[index] * *sk;
    Ok(RingSignature {
        challenges,
        responses,
    })
}

pub fn ring_verify(ring: &[GroupElement], msg: &[u8], sig: &RingSignature) -> bool {
    let n = ring.len();
    if n == 0 || sig.challenges.len() != n || sig.responses.len() != n {
        return false;
    }
    if ring.iter().any(GroupElement::is_identity) {
        return false;
    }
    let commitments: Vec<GroupElement> = (0..n)
        .map(|j| GroupElement::vartime_double_base(&sig.responses[j], &sig.challenges[j], &ring[j]))
        .collect();
    let total = aggregate_challenge(&ring_bytes(ring), msg, &commitments);
    sig.challenges.iter().copied().sum::<Scalar>() == total
}

impl RingSignature {
    pub fn len(&self) -> usize {
        self.challenges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.challenges.is_empty()
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.put_u32(self.challenges.len() as u32);
        for c in &self.challenges {
            enc.put_fixed(&c.to_bytes());
        }
        for s in &self.responses {
            enc.put_fixed(&s.to_bytes());
        }
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n = dec.get_count(2 * SCALAR_LEN)?;
        let read = |dec: &mut Decoder<'_>| -> Result<Vec<Scalar>, DecodeError> {
            (0..n)
                .map(|_| Scalar::from_bytes(dec.get_fixed(SCALAR_LEN)?))
                .collect()
        };
        let challenges = read(dec)?;
        let responses = read(dec)?;
        Ok(RingSignature {
            challenges,
            responses,
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
