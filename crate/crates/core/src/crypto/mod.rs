//! Primitive layer: group, deterministic Schnorr signatures, ring signatures, PRF.

pub mod group;
pub mod prf;
pub mod ring;
pub mod schnorr;

pub use group::{hash_to_scalar, GroupElement, Scalar};
pub use prf::{prf, PrfKey};
pub use ring::{ring_sign, ring_sign_with_tape, ring_verify, RingError, RingSignature};
pub use schnorr::{SigKeyPair, Signature};
