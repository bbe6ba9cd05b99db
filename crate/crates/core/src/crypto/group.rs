//! Prime-order group used by every signature in the crate: the Ristretto group over Curve25519.
//!
//! The group order is `2^252 + 27742317777372353535851937790883648493`. Elements encode to
//! 32 compressed bytes; scalars encode to 32 canonical big-endian bytes.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as DalekScalar;
use curve25519_dalek::traits::{Identity, VartimeMultiscalarMul};
use sha2::{Digest, Sha512};

use crate::encoding::DecodeError;

pub const POINT_LEN: usize = 32;
pub const SCALAR_LEN: usize = 32;

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(RistrettoPoint);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Scalar(DalekScalar);

impl GroupElement {
    pub fn generator() -> Self {
        GroupElement(curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT)
    }

    pub fn identity() -> Self {
        GroupElement(RistrettoPoint::identity())
    }

    pub fn is_identity(&self) -> bool {
        self.0 == RistrettoPoint::identity()
    }

    /// `k·G` via the precomputed basepoint table.
    pub fn mul_base(k: &Scalar) -> Self {
        GroupElement(&k.0 * RISTRETTO_BASEPOINT_TABLE)
    }

    /// `a·G + b·P`, variable time. Only ever applied to public values.
    pub fn vartime_double_base(a: &Scalar, b: &Scalar, p: &GroupElement) -> Self {
        GroupElement(RistrettoPoint::vartime_double_scalar_mul_basepoint(
            &b.0, &p.0, &a.0,
        ))
    }

    pub fn vartime_multiscalar(scalars: &[Scalar], points: &[GroupElement]) -> Self {
        GroupElement(RistrettoPoint::vartime_multiscalar_mul(
            scalars.iter().map(|s| s.0),
            points.iter().map(|p| p.0),
        ))
    }

    pub fn to_bytes(&self) -> [u8; POINT_LEN] {
        self.0.compress().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let compressed =
            CompressedRistretto::from_slice(bytes).map_err(|_| DecodeError::InvalidPoint)?;
        compressed
            .decompress()
            .map(GroupElement)
            .ok_or(DecodeError::InvalidPoint)
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", hex(&self.to_bytes()))
    }
}

impl Add for GroupElement {
    type Output = GroupElement;
    fn add(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 + rhs.0)
    }
}

impl Sub for GroupElement {
    type Output = GroupElement;
    fn sub(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 - rhs.0)
    }
}

impl Mul<&GroupElement> for &Scalar {
    type Output = GroupElement;
    fn mul(self, rhs: &GroupElement) -> GroupElement {
        GroupElement(self.0 * rhs.0)
    }
}

impl Scalar {
    pub const ZERO: Scalar = Scalar(DalekScalar::ZERO);
    pub const ONE: Scalar = Scalar(DalekScalar::ONE);

    pub fn from_u64(v: u64) -> Self {
        Scalar(DalekScalar::from(v))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == DalekScalar::ZERO
    }

    /// Canonical big-endian encoding.
    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        let mut out = self.0.to_bytes();
        out.reverse();
        out
    }

    /// Rejects anything that is not the canonical encoding of a value below the group order.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut le: [u8; SCALAR_LEN] = bytes.try_into().map_err(|_| DecodeError::InvalidScalar)?;
        le.reverse();
        Option::from(DalekScalar::from_canonical_bytes(le))
            .map(Scalar)
            .ok_or(DecodeError::InvalidScalar)
    }

    pub fn from_wide(bytes: &[u8; 64]) -> Self {
        Scalar(DalekScalar::from_bytes_mod_order_wide(bytes))
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Scalars are frequently secrets; only show a short fingerprint.
        let b = self.to_bytes();
        write!(f, "Scalar({}..)", hex(&b[..4]))
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl std::iter::Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::ZERO, |a, b| a + b)
    }
}

/// Domain-separated hash to a scalar: SHA-512 over length-prefixed parts, reduced mod the order.
pub fn hash_to_scalar(label: &str, parts: &[&[u8]]) -> Scalar {
    let mut h = Sha512::new();
    absorb(&mut h, label.as_bytes());
    for part in parts {
        absorb(&mut h, part);
    }
    let wide: [u8; 64] = h.finalize().into();
    Scalar::from_wide(&wide)
}

fn absorb(h: &mut Sha512, part: &[u8]) {
    h.update((part.len() as u64).to_be_bytes());
    h.update(part);
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
