//! Encrypted-at-rest storage for domain master keys.
//!
//! File layout: `"KFKS" ‖ version ‖ iterations (u32) ‖ salt (16) ‖ nonce (12) ‖ ciphertext`. The
//! key is PBKDF2-HMAC-SHA256 of the passphrase; the ciphertext is ChaCha20-Poly1305 over the
//! encoded entry list, with the header bytes as associated data. Each domain may hold several
//! key generations; the newest one signs.

use std::path::Path;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use thiserror::Error;
use zeroize::Zeroizing;

use crate::crypto::{PrfKey, Scalar};
use crate::encoding::{DecodeError, Decoder, Encoder};
use crate::hibs::{self, HibsMasterKeys};

const MAGIC: &[u8; 4] = b"KFKS";
const VERSION: u8 = 1;
pub const DEFAULT_ITERATIONS: u32 = 200_000;

#[derive(Debug, Error)]
pub enum KeystoreError {
    #[error("keystore I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("keystore is corrupt: {0}")]
    Corrupt(#[from] DecodeError),
    #[error("wrong passphrase or tampered keystore")]
    Decrypt,
    #[error("no key for domain {0}")]
    UnknownDomain(String),
}

#[derive(Clone)]
pub struct DomainKey {
    pub domain: String,
    pub generation: u32,
    /// Creation time (UTC seconds), informational.
    pub created: i64,
    pub keys: HibsMasterKeys,
}

impl std::fmt::Debug for DomainKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainKey")
            .field("domain", &self.domain)
            .field("generation", &self.generation)
            .field("mvk", &self.keys.mvk())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Default, Clone)]
pub struct Keystore {
    entries: Vec<DomainKey>,
}

impl Keystore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[DomainKey] {
        &self.entries
    }

    pub fn domains(&self) -> Vec<String> {
        let mut d: Vec<String> = self.entries.iter().map(|e| e.domain.clone()).collect();
        d.sort();
        d.dedup();
        d
    }

    /// The newest generation for `domain`.
    pub fn current(&self, domain: &str) -> Option<&DomainKey> {
        self.entries
            .iter()
            .filter(|e| e.domain.eq_ignore_ascii_case(domain))
            .max_by_key(|e| e.generation)
    }

    /// Adds a fresh key generation for `domain` and returns it.
    pub fn generate(&mut self, domain: &str, depth: usize, created: i64, seed: Option<[u8; 32]>) -> &DomainKey {
        let generation = self.current(domain).map_or(1, |e| e.generation + 1);
        self.entries.push(DomainKey {
            domain: domain.to_ascii_lowercase(),
            generation,
            created,
            keys: hibs::setup(depth, seed),
        });
        self.entries.last().expect("just pushed")
    }

    fn encode_plain(&self) -> Zeroizing<Vec<u8>> {
        let mut enc = Encoder::new();
        enc.put_u32(self.entries.len() as u32);
        for e in &self.entries {
            enc.put_bytes(e.domain.as_bytes())
                .put_u32(e.generation)
                .put_i64(e.created)
                .put_u32(e.keys.depth() as u32)
                .put_fixed(&e.keys.msk().to_bytes())
                .put_fixed(e.keys.prf_key().as_bytes());
        }
        Zeroizing::new(enc.finish())
    }

    fn decode_plain(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let n = dec.get_count(4 + 4 + 8 + 4 + 64)?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let domain = String::from_utf8(dec.get_bytes()?.to_vec()).map_err(|_| DecodeError::Invalid("domain"))?;
            let generation = dec.get_u32()?;
            let created = dec.get_i64()?;
            let depth = dec.get_u32()? as usize;
            let msk = Scalar::from_bytes(dec.get_fixed(32)?)?;
            let prf = PrfKey::from_bytes(dec.get_array()?);
            let keys = HibsMasterKeys::from_parts(msk, prf, depth).ok_or(DecodeError::Invalid("master key"))?;
            entries.push(DomainKey { domain, generation, created, keys });
        }
        dec.finish()?;
        Ok(Keystore { entries })
    }

    fn derive_key(passphrase: &[u8], salt: &[u8], iterations: u32) -> Zeroizing<[u8; 32]> {
        let mut key = Zeroizing::new([0u8; 32]);
        pbkdf2::pbkdf2_hmac::<sha2::Sha256>(passphrase, salt, iterations, key.as_mut());
        key
    }

    pub fn seal(&self, passphrase: &[u8], iterations: u32) -> Vec<u8> {
        let salt: [u8; 16] = rand::random();
        let nonce: [u8; 12] = rand::random();
        let mut header = Encoder::new();
        header
            .put_fixed(MAGIC)
            .put_u8(VERSION)
            .put_u32(iterations)
            .put_fixed(&salt)
            .put_fixed(&nonce);
        let header = header.finish();
        let key = Self::derive_key(passphrase, &salt, iterations);
        let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_ref()));
        let plain = self.encode_plain();
        let ct = cipher
            .encrypt(Nonce::from_slice(&nonce), Payload { msg: &plain, aad: &header })
            .expect("encryption cannot fail for in-memory buffers");
        let mut out = header;
        out.extend_from_slice(&ct);
        out
    }

    pub fn open(bytes: &[u8], passphrase: &[u8]) -> Result<Self, KeystoreError> {
        let mut dec = Decoder::new(bytes);
        if dec.get_fixed(4)? != MAGIC {
            return Err(DecodeError::BadMagic.into());
        }
        let version = dec.get_u8()?;
        if version != VERSION {
            return Err(DecodeError::UnsupportedVersion(version).into());
        }
        let iterations = dec.get_u32()?;
        if iterations == 0 {
            return Err(DecodeError::Invalid("iterations").into());
        }
        let salt: [u8; 16] = dec.get_array()?;
        let nonce: [u8; 12] = dec.get_array()?;
        let header_len = dec.offset();
        let key = Self::derive_key(passphrase, &salt, iterations);
        let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_ref()));
        let plain = Zeroizing::new(
            cipher
                .decrypt(
                    Nonce::from_slice(&nonce),
                    Payload { msg: &bytes[header_len..], aad: &bytes[..header_len] },
                )
                .map_err(|_| KeystoreError::Decrypt)?,
        );
        Ok(Self::decode_plain(&plain)?)
    }

    pub fn load(path: &Path, passphrase: &[u8]) -> Result<Self, KeystoreError> {
        Self::open(&std::fs::read(path)?, passphrase)
    }

    /// Writes atomically (temporary file, then rename).
    pub fn save(&self, path: &Path, passphrase: &[u8], iterations: u32) -> Result<(), KeystoreError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.seal(passphrase, iterations))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}
