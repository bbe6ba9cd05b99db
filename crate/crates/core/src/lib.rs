//! Non-attributable email signatures.
//!
//! The crate layers a forward-forgeable signature scheme (FFS) over a certificate-chain
//! hierarchical identity-based signature scheme (HIBS), maps time chunks onto the HIBS identity
//! tree, and builds the KeyForge mail protocol and the timekeeper-based TimeForge variant on top.

pub mod bench;
pub mod crypto;
pub mod encoding;
pub mod ffs;
pub mod hibs;
pub mod keyforge;
pub mod keystore;
pub mod mailproto;
pub mod rpc;
pub mod tagtree;
pub mod timeforge;

pub use encoding::{DecodeError, Decoder, Encoder};
