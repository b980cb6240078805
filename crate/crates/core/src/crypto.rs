//! Algorithm-prefixed key strings and Ed25519 signing helpers.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use thiserror::Error;

use crate::canonical::{sha256, sha256_uid};

pub const ED25519_PREFIX: &str = "ed25519";

/// Algorithm prefixes that may appear in identity documents. Only Ed25519 has a
/// verifier; the others are recognised so validation can name them.
pub const KNOWN_ALGORITHMS: &[&str] = &["ed25519", "ecdsa-p256", "ecdsa-secp256k1"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("key string {0:?} has no algorithm prefix")]
    MissingPrefix(String),
    #[error("unknown key algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("key algorithm {0:?} is recognised but not supported")]
    UnsupportedAlgorithm(String),
    #[error("malformed key material: {0}")]
    Malformed(String),
}

/// Parses `"ed25519:<64 lowercase hex>"` into a verifying key.
pub fn parse_public_key(s: &str) -> Result<VerifyingKey, KeyError> {
    let (alg, material) = s.split_once(':').ok_or_else(|| KeyError::MissingPrefix(s.to_string()))?;
    if alg != ED25519_PREFIX {
        return Err(if KNOWN_ALGORITHMS.contains(&alg) {
            KeyError::UnsupportedAlgorithm(alg.to_string())
        } else {
            KeyError::UnknownAlgorithm(alg.to_string())
        });
    }
    let bytes = crate::canonical::decode_lower_hex(material).map_err(KeyError::Malformed)?;
    let bytes: [u8; 32] = bytes.try_into().map_err(|v: Vec<u8>| KeyError::Malformed(format!("expected 32 bytes, got {}", v.len())))?;
    VerifyingKey::from_bytes(&bytes).map_err(|e| KeyError::Malformed(e.to_string()))
}

pub fn format_public_key(key: &VerifyingKey) -> String {
    format!("{ED25519_PREFIX}:{}", hex::encode(key.as_bytes()))
}

/// Content fingerprint of a raw Ed25519 public key.
pub fn fingerprint(key: &VerifyingKey) -> String {
    sha256_uid(key.as_bytes())
}

/// Deterministic signing key from a 32-byte seed.
pub fn signing_key_from_seed(seed: [u8; 32]) -> SigningKey {
    SigningKey::from_bytes(&seed)
}

/// Derives a signing key from a label and a numeric seed, for fixtures and demos.
pub fn derived_signing_key(label: &str, seed: u64) -> SigningKey {
    let mut material = Vec::with_capacity(label.len() + 24);
    material.extend_from_slice(b"VET/key-derivation/");
    material.extend_from_slice(label.as_bytes());
    material.extend_from_slice(&seed.to_be_bytes());
    signing_key_from_seed(sha256(&material))
}

/// Ed25519 signature over `domain || message`, hex encoded.
pub fn sign_hex(key: &SigningKey, domain: &[u8], message: &[u8]) -> String {
    let mut buf = Vec::with_capacity(domain.len() + message.len());
    buf.extend_from_slice(domain);
    buf.extend_from_slice(message);
    hex::encode(key.sign(&buf).to_bytes())
}

pub fn verify_hex(key: &VerifyingKey, domain: &[u8], message: &[u8], signature_hex: &str) -> bool {
    let Ok(sig) = crate::canonical::decode_lower_hex(signature_hex) else {
        return false;
    };
    let Ok(sig) = <[u8; 64]>::try_from(sig.as_slice()) else {
        return false;
    };
    let mut buf = Vec::with_capacity(domain.len() + message.len());
    buf.extend_from_slice(domain);
    buf.extend_from_slice(message);
    key.verify(&buf, &Signature::from_bytes(&sig)).is_ok()
}

/// Reads a key file: 64 hex characters holding the 32-byte seed (surrounding
/// whitespace ignored).
pub fn parse_key_file(contents: &str) -> Result<SigningKey, KeyError> {
    let bytes = crate::canonical::decode_lower_hex(contents.trim()).map_err(KeyError::Malformed)?;
    let seed: [u8; 32] = bytes.try_into().map_err(|v: Vec<u8>| KeyError::Malformed(format!("expected 32-byte seed, got {}", v.len())))?;
    Ok(signing_key_from_seed(seed))
}
