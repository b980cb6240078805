//! Key files: 64 hex characters of Ed25519 seed, one key per file.
//!
//! Lookup order for a named key: an explicit `--key` path, then
//! `$VET_KEY_DIR/<name>.key`, then the built-in demo key for that name.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ed25519_dalek::SigningKey;
use rand::RngCore;
use vet_core::crypto::{derived_signing_key, format_public_key, parse_key_file};
use vet_core::demo::Keys;
use vet_core::mock;

pub const KEY_DIR_ENV: &str = "VET_KEY_DIR";

pub fn key_dir() -> Option<PathBuf> {
    std::env::var_os(KEY_DIR_ENV).map(PathBuf::from)
}

/// File name of a server key.
pub fn server_key_name(host: &str) -> String {
    format!("server-{host}")
}

fn builtin(name: &str) -> SigningKey {
    match name.strip_prefix("server-") {
        Some(host) => derived_signing_key(host, 0),
        None => derived_signing_key(name, 0),
    }
}

pub fn load(name: &str, explicit: Option<&Path>) -> Result<SigningKey> {
    let path = match explicit {
        Some(p) => Some(p.to_path_buf()),
        None => key_dir().map(|d| d.join(format!("{name}.key"))).filter(|p| p.exists()),
    };
    match path {
        Some(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading key {}", p.display()))?;
            parse_key_file(&text).with_context(|| format!("key file {}", p.display()))
        }
        None => Ok(builtin(name)),
    }
}

/// Keys for every demo service, from the key directory where present.
pub fn demo_keys() -> Result<Keys> {
    let mut keys = Keys::derived();
    keys.notary = load("notary", None)?;
    keys.enclave = load("enclave", None)?;
    for host in [mock::LLM_HOST, mock::PRICE_HOST, mock::SENTIMENT_HOST, mock::ECHO_HOST] {
        keys.servers.insert(host.to_string(), load(&server_key_name(host), None)?);
    }
    Ok(keys)
}

/// Writes fresh random keys; returns `(name, public key)` pairs.
pub fn generate(dir: &Path, names: &[String]) -> Result<Vec<(String, String)>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut out = Vec::new();
    for name in names {
        let mut seed = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut seed);
        let path = dir.join(format!("{name}.key"));
        fs::write(&path, format!("{}\n", hex::encode(seed))).with_context(|| format!("writing {}", path.display()))?;
        out.push((name.clone(), format_public_key(&SigningKey::from_bytes(&seed).verifying_key())));
    }
    Ok(out)
}

pub fn default_names() -> Vec<String> {
    let mut names = vec!["notary".to_string(), "enclave".to_string()];
    names.extend([mock::LLM_HOST, mock::PRICE_HOST, mock::SENTIMENT_HOST, mock::ECHO_HOST].map(server_key_name));
    names
}
