//! Canonical JSON encoding and content addressing.
//!
//! Every document that gets hashed or signed (identity documents, templates,
//! session statements, attestations, bundles) goes through [`to_canonical_vec`]:
//!
//! - UTF-8, no insignificant whitespace;
//! - object keys sorted by Unicode code point (equivalently, by UTF-8 bytes);
//! - numbers are rejected, scalars travel as strings;
//! - string escaping follows the JSON grammar minimally: `"` and `\` are
//!   escaped, control characters use their short form (`\n`, `\t`, ...) or
//!   `\u00xx` with lowercase hex, everything else is emitted verbatim.

use std::fmt::Display;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("numbers are not allowed in canonical documents (found at {0})")]
    NumberNotAllowed(String),
    #[error("serialization failed: {0}")]
    Serde(String),
}

/// Serializes `value` into canonical JSON bytes.
pub fn to_canonical_vec<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let value = serde_json::to_value(value).map_err(|e| CanonicalError::Serde(e.to_string()))?;
    canonical_value_bytes(&value)
}

/// Canonical form of an already-parsed JSON value.
pub fn canonical_value_bytes(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::with_capacity(256);
    write_value(value, &mut out, &mut String::new())?;
    Ok(out)
}

/// Parses arbitrary JSON text and re-emits it canonically.
pub fn recanonicalize(text: &[u8]) -> Result<Vec<u8>, CanonicalError> {
    let value: Value = serde_json::from_slice(text).map_err(|e| CanonicalError::Serde(e.to_string()))?;
    canonical_value_bytes(&value)
}

/// Returns the JSON-pointer path of the first number inside `value`, if any.
pub fn find_number(value: &Value) -> Option<String> {
    fn walk(value: &Value, path: &mut String) -> Option<String> {
        match value {
            Value::Number(_) => Some(if path.is_empty() { "/".into() } else { path.clone() }),
            Value::Array(items) => items.iter().enumerate().find_map(|(i, v)| {
                let len = path.len();
                path.push('/');
                path.push_str(&i.to_string());
                let hit = walk(v, path);
                path.truncate(len);
                hit
            }),
            Value::Object(map) => map.iter().find_map(|(k, v)| {
                let len = path.len();
                path.push('/');
                path.push_str(&escape_pointer_token(k));
                let hit = walk(v, path);
                path.truncate(len);
                hit
            }),
            _ => None,
        }
    }
    walk(value, &mut String::new())
}

fn write_value(value: &Value, out: &mut Vec<u8>, path: &mut String) -> Result<(), CanonicalError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(_) => return Err(CanonicalError::NumberNotAllowed(if path.is_empty() { "/".into() } else { path.clone() })),
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                let len = path.len();
                path.push('/');
                path.push_str(&i.to_string());
                write_value(item, out, path)?;
                path.truncate(len);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                let len = path.len();
                path.push('/');
                path.push_str(&escape_pointer_token(key));
                write_value(&map[key], out, path)?;
                path.truncate(len);
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    out.push(b'"');
    for &b in s.as_bytes() {
        match b {
            b'"' => out.extend_from_slice(b"\\\""),
            b'\\' => out.extend_from_slice(b"\\\\"),
            b'\n' => out.extend_from_slice(b"\\n"),
            b'\r' => out.extend_from_slice(b"\\r"),
            b'\t' => out.extend_from_slice(b"\\t"),
            0x08 => out.extend_from_slice(b"\\b"),
            0x0c => out.extend_from_slice(b"\\f"),
            0x00..=0x1f => {
                out.extend_from_slice(b"\\u00");
                out.push(HEX[(b >> 4) as usize]);
                out.push(HEX[(b & 0xf) as usize]);
            }
            _ => out.push(b),
        }
    }
    out.push(b'"');
}

/// Escapes a single reference token for use inside a JSON pointer.
pub fn escape_pointer_token(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

/// `"sha256:" + lowercase hex` of the SHA-256 digest of `bytes`.
pub fn sha256_uid(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// True when `s` is `sha256:` followed by exactly 64 lowercase hex digits.
pub fn is_sha256_uid(s: &str) -> bool {
    s.strip_prefix("sha256:").is_some_and(|h| h.len() == 64 && h.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
}

/// Serde adapter that writes integers as decimal strings, since canonical
/// documents carry no JSON numbers.
pub mod string_num {
    use super::*;

    pub fn serialize<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        if s.len() > 1 && s.starts_with('0') {
            return Err(serde::de::Error::custom(format!("non-canonical integer {s:?}")));
        }
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for byte strings as lowercase hex.
pub mod hex_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        decode_lower_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for fixed-size arrays as lowercase hex.
pub mod hex_array {
    use super::*;

    pub fn serialize<const N: usize, S: Serializer>(bytes: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, const N: usize, D: Deserializer<'de>>(d: D) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(d)?;
        let v = decode_lower_hex(&s).map_err(serde::de::Error::custom)?;
        v.try_into().map_err(|v: Vec<u8>| serde::de::Error::custom(format!("expected {N} bytes, got {}", v.len())))
    }
}

pub(crate) fn decode_lower_hex(s: &str) -> Result<Vec<u8>, String> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err("hex must be lowercase".into());
    }
    hex::decode(s).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sorts_keys_and_strips_whitespace() {
        let a = recanonicalize(br#"{ "b": "1", "a": {"z": [ "x", true, null ], "y": "2"} }"#).unwrap();
        let b = recanonicalize(br#"{"a":{"y":"2","z":["x",true,null]},"b":"1"}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, br#"{"a":{"y":"2","z":["x",true,null]},"b":"1"}"#.to_vec());
    }

    #[test]
    fn rejects_numbers_with_path() {
        let err = canonical_value_bytes(&json!({"tools": [{"size": 7}]})).unwrap_err();
        assert_eq!(err, CanonicalError::NumberNotAllowed("/tools/0/size".into()));
        assert_eq!(find_number(&json!({"a": {"b/c": 1}})), Some("/a/b~1c".into()));
    }

    #[test]
    fn escapes_minimally() {
        let out = canonical_value_bytes(&json!("a\"b\\c\n\u{1}é/☃")).unwrap();
        assert_eq!(out, "\"a\\\"b\\\\c\\n\\u0001é/☃\"".as_bytes());
    }

    #[test]
    fn key_order_is_code_point_order() {
        let out = canonical_value_bytes(&json!({"é": "1", "z": "2", "Z": "3", "😀": "4", "\u{ffff}": "5"})).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "{\"Z\":\"3\",\"z\":\"2\",\"é\":\"1\",\"\u{ffff}\":\"5\",\"😀\":\"4\"}");
    }

    #[test]
    fn uid_format() {
        let uid = sha256_uid(b"");
        assert_eq!(uid, "sha256:e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert!(is_sha256_uid(&uid));
        assert!(!is_sha256_uid("sha256:8afc9b24..."));
        assert!(!is_sha256_uid(&uid.to_uppercase()));
    }

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Wrapped {
        #[serde(with = "string_num")]
        n: u64,
    }

    #[test]
    fn string_numbers_roundtrip_and_reject_leading_zero() {
        let bytes = to_canonical_vec(&Wrapped { n: 42 }).unwrap();
        assert_eq!(bytes, br#"{"n":"42"}"#);
        assert_eq!(serde_json::from_slice::<Wrapped>(&bytes).unwrap(), Wrapped { n: 42 });
        assert!(serde_json::from_str::<Wrapped>(r#"{"n":"042"}"#).is_err());
    }
}
