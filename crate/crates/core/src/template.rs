//! Request injection and response parsing algorithms.
//!
//! An [`InjectionTemplate`] deterministically renders an invocation input `x`
//! (plus secret header values) into HTTP/1.1 request bytes. The same template
//! drives the verifier-side match over a partially disclosed request, which
//! recovers `x` and checks that every non-secret byte is exactly what the
//! template prescribes. A [`ParseTemplate`] extracts the authenticated value
//! from a JSON response body.
//!
//! Both kinds are content addressed: the uid of an algorithm is the SHA-256 of
//! its canonical JSON (including the `kind` tag).

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use percent_encoding::{percent_decode, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{CoreOutput, ToolInvocation};
use crate::canonical::{canonical_value_bytes, escape_pointer_token, find_number, sha256_uid, string_num, to_canonical_vec};
use crate::http::{self, HttpError};

pub const INPUT_SLOT: &str = "{input}";
pub const MAX_CHUNK_SIZE: u64 = 4096;

/// Query-component encoding: everything except RFC 3986 unreserved characters.
const QUERY: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

const SENTINEL: &str = "\u{0}VET-INPUT\u{0}";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("invalid template: {0}")]
    Invalid(String),
    #[error("secret slot {0:?} is not bound")]
    UnboundSecret(String),
    #[error("value for secret slot {0:?} must be non-empty visible ASCII")]
    SecretNotEncodable(String),
    #[error("input cannot be encoded: {0}")]
    InputNotEncodable(String),
    #[error("request does not match template at byte {offset}: {reason}")]
    Mismatch { offset: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("upstream returned status {0}")]
    Status(u16),
    #[error("JSON pointer {0:?} not found in response body")]
    MissingPointer(String),
    #[error("malformed response body: {0}")]
    MalformedBody(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("unknown template uid {0}")]
    Unknown(String),
    #[error("template {uid} is a {found} algorithm, expected {expected}")]
    WrongKind { uid: String, found: &'static str, expected: &'static str },
    #[error("template file {file}: {reason}")]
    BadFile { file: String, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeaderValue {
    Literal(String),
    Secret(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaderTemplate {
    pub name: String,
    pub value: HeaderValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputEncoding {
    JsonString,
    Base64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyTemplate {
    /// JSON object; the string at `input_pointer` is replaced by the input.
    pub template: Value,
    pub input_pointer: String,
    pub encoding: InputEncoding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionTemplate {
    pub method: String,
    pub host: String,
    /// Request target; may contain `{input}` once, percent-encoded on render.
    pub path: String,
    #[serde(default)]
    pub headers: Vec<HeaderTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodyTemplate>,
    #[serde(with = "string_num")]
    pub chunk_size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallRule {
    pub array_pointer: String,
    pub tool_pointer: String,
    pub input_pointer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseTemplate {
    /// JSON pointer to the output value; `{input}` is replaced by the escaped
    /// invocation input.
    pub output_pointer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calls: Option<CallRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Algorithm {
    Injection(InjectionTemplate),
    Parsing(ParseTemplate),
}

impl Algorithm {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_vec(self).expect("templates contain no numbers")
    }

    pub fn uid(&self) -> String {
        sha256_uid(&self.canonical_bytes())
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Algorithm::Injection(_) => "injection",
            Algorithm::Parsing(_) => "parsing",
        }
    }

    /// Parses and validates an algorithm document.
    pub fn from_json(bytes: &[u8]) -> Result<Self, TemplateError> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| TemplateError::Invalid(e.to_string()))?;
        if let Some(path) = find_number(&value) {
            return Err(TemplateError::Invalid(format!("number at {path}; scalars must be strings")));
        }
        let alg: Algorithm = serde_json::from_value(value).map_err(|e| TemplateError::Invalid(e.to_string()))?;
        if let Algorithm::Injection(t) = &alg {
            t.compile()?;
        }
        Ok(alg)
    }
}

impl From<InjectionTemplate> for Algorithm {
    fn from(t: InjectionTemplate) -> Self {
        Algorithm::Injection(t)
    }
}

impl From<ParseTemplate> for Algorithm {
    fn from(t: ParseTemplate) -> Self {
        Algorithm::Parsing(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Query,
    Json,
    Base64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Literal(Vec<u8>),
    AlignPad,
    Secret(String),
    Input(Slot),
    ContentLength,
    BodyStart,
}

/// A rendered request together with the byte ranges the prover must hide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedRequest {
    pub bytes: Vec<u8>,
    /// Secret value plus its padding; each range is chunk aligned.
    pub secret_ranges: Vec<Range<usize>>,
    pub input_range: Range<usize>,
    pub chunk_size: u64,
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b"!#$%&'*+-.^_`|~".contains(&b))
}

fn is_visible(s: &str) -> bool {
    s.bytes().all(|b| (0x21..=0x7e).contains(&b))
}

fn in_query_scan(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b"-._~%".contains(&b)
}

fn in_base64_scan(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b"+/=".contains(&b)
}

fn align_pad(cursor: usize, chunk: usize) -> usize {
    (chunk - (cursor + 1) % chunk) % chunk + 1
}

fn push_literal(parts: &mut Vec<Part>, bytes: &[u8]) {
    if bytes.is_empty() {
        return;
    }
    if let Some(Part::Literal(prev)) = parts.last_mut() {
        prev.extend_from_slice(bytes);
    } else {
        parts.push(Part::Literal(bytes.to_vec()));
    }
}

fn json_string_body(s: &str) -> Vec<u8> {
    let quoted = canonical_value_bytes(&Value::String(s.to_string())).expect("strings are canonical");
    quoted[1..quoted.len() - 1].to_vec()
}

impl InjectionTemplate {
    fn chunk(&self) -> usize {
        self.chunk_size as usize
    }

    fn compile(&self) -> Result<Vec<Part>, TemplateError> {
        let bad = |m: String| Err(TemplateError::Invalid(m));
        if !is_token(&self.method) || self.method.bytes().any(|b| b.is_ascii_lowercase()) {
            return bad(format!("method {:?} is not an upper-case token", self.method));
        }
        if self.host.is_empty() || !is_visible(&self.host) || self.host.contains('/') {
            return bad(format!("host {:?} is not a bare host name", self.host));
        }
        if !self.path.starts_with('/') || !is_visible(&self.path) {
            return bad(format!("path {:?} must start with '/' and contain only visible ASCII", self.path));
        }
        if !(1..=MAX_CHUNK_SIZE).contains(&self.chunk_size) {
            return bad(format!("chunk_size must be within 1..={MAX_CHUNK_SIZE}"));
        }
        let path_slots = self.path.matches(INPUT_SLOT).count();
        let body_slots = usize::from(self.body.is_some());
        if path_slots + body_slots != 1 {
            return bad("template must have exactly one input slot (path or body)".into());
        }

        let mut parts = Vec::new();
        push_literal(&mut parts, format!("{} ", self.method).as_bytes());
        if let Some((before, after)) = self.path.split_once(INPUT_SLOT) {
            push_literal(&mut parts, before.as_bytes());
            parts.push(Part::Input(Slot::Query));
            if after.bytes().next().is_some_and(in_query_scan) {
                return bad("input slot in path must be followed by a delimiter".into());
            }
            push_literal(&mut parts, after.as_bytes());
        } else {
            push_literal(&mut parts, self.path.as_bytes());
        }
        push_literal(&mut parts, format!(" HTTP/1.1\r\nhost: {}\r\n", self.host).as_bytes());

        let mut seen = Vec::new();
        for h in &self.headers {
            let lname = h.name.to_ascii_lowercase();
            if !is_token(&h.name) {
                return bad(format!("header name {:?} is not a token", h.name));
            }
            if ["host", "content-length", "content-type", "transfer-encoding"].contains(&lname.as_str()) {
                return bad(format!("header {:?} is managed by the renderer", h.name));
            }
            if seen.contains(&lname) {
                return bad(format!("duplicate header {:?}", h.name));
            }
            seen.push(lname);
            match &h.value {
                HeaderValue::Literal(v) => {
                    if v.bytes().any(|b| !(0x20..=0x7e).contains(&b)) {
                        return bad(format!("header {:?} value must be printable ASCII", h.name));
                    }
                    push_literal(&mut parts, format!("{}: {}\r\n", h.name, v).as_bytes());
                }
                HeaderValue::Secret(slot) => {
                    if slot.is_empty() {
                        return bad(format!("header {:?} has an empty secret slot name", h.name));
                    }
                    push_literal(&mut parts, format!("{}:", h.name).as_bytes());
                    parts.push(Part::AlignPad);
                    parts.push(Part::Secret(slot.clone()));
                    push_literal(&mut parts, b"\r\n");
                }
            }
        }

        match &self.body {
            None => push_literal(&mut parts, b"\r\n"),
            Some(body) => {
                let (prefix, suffix) = body.split()?;
                push_literal(&mut parts, b"content-type: application/json\r\ncontent-length: ");
                parts.push(Part::ContentLength);
                push_literal(&mut parts, b"\r\n\r\n");
                parts.push(Part::BodyStart);
                push_literal(&mut parts, &prefix);
                parts.push(Part::Input(match body.encoding {
                    InputEncoding::JsonString => Slot::Json,
                    InputEncoding::Base64 => Slot::Base64,
                }));
                push_literal(&mut parts, &suffix);
            }
        }
        Ok(parts)
    }

    /// Renders `input` with the given secrets.
    pub fn inject(&self, input: &[u8], secrets: &BTreeMap<String, String>) -> Result<RenderedRequest, TemplateError> {
        let parts = self.compile()?;
        let chunk = self.chunk();
        let encoded = |slot: Slot| -> Result<Vec<u8>, TemplateError> {
            match slot {
                Slot::Base64 => Ok(B64.encode(input).into_bytes()),
                Slot::Query | Slot::Json => {
                    let s = std::str::from_utf8(input).map_err(|_| TemplateError::InputNotEncodable("input is not valid UTF-8".into()))?;
                    Ok(if slot == Slot::Query { utf8_percent_encode(s, QUERY).to_string().into_bytes() } else { json_string_body(s) })
                }
            }
        };

        let body_len = match parts.iter().position(|p| *p == Part::BodyStart) {
            None => 0,
            Some(start) => parts[start + 1..]
                .iter()
                .map(|p| match p {
                    Part::Literal(l) => Ok(l.len()),
                    Part::Input(s) => encoded(*s).map(|e| e.len()),
                    _ => Ok(0),
                })
                .sum::<Result<usize, _>>()?,
        };

        let mut out = Vec::new();
        let mut secret_ranges = Vec::new();
        let mut input_range = 0..0;
        for part in &parts {
            match part {
                Part::Literal(l) => out.extend_from_slice(l),
                Part::AlignPad => out.resize(out.len() + align_pad(out.len(), chunk), b' '),
                Part::Secret(slot) => {
                    let value = secrets.get(slot).ok_or_else(|| TemplateError::UnboundSecret(slot.clone()))?;
                    if value.is_empty() || !is_visible(value) {
                        return Err(TemplateError::SecretNotEncodable(slot.clone()));
                    }
                    let start = out.len();
                    out.extend_from_slice(value.as_bytes());
                    let end = start + value.len().div_ceil(chunk) * chunk;
                    out.resize(end, b' ');
                    secret_ranges.push(start..end);
                }
                Part::Input(slot) => {
                    let enc = encoded(*slot)?;
                    input_range = out.len()..out.len() + enc.len();
                    out.extend_from_slice(&enc);
                }
                Part::ContentLength => out.extend_from_slice(body_len.to_string().as_bytes()),
                Part::BodyStart => {}
            }
        }
        Ok(RenderedRequest { bytes: out, secret_ranges, input_range, chunk_size: self.chunk_size })
    }

    /// Matches a partially disclosed request (`None` = redacted byte) against
    /// the template and returns the decoded input. Secret slots must be
    /// redacted; every other byte must be disclosed and template-conformant.
    pub fn match_request(&self, view: &[Option<u8>]) -> Result<Vec<u8>, TemplateError> {
        let parts = self.compile()?;
        let chunk = self.chunk();
        let fail = |offset: usize, reason: &str| TemplateError::Mismatch { offset, reason: reason.to_string() };
        let known = |from: usize, to: usize| -> Result<Vec<u8>, TemplateError> {
            if to > view.len() {
                return Err(fail(view.len(), "request ends early"));
            }
            view[from..to].iter().enumerate().map(|(i, b)| b.ok_or_else(|| fail(from + i, "unexpected redacted byte"))).collect()
        };
        let scan = |from: usize, accept: &dyn Fn(u8) -> bool| -> usize {
            let mut end = from;
            while let Some(Some(b)) = view.get(end) {
                if !accept(*b) {
                    break;
                }
                end += 1;
            }
            end
        };

        let mut cursor = 0usize;
        let mut input = None;
        let mut declared_len = None;
        let mut body_start = None;
        for part in &parts {
            match part {
                Part::Literal(l) => {
                    if known(cursor, cursor + l.len())? != *l {
                        return Err(fail(cursor, "literal bytes differ"));
                    }
                    cursor += l.len();
                }
                Part::AlignPad => {
                    let n = align_pad(cursor, chunk);
                    if known(cursor, cursor + n)?.iter().any(|&b| b != b' ') {
                        return Err(fail(cursor, "secret alignment padding differs"));
                    }
                    cursor += n;
                }
                Part::Secret(_) => {
                    let mut end = cursor;
                    while matches!(view.get(end), Some(None)) {
                        end += 1;
                    }
                    if end == cursor {
                        return Err(fail(cursor, "secret slot is not redacted"));
                    }
                    if !cursor.is_multiple_of(chunk) || !(end - cursor).is_multiple_of(chunk) {
                        return Err(fail(cursor, "redacted region is not chunk aligned"));
                    }
                    cursor = end;
                }
                Part::Input(slot) => {
                    let (end, decoded) = match slot {
                        Slot::Query => {
                            let end = scan(cursor, &in_query_scan);
                            let raw = known(cursor, end)?;
                            let s = percent_decode(&raw).decode_utf8().map_err(|_| fail(cursor, "input is not UTF-8"))?.into_owned();
                            if utf8_percent_encode(&s, QUERY).to_string().as_bytes() != raw.as_slice() {
                                return Err(fail(cursor, "input is not canonically percent-encoded"));
                            }
                            (end, s.into_bytes())
                        }
                        Slot::Base64 => {
                            let end = scan(cursor, &in_base64_scan);
                            let raw = known(cursor, end)?;
                            let bytes = B64.decode(&raw).map_err(|_| fail(cursor, "input is not base64"))?;
                            if B64.encode(&bytes).as_bytes() != raw.as_slice() {
                                return Err(fail(cursor, "input is not canonically base64-encoded"));
                            }
                            (end, bytes)
                        }
                        Slot::Json => {
                            let mut end = cursor;
                            loop {
                                match view.get(end) {
                                    Some(Some(b'"')) => break,
                                    Some(Some(b'\\')) => end += 2,
                                    Some(Some(_)) => end += 1,
                                    Some(None) => return Err(fail(end, "unexpected redacted byte")),
                                    None => return Err(fail(end, "unterminated input string")),
                                }
                            }
                            let raw = known(cursor, end)?;
                            let mut quoted = Vec::with_capacity(raw.len() + 2);
                            quoted.push(b'"');
                            quoted.extend_from_slice(&raw);
                            quoted.push(b'"');
                            let s: String = serde_json::from_slice(&quoted).map_err(|_| fail(cursor, "input is not a JSON string"))?;
                            if json_string_body(&s) != raw {
                                return Err(fail(cursor, "input string is not canonically escaped"));
                            }
                            (end, s.into_bytes())
                        }
                    };
                    input = Some(decoded);
                    cursor = end;
                }
                Part::ContentLength => {
                    let end = scan(cursor, &|b: u8| b.is_ascii_digit());
                    let digits = known(cursor, end)?;
                    if digits.is_empty() || (digits.len() > 1 && digits[0] == b'0') || digits.len() > 9 {
                        return Err(fail(cursor, "content-length is not canonical"));
                    }
                    declared_len = Some(std::str::from_utf8(&digits).unwrap().parse::<usize>().unwrap());
                    cursor = end;
                }
                Part::BodyStart => body_start = Some(cursor),
            }
        }
        if cursor != view.len() {
            return Err(fail(cursor, "trailing bytes after request"));
        }
        if let (Some(start), Some(len)) = (body_start, declared_len) {
            if view.len() - start != len {
                return Err(fail(start, "content-length does not match body"));
            }
        }
        input.ok_or_else(|| fail(cursor, "input slot not found"))
    }
}

impl BodyTemplate {
    fn split(&self) -> Result<(Vec<u8>, Vec<u8>), TemplateError> {
        let invalid = |m: &str| TemplateError::Invalid(m.to_string());
        if !self.template.is_object() {
            return Err(invalid("body template must be a JSON object"));
        }
        let mut doc = self.template.clone();
        match doc.pointer_mut(&self.input_pointer) {
            Some(slot @ Value::String(_)) => *slot = Value::String(SENTINEL.into()),
            _ => return Err(invalid("body input_pointer must reference a string in the template")),
        }
        let bytes = canonical_value_bytes(&doc).map_err(|e| TemplateError::Invalid(e.to_string()))?;
        let marker = canonical_value_bytes(&Value::String(SENTINEL.into())).unwrap();
        let hits: Vec<usize> = bytes.windows(marker.len()).enumerate().filter(|(_, w)| *w == marker.as_slice()).map(|(i, _)| i).collect();
        match hits.as_slice() {
            [at] => Ok((bytes[..at + 1].to_vec(), bytes[at + marker.len() - 1..].to_vec())),
            _ => Err(invalid("body template contains the reserved input marker")),
        }
    }
}

fn value_as_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ParseTemplate {
    fn body(response: &[u8]) -> Result<Value, ParseError> {
        let resp = http::parse_response(response)?;
        if resp.status != 200 {
            return Err(ParseError::Status(resp.status));
        }
        serde_json::from_slice(&resp.body).map_err(|e| ParseError::MalformedBody(e.to_string()))
    }

    fn output_pointer_for(&self, input: &str) -> String {
        self.output_pointer.replace(INPUT_SLOT, &escape_pointer_token(input))
    }

    /// Extracts a tool result `r` for invocation input `input`.
    pub fn parse_tool(&self, response: &[u8], input: &str) -> Result<String, ParseError> {
        let body = Self::body(response)?;
        let ptr = self.output_pointer_for(input);
        body.pointer(&ptr).map(value_as_string).ok_or(ParseError::MissingPointer(ptr))
    }

    /// Extracts the core output `y` and the ordered tool calls.
    pub fn parse_core(&self, response: &[u8]) -> Result<CoreOutput, ParseError> {
        let body = Self::body(response)?;
        let ptr = self.output_pointer_for("");
        let output = body.pointer(&ptr).map(value_as_string).ok_or(ParseError::MissingPointer(ptr))?;
        let mut calls = Vec::new();
        if let Some(rule) = &self.calls {
            let items = body
                .pointer(&rule.array_pointer)
                .ok_or_else(|| ParseError::MissingPointer(rule.array_pointer.clone()))?
                .as_array()
                .ok_or_else(|| ParseError::MalformedBody(format!("{} is not an array", rule.array_pointer)))?;
            for (i, item) in items.iter().enumerate() {
                let tool = match item.pointer(&rule.tool_pointer) {
                    Some(Value::String(s)) => s.clone(),
                    Some(_) => return Err(ParseError::MalformedBody(format!("tool name of call {i} is not a string"))),
                    None => return Err(ParseError::MissingPointer(format!("{}/{i}{}", rule.array_pointer, rule.tool_pointer))),
                };
                let input = item
                    .pointer(&rule.input_pointer)
                    .map(value_as_string)
                    .ok_or_else(|| ParseError::MissingPointer(format!("{}/{i}{}", rule.array_pointer, rule.input_pointer)))?;
                calls.push(ToolInvocation { tool, input });
            }
        }
        Ok(CoreOutput { output, calls })
    }
}

/// Content-addressed store of injection and parsing algorithms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateRegistry {
    algorithms: BTreeMap<String, Algorithm>,
}

impl TemplateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, alg: impl Into<Algorithm>) -> String {
        let alg = alg.into();
        let uid = alg.uid();
        self.algorithms.insert(uid.clone(), alg);
        uid
    }

    pub fn get(&self, uid: &str) -> Option<&Algorithm> {
        self.algorithms.get(uid)
    }

    pub fn contains(&self, uid: &str) -> bool {
        self.algorithms.contains_key(uid)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Algorithm)> {
        self.algorithms.iter()
    }

    pub fn len(&self) -> usize {
        self.algorithms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.algorithms.is_empty()
    }

    pub fn injection(&self, uid: &str) -> Result<&InjectionTemplate, RegistryError> {
        match self.algorithms.get(uid) {
            Some(Algorithm::Injection(t)) => Ok(t),
            Some(other) => Err(RegistryError::WrongKind { uid: uid.into(), found: other.kind_name(), expected: "injection" }),
            None => Err(RegistryError::Unknown(uid.into())),
        }
    }

    pub fn parsing(&self, uid: &str) -> Result<&ParseTemplate, RegistryError> {
        match self.algorithms.get(uid) {
            Some(Algorithm::Parsing(t)) => Ok(t),
            Some(other) => Err(RegistryError::WrongKind { uid: uid.into(), found: other.kind_name(), expected: "parsing" }),
            None => Err(RegistryError::Unknown(uid.into())),
        }
    }

    /// Loads every `<uid>.json` file in `dir`, checking that each file's
    /// content hashes to its name.
    pub fn load_dir(dir: &Path) -> Result<Self, RegistryError> {
        let mut reg = Self::new();
        let entries = std::fs::read_dir(dir).map_err(|e| RegistryError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let file = path.display().to_string();
            let bytes = std::fs::read(&path).map_err(|e| RegistryError::Io(format!("{file}: {e}")))?;
            let alg = Algorithm::from_json(&bytes).map_err(|e| RegistryError::BadFile { file: file.clone(), reason: e.to_string() })?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let uid = alg.uid();
            if stem != uid && stem != uid.replace(':', "_") {
                return Err(RegistryError::BadFile { file, reason: format!("content hashes to {uid}") });
            }
            reg.algorithms.insert(uid, alg);
        }
        Ok(reg)
    }

    /// Writes each algorithm as canonical JSON to `<dir>/<uid>.json`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), RegistryError> {
        std::fs::create_dir_all(dir).map_err(|e| RegistryError::Io(e.to_string()))?;
        for (uid, alg) in &self.algorithms {
            let path = dir.join(format!("{uid}.json"));
            std::fs::write(&path, alg.canonical_bytes()).map_err(|e| RegistryError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}
