//! A commit-then-key-release stand-in for MPC-TLS.
//!
//! The client and server agree on a handshake secret over X25519; the server
//! authenticates the handshake with its Ed25519 key. Request records are keyed
//! from the handshake secret. Response records are keyed from a fresh seed the
//! server keeps to itself until it receives a statement notice, which the
//! notary sends only after signing the ciphertext chain. At that point the
//! seed is released to the client, sealed under a key the notary cannot
//! derive.
//!
//! Records are `keystream XOR plaintext || tag`, where the keystream is
//! ChaCha20 keyed per record and `tag = SHA256("VET/mac" || K || dir || index
//! || ct)[..16]`. The notary logs `SHA256(ct || tag)` per record, so a record
//! key disclosed later is bound to the logged ciphertext through the tag.
//!
//! Wire format: every message is `[kind u8][len u32 BE][payload]`; a flight is
//! a concatenation of messages.

use std::sync::{Arc, Mutex};

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as XPublic, StaticSecret};

use crate::crypto::fingerprint;
use crate::http::{self, HttpHandler};

pub const MAX_RECORD: usize = 16 * 1024;
pub const TAG_LEN: usize = 16;
const RELEASE_INDEX: u32 = u32::MAX;
const MAX_DOMAIN: usize = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TlsError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unexpected message: {0}")]
    Unexpected(String),
    #[error("server signature on the handshake is invalid")]
    BadServerSignature,
    #[error("server key fingerprint {found} does not match pinned {pinned}")]
    PinMismatch { found: String, pinned: String },
    #[error("record {direction:?}/{index} failed authentication")]
    BadRecord { direction: Direction, index: u32 },
    #[error("peer alert: {0}")]
    Alert(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Client to server.
    Up,
    /// Server to client.
    Down,
}

impl Direction {
    fn byte(self) -> u8 {
        match self {
            Direction::Up => 0,
            Direction::Down => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    ClientHello { domain: String, random: [u8; 32], share: [u8; 32] },
    ServerHello { server_key: [u8; 32], random: [u8; 32], share: [u8; 32], signature: [u8; 64] },
    Record { direction: Direction, index: u32, body: Vec<u8> },
    StatementNotice { digest: [u8; 32] },
    KeyRelease { sealed: Vec<u8> },
    Alert { reason: String },
}

impl Message {
    fn kind(&self) -> u8 {
        match self {
            Message::ClientHello { .. } => 1,
            Message::ServerHello { .. } => 2,
            Message::Record { .. } => 3,
            Message::StatementNotice { .. } => 4,
            Message::KeyRelease { .. } => 5,
            Message::Alert { .. } => 6,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        match self {
            Message::ClientHello { domain, random, share } => {
                payload.push(domain.len() as u8);
                payload.extend_from_slice(domain.as_bytes());
                payload.extend_from_slice(random);
                payload.extend_from_slice(share);
            }
            Message::ServerHello { server_key, random, share, signature } => {
                payload.extend_from_slice(server_key);
                payload.extend_from_slice(random);
                payload.extend_from_slice(share);
                payload.extend_from_slice(signature);
            }
            Message::Record { direction, index, body } => {
                payload.push(direction.byte());
                payload.extend_from_slice(&index.to_be_bytes());
                payload.extend_from_slice(body);
            }
            Message::StatementNotice { digest } => payload.extend_from_slice(digest),
            Message::KeyRelease { sealed } => payload.extend_from_slice(sealed),
            Message::Alert { reason } => payload.extend_from_slice(reason.as_bytes()),
        }
        let mut out = Vec::with_capacity(payload.len() + 5);
        out.push(self.kind());
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&payload);
        out
    }

    fn decode_payload(kind: u8, p: &[u8]) -> Result<Self, TlsError> {
        let bad = |m: &str| TlsError::Malformed(m.to_string());
        let arr32 = |s: &[u8]| -> [u8; 32] { s.try_into().unwrap() };
        match kind {
            1 => {
                let n = *p.first().ok_or_else(|| bad("empty client hello"))? as usize;
                if p.len() != 1 + n + 64 {
                    return Err(bad("client hello length"));
                }
                let domain = std::str::from_utf8(&p[1..1 + n]).map_err(|_| bad("domain is not UTF-8"))?.to_string();
                Ok(Message::ClientHello { domain, random: arr32(&p[1 + n..33 + n]), share: arr32(&p[33 + n..]) })
            }
            2 => {
                if p.len() != 160 {
                    return Err(bad("server hello length"));
                }
                Ok(Message::ServerHello {
                    server_key: arr32(&p[..32]),
                    random: arr32(&p[32..64]),
                    share: arr32(&p[64..96]),
                    signature: p[96..].try_into().unwrap(),
                })
            }
            3 => {
                if p.len() < 5 + TAG_LEN {
                    return Err(bad("record too short"));
                }
                let direction = match p[0] {
                    0 => Direction::Up,
                    1 => Direction::Down,
                    _ => return Err(bad("record direction")),
                };
                let index = u32::from_be_bytes(p[1..5].try_into().unwrap());
                Ok(Message::Record { direction, index, body: p[5..].to_vec() })
            }
            4 => Ok(Message::StatementNotice { digest: p.try_into().map_err(|_| bad("notice length"))? }),
            5 => {
                if p.len() != 32 + TAG_LEN {
                    return Err(bad("key release length"));
                }
                Ok(Message::KeyRelease { sealed: p.to_vec() })
            }
            6 => Ok(Message::Alert { reason: String::from_utf8_lossy(p).into_owned() }),
            k => Err(TlsError::Malformed(format!("unknown message kind {k}"))),
        }
    }
}

pub fn encode_flight(messages: &[Message]) -> Vec<u8> {
    messages.iter().flat_map(Message::encode).collect()
}

pub fn decode_flight(mut bytes: &[u8]) -> Result<Vec<Message>, TlsError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 5 {
            return Err(TlsError::Malformed("truncated message header".into()));
        }
        let len = u32::from_be_bytes(bytes[1..5].try_into().unwrap()) as usize;
        if bytes.len() < 5 + len {
            return Err(TlsError::Malformed("truncated message payload".into()));
        }
        out.push(Message::decode_payload(bytes[0], &bytes[5..5 + len])?);
        bytes = &bytes[5 + len..];
    }
    Ok(out)
}

fn h(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    hasher.finalize().into()
}

pub fn handshake_secret(shared: &[u8; 32], client_random: &[u8; 32], server_random: &[u8; 32]) -> [u8; 32] {
    h(&[b"VET/hs", shared, client_random, server_random])
}

pub fn up_key(hs: &[u8; 32], index: u32) -> [u8; 32] {
    h(&[b"VET/up", hs, &index.to_be_bytes()])
}

pub fn down_key(seed: &[u8; 32], index: u32) -> [u8; 32] {
    h(&[b"VET/down", seed, &index.to_be_bytes()])
}

fn release_key(hs: &[u8; 32]) -> [u8; 32] {
    h(&[b"VET/release", hs])
}

/// Digest the server signs: binds the client hello to the server's key and
/// key share.
pub fn server_hello_digest(client_hello: &[u8], server_key: &[u8; 32], random: &[u8; 32], share: &[u8; 32]) -> [u8; 32] {
    h(&[b"VET/server-hello", client_hello, server_key, random, share])
}

pub fn handshake_hash(client_hello: &[u8], server_hello: &[u8]) -> [u8; 32] {
    h(&[b"VET/handshake", client_hello, server_hello])
}

fn tag(key: &[u8; 32], direction: Direction, index: u32, ct: &[u8]) -> [u8; TAG_LEN] {
    h(&[b"VET/mac", key, &[direction.byte()], &index.to_be_bytes(), ct])[..TAG_LEN].try_into().unwrap()
}

fn keystream_xor(key: &[u8; 32], data: &mut [u8]) {
    let mut rng = ChaCha20Rng::from_seed(*key);
    let mut ks = vec![0u8; data.len()];
    rng.fill_bytes(&mut ks);
    for (d, k) in data.iter_mut().zip(ks) {
        *d ^= k;
    }
}

/// Encrypts and authenticates one record; returns `ct || tag`.
pub fn seal_record(key: &[u8; 32], direction: Direction, index: u32, plaintext: &[u8]) -> Vec<u8> {
    let mut body = plaintext.to_vec();
    keystream_xor(key, &mut body);
    let t = tag(key, direction, index, &body);
    body.extend_from_slice(&t);
    body
}

pub fn open_record(key: &[u8; 32], direction: Direction, index: u32, body: &[u8]) -> Result<Vec<u8>, TlsError> {
    if body.len() < TAG_LEN {
        return Err(TlsError::BadRecord { direction, index });
    }
    let (ct, t) = body.split_at(body.len() - TAG_LEN);
    if tag(key, direction, index, ct) != t {
        return Err(TlsError::BadRecord { direction, index });
    }
    let mut pt = ct.to_vec();
    keystream_xor(key, &mut pt);
    Ok(pt)
}

/// The hash logged in the notary's chain for a record body (`ct || tag`).
pub fn record_hash(body: &[u8]) -> [u8; 32] {
    Sha256::digest(body).into()
}

/// Splits `len` bytes into record-sized pieces, cutting at every boundary.
pub fn record_layout(len: usize, boundaries: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut cuts: Vec<usize> = boundaries.iter().copied().filter(|&b| b > 0 && b < len).collect();
    cuts.push(len);
    cuts.sort_unstable();
    cuts.dedup();
    let mut out = Vec::new();
    let mut start = 0;
    for cut in cuts {
        while cut - start > MAX_RECORD {
            out.push(start..start + MAX_RECORD);
            start += MAX_RECORD;
        }
        if cut > start {
            out.push(start..cut);
            start = cut;
        }
    }
    out
}

/// A plaintext record held by the client after the session, with its key.
#[derive(Clone, PartialEq, Eq)]
pub struct OpenedRecord {
    pub index: u32,
    pub key: [u8; 32],
    pub plaintext: Vec<u8>,
}

impl std::fmt::Debug for OpenedRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenedRecord").field("index", &self.index).field("len", &self.plaintext.len()).finish()
    }
}

/// Client (prover) side of a session.
pub struct ClientSession {
    domain: String,
    secret: StaticSecret,
    random: [u8; 32],
    hello: Vec<u8>,
    hs: Option<[u8; 32]>,
    server_key: Option<VerifyingKey>,
    handshake_hash: Option<[u8; 32]>,
    sent: Vec<OpenedRecord>,
    received: Vec<(u32, Vec<u8>)>,
}

impl ClientSession {
    pub fn new<R: RngCore>(domain: &str, rng: &mut R) -> Result<(Self, Message), TlsError> {
        if domain.is_empty() || domain.len() > MAX_DOMAIN {
            return Err(TlsError::Malformed(format!("domain length {} out of range", domain.len())));
        }
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let secret = StaticSecret::from(seed);
        let mut random = [0u8; 32];
        rng.fill_bytes(&mut random);
        let msg = Message::ClientHello { domain: domain.into(), random, share: XPublic::from(&secret).to_bytes() };
        let session = Self {
            domain: domain.into(),
            secret,
            random,
            hello: msg.encode(),
            hs: None,
            server_key: None,
            handshake_hash: None,
            sent: Vec::new(),
            received: Vec::new(),
        };
        Ok((session, msg))
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    /// Verifies the server hello and derives the handshake secret. With a
    /// pin, the server key fingerprint must match it.
    pub fn on_server_hello(&mut self, msg: &Message, pin: Option<&str>) -> Result<(), TlsError> {
        let Message::ServerHello { server_key, random, share, signature } = msg else {
            return Err(unexpected(msg, "server hello"));
        };
        let key = VerifyingKey::from_bytes(server_key).map_err(|_| TlsError::BadServerSignature)?;
        let digest = server_hello_digest(&self.hello, server_key, random, share);
        key.verify(&digest, &Signature::from_bytes(signature)).map_err(|_| TlsError::BadServerSignature)?;
        if let Some(pin) = pin {
            let found = fingerprint(&key);
            if found != pin {
                return Err(TlsError::PinMismatch { found, pinned: pin.into() });
            }
        }
        let shared = self.secret.diffie_hellman(&XPublic::from(*share)).to_bytes();
        self.hs = Some(handshake_secret(&shared, &self.random, random));
        self.server_key = Some(key);
        self.handshake_hash = Some(handshake_hash(&self.hello, &msg.encode()));
        Ok(())
    }

    pub fn server_key(&self) -> Option<VerifyingKey> {
        self.server_key
    }

    pub fn handshake_hash(&self) -> Option<[u8; 32]> {
        self.handshake_hash
    }

    fn hs(&self) -> Result<&[u8; 32], TlsError> {
        self.hs.as_ref().ok_or_else(|| TlsError::Unexpected("handshake not complete".into()))
    }

    /// Encrypts a request, cutting records at each boundary so that every
    /// secret region travels in records of its own.
    pub fn seal_request(&mut self, request: &[u8], boundaries: &[usize]) -> Result<Vec<Message>, TlsError> {
        let hs = *self.hs()?;
        let mut out = Vec::new();
        for range in record_layout(request.len(), boundaries) {
            let index = self.sent.len() as u32;
            let key = up_key(&hs, index);
            let plaintext = request[range].to_vec();
            out.push(Message::Record { direction: Direction::Up, index, body: seal_record(&key, Direction::Up, index, &plaintext) });
            self.sent.push(OpenedRecord { index, key, plaintext });
        }
        Ok(out)
    }

    /// Stores response records; they stay opaque until the key release.
    pub fn on_response(&mut self, messages: &[Message]) -> Result<(), TlsError> {
        for msg in messages {
            match msg {
                Message::Record { direction: Direction::Down, index, body } if *index as usize == self.received.len() => {
                    self.received.push((*index, body.clone()));
                }
                Message::Alert { reason } => return Err(TlsError::Alert(reason.clone())),
                other => return Err(unexpected(other, "response record")),
            }
        }
        Ok(())
    }

    pub fn received_bodies(&self) -> impl Iterator<Item = &[u8]> {
        self.received.iter().map(|(_, b)| b.as_slice())
    }

    /// Unseals the released seed and decrypts the response records.
    pub fn on_key_release(&mut self, msg: &Message) -> Result<Vec<OpenedRecord>, TlsError> {
        let Message::KeyRelease { sealed } = msg else {
            return Err(unexpected(msg, "key release"));
        };
        let rk = release_key(self.hs()?);
        let seed: [u8; 32] =
            open_record(&rk, Direction::Down, RELEASE_INDEX, sealed)?.try_into().map_err(|_| TlsError::Malformed("released seed length".into()))?;
        self.received
            .iter()
            .map(|(index, body)| {
                let key = down_key(&seed, *index);
                Ok(OpenedRecord { index: *index, key, plaintext: open_record(&key, Direction::Down, *index, body)? })
            })
            .collect()
    }

    pub fn sent_records(&self) -> &[OpenedRecord] {
        &self.sent
    }
}

fn unexpected(msg: &Message, wanted: &str) -> TlsError {
    if let Message::Alert { reason } = msg {
        return TlsError::Alert(reason.clone());
    }
    TlsError::Unexpected(format!("expected {wanted}, got message kind {}", msg.kind()))
}

/// A server endpoint that can open sessions; cheap to clone.
#[derive(Clone)]
pub struct TlsServer {
    key: SigningKey,
    domain: String,
    handler: Arc<Mutex<dyn HttpHandler>>,
    rng: Arc<Mutex<ChaCha20Rng>>,
}

impl TlsServer {
    pub fn new(key: SigningKey, domain: &str, handler: impl HttpHandler + 'static, seed: u64) -> Self {
        Self { key, domain: domain.into(), handler: Arc::new(Mutex::new(handler)), rng: Arc::new(Mutex::new(ChaCha20Rng::seed_from_u64(seed))) }
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    /// Serves a plaintext HTTP request directly (no session).
    pub fn handle_plain(&self, request: &[u8]) -> Vec<u8> {
        self.handler.lock().unwrap().handle(request)
    }

    pub fn session(&self) -> ServerSession {
        let mut material = [0u8; 96];
        self.rng.lock().unwrap().fill_bytes(&mut material);
        ServerSession {
            server: self.clone(),
            secret: StaticSecret::from(<[u8; 32]>::try_from(&material[..32]).unwrap()),
            random: material[32..64].try_into().unwrap(),
            seed: material[64..].try_into().unwrap(),
            hs: None,
            request: Vec::new(),
            up_index: 0,
            responded: false,
            released: false,
        }
    }
}

/// Server side of one session, driven flight by flight.
pub struct ServerSession {
    server: TlsServer,
    secret: StaticSecret,
    random: [u8; 32],
    seed: [u8; 32],
    hs: Option<[u8; 32]>,
    request: Vec<u8>,
    up_index: u32,
    responded: bool,
    released: bool,
}

impl ServerSession {
    /// Processes one inbound flight and returns the outbound flight.
    pub fn on_flight(&mut self, flight: &[u8]) -> Vec<u8> {
        match self.process(flight) {
            Ok(out) => encode_flight(&out),
            Err(e) => encode_flight(&[Message::Alert { reason: e.to_string() }]),
        }
    }

    fn process(&mut self, flight: &[u8]) -> Result<Vec<Message>, TlsError> {
        let mut out = Vec::new();
        for msg in decode_flight(flight)? {
            match msg {
                Message::ClientHello { ref domain, random: client_random, share } if self.hs.is_none() => {
                    if *domain != self.server.domain {
                        return Err(TlsError::Unexpected(format!("no virtual host {domain:?}")));
                    }
                    let server_key = self.server.key.verifying_key().to_bytes();
                    let my_share = XPublic::from(&self.secret).to_bytes();
                    let digest = server_hello_digest(&msg.encode(), &server_key, &self.random, &my_share);
                    let signature = self.server.key.sign(&digest).to_bytes();
                    let shared = self.secret.diffie_hellman(&XPublic::from(share)).to_bytes();
                    self.hs = Some(handshake_secret(&shared, &client_random, &self.random));
                    out.push(Message::ServerHello { server_key, random: self.random, share: my_share, signature });
                }
                Message::Record { direction: Direction::Up, index, body } if !self.responded => {
                    let hs = self.hs.ok_or_else(|| TlsError::Unexpected("record before handshake".into()))?;
                    if index != self.up_index {
                        return Err(TlsError::Unexpected(format!("record index {index}, expected {}", self.up_index)));
                    }
                    self.up_index += 1;
                    self.request.extend(open_record(&up_key(&hs, index), Direction::Up, index, &body)?);
                    if let Some(len) = http::request_len(&self.request).map_err(|e| TlsError::Malformed(e.to_string()))? {
                        if len != self.request.len() {
                            return Err(TlsError::Malformed("bytes after request".into()));
                        }
                        let response = self.server.handler.lock().unwrap().handle(&self.request);
                        self.responded = true;
                        for (i, range) in record_layout(response.len(), &[]).into_iter().enumerate() {
                            let index = i as u32;
                            let body = seal_record(&down_key(&self.seed, index), Direction::Down, index, &response[range]);
                            out.push(Message::Record { direction: Direction::Down, index, body });
                        }
                    }
                }
                Message::StatementNotice { .. } if self.responded && !self.released => {
                    let hs = self.hs.expect("responded implies handshake");
                    self.released = true;
                    out.push(Message::KeyRelease { sealed: seal_record(&release_key(&hs), Direction::Down, RELEASE_INDEX, &self.seed) });
                }
                other => return Err(unexpected(&other, "a message valid in this state")),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::derived_signing_key;

    fn server() -> TlsServer {
        TlsServer::new(derived_signing_key("server", 1), "echo.mock", |req: &[u8]| http::json_response(200, &req[req.len() - 2..]), 3)
    }

    #[test]
    fn flight_codec_roundtrip() {
        let msgs = vec![
            Message::ClientHello { domain: "a.b".into(), random: [1; 32], share: [2; 32] },
            Message::Record { direction: Direction::Down, index: 7, body: vec![9; 20] },
            Message::StatementNotice { digest: [3; 32] },
            Message::Alert { reason: "nope".into() },
        ];
        assert_eq!(decode_flight(&encode_flight(&msgs)).unwrap(), msgs);
        assert!(decode_flight(&[3, 0, 0, 0, 2, 0, 0]).is_err());
    }

    #[test]
    fn record_seal_open() {
        let key = [5u8; 32];
        let body = seal_record(&key, Direction::Up, 3, b"hello");
        assert_eq!(open_record(&key, Direction::Up, 3, &body).unwrap(), b"hello");
        assert!(open_record(&key, Direction::Up, 4, &body).is_err());
        assert!(open_record(&key, Direction::Down, 3, &body).is_err());
        let mut bad = body.clone();
        bad[0] ^= 1;
        assert!(open_record(&key, Direction::Up, 3, &bad).is_err());
    }

    #[test]
    fn layout_cuts_at_boundaries_and_max_size() {
        assert_eq!(record_layout(10, &[0, 4, 4, 10, 12]), vec![0..4, 4..10]);
        let big = record_layout(2 * MAX_RECORD + 5, &[]);
        assert_eq!(big.len(), 3);
        assert!(record_layout(0, &[]).is_empty());
    }

    #[test]
    fn full_session_releases_keys_only_after_notice() {
        let srv = server();
        let mut ss = srv.session();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (mut client, hello) = ClientSession::new("echo.mock", &mut rng).unwrap();
        let reply = decode_flight(&ss.on_flight(&hello.encode())).unwrap();
        client.on_server_hello(&reply[0], Some(&fingerprint(&srv.public_key()))).unwrap();
        let request = b"POST /x HTTP/1.1\r\ncontent-length: 2\r\n\r\nhi";
        let records = client.seal_request(request, &[5, 9]).unwrap();
        assert_eq!(records.len(), 3);
        let down = decode_flight(&ss.on_flight(&encode_flight(&records))).unwrap();
        client.on_response(&down).unwrap();
        // no release without the notice
        let early = decode_flight(&ss.on_flight(&encode_flight(&[]))).unwrap();
        assert!(early.is_empty());
        let release = decode_flight(&ss.on_flight(&Message::StatementNotice { digest: [0; 32] }.encode())).unwrap();
        let opened = client.on_key_release(&release[0]).unwrap();
        let response: Vec<u8> = opened.iter().flat_map(|r| r.plaintext.clone()).collect();
        assert_eq!(http::parse_response(&response).unwrap().body, b"hi");
        // a second notice is refused
        let again = decode_flight(&ss.on_flight(&Message::StatementNotice { digest: [0; 32] }.encode())).unwrap();
        assert!(matches!(again[0], Message::Alert { .. }));
    }

    #[test]
    fn pin_and_domain_are_enforced() {
        let srv = server();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (mut client, hello) = ClientSession::new("echo.mock", &mut rng).unwrap();
        let reply = decode_flight(&srv.session().on_flight(&hello.encode())).unwrap();
        assert!(matches!(client.on_server_hello(&reply[0], Some("sha256:00")), Err(TlsError::PinMismatch { .. })));
        let (_, hello) = ClientSession::new("other.mock", &mut rng).unwrap();
        let reply = decode_flight(&srv.session().on_flight(&hello.encode())).unwrap();
        assert!(matches!(reply[0], Message::Alert { .. }));
    }
}
