//! The notary: relays ciphertext between prover and server, logs the record
//! hash chain, and signs exactly one session statement per session.
//!
//! [`NotarySession`] is transport-free; [`LocalNotaryLink`] drives it in
//! process and [`crate::net`] drives it over TCP. Either way the prover only
//! sees the [`NotaryLink`] interface.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ed25519_dalek::{Signature, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{string_num, to_canonical_vec};
use crate::clock::{Clock, ManualClock, WallClock};
use crate::commitment::Digest;
use crate::crypto::{fingerprint, format_public_key};
use crate::sim::CostModel;
use crate::tls::{self, decode_flight, encode_flight, record_hash, Direction, Message, TlsServer};
use crate::webproof::{RecordEntry, SessionStatement, SignedStatement};

/// Per-direction byte limits of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityProfile {
    #[serde(with = "string_num")]
    pub up: u64,
    #[serde(with = "string_num")]
    pub down: u64,
}

impl CapacityProfile {
    /// Self-hosted notary profile.
    pub const SELF_HOSTED: Self = Self { up: 64 * 1024, down: 64 * 1024 };
    /// Public notary profile.
    pub const PUBLIC: Self = Self { up: 4 * 1024, down: 16 * 1024 };
}

#[derive(Debug, Clone)]
pub struct NotaryConfig {
    pub max_capacity: CapacityProfile,
    pub max_sessions: usize,
    pub tee_backed: bool,
    /// When set, each session waits for its modeled setup delay before it
    /// becomes usable.
    pub modeled_latency: Option<CostModel>,
}

impl Default for NotaryConfig {
    fn default() -> Self {
        Self { max_capacity: CapacityProfile::SELF_HOSTED, max_sessions: 64, tee_backed: false, modeled_latency: None }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NotaryError {
    #[error("requested capacity {requested} exceeds the notary limit {limit} ({direction:?})")]
    CapacityTooLarge { direction: Direction, requested: u64, limit: u64 },
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("too many concurrent sessions (limit {0})")]
    Busy(usize),
    #[error("session {session} aborted: relayed {direction:?} bytes {used} exceed declared capacity {capacity}")]
    CapacityExceeded { session: String, direction: Direction, used: u64, capacity: u64 },
    #[error("session {session} aborted: protocol violation: {reason}")]
    Protocol { session: String, reason: String },
    #[error("session {0} is not in a state that allows this operation")]
    State(String),
    #[error("session {0} was already signed")]
    AlreadySigned(String),
    #[error("unknown target {0}")]
    UnknownTarget(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("notary aborted the session: {0}")]
    Aborted(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Relaying,
    Finalized,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLedgerEntry {
    pub session_id: String,
    pub capacity: CapacityProfile,
    /// Running hash over the logged record chain.
    pub chain_digest: Digest,
    pub state: SessionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statement_digest: Option<Digest>,
}

/// Append-only session ledger, optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct Ledger {
    entries: BTreeMap<String, SessionLedgerEntry>,
    file: Option<File>,
}

impl Ledger {
    /// Opens (or creates) a ledger file, loading the entries already in it.
    /// A session's later lines supersede its earlier ones.
    pub fn with_file(path: &Path) -> std::io::Result<Self> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            for (i, line) in std::fs::read_to_string(path)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: SessionLedgerEntry = serde_json::from_str(line)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("ledger line {}: {e}", i + 1)))?;
                entries.insert(entry.session_id.clone(), entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { entries, file: Some(file) })
    }

    fn append(&mut self, entry: SessionLedgerEntry) -> Result<(), NotaryError> {
        if let Some(prev) = self.entries.get(&entry.session_id) {
            if prev.state == SessionState::Finalized || prev.state == SessionState::Aborted {
                return Err(NotaryError::AlreadySigned(entry.session_id));
            }
        }
        if let Some(f) = &mut self.file {
            let mut line = to_canonical_vec(&entry).expect("ledger entries are canonical");
            line.push(b'\n');
            f.write_all(&line).map_err(|e| NotaryError::Transport(format!("ledger write: {e}")))?;
        }
        self.entries.insert(entry.session_id.clone(), entry);
        Ok(())
    }

    pub fn get(&self, session_id: &str) -> Option<&SessionLedgerEntry> {
        self.entries.get(session_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &SessionLedgerEntry> {
        self.entries.values()
    }

    pub fn signed_count(&self) -> usize {
        self.entries.values().filter(|e| e.state == SessionState::Finalized).count()
    }
}

/// Setup delay of a channel: `setup_base + setup_per_byte * (up + down)`.
pub fn simulate_setup_delay(capacity_up: u64, capacity_down: u64, model: &CostModel) -> Duration {
    Duration::from_secs_f64(model.setup_time((capacity_up + capacity_down) as f64))
}

/// Shared notary state: key, limits, ledger and clock.
pub struct Notary {
    key: SigningKey,
    config: NotaryConfig,
    ledger: Mutex<Ledger>,
    clock: Arc<dyn Clock>,
    virtual_clock: Option<Arc<ManualClock>>,
    counter: AtomicU64,
    active: AtomicUsize,
}

impl std::fmt::Debug for Notary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Notary").field("key", &self.public_key_string()).field("config", &self.config).finish()
    }
}

impl Notary {
    pub fn new(key: SigningKey, config: NotaryConfig) -> Self {
        Self::with_clock(key, config, Arc::new(WallClock))
    }

    pub fn with_clock(key: SigningKey, config: NotaryConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            key,
            config,
            ledger: Mutex::new(Ledger::default()),
            clock,
            virtual_clock: None,
            counter: AtomicU64::new(0),
            active: AtomicUsize::new(0),
        }
    }

    /// Runs on virtual time: modeled setup delays advance `clock` instead of
    /// sleeping.
    pub fn with_virtual_clock(key: SigningKey, config: NotaryConfig, clock: Arc<ManualClock>) -> Self {
        let mut n = Self::with_clock(key, config, clock.clone());
        n.virtual_clock = Some(clock);
        n
    }

    /// Replaces the ledger; session numbering resumes after any sessions
    /// this key already recorded in it.
    pub fn set_ledger(&mut self, ledger: Ledger) {
        let prefix = format!("{}-", self.id_prefix());
        let next = ledger
            .entries()
            .filter_map(|e| e.session_id.strip_prefix(&prefix).and_then(|n| u64::from_str_radix(n, 16).ok()))
            .max()
            .map_or(0, |n| n + 1);
        self.counter.fetch_max(next, Ordering::SeqCst);
        self.ledger = Mutex::new(ledger);
    }

    fn id_prefix(&self) -> String {
        fingerprint(&self.public_key())[7..19].to_string()
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn public_key_string(&self) -> String {
        format_public_key(&self.public_key())
    }

    pub fn config(&self) -> &NotaryConfig {
        &self.config
    }

    pub fn ledger(&self) -> std::sync::MutexGuard<'_, Ledger> {
        self.ledger.lock().unwrap()
    }

    pub fn active_sessions(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }

    /// Opens a session of the declared capacity. Returns the session and the
    /// setup delay that was applied.
    pub fn open_session(self: &Arc<Self>, capacity_up: u64, capacity_down: u64) -> Result<(NotarySession, Duration), NotaryError> {
        if capacity_up == 0 || capacity_down == 0 {
            return Err(NotaryError::ZeroCapacity);
        }
        let limit = self.config.max_capacity;
        if capacity_up > limit.up {
            return Err(NotaryError::CapacityTooLarge { direction: Direction::Up, requested: capacity_up, limit: limit.up });
        }
        if capacity_down > limit.down {
            return Err(NotaryError::CapacityTooLarge { direction: Direction::Down, requested: capacity_down, limit: limit.down });
        }
        let max = self.config.max_sessions;
        if self.active.fetch_add(1, Ordering::SeqCst) >= max {
            self.active.fetch_sub(1, Ordering::SeqCst);
            return Err(NotaryError::Busy(max));
        }
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let id = format!("{}-{n:08x}", self.id_prefix());
        let capacity = CapacityProfile { up: capacity_up, down: capacity_down };
        let delay = match &self.config.modeled_latency {
            Some(model) => {
                let d = simulate_setup_delay(capacity_up, capacity_down, model);
                match &self.virtual_clock {
                    Some(clock) => clock.advance_secs(d.as_secs_f64()),
                    None => std::thread::sleep(d),
                }
                d
            }
            None => Duration::ZERO,
        };
        let session = NotarySession {
            notary: self.clone(),
            id: id.clone(),
            capacity,
            state: SessionState::Open,
            client_hello: None,
            domain: None,
            server_key: None,
            handshake_hash: None,
            records: Vec::new(),
            used_up: 0,
            used_down: 0,
            opened_at: self.clock.now_ms(),
            chain: Digest([0; 32]),
            tap: None,
        };
        self.ledger().append(session.ledger_entry(None)).expect("fresh session ids are unique");
        Ok((session, delay))
    }
}

/// Observer over every byte a session sees, for blindness checks.
pub type Tap = Arc<Mutex<Vec<u8>>>;

/// Transport-free notary side of one session.
pub struct NotarySession {
    notary: Arc<Notary>,
    id: String,
    capacity: CapacityProfile,
    state: SessionState,
    client_hello: Option<Vec<u8>>,
    domain: Option<String>,
    server_key: Option<VerifyingKey>,
    handshake_hash: Option<[u8; 32]>,
    records: Vec<RecordEntry>,
    used_up: u64,
    used_down: u64,
    opened_at: u64,
    chain: Digest,
    tap: Option<Tap>,
}

impl NotarySession {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn capacity(&self) -> CapacityProfile {
        self.capacity
    }

    pub fn set_tap(&mut self, tap: Tap) {
        self.tap = Some(tap);
    }

    fn ledger_entry(&self, statement_digest: Option<Digest>) -> SessionLedgerEntry {
        SessionLedgerEntry { session_id: self.id.clone(), capacity: self.capacity, chain_digest: self.chain, state: self.state, statement_digest }
    }

    fn observe(&self, bytes: &[u8]) {
        if let Some(tap) = &self.tap {
            tap.lock().unwrap().extend_from_slice(bytes);
        }
    }

    fn violation(&mut self, reason: impl Into<String>) -> NotaryError {
        self.abort();
        NotaryError::Protocol { session: self.id.clone(), reason: reason.into() }
    }

    fn live(&self) -> Result<(), NotaryError> {
        match self.state {
            SessionState::Open | SessionState::Relaying => Ok(()),
            _ => Err(NotaryError::State(self.id.clone())),
        }
    }

    fn log_record(&mut self, direction: Direction, index: u32, body: &[u8]) -> Result<(), NotaryError> {
        let expected = self.records.iter().filter(|r| r.direction == direction).count() as u32;
        if index != expected {
            return Err(self.violation(format!("{direction:?} record index {index}, expected {expected}")));
        }
        let len = (body.len() - tls::TAG_LEN) as u64;
        let (used, capacity) = match direction {
            Direction::Up => (&mut self.used_up, self.capacity.up),
            Direction::Down => (&mut self.used_down, self.capacity.down),
        };
        *used += len;
        if *used > capacity {
            let used = *used;
            self.abort();
            return Err(NotaryError::CapacityExceeded { session: self.id.clone(), direction, used, capacity });
        }
        let hash = Digest(record_hash(body));
        let mut chained = Vec::with_capacity(65);
        chained.extend_from_slice(&self.chain.0);
        chained.push(direction as u8);
        chained.extend_from_slice(&hash.0);
        self.chain = Digest(crate::canonical::sha256(&chained));
        self.records.push(RecordEntry { direction, index, ciphertext_hash: hash, length: len });
        self.state = SessionState::Relaying;
        Ok(())
    }

    /// Inspects a prover-to-server flight before it is forwarded.
    pub fn on_up(&mut self, flight: &[u8]) -> Result<(), NotaryError> {
        self.live()?;
        self.observe(flight);
        let messages = decode_flight(flight).map_err(|e| self.violation(e.to_string()))?;
        for msg in messages {
            match msg {
                Message::ClientHello { ref domain, .. } if self.client_hello.is_none() => {
                    self.domain = Some(domain.clone());
                    self.client_hello = Some(msg.encode());
                }
                Message::Record { direction: Direction::Up, index, ref body } if self.server_key.is_some() => {
                    self.log_record(Direction::Up, index, body)?;
                }
                other => return Err(self.violation(format!("unexpected upstream message {other:?}"))),
            }
        }
        Ok(())
    }

    /// Inspects a server-to-prover flight before it is forwarded.
    pub fn on_down(&mut self, flight: &[u8]) -> Result<(), NotaryError> {
        self.live()?;
        self.observe(flight);
        let messages = decode_flight(flight).map_err(|e| self.violation(e.to_string()))?;
        for msg in messages {
            match msg {
                Message::ServerHello { server_key, random, share, signature } if self.server_key.is_none() => {
                    let Some(ch) = self.client_hello.clone() else {
                        return Err(self.violation("server hello before client hello"));
                    };
                    let key = VerifyingKey::from_bytes(&server_key).map_err(|_| self.violation("bad server key"))?;
                    let digest = tls::server_hello_digest(&ch, &server_key, &random, &share);
                    if key.verify(&digest, &Signature::from_bytes(&signature)).is_err() {
                        return Err(self.violation("server hello signature invalid"));
                    }
                    self.handshake_hash = Some(tls::handshake_hash(&ch, &msg.encode()));
                    self.server_key = Some(key);
                }
                Message::Record { direction: Direction::Down, index, ref body } if self.server_key.is_some() => {
                    self.log_record(Direction::Down, index, body)?;
                }
                Message::Alert { reason } => {
                    self.abort();
                    return Err(NotaryError::Aborted(format!("server alert: {reason}")));
                }
                other => return Err(self.violation(format!("unexpected downstream message {other:?}"))),
            }
        }
        Ok(())
    }

    /// Signs the session statement. Returns the statement and the notice
    /// flight that tells the server it may release its key.
    pub fn finalize(&mut self) -> Result<(SignedStatement, Vec<u8>), NotaryError> {
        self.live()?;
        let (Some(domain), Some(server_key), Some(hh)) = (self.domain.clone(), self.server_key, self.handshake_hash) else {
            return Err(self.violation("finalize before handshake"));
        };
        let statement = SessionStatement {
            session_id: self.id.clone(),
            notary_key: self.notary.public_key_string(),
            server_domain: domain,
            server_key_fingerprint: fingerprint(&server_key),
            handshake_hash: hh,
            records: self.records.clone(),
            opened_at: self.opened_at,
            closed_at: self.notary.clock.now_ms().max(self.opened_at),
            capacity_up: self.capacity.up,
            capacity_down: self.capacity.down,
            tee_backed: self.notary.config.tee_backed,
        };
        let signed = {
            let mut ledger = self.notary.ledger();
            self.state = SessionState::Finalized;
            let signed = SignedStatement::sign(statement, &self.notary.key);
            ledger.append(self.ledger_entry(Some(Digest(signed.statement.digest()))))?;
            signed
        };
        self.notary.active.fetch_sub(1, Ordering::SeqCst);
        let notice = encode_flight(&[Message::StatementNotice { digest: signed.statement.digest() }]);
        self.observe(&notice);
        Ok((signed, notice))
    }

    /// Inspects the server's key-release flight (after finalization).
    pub fn on_release(&mut self, flight: &[u8]) -> Result<(), NotaryError> {
        if self.state != SessionState::Finalized {
            return Err(NotaryError::State(self.id.clone()));
        }
        self.observe(flight);
        match decode_flight(flight).as_deref() {
            Ok([Message::KeyRelease { .. }]) => Ok(()),
            Ok([Message::Alert { reason }]) => Err(NotaryError::Aborted(format!("server alert: {reason}"))),
            _ => Err(NotaryError::Protocol { session: self.id.clone(), reason: "expected a key release".into() }),
        }
    }

    /// Aborts the session; no statement will ever be signed for it.
    pub fn abort(&mut self) {
        if matches!(self.state, SessionState::Open | SessionState::Relaying) {
            self.state = SessionState::Aborted;
            self.notary.active.fetch_sub(1, Ordering::SeqCst);
            let _ = self.notary.ledger().append(self.ledger_entry(None));
        }
    }
}

impl Drop for NotarySession {
    fn drop(&mut self) {
        self.abort();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenAck {
    pub session_id: String,
    #[serde(with = "string_num")]
    pub setup_delay_ms: u64,
}

/// Prover-side view of a notary: open a channel, relay flights through it,
/// and obtain the signed statement plus the server's key release.
pub trait NotaryLink {
    fn open(&mut self, target: &str, capacity_up: u64, capacity_down: u64) -> Result<OpenAck, NotaryError>;
    fn relay(&mut self, flight: &[u8]) -> Result<Vec<u8>, NotaryError>;
    fn finalize(&mut self) -> Result<(SignedStatement, Vec<u8>), NotaryError>;
}

/// In-process link: the notary relays directly to in-process servers.
pub struct LocalNotaryLink {
    notary: Arc<Notary>,
    servers: BTreeMap<String, TlsServer>,
    active: Option<(NotarySession, tls::ServerSession)>,
    tap: Option<Tap>,
}

impl LocalNotaryLink {
    pub fn new(notary: Arc<Notary>) -> Self {
        Self { notary, servers: BTreeMap::new(), active: None, tap: None }
    }

    pub fn with_server(mut self, server: TlsServer) -> Self {
        self.servers.insert(server.domain().to_string(), server);
        self
    }

    pub fn add_server(&mut self, server: TlsServer) {
        self.servers.insert(server.domain().to_string(), server);
    }

    /// Records everything the notary observes in subsequent sessions.
    pub fn set_tap(&mut self, tap: Tap) {
        self.tap = Some(tap);
    }

    fn session(&mut self) -> Result<&mut (NotarySession, tls::ServerSession), NotaryError> {
        self.active.as_mut().ok_or_else(|| NotaryError::State("no open session".into()))
    }
}

impl NotaryLink for LocalNotaryLink {
    fn open(&mut self, target: &str, capacity_up: u64, capacity_down: u64) -> Result<OpenAck, NotaryError> {
        let server = self.servers.get(target).ok_or_else(|| NotaryError::UnknownTarget(target.into()))?.session();
        let (mut session, delay) = self.notary.open_session(capacity_up, capacity_down)?;
        if let Some(tap) = &self.tap {
            session.set_tap(tap.clone());
        }
        let ack = OpenAck { session_id: session.id().to_string(), setup_delay_ms: delay.as_millis() as u64 };
        self.active = Some((session, server));
        Ok(ack)
    }

    fn relay(&mut self, flight: &[u8]) -> Result<Vec<u8>, NotaryError> {
        let (notary, server) = self.session()?;
        notary.on_up(flight)?;
        let reply = server.on_flight(flight);
        notary.on_down(&reply)?;
        Ok(reply)
    }

    fn finalize(&mut self) -> Result<(SignedStatement, Vec<u8>), NotaryError> {
        let (mut notary, mut server) = self.active.take().ok_or_else(|| NotaryError::State("no open session".into()))?;
        let (statement, notice) = notary.finalize()?;
        let release = server.on_flight(&notice);
        notary.on_release(&release)?;
        Ok((statement, release))
    }
}
