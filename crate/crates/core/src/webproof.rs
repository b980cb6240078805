//! Web proofs: a notarized session, commitments to both directions, and a
//! selective opening of each.
//!
//! Verification runs in three steps. First the statement signature, the server
//! domain, the record chain and every disclosed record key are checked, which
//! yields an authenticated partial view of the request and the full response.
//! Then the request view must match the injection template and the response
//! must parse. Finally the claimed value is compared with the parsed one.

use std::ops::Range;

use ed25519_dalek::{SigningKey, VerifyingKey};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{hex_array, sha256, string_num, to_canonical_vec};
use crate::commitment::{commit, verify_disclosure, ByteRange, Digest, Disclosure, DisclosureError, Opening, TranscriptCommitment};
use crate::crypto::{fingerprint, format_public_key, parse_public_key, sign_hex, verify_hex};
use crate::notary::{NotaryError, NotaryLink};
use crate::template::{InjectionTemplate, ParseTemplate, RenderedRequest};
use crate::tls::{decode_flight, encode_flight, record_hash, seal_record, ClientSession, Direction, OpenedRecord, TlsError};
use crate::verdict::{Authenticated, RejectReason, Rejection, Role};

/// Protocol identifier a TLSNotary component must declare.
pub const PROTOCOL_VERSION: &str = "vet-notary/1";

const STATEMENT_DOMAIN: &[u8] = b"VET/session-statement/v1\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub direction: Direction,
    #[serde(with = "string_num")]
    pub index: u32,
    pub ciphertext_hash: Digest,
    /// Plaintext length of the record.
    #[serde(with = "string_num")]
    pub length: u64,
}

/// What the notary attests about one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionStatement {
    pub session_id: String,
    pub notary_key: String,
    pub server_domain: String,
    pub server_key_fingerprint: String,
    #[serde(with = "hex_array")]
    pub handshake_hash: [u8; 32],
    pub records: Vec<RecordEntry>,
    #[serde(with = "string_num")]
    pub opened_at: u64,
    #[serde(with = "string_num")]
    pub closed_at: u64,
    #[serde(with = "string_num")]
    pub capacity_up: u64,
    #[serde(with = "string_num")]
    pub capacity_down: u64,
    pub tee_backed: bool,
}

impl SessionStatement {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_vec(self).expect("statements serialize canonically")
    }

    pub fn digest(&self) -> [u8; 32] {
        sha256(&self.canonical_bytes())
    }

    pub fn records(&self, direction: Direction) -> impl Iterator<Item = &RecordEntry> {
        self.records.iter().filter(move |r| r.direction == direction)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignedStatement {
    pub statement: SessionStatement,
    pub signature: String,
}

impl SignedStatement {
    pub fn sign(statement: SessionStatement, key: &SigningKey) -> Self {
        let signature = sign_hex(key, STATEMENT_DOMAIN, &statement.canonical_bytes());
        Self { statement, signature }
    }

    pub fn verify(&self, key: &VerifyingKey) -> bool {
        verify_hex(key, STATEMENT_DOMAIN, &self.statement.canonical_bytes(), &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordKey {
    #[serde(with = "string_num")]
    pub index: u32,
    #[serde(with = "hex_array")]
    pub key: [u8; 32],
}

/// Commitment to one direction of the session plus its opening.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionProof {
    pub commitment: TranscriptCommitment,
    pub disclosure: Disclosure,
    /// Keys of the records whose plaintext is disclosed in full.
    pub record_keys: Vec<RecordKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WebProof {
    pub statement: SignedStatement,
    pub request: DirectionProof,
    pub response: DirectionProof,
}

/// Where and how large a notarized channel is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpec {
    /// Transport address the notary connects to (a domain for in-process
    /// links, `host:port` over TCP).
    pub target: String,
    pub domain: String,
    pub capacity_up: u64,
    pub capacity_down: u64,
    pub server_pin: Option<String>,
}

impl ChannelSpec {
    pub fn new(domain: &str, capacity_up: u64, capacity_down: u64) -> Self {
        Self { target: domain.into(), domain: domain.into(), capacity_up, capacity_down, server_pin: None }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("request of {len} bytes exceeds the channel's upstream capacity {capacity}")]
    RequestTooLarge { len: usize, capacity: u64 },
    #[error(transparent)]
    Notary(#[from] NotaryError),
    #[error(transparent)]
    Tls(#[from] TlsError),
    #[error("notary statement disagrees with the session: {0}")]
    StatementMismatch(String),
    #[error("disclosure: {0}")]
    Disclosure(String),
}

/// Everything the prover holds after a notarized session.
pub struct SessionOutcome {
    pub statement: SignedStatement,
    pub request: Vec<u8>,
    pub response: Vec<u8>,
    pub secret_ranges: Vec<Range<usize>>,
    pub chunk_size: u64,
    up: Vec<OpenedRecord>,
    down: Vec<OpenedRecord>,
}

impl std::fmt::Debug for SessionOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionOutcome").field("session", &self.statement.statement.session_id).finish_non_exhaustive()
    }
}

/// Sends `rendered` through a notarized channel and returns the session
/// material. Aborts if the statement does not describe what the prover saw.
pub fn execute_session<R: RngCore>(
    channel: &ChannelSpec,
    rendered: &RenderedRequest,
    link: &mut dyn NotaryLink,
    rng: &mut R,
) -> Result<SessionOutcome, SessionError> {
    if rendered.bytes.len() as u64 > channel.capacity_up {
        return Err(SessionError::RequestTooLarge { len: rendered.bytes.len(), capacity: channel.capacity_up });
    }
    link.open(&channel.target, channel.capacity_up, channel.capacity_down)?;
    let (mut client, hello) = ClientSession::new(&channel.domain, rng)?;
    let reply = decode_flight(&link.relay(&hello.encode())?)?;
    let [server_hello] = reply.as_slice() else {
        return Err(TlsError::Unexpected(format!("{} messages in handshake reply", reply.len())).into());
    };
    client.on_server_hello(server_hello, channel.server_pin.as_deref())?;

    let boundaries: Vec<usize> = rendered.secret_ranges.iter().flat_map(|r| [r.start, r.end]).collect();
    let records = client.seal_request(&rendered.bytes, &boundaries)?;
    let reply = decode_flight(&link.relay(&encode_flight(&records))?)?;
    client.on_response(&reply)?;

    let (statement, release) = link.finalize()?;
    check_statement(&statement, channel, &client)?;
    let release = decode_flight(&release)?;
    let [release] = release.as_slice() else {
        return Err(TlsError::Unexpected("expected a single key release".into()).into());
    };
    let down = client.on_key_release(release)?;
    let response = down.iter().flat_map(|r| r.plaintext.iter().copied()).collect();
    Ok(SessionOutcome {
        statement,
        request: rendered.bytes.clone(),
        response,
        secret_ranges: rendered.secret_ranges.clone(),
        chunk_size: rendered.chunk_size,
        up: client.sent_records().to_vec(),
        down,
    })
}

fn check_statement(signed: &SignedStatement, channel: &ChannelSpec, client: &ClientSession) -> Result<(), SessionError> {
    let bad = |m: &str| Err(SessionError::StatementMismatch(m.into()));
    let s = &signed.statement;
    let Ok(key) = parse_public_key(&s.notary_key) else {
        return bad("unparseable notary key");
    };
    if !signed.verify(&key) {
        return bad("signature does not verify");
    }
    if s.server_domain != channel.domain {
        return bad("server domain");
    }
    if Some(s.handshake_hash) != client.handshake_hash()
        || Some(s.server_key_fingerprint.as_str()) != client.server_key().map(|k| fingerprint(&k)).as_deref()
    {
        return bad("handshake");
    }
    if s.capacity_up != channel.capacity_up || s.capacity_down != channel.capacity_down {
        return bad("capacity");
    }
    let up: Vec<[u8; 32]> = client.sent_records().iter().map(|r| record_hash(&seal_record(&r.key, Direction::Up, r.index, &r.plaintext))).collect();
    let down: Vec<[u8; 32]> = client.received_bodies().map(record_hash).collect();
    let logged = |d| s.records(d).map(|r| r.ciphertext_hash.0).collect::<Vec<_>>();
    if logged(Direction::Up) != up || logged(Direction::Down) != down {
        return bad("record chain");
    }
    Ok(())
}

fn complement(len: usize, hidden: &[Range<usize>]) -> Vec<ByteRange> {
    let mut hidden = hidden.to_vec();
    hidden.sort_by_key(|r| r.start);
    let mut out = Vec::new();
    let mut pos = 0;
    for r in hidden {
        if r.start > pos {
            out.push(ByteRange::new(pos as u64, (r.start - pos) as u64));
        }
        pos = pos.max(r.end);
    }
    if pos < len {
        out.push(ByteRange::new(pos as u64, (len - pos) as u64));
    }
    out
}

fn direction_proof<R: RngCore>(
    plaintext: &[u8],
    records: &[OpenedRecord],
    reveal: &[ByteRange],
    chunk_size: u64,
    rng: &mut R,
) -> Result<DirectionProof, SessionError> {
    let (commitment, opening): (TranscriptCommitment, Opening) = commit(plaintext, chunk_size, rng);
    let disclosure = opening.disclose(reveal).map_err(|e| SessionError::Disclosure(e.to_string()))?;
    let mut revealed = vec![false; plaintext.len()];
    for r in &disclosure.ranges {
        revealed[r.offset as usize..r.end() as usize].fill(true);
    }
    let mut record_keys = Vec::new();
    let mut offset = 0;
    for rec in records {
        let span = &revealed[offset..offset + rec.plaintext.len()];
        offset += rec.plaintext.len();
        if span.iter().all(|&b| b) {
            record_keys.push(RecordKey { index: rec.index, key: rec.key });
        } else if span.iter().any(|&b| b) {
            return Err(SessionError::Disclosure(format!("record {} would be only partly revealed", rec.index)));
        }
    }
    Ok(DirectionProof { commitment, disclosure, record_keys })
}

impl SessionOutcome {
    /// Everything except the secret ranges.
    pub fn default_request_reveal(&self) -> Vec<ByteRange> {
        complement(self.request.len(), &self.secret_ranges)
    }

    pub fn prove<R: RngCore>(&self, request_reveal: &[ByteRange], response_reveal: &[ByteRange], rng: &mut R) -> Result<WebProof, SessionError> {
        Ok(WebProof {
            statement: self.statement.clone(),
            request: direction_proof(&self.request, &self.up, request_reveal, self.chunk_size, rng)?,
            response: direction_proof(&self.response, &self.down, response_reveal, self.chunk_size, rng)?,
        })
    }

    /// Hides the secrets and reveals everything else.
    pub fn default_proof<R: RngCore>(&self, rng: &mut R) -> Result<WebProof, SessionError> {
        let full = [ByteRange::new(0, self.response.len() as u64)];
        let response = if self.response.is_empty() { &[][..] } else { &full[..] };
        self.prove(&self.default_request_reveal(), response, rng)
    }
}

/// Runs a notarized session and builds the default proof for it.
pub fn run_session<R: RngCore>(
    channel: &ChannelSpec,
    rendered: &RenderedRequest,
    link: &mut dyn NotaryLink,
    rng: &mut R,
) -> Result<(Vec<u8>, WebProof), SessionError> {
    let outcome = execute_session(channel, rendered, link, rng)?;
    let proof = outcome.default_proof(rng)?;
    Ok((outcome.response, proof))
}

/// Verifier for web proofs of one component.
#[derive(Debug, Clone)]
pub struct WebProofChecker {
    pub domain: String,
    pub notary_key: VerifyingKey,
    pub injection: InjectionTemplate,
    pub parser: ParseTemplate,
    pub server_pin: Option<String>,
}

fn cipher(detail: impl Into<String>) -> Rejection {
    Rejection::new(RejectReason::CipherMismatch, detail)
}

fn disclosure_err(dir: Direction, e: DisclosureError) -> Rejection {
    cipher(format!("{dir:?} disclosure: {e}"))
}

/// Authenticated partial view of one direction.
fn authenticate_direction(entries: &[&RecordEntry], capacity: u64, proof: &DirectionProof, dir: Direction) -> Result<Vec<Option<u8>>, Rejection> {
    for (i, e) in entries.iter().enumerate() {
        if e.index as usize != i {
            return Err(cipher(format!("{dir:?} record chain is not contiguous")));
        }
    }
    let total: u64 = entries.iter().map(|e| e.length).sum();
    if total > capacity {
        return Err(cipher(format!("{dir:?} records carry {total} bytes over capacity {capacity}")));
    }
    if proof.commitment.total_length != total {
        return Err(cipher(format!("{dir:?} commitment covers {} bytes, records carry {total}", proof.commitment.total_length)));
    }
    let opened = verify_disclosure(&proof.commitment, &proof.disclosure).map_err(|e| disclosure_err(dir, e))?;
    let mut view: Vec<Option<u8>> = vec![None; total as usize];
    for (range, bytes) in &opened {
        for (slot, b) in view[range.offset as usize..range.end() as usize].iter_mut().zip(bytes) {
            *slot = Some(*b);
        }
    }
    let mut starts = Vec::with_capacity(entries.len());
    let mut pos = 0usize;
    for e in entries {
        starts.push(pos);
        pos += e.length as usize;
    }
    let mut keyed = vec![false; entries.len()];
    for rk in &proof.record_keys {
        let i = rk.index as usize;
        let (Some(entry), Some(&start)) = (entries.get(i), starts.get(i)) else {
            return Err(cipher(format!("key for unknown {dir:?} record {i}")));
        };
        if std::mem::replace(&mut keyed[i], true) {
            return Err(cipher(format!("duplicate key for {dir:?} record {i}")));
        }
        let span = &view[start..start + entry.length as usize];
        let Some(plaintext) = span.iter().copied().collect::<Option<Vec<u8>>>() else {
            return Err(cipher(format!("{dir:?} record {i} is keyed but not fully disclosed")));
        };
        if record_hash(&seal_record(&rk.key, dir, rk.index, &plaintext)) != entry.ciphertext_hash.0 {
            return Err(cipher(format!("{dir:?} record {i} does not re-encrypt to the notarized ciphertext")));
        }
    }
    for (i, e) in entries.iter().enumerate() {
        if !keyed[i] && view[starts[i]..starts[i] + e.length as usize].iter().any(Option::is_some) {
            return Err(cipher(format!("{dir:?} record {i} is disclosed without its key")));
        }
    }
    Ok(view)
}

impl WebProofChecker {
    /// Step 1 and the structural half of step 2: returns the input and the
    /// response the proof authenticates.
    pub fn authenticate(&self, proof: &WebProof) -> Result<Authenticated, Rejection> {
        let signed = &proof.statement;
        let s = &signed.statement;
        if s.notary_key != format_public_key(&self.notary_key) || !signed.verify(&self.notary_key) {
            return Err(Rejection::new(RejectReason::BadSignature, "statement is not signed by the declared notary"));
        }
        if s.server_domain != self.domain {
            return Err(Rejection::new(
                RejectReason::WrongDomain,
                format!("session with {:?}, component endpoint is {:?}", s.server_domain, self.domain),
            ));
        }
        if let Some(pin) = &self.server_pin {
            if &s.server_key_fingerprint != pin {
                return Err(Rejection::new(RejectReason::WrongDomain, "server key does not match the pinned key"));
            }
        }
        let up: Vec<_> = s.records(Direction::Up).collect();
        let down: Vec<_> = s.records(Direction::Down).collect();
        let request_view = authenticate_direction(&up, s.capacity_up, &proof.request, Direction::Up)?;
        let response_view = authenticate_direction(&down, s.capacity_down, &proof.response, Direction::Down)?;

        let input = self.injection.match_request(&request_view).map_err(|e| Rejection::new(RejectReason::TemplateMismatch, e.to_string()))?;
        let response = response_view
            .into_iter()
            .collect::<Option<Vec<u8>>>()
            .ok_or_else(|| Rejection::new(RejectReason::ParseFailure, "response is not fully disclosed"))?;
        Ok(Authenticated { input, response })
    }

    /// All three steps for a single claimed value.
    pub fn verify(&self, m: &str, proof: &WebProof, role: Role) -> Result<(), Rejection> {
        self.authenticate(proof)?.check(m, role, &self.parser)
    }
}

/// The bytes of a proof as the verifier sees them; used to check that
/// nothing secret leaks into a bundle.
pub fn proof_bytes(proof: &WebProof) -> Vec<u8> {
    to_canonical_vec(proof).expect("proofs serialize canonically")
}
