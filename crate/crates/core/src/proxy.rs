//! Attested HTTP proxy standing in for a TEE-hosted relay.
//!
//! The proxy forwards a plaintext request to the upstream, returns the
//! verbatim response, and signs the hashes of both together with a static
//! measurement of the template set it was built for. It sees every byte, so
//! this mode gives integrity without privacy. A real deployment would replace
//! [`ProxyEnclave::attest`] with quote generation inside the enclave and
//! [`TeeChecker`] with quote verification; both sides keep this interface.

use std::collections::BTreeSet;
use std::io;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ed25519_dalek::{SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{hex_bytes, sha256, string_num, to_canonical_vec};
use crate::clock::{Clock, ManualClock, WallClock};
use crate::commitment::Digest;
use crate::crypto::{format_public_key, sign_hex, verify_hex};
use crate::http;
use crate::template::{InjectionTemplate, ParseTemplate};
use crate::tls::TlsServer;
use crate::verdict::{Authenticated, RejectReason, Rejection, Role};

const ATTESTATION_DOMAIN: &[u8] = b"VET/proxy-attestation/v1\n";

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("no upstream for host {0:?}")]
    NoUpstream(String),
    #[error("request host {0:?} is outside the proxy's template set")]
    HostNotServed(String),
    #[error("upstream unreachable: {0}")]
    Upstream(#[from] io::Error),
    #[error("upstream returned a malformed response: {0}")]
    BadResponse(String),
}

/// Where the proxy sends requests.
pub trait Upstream: Send {
    fn send(&mut self, request: &[u8]) -> io::Result<Vec<u8>>;
}

impl Upstream for TlsServer {
    fn send(&mut self, request: &[u8]) -> io::Result<Vec<u8>> {
        Ok(self.handle_plain(request))
    }
}

/// An upstream backed by a closure.
pub struct FnUpstream<F>(pub F);

impl<F: FnMut(&[u8]) -> io::Result<Vec<u8>> + Send> Upstream for FnUpstream<F> {
    fn send(&mut self, request: &[u8]) -> io::Result<Vec<u8>> {
        (self.0)(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyAttestation {
    pub enclave_public_key: String,
    pub tee_type: String,
    pub measurement: Digest,
    pub request_hash: Digest,
    pub response_hash: Digest,
    #[serde(with = "string_num")]
    pub timestamp: u64,
    pub signature: String,
}

#[derive(Serialize)]
struct AttestedTuple<'a> {
    enclave_public_key: &'a str,
    tee_type: &'a str,
    measurement: &'a Digest,
    request_hash: &'a Digest,
    response_hash: &'a Digest,
    #[serde(with = "string_num")]
    timestamp: u64,
}

impl ProxyAttestation {
    fn tuple_bytes(&self) -> Vec<u8> {
        to_canonical_vec(&AttestedTuple {
            enclave_public_key: &self.enclave_public_key,
            tee_type: &self.tee_type,
            measurement: &self.measurement,
            request_hash: &self.request_hash,
            response_hash: &self.response_hash,
            timestamp: self.timestamp,
        })
        .expect("attestation tuple is canonical")
    }

    pub fn verify(&self, key: &VerifyingKey) -> bool {
        self.enclave_public_key == format_public_key(key) && verify_hex(key, ATTESTATION_DOMAIN, &self.tuple_bytes(), &self.signature)
    }
}

/// Everything a verifier needs for one proxied exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeeProof {
    #[serde(with = "hex_bytes")]
    pub request: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub response: Vec<u8>,
    pub attestation: ProxyAttestation,
}

/// Measurement of a template set: hash of the canonical JSON list of the
/// sorted, deduplicated template uids.
pub fn measurement_of<S: AsRef<str>>(uids: &[S]) -> Digest {
    let set: BTreeSet<&str> = uids.iter().map(AsRef::as_ref).collect();
    Digest(sha256(&to_canonical_vec(&set).expect("uid lists are canonical")))
}

/// The simulated enclave: a signing key, a measurement and a clock.
pub struct ProxyEnclave {
    key: SigningKey,
    tee_type: String,
    measurement: Digest,
    hosts: BTreeSet<String>,
    clock: Arc<dyn Clock>,
    virtual_clock: Option<Arc<ManualClock>>,
    modeled_overhead: Option<Duration>,
    last_timestamp: Mutex<u64>,
}

impl ProxyEnclave {
    /// `templates` is the declared template set: their uids form the
    /// measurement and their hosts the set of servable hosts.
    pub fn new(key: SigningKey, tee_type: &str, templates: &[(String, InjectionTemplate)], extra_uids: &[String]) -> Self {
        let mut uids: Vec<String> = templates.iter().map(|(u, _)| u.clone()).collect();
        uids.extend_from_slice(extra_uids);
        Self {
            key,
            tee_type: tee_type.into(),
            measurement: measurement_of(&uids),
            hosts: templates.iter().map(|(_, t)| t.host.clone()).collect(),
            clock: Arc::new(WallClock),
            virtual_clock: None,
            modeled_overhead: None,
            last_timestamp: Mutex::new(0),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Adds a constant per-request cost, charged to `clock`.
    pub fn with_modeled_overhead(mut self, clock: Arc<ManualClock>, overhead: Duration) -> Self {
        self.clock = clock.clone();
        self.virtual_clock = Some(clock);
        self.modeled_overhead = Some(overhead);
        self
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn measurement(&self) -> Digest {
        self.measurement
    }

    pub fn tee_type(&self) -> &str {
        &self.tee_type
    }

    /// The host a request is addressed to, if the proxy may serve it.
    pub fn route(&self, request: &[u8]) -> Result<String, ProxyError> {
        let req = http::parse_request(request).map_err(|e| ProxyError::Malformed(e.to_string()))?;
        let host = req.header("host").ok_or_else(|| ProxyError::Malformed("no host header".into()))?.to_string();
        if !self.hosts.is_empty() && !self.hosts.contains(&host) {
            return Err(ProxyError::HostNotServed(host));
        }
        Ok(host)
    }

    /// Signs the exchange; timestamps strictly increase per enclave.
    pub fn attest(&self, request: &[u8], response: &[u8]) -> ProxyAttestation {
        let mut last = self.last_timestamp.lock().unwrap();
        let timestamp = self.clock.now_ms().max(*last + 1);
        *last = timestamp;
        let mut att = ProxyAttestation {
            enclave_public_key: format_public_key(&self.public_key()),
            tee_type: self.tee_type.clone(),
            measurement: self.measurement,
            request_hash: Digest(sha256(request)),
            response_hash: Digest(sha256(response)),
            timestamp,
            signature: String::new(),
        };
        att.signature = sign_hex(&self.key, ATTESTATION_DOMAIN, &att.tuple_bytes());
        att
    }

    /// Forwards `request` verbatim and attests the exchange.
    pub fn fetch(&self, request: &[u8], upstream: &mut dyn Upstream) -> Result<(Vec<u8>, ProxyAttestation), ProxyError> {
        self.route(request)?;
        let response = upstream.send(request)?;
        http::parse_response(&response).map_err(|e| ProxyError::BadResponse(e.to_string()))?;
        if let (Some(clock), Some(d)) = (&self.virtual_clock, self.modeled_overhead) {
            clock.advance_secs(d.as_secs_f64());
        }
        let att = self.attest(request, &response);
        Ok((response, att))
    }
}

/// Verifier for proxied exchanges of one component.
#[derive(Debug, Clone)]
pub struct TeeChecker {
    pub enclave_key: VerifyingKey,
    pub tee_type: String,
    pub injection: InjectionTemplate,
    pub parser: ParseTemplate,
    /// When set, only these measurements are trusted.
    pub measurements: Option<BTreeSet<Digest>>,
}

impl TeeChecker {
    pub fn authenticate(&self, proof: &TeeProof) -> Result<Authenticated, Rejection> {
        let att = &proof.attestation;
        if att.tee_type != self.tee_type || !att.verify(&self.enclave_key) {
            return Err(Rejection::new(RejectReason::BadSignature, "attestation is not signed by the declared enclave"));
        }
        if let Some(allowed) = &self.measurements {
            if !allowed.contains(&att.measurement) {
                return Err(Rejection::new(
                    RejectReason::UntrustedMeasurement,
                    format!("measurement {} is not trusted", hex::encode(att.measurement.0)),
                ));
            }
        }
        if sha256(&proof.request) != att.request_hash.0 {
            return Err(Rejection::new(RejectReason::HashMismatch, "request bytes do not match the attested hash"));
        }
        if sha256(&proof.response) != att.response_hash.0 {
            return Err(Rejection::new(RejectReason::HashMismatch, "response bytes do not match the attested hash"));
        }
        let view: Vec<Option<u8>> = proof.request.iter().copied().map(Some).collect();
        let input = self.injection.match_request(&view).map_err(|e| Rejection::new(RejectReason::TemplateMismatch, e.to_string()))?;
        Ok(Authenticated { input, response: proof.response.clone() })
    }

    pub fn verify(&self, m: &str, proof: &TeeProof, role: Role) -> Result<(), Rejection> {
        self.authenticate(proof)?.check(m, role, &self.parser)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::derived_signing_key;
    use crate::template::{Algorithm, HeaderTemplate};
    use std::collections::BTreeMap;

    fn template() -> InjectionTemplate {
        InjectionTemplate {
            method: "GET".into(),
            host: "prices.mock".into(),
            path: "/price?ids={input}".into(),
            headers: vec![HeaderTemplate { name: "accept".into(), value: crate::template::HeaderValue::Literal("application/json".into()) }],
            body: None,
            chunk_size: 16,
        }
    }

    fn parser() -> ParseTemplate {
        ParseTemplate { output_pointer: "/{input}/usd".into(), calls: None }
    }

    fn setup() -> (ProxyEnclave, TeeChecker, TlsServer) {
        let t = template();
        let uid = Algorithm::from(t.clone()).uid();
        let enclave =
            ProxyEnclave::new(derived_signing_key("enclave", 0), "sim-tdx", &[(uid, t.clone())], &[]).with_clock(Arc::new(ManualClock::new(7)));
        let checker = TeeChecker {
            enclave_key: enclave.public_key(),
            tee_type: "sim-tdx".into(),
            injection: t,
            parser: parser(),
            measurements: Some([enclave.measurement()].into()),
        };
        let server = TlsServer::new(derived_signing_key("s", 0), "prices.mock", |_: &[u8]| http::json_response(200, br#"{"btc":{"usd":"42"}}"#), 0);
        (enclave, checker, server)
    }

    #[test]
    fn honest_fetch_verifies_and_replays_get_fresh_timestamps() {
        let (enclave, checker, mut server) = setup();
        let req = template().inject(b"btc", &BTreeMap::new()).unwrap().bytes;
        let (resp, a1) = enclave.fetch(&req, &mut server).unwrap();
        let (_, a2) = enclave.fetch(&req, &mut server).unwrap();
        assert_eq!(a1.request_hash.0, sha256(&req));
        assert_eq!(a1.request_hash, a2.request_hash);
        assert!(a2.timestamp > a1.timestamp);
        let proof = TeeProof { request: req, response: resp, attestation: a1 };
        checker.verify("42", &proof, Role::ToolResult).unwrap();
        checker.verify("btc", &proof, Role::ToolInput).unwrap();
        assert_eq!(checker.verify("43", &proof, Role::ToolResult).unwrap_err().reason, RejectReason::ValueMismatch);
    }

    #[test]
    fn tampering_and_wrong_keys_are_rejected() {
        let (enclave, checker, mut server) = setup();
        let req = template().inject(b"btc", &BTreeMap::new()).unwrap().bytes;
        let (resp, att) = enclave.fetch(&req, &mut server).unwrap();
        let honest = TeeProof { request: req, response: resp, attestation: att };

        let mut p = honest.clone();
        let n = p.response.len();
        p.response[n - 3] = b'3';
        assert_eq!(checker.authenticate(&p).unwrap_err().reason, RejectReason::HashMismatch);

        let other = TeeChecker { enclave_key: derived_signing_key("enclave", 1).verifying_key(), ..checker.clone() };
        assert_eq!(other.authenticate(&honest).unwrap_err().reason, RejectReason::BadSignature);

        let strict = TeeChecker { measurements: Some([Digest([0; 32])].into()), ..checker.clone() };
        assert_eq!(strict.authenticate(&honest).unwrap_err().reason, RejectReason::UntrustedMeasurement);

        let mut p = honest.clone();
        p.attestation.timestamp += 1;
        assert_eq!(checker.authenticate(&p).unwrap_err().reason, RejectReason::BadSignature);
    }

    #[test]
    fn unreachable_upstream_gives_no_attestation() {
        let (enclave, _, _) = setup();
        let req = template().inject(b"btc", &BTreeMap::new()).unwrap().bytes;
        let mut dead = FnUpstream(|_: &[u8]| Err(io::Error::new(io::ErrorKind::ConnectionRefused, "down")));
        assert!(matches!(enclave.fetch(&req, &mut dead), Err(ProxyError::Upstream(_))));
        let stray = b"GET / HTTP/1.1\r\nhost: elsewhere.mock\r\n\r\n";
        assert!(matches!(enclave.route(stray), Err(ProxyError::HostNotServed(_))));
    }

    #[test]
    fn measurement_ignores_order_and_duplicates() {
        assert_eq!(measurement_of(&["b", "a", "a"]), measurement_of(&["a", "b"]));
        assert_ne!(measurement_of(&["a"]), measurement_of(&["b"]));
    }
}
