//! TCP transports for the notary, the proxy and the mock servers.
//!
//! Notary wire format, prover side: frames of `[type u8][len u32 BE][payload]`.
//! The prover sends OPEN (JSON `{capacity_up, capacity_down, target}`) and is
//! answered with OPEN (`{session_id, setup_delay_ms}`), then any number of
//! RELAY_UP frames each answered by RELAY_DOWN, then FIN answered by
//! STATEMENT (`{statement, release}` with the release flight in hex). Any
//! failure is answered by ABORT carrying the reason.
//!
//! Notary to server: the magic `VTLS` then `[len u32][flight]` in both
//! directions. A server connection that starts with anything else is served
//! as one plain HTTP exchange.
//!
//! Proxy: the client sends `[len][request]`; the proxy answers
//! `[len][response][len][attestation JSON]`, or `[0][len][reason]`.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::canonical::{hex_bytes, string_num, to_canonical_vec};
use crate::composer::{ComponentProver, ProofPayload, ProveError};
use crate::http;
use crate::notary::{Notary, NotaryError, NotaryLink, NotarySession, OpenAck};
use crate::proxy::{ProxyAttestation, ProxyEnclave, ProxyError, TeeProof, Upstream};
use crate::template::RenderedRequest;
use crate::tls::TlsServer;
use crate::webproof::SignedStatement;

pub const OPEN: u8 = 1;
pub const RELAY_UP: u8 = 2;
pub const RELAY_DOWN: u8 = 3;
pub const FIN: u8 = 4;
pub const STATEMENT: u8 = 5;
pub const ABORT: u8 = 6;

pub const SERVER_MAGIC: &[u8; 4] = b"VTLS";
const MAX_FRAME: usize = 16 << 20;
const IO_TIMEOUT: Duration = Duration::from_secs(30);

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn write_frame<W: Write>(w: &mut W, kind: u8, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| invalid("frame too large"))?;
    let mut buf = Vec::with_capacity(5 + payload.len());
    buf.push(kind);
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(payload);
    w.write_all(&buf)?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> io::Result<(u8, Vec<u8>)> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head)?;
    let payload = read_exact_len(r, u32::from_be_bytes(head[1..].try_into().unwrap()) as usize)?;
    Ok((head[0], payload))
}

fn read_exact_len<R: Read>(r: &mut R, len: usize) -> io::Result<Vec<u8>> {
    if len > MAX_FRAME {
        return Err(invalid(format!("frame of {len} bytes exceeds the limit")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(payload)
}

pub fn write_blob<W: Write>(w: &mut W, blob: &[u8]) -> io::Result<()> {
    let len = u32::try_from(blob.len()).map_err(|_| invalid("message too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(blob)?;
    w.flush()
}

pub fn read_blob<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    read_exact_len(r, u32::from_be_bytes(len) as usize)
}

fn connect(addr: &str) -> io::Result<TcpStream> {
    let sock = addr.to_socket_addrs()?.next().ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("cannot resolve {addr}")))?;
    let s = TcpStream::connect_timeout(&sock, IO_TIMEOUT)?;
    s.set_read_timeout(Some(IO_TIMEOUT))?;
    s.set_write_timeout(Some(IO_TIMEOUT))?;
    s.set_nodelay(true)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenRequest {
    #[serde(with = "string_num")]
    pub capacity_up: u64,
    #[serde(with = "string_num")]
    pub capacity_down: u64,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatementReply {
    pub statement: SignedStatement,
    #[serde(with = "hex_bytes")]
    pub release: Vec<u8>,
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    to_canonical_vec(v).expect("wire messages hold strings only")
}

/// A notary listening on TCP.
pub struct NotaryService {
    pub notary: Arc<Notary>,
}

impl NotaryService {
    pub fn new(notary: Arc<Notary>) -> Self {
        Self { notary }
    }

    /// Serves connections until the listener fails.
    pub fn serve(&self, listener: TcpListener) -> io::Result<()> {
        for conn in listener.incoming() {
            let Ok(stream) = conn else { continue };
            let notary = self.notary.clone();
            thread::spawn(move || {
                let _ = handle_prover(&notary, stream);
            });
        }
        Ok(())
    }

    /// Binds `addr` and serves on a background thread; returns the bound address.
    pub fn spawn(self, addr: &str) -> io::Result<std::net::SocketAddr> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        thread::spawn(move || self.serve(listener));
        Ok(local)
    }
}

struct ServerConn(TcpStream);

impl ServerConn {
    fn open(target: &str) -> io::Result<Self> {
        let mut s = connect(target)?;
        s.write_all(SERVER_MAGIC)?;
        Ok(Self(s))
    }

    fn exchange(&mut self, flight: &[u8]) -> io::Result<Vec<u8>> {
        write_blob(&mut self.0, flight)?;
        read_blob(&mut self.0)
    }
}

fn handle_prover(notary: &Arc<Notary>, mut stream: TcpStream) -> io::Result<()> {
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_nodelay(true)?;
    let mut magic = [0u8; 4];
    stream.read_exact(&mut magic)?;
    if &magic == b"GET " {
        let _ = http::read_message(&mut (&magic[..]).chain(&mut stream), true);
        let body =
            json(&serde_json::json!({ "notary_public_key": notary.public_key_string(), "protocol_version": crate::webproof::PROTOCOL_VERSION }));
        stream.write_all(&http::json_response(200, &body))?;
        return stream.shutdown(Shutdown::Both);
    }
    let mut reader = (&magic[..]).chain(stream.try_clone()?);
    let mut active: Option<(NotarySession, ServerConn)> = None;
    loop {
        let (kind, payload) = match read_frame(&mut reader) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        let reply = step(notary, &mut active, kind, &payload);
        match reply {
            Ok((k, body)) => write_frame(&mut stream, k, &body)?,
            Err(e) => {
                if let Some((mut s, _)) = active.take() {
                    s.abort();
                }
                write_frame(&mut stream, ABORT, e.to_string().as_bytes())?;
            }
        }
    }
}

fn step(notary: &Arc<Notary>, active: &mut Option<(NotarySession, ServerConn)>, kind: u8, payload: &[u8]) -> Result<(u8, Vec<u8>), NotaryError> {
    let transport = |e: io::Error| NotaryError::Transport(e.to_string());
    match kind {
        OPEN => {
            let req: OpenRequest = serde_json::from_slice(payload).map_err(|e| NotaryError::Transport(format!("bad open request: {e}")))?;
            if let Some((mut s, _)) = active.take() {
                s.abort();
            }
            let (session, delay) = notary.open_session(req.capacity_up, req.capacity_down)?;
            let conn = ServerConn::open(&req.target).map_err(|e| NotaryError::Transport(format!("server {}: {e}", req.target)))?;
            let ack = OpenAck { session_id: session.id().to_string(), setup_delay_ms: delay.as_millis() as u64 };
            *active = Some((session, conn));
            Ok((OPEN, json(&ack)))
        }
        RELAY_UP => {
            let (session, conn) = active.as_mut().ok_or_else(|| NotaryError::State("no open session".into()))?;
            session.on_up(payload)?;
            let reply = conn.exchange(payload).map_err(transport)?;
            session.on_down(&reply)?;
            Ok((RELAY_DOWN, reply))
        }
        FIN => {
            let (mut session, mut conn) = active.take().ok_or_else(|| NotaryError::State("no open session".into()))?;
            let (statement, notice) = session.finalize()?;
            let release = conn.exchange(&notice).map_err(transport)?;
            session.on_release(&release)?;
            Ok((STATEMENT, json(&StatementReply { statement, release })))
        }
        ABORT => {
            if let Some((mut s, _)) = active.take() {
                s.abort();
            }
            Err(NotaryError::Aborted("prover aborted".into()))
        }
        other => Err(NotaryError::Transport(format!("unexpected frame type {other}"))),
    }
}

/// Prover-side link to a notary over TCP.
pub struct TcpNotaryLink {
    addr: String,
    stream: Option<TcpStream>,
}

impl TcpNotaryLink {
    pub fn new(addr: &str) -> Self {
        Self { addr: addr.into(), stream: None }
    }

    fn call(&mut self, kind: u8, payload: &[u8], expect: u8) -> Result<Vec<u8>, NotaryError> {
        let transport = |e: io::Error| NotaryError::Transport(e.to_string());
        let stream = self.stream.as_mut().ok_or_else(|| NotaryError::State("no open session".into()))?;
        write_frame(stream, kind, payload).map_err(transport)?;
        let (k, body) = read_frame(stream).map_err(transport)?;
        match k {
            k if k == expect => Ok(body),
            ABORT => Err(NotaryError::Aborted(String::from_utf8_lossy(&body).into_owned())),
            other => Err(NotaryError::Transport(format!("unexpected frame type {other}"))),
        }
    }
}

impl NotaryLink for TcpNotaryLink {
    fn open(&mut self, target: &str, capacity_up: u64, capacity_down: u64) -> Result<OpenAck, NotaryError> {
        self.stream = Some(connect(&self.addr).map_err(|e| NotaryError::Transport(format!("notary {}: {e}", self.addr)))?);
        let body = self.call(OPEN, &json(&OpenRequest { capacity_up, capacity_down, target: target.into() }), OPEN)?;
        serde_json::from_slice(&body).map_err(|e| NotaryError::Transport(format!("bad open reply: {e}")))
    }

    fn relay(&mut self, flight: &[u8]) -> Result<Vec<u8>, NotaryError> {
        self.call(RELAY_UP, flight, RELAY_DOWN)
    }

    fn finalize(&mut self) -> Result<(SignedStatement, Vec<u8>), NotaryError> {
        let body = self.call(FIN, &[], STATEMENT)?;
        self.stream = None;
        let reply: StatementReply = serde_json::from_slice(&body).map_err(|e| NotaryError::Transport(format!("bad statement reply: {e}")))?;
        Ok((reply.statement, reply.release))
    }
}

/// Serves a [`TlsServer`] on TCP: notarized sessions after the `VTLS` magic,
/// plain HTTP otherwise.
pub fn serve_tls_server(server: TlsServer, listener: TcpListener) -> io::Result<()> {
    for conn in listener.incoming() {
        let Ok(stream) = conn else { continue };
        let server = server.clone();
        thread::spawn(move || {
            let _ = handle_server_conn(&server, stream);
        });
    }
    Ok(())
}

pub fn spawn_tls_server(server: TlsServer, addr: &str) -> io::Result<std::net::SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || serve_tls_server(server, listener));
    Ok(local)
}

fn handle_server_conn(server: &TlsServer, mut stream: TcpStream) -> io::Result<()> {
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_nodelay(true)?;
    let mut magic = [0u8; 4];
    stream.read_exact(&mut magic)?;
    if &magic != SERVER_MAGIC {
        let request = http::read_message(&mut (&magic[..]).chain(&mut stream), true)?;
        stream.write_all(&server.handle_plain(&request))?;
        return stream.shutdown(Shutdown::Both);
    }
    let mut session = server.session();
    loop {
        let flight = match read_blob(&mut stream) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        write_blob(&mut stream, &session.on_flight(&flight))?;
    }
}

/// Sends plain HTTP to per-host addresses.
#[derive(Debug, Clone, Default)]
pub struct HttpUpstream {
    pub routes: BTreeMap<String, String>,
}

impl HttpUpstream {
    /// Parses `host=addr` route specs.
    pub fn from_specs<S: AsRef<str>>(specs: &[S]) -> Result<Self, String> {
        let mut routes = BTreeMap::new();
        for spec in specs {
            let (host, addr) = spec.as_ref().split_once('=').ok_or_else(|| format!("route {:?} is not host=addr", spec.as_ref()))?;
            routes.insert(host.to_string(), addr.to_string());
        }
        Ok(Self { routes })
    }
}

impl Upstream for HttpUpstream {
    fn send(&mut self, request: &[u8]) -> io::Result<Vec<u8>> {
        let host = http::parse_request(request)
            .ok()
            .and_then(|r| r.header("host").map(str::to_string))
            .ok_or_else(|| invalid("request has no host header"))?;
        let addr = self.routes.get(&host).ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("no route for {host}")))?;
        let mut s = connect(addr)?;
        s.write_all(request)?;
        s.flush()?;
        http::read_message(&mut s, false)
    }
}

/// An attested proxy listening on TCP.
pub struct ProxyService {
    pub enclave: Arc<ProxyEnclave>,
    pub upstream: HttpUpstream,
}

impl ProxyService {
    pub fn serve(&self, listener: TcpListener) -> io::Result<()> {
        for conn in listener.incoming() {
            let Ok(stream) = conn else { continue };
            let enclave = self.enclave.clone();
            let mut upstream = self.upstream.clone();
            thread::spawn(move || {
                let _ = handle_proxy_conn(&enclave, &mut upstream, stream);
            });
        }
        Ok(())
    }

    pub fn spawn(self, addr: &str) -> io::Result<std::net::SocketAddr> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        thread::spawn(move || self.serve(listener));
        Ok(local)
    }
}

fn handle_proxy_conn(enclave: &ProxyEnclave, upstream: &mut HttpUpstream, mut stream: TcpStream) -> io::Result<()> {
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_nodelay(true)?;
    let request = read_blob(&mut stream)?;
    match enclave.fetch(&request, upstream) {
        Ok((response, att)) => {
            write_blob(&mut stream, &response)?;
            write_blob(&mut stream, &json(&att))
        }
        Err(e) => {
            write_blob(&mut stream, &[])?;
            write_blob(&mut stream, e.to_string().as_bytes())
        }
    }
}

/// Client for [`ProxyService`].
pub fn proxy_fetch(addr: &str, request: &[u8]) -> Result<(Vec<u8>, ProxyAttestation), ProxyError> {
    let mut s = connect(addr)?;
    write_blob(&mut s, request)?;
    let response = read_blob(&mut s)?;
    let tail = read_blob(&mut s)?;
    if response.is_empty() {
        return Err(ProxyError::NoUpstream(String::from_utf8_lossy(&tail).into_owned()));
    }
    let att = serde_json::from_slice(&tail).map_err(|e| ProxyError::BadResponse(format!("attestation: {e}")))?;
    Ok((response, att))
}

/// Proves exchanges through a proxy reached over TCP.
pub struct TcpProxyProver {
    pub addr: String,
}

impl ComponentProver for TcpProxyProver {
    fn prove_exchange(&mut self, rendered: &RenderedRequest) -> Result<(Vec<u8>, ProofPayload), ProveError> {
        let (response, attestation) =
            proxy_fetch(&self.addr, &rendered.bytes).map_err(|source| ProveError::Proxy { locator: crate::composer::Locator::core(0), source })?;
        Ok((response.clone(), ProofPayload::TeeAttestation(TeeProof { request: rendered.bytes.clone(), response, attestation })))
    }
}
