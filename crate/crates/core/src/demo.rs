//! The trading-agent demo: templates, the identity document, an in-process
//! deployment of every service, and the bundle inspector.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::aid::{compute_id, instantiate_verifier, AgentIdentityDocument, ComponentEntry, Verification};
use crate::clock::{Clock, ManualClock};
use crate::commitment::ByteRange;
use crate::composer::{
    prove_trace, ComponentProver, LocalProxyProver, Position, ProofPayload, ProveError, ProverSet, TrustStore, VerifiableExecutionTrace,
    WebProofProver,
};
use crate::crypto::{derived_signing_key, fingerprint, format_public_key};
use crate::mock::{self, Brain, Echo, Latency, MockLlm, PriceFeed, RandomBrain, Scenario, SentimentFeed, TickPrompt, TradeDecision, TradingBrain};
use crate::notary::{CapacityProfile, LocalNotaryLink, Notary, NotaryConfig, NotaryError, NotaryLink, OpenAck, Tap};
use crate::proxy::{ProxyEnclave, Upstream};
use crate::sim::{CostModel, CALIBRATED_UNIT};
use crate::template::{
    Algorithm, BodyTemplate, CallRule, HeaderTemplate, HeaderValue, InjectionTemplate, InputEncoding, ParseTemplate, RenderedRequest,
    TemplateRegistry,
};
use crate::tls::TlsServer;
use crate::webproof::{ChannelSpec, SignedStatement, PROTOCOL_VERSION};

pub const AGENT_NAME: &str = "VeriTrade";
pub const CORE_MODEL: &str = "mock-haiku-1";
pub const TEE_TYPE: &str = "sim-tdx";
pub const CHUNK_SIZE: u64 = 16;
/// Downstream capacity of every demo channel.
pub const DOWN_CAPACITY: u64 = 4096;
/// Modeled latency of the data feeds, on top of the network round trip.
pub const FEED_LATENCY: f64 = 0.3;

fn literal(name: &str, value: &str) -> HeaderTemplate {
    HeaderTemplate { name: name.into(), value: HeaderValue::Literal(value.into()) }
}

pub fn core_injection() -> InjectionTemplate {
    InjectionTemplate {
        method: "POST".into(),
        host: mock::LLM_HOST.into(),
        path: mock::LLM_PATH.into(),
        headers: vec![HeaderTemplate { name: "x-api-key".into(), value: HeaderValue::Secret("api_key".into()) }],
        body: Some(BodyTemplate {
            template: json!({ "model": CORE_MODEL, "history": "" }),
            input_pointer: "/history".into(),
            encoding: InputEncoding::Base64,
        }),
        chunk_size: CHUNK_SIZE,
    }
}

pub fn core_parsing() -> ParseTemplate {
    ParseTemplate {
        output_pointer: "/output/text".into(),
        calls: Some(CallRule { array_pointer: "/tool_calls".into(), tool_pointer: "/name".into(), input_pointer: "/arguments".into() }),
    }
}

fn get_template(host: &str, path: &str) -> InjectionTemplate {
    InjectionTemplate {
        method: "GET".into(),
        host: host.into(),
        path: path.into(),
        headers: vec![literal("accept", "application/json")],
        body: None,
        chunk_size: CHUNK_SIZE,
    }
}

/// Injection and parsing templates for a tool.
pub fn tool_templates(tool: &str) -> Option<(InjectionTemplate, ParseTemplate)> {
    let (inj, ptr) = match tool {
        mock::PRICE_TOOL => (get_template(mock::PRICE_HOST, "/api/v3/simple/price?ids={input}&vs_currencies=usd"), "/{input}/usd"),
        mock::SENTIMENT_TOOL => (get_template(mock::SENTIMENT_HOST, "/v1/sentiment?asset={input}"), "/score"),
        mock::ECHO_TOOL => (get_template(mock::ECHO_HOST, "/echo?msg={input}"), "/echo"),
        _ => return None,
    };
    Some((inj, ParseTemplate { output_pointer: ptr.into(), calls: None }))
}

/// Every template the demo agents use.
pub fn registry() -> TemplateRegistry {
    let mut r = TemplateRegistry::new();
    r.insert(core_injection());
    r.insert(core_parsing());
    for tool in [mock::PRICE_TOOL, mock::SENTIMENT_TOOL, mock::ECHO_TOOL] {
        let (i, p) = tool_templates(tool).unwrap();
        r.insert(i);
        r.insert(p);
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    WebProof,
    Proxy,
}

/// Keys of the demo's services; derived deterministically unless loaded.
#[derive(Clone)]
pub struct Keys {
    pub notary: ed25519_dalek::SigningKey,
    pub enclave: ed25519_dalek::SigningKey,
    pub servers: BTreeMap<String, ed25519_dalek::SigningKey>,
}

impl Keys {
    pub fn derived() -> Self {
        let servers = [mock::LLM_HOST, mock::PRICE_HOST, mock::SENTIMENT_HOST, mock::ECHO_HOST]
            .into_iter()
            .map(|h| (h.to_string(), derived_signing_key(h, 0)))
            .collect();
        Self { notary: derived_signing_key("notary", 0), enclave: derived_signing_key("enclave", 0), servers }
    }

    pub fn server(&self, host: &str) -> ed25519_dalek::SigningKey {
        self.servers.get(host).cloned().unwrap_or_else(|| derived_signing_key(host, 0))
    }

    /// Pins for every server key.
    pub fn server_pins(&self) -> BTreeMap<String, String> {
        self.servers.iter().map(|(h, k)| (h.clone(), fingerprint(&k.verifying_key()))).collect()
    }
}

fn endpoint_of(t: &InjectionTemplate) -> String {
    format!("https://{}{}", t.host, t.path.split('?').next().unwrap_or(""))
}

fn verification(scheme: Scheme, keys: &Keys) -> Verification {
    match scheme {
        Scheme::WebProof => {
            Verification::TlsNotary { protocol_version: PROTOCOL_VERSION.into(), notary_public_key: format_public_key(&keys.notary.verifying_key()) }
        }
        Scheme::Proxy => Verification::ProxyTee { tee_type: TEE_TYPE.into(), enclave_public_key: format_public_key(&keys.enclave.verifying_key()) },
    }
}

/// An identity document for the demo core plus `tools`, each proven with
/// the given scheme.
pub fn agent_aid(name: &str, core: Scheme, tools: &[(&str, Scheme)], keys: &Keys) -> AgentIdentityDocument {
    let ci = core_injection();
    let core_entry = ComponentEntry {
        name: None,
        model: Some(CORE_MODEL.into()),
        endpoint: endpoint_of(&ci),
        injection_algorithm_uid: Algorithm::from(ci).uid(),
        parsing_algorithm_uid: Algorithm::from(core_parsing()).uid(),
        verification: verification(core, keys),
    };
    let tools = tools
        .iter()
        .map(|(tool, scheme)| {
            let (i, p) = tool_templates(tool).unwrap_or_else(|| panic!("no templates for tool {tool}"));
            ComponentEntry {
                name: Some(tool.to_string()),
                model: None,
                endpoint: endpoint_of(&i),
                injection_algorithm_uid: Algorithm::from(i).uid(),
                parsing_algorithm_uid: Algorithm::from(p).uid(),
                verification: verification(*scheme, keys),
            }
        })
        .collect();
    AgentIdentityDocument { agent_name: name.into(), core: core_entry, tools, agent_hash: None }
}

/// The trading agent: notarized core, proxied market-data tools.
pub fn veritrade_aid(keys: &Keys) -> AgentIdentityDocument {
    agent_aid(AGENT_NAME, Scheme::WebProof, &[(mock::PRICE_TOOL, Scheme::Proxy), (mock::SENTIMENT_TOOL, Scheme::Proxy)], keys)
}

/// The enclave serving every proxied template of the demo.
pub fn enclave(keys: &Keys) -> ProxyEnclave {
    let mut templates = vec![(Algorithm::from(core_injection()).uid(), core_injection())];
    for tool in [mock::PRICE_TOOL, mock::SENTIMENT_TOOL, mock::ECHO_TOOL] {
        let (i, _) = tool_templates(tool).unwrap();
        templates.push((Algorithm::from(i.clone()).uid(), i));
    }
    ProxyEnclave::new(keys.enclave.clone(), TEE_TYPE, &templates, &[])
}

/// Verifier anchors for the demo: templates, server pins and the enclave
/// measurement.
pub fn trust_store(keys: &Keys) -> TrustStore {
    TrustStore { registry: registry(), server_pins: keys.server_pins(), proxy_measurements: [enclave(keys).measurement()].into() }
}

/// How the in-process deployment behaves.
#[derive(Debug, Clone)]
pub struct WorldOptions {
    pub seed: u64,
    pub api_key: String,
    /// When set, services charge modeled latencies to the world clock.
    pub modeled: Option<CostModel>,
    pub brain: BrainKind,
}

#[derive(Debug, Clone)]
pub enum BrainKind {
    Trading,
    Random { tools: Vec<String>, max_steps: usize },
}

impl WorldOptions {
    pub fn new(seed: u64) -> Self {
        Self { seed, api_key: format!("sk-demo-{seed:016x}"), modeled: None, brain: BrainKind::Trading }
    }
}

/// Every service in one process, on a shared virtual clock.
pub struct World {
    pub clock: Arc<ManualClock>,
    pub keys: Keys,
    pub notary: Arc<Notary>,
    pub enclave: Arc<ProxyEnclave>,
    pub servers: BTreeMap<String, TlsServer>,
    pub scenario: Arc<Scenario>,
    pub options: WorldOptions,
    tap: Option<Tap>,
}

/// Routes proxied requests to in-process servers by host.
pub struct HostRoutes(pub BTreeMap<String, TlsServer>);

impl Upstream for HostRoutes {
    fn send(&mut self, request: &[u8]) -> std::io::Result<Vec<u8>> {
        let host = crate::http::parse_request(request)
            .ok()
            .and_then(|r| r.header("host").map(str::to_string))
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "request has no host"))?;
        let server = self.0.get(&host).ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, format!("no upstream {host}")))?;
        Ok(server.handle_plain(request))
    }
}

fn brain_for(kind: &BrainKind, seed: u64) -> Box<dyn Brain> {
    match kind {
        BrainKind::Trading => Box::new(TradingBrain),
        BrainKind::Random { tools, max_steps } => Box::new(RandomBrain { seed, tools: tools.clone(), max_steps: *max_steps }),
    }
}

/// Mock servers for every demo host.
pub fn mock_servers(
    keys: &Keys,
    scenario: Arc<Scenario>,
    api_key: &str,
    brain: Box<dyn Brain>,
    latency: Option<(&Arc<ManualClock>, &CostModel)>,
    seed: u64,
) -> BTreeMap<String, TlsServer> {
    let llm = MockLlm { api_key: api_key.into(), brain };
    let mut out = BTreeMap::new();
    let mut add = |host: &str, handler: Box<dyn crate::http::HttpHandler>, secs: f64| {
        let server = match latency {
            Some((clock, _)) => TlsServer::new(keys.server(host), host, Latency { inner: handler, clock: clock.clone(), secs }, seed),
            None => TlsServer::new(keys.server(host), host, handler, seed),
        };
        out.insert(host.to_string(), server);
    };
    let (api, rtt) = latency.map_or((0.0, 0.0), |(_, m)| (m.api_latency, m.rtt));
    add(mock::LLM_HOST, Box::new(llm), api + rtt);
    add(mock::PRICE_HOST, Box::new(PriceFeed(scenario.clone())), FEED_LATENCY + rtt);
    add(mock::SENTIMENT_HOST, Box::new(SentimentFeed(scenario)), FEED_LATENCY + rtt);
    add(mock::ECHO_HOST, Box::new(Echo), rtt);
    out
}

impl crate::http::HttpHandler for Box<dyn crate::http::HttpHandler> {
    fn handle(&mut self, request: &[u8]) -> Vec<u8> {
        (**self).handle(request)
    }
}

impl World {
    pub fn new(options: WorldOptions) -> Self {
        Self::with_keys(options, Keys::derived())
    }

    pub fn with_keys(options: WorldOptions, keys: Keys) -> Self {
        let clock = Arc::new(ManualClock::new(1_700_000_000_000));
        let scenario = Arc::new(Scenario::from_seed(options.seed));
        let config = NotaryConfig { modeled_latency: options.modeled.clone(), ..NotaryConfig::default() };
        let notary = Arc::new(Notary::with_virtual_clock(keys.notary.clone(), config, clock.clone()));
        let mut enc = enclave(&keys);
        enc = match &options.modeled {
            Some(m) => enc.with_modeled_overhead(clock.clone(), Duration::from_secs_f64(m.proxy_overhead)),
            None => enc.with_clock(clock.clone()),
        };
        let brain = brain_for(&options.brain, options.seed);
        let servers = mock_servers(&keys, scenario.clone(), &options.api_key, brain, options.modeled.as_ref().map(|m| (&clock, m)), options.seed);
        Self { clock, keys, notary, enclave: Arc::new(enc), servers, scenario, options, tap: None }
    }

    /// Records what the notary observes from now on.
    pub fn tap_notary(&mut self) -> Tap {
        let tap = Tap::default();
        self.tap = Some(tap.clone());
        tap
    }

    pub fn trust(&self) -> TrustStore {
        trust_store(&self.keys)
    }

    pub fn secrets(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("api_key".to_string(), self.options.api_key.clone())])
    }

    fn link(&self) -> Box<dyn NotaryLink> {
        let mut link = LocalNotaryLink::new(self.notary.clone());
        for s in self.servers.values() {
            link.add_server(s.clone());
        }
        if let Some(tap) = &self.tap {
            link.set_tap(tap.clone());
        }
        match &self.options.modeled {
            Some(m) => Box::new(MeteredLink::new(link, self.clock.clone(), m.clone())),
            None => Box::new(link),
        }
    }

    /// A prover for one component under `scheme`.
    pub fn prover(&self, host: &str, scheme: Scheme, rng_seed: u64) -> Box<dyn ComponentProver> {
        match scheme {
            Scheme::WebProof => {
                let mut channel = ChannelSpec::new(host, CALIBRATED_UNIT, DOWN_CAPACITY);
                channel.server_pin = Some(fingerprint(&self.keys.server(host).verifying_key()));
                Box::new(WebProofProver { link: self.link(), channel, size_unit: Some(CALIBRATED_UNIT), rng: ChaCha20Rng::seed_from_u64(rng_seed) })
            }
            Scheme::Proxy => Box::new(LocalProxyProver { enclave: self.enclave.clone(), upstream: Box::new(HostRoutes(self.servers.clone())) }),
        }
    }

    /// Provers matching every component of `aid`.
    pub fn provers(&self, aid: &AgentIdentityDocument, rng_seed: u64) -> ProverSet {
        let scheme = |v: &Verification| if matches!(v, Verification::ProxyTee { .. }) { Scheme::Proxy } else { Scheme::WebProof };
        let host = |e: &ComponentEntry| e.host().unwrap_or_default();
        let core = self.prover(&host(&aid.core), scheme(&aid.core.verification), rng_seed);
        let tools = aid
            .tools
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.clone().unwrap_or_default(), self.prover(&host(t), scheme(&t.verification), rng_seed.wrapping_add(1 + i as u64))))
            .collect();
        ProverSet { core, tools, secrets: self.secrets() }
    }

    /// One proven agent run on `input`.
    pub fn prove(&self, aid: &AgentIdentityDocument, input: &str, max_steps: usize) -> Result<VerifiableExecutionTrace, ProveError> {
        let mut provers = self.provers(aid, self.options.seed);
        prove_trace(aid, &registry(), input, &mut provers, max_steps)
    }
}

/// Charges the online cost of a notarized session to a virtual clock: a
/// fixed per-session cost plus a per-byte cost for every relayed byte.
pub struct MeteredLink<L> {
    inner: L,
    clock: Arc<ManualClock>,
    model: CostModel,
    relayed: u64,
    /// Setup delay reported by the last open.
    pub last_setup: Duration,
}

impl<L: NotaryLink> MeteredLink<L> {
    pub fn new(inner: L, clock: Arc<ManualClock>, model: CostModel) -> Self {
        Self { inner, clock, model, relayed: 0, last_setup: Duration::ZERO }
    }
}

impl<L: NotaryLink> NotaryLink for MeteredLink<L> {
    fn open(&mut self, target: &str, capacity_up: u64, capacity_down: u64) -> Result<OpenAck, NotaryError> {
        let ack = self.inner.open(target, capacity_up, capacity_down)?;
        self.last_setup = Duration::from_millis(ack.setup_delay_ms);
        self.relayed = 0;
        Ok(ack)
    }

    fn relay(&mut self, flight: &[u8]) -> Result<Vec<u8>, NotaryError> {
        let reply = self.inner.relay(flight)?;
        self.relayed += (flight.len() + reply.len()) as u64;
        Ok(reply)
    }

    fn finalize(&mut self) -> Result<(SignedStatement, Vec<u8>), NotaryError> {
        let out = self.inner.finalize()?;
        self.clock.advance_secs(self.model.session_online + self.model.transfer_per_byte * self.relayed as f64);
        Ok(out)
    }
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Prove(#[from] ProveError),
    #[error("core output is not a trade decision: {0:?}")]
    NotADecision(String),
    #[error("bundle rejected: {0}")]
    Rejected(#[from] crate::composer::TraceRejection),
}

/// A decision with its bundle and the virtual time it took.
#[derive(Debug, Clone)]
pub struct DemoRun {
    pub decision: TradeDecision,
    pub bundle: VerifiableExecutionTrace,
    /// Virtual seconds from the first request to the decision, including
    /// channel setup.
    pub elapsed_secs: f64,
    /// Channel setup within `elapsed_secs`.
    pub setup_secs: f64,
}

/// The initial input for tick `tick` of seed `seed`.
pub fn tick_prompt(seed: u64, tick: u64) -> String {
    let asset = mock::ASSETS[(seed as usize + tick as usize) % mock::ASSETS.len()];
    TickPrompt { asset: asset.into(), tick }.to_canonical_string()
}

/// One trading decision, proven and self-checked.
pub fn run_veritrade(world: &World, tick: u64) -> Result<DemoRun, DemoError> {
    let aid = veritrade_aid(&world.keys);
    let start = world.clock.now_ms();
    let bundle = world.prove(&aid, &tick_prompt(world.options.seed, tick), 4)?;
    let elapsed_secs = (world.clock.now_ms() - start) as f64 / 1000.0;
    let setup_secs = match &world.options.modeled {
        Some(m) => bundle
            .proofs
            .iter()
            .filter_map(|p| match &p.payload {
                ProofPayload::WebProof(w) => Some(m.setup_time((w.statement.statement.capacity_up + w.statement.statement.capacity_down) as f64)),
                _ => None,
            })
            .map(|s| (s * 1000.0).round() / 1000.0)
            .sum(),
        None => 0.0,
    };
    let last = bundle.trace.steps.last().map(|s| s.core_output.clone()).unwrap_or_default();
    let decision = TradeDecision::parse(&last).ok_or(DemoError::NotADecision(last.clone()))?;
    crate::composer::verify_trace(&last, &bundle, &aid, &world.trust())?;
    Ok(DemoRun { decision, bundle, elapsed_secs, setup_secs })
}

/// First-round latency of the same core exchange under three deployments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstRound {
    pub direct: f64,
    pub proxy: f64,
    pub webproof: f64,
}

impl FirstRound {
    /// Proxy cost over direct, as a fraction of direct.
    pub fn proxy_overhead(&self) -> f64 {
        (self.proxy - self.direct) / self.direct
    }
}

/// The first core request of a run, a 500-byte prompt, sent directly,
/// through the proxy and through a notarized channel, on virtual time. The
/// notarized channel is pre-provisioned, so its setup is not charged to the
/// round.
pub fn compare_first_round(seed: u64, model: &CostModel) -> Result<FirstRound, ProveError> {
    let world = World::new(WorldOptions { modeled: Some(model.clone()), ..WorldOptions::new(seed) });
    let mut prompt = TickPrompt { asset: mock::ASSETS[seed as usize % mock::ASSETS.len()].into(), tick: 0 }.to_canonical_string();
    while prompt.len() < 500 {
        prompt.push(' ');
    }
    let mut transcript = crate::agent::Transcript::new();
    transcript.push_frame(crate::agent::tag::INITIAL_INPUT, prompt.as_bytes());
    let rendered: RenderedRequest = core_injection()
        .inject(transcript.as_bytes(), &world.secrets())
        .map_err(|source| ProveError::Template { locator: crate::composer::Locator::core(0), source })?;
    let secs = |a: u64, b: u64| (b - a) as f64 / 1000.0;

    let t0 = world.clock.now_ms();
    world.servers[mock::LLM_HOST].handle_plain(&rendered.bytes);
    let direct = secs(t0, world.clock.now_ms());

    let t0 = world.clock.now_ms();
    world.prover(mock::LLM_HOST, Scheme::Proxy, seed).prove_exchange(&rendered)?;
    let proxy = secs(t0, world.clock.now_ms());

    let t0 = world.clock.now_ms();
    let (_, payload) = world.prover(mock::LLM_HOST, Scheme::WebProof, seed).prove_exchange(&rendered)?;
    let total = secs(t0, world.clock.now_ms());
    let ProofPayload::WebProof(proof) = payload else { unreachable!("web proof prover") };
    let st = &proof.statement.statement;
    let setup = crate::notary::simulate_setup_delay(st.capacity_up, st.capacity_down, model).as_millis() as f64 / 1000.0;
    Ok(FirstRound { direct, proxy, webproof: total - setup })
}

/// Per-proof status in an inspection report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProofReport {
    pub locator: String,
    pub kind: String,
    pub status: String,
    /// Server domain or TEE type.
    pub origin: String,
    pub request_bytes: u64,
    pub disclosed: Vec<(u64, u64)>,
    pub redacted: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub core_output: String,
    pub tool_calls: Vec<(String, String, String)>,
    pub proofs: Vec<ProofReport>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InspectReport {
    pub aid_id: String,
    /// Whether the supplied document hashes to the bundle's id.
    pub aid_match: Option<bool>,
    pub steps: Vec<StepReport>,
    /// Verdict of the full check for the final output, when a document was
    /// supplied.
    pub verdict: Option<String>,
}

fn complement(ranges: &[ByteRange], total: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut at = 0;
    let mut sorted: Vec<_> = ranges.iter().map(|r| (r.offset, r.offset + r.length)).collect();
    sorted.sort();
    for (s, e) in sorted {
        if s > at {
            out.push((at, s));
        }
        at = at.max(e);
    }
    if at < total {
        out.push((at, total));
    }
    out
}

/// Describes a bundle; with a document and trust store, every proof is also
/// checked and the failing locator reported.
pub fn inspect(bundle: &VerifiableExecutionTrace, aid: Option<(&AgentIdentityDocument, &TrustStore)>) -> InspectReport {
    let aid_match = aid.map(|(a, _)| compute_id(a).is_ok_and(|id| id == bundle.aid_id));
    let verifier = aid.and_then(|(a, t)| instantiate_verifier(a, t).ok());
    let mut steps = Vec::new();
    for (j, step) in bundle.trace.steps.iter().enumerate() {
        let mut proofs = Vec::new();
        for p in bundle.proofs.iter().filter(|p| p.locator.step == j) {
            let checker = verifier.as_ref().and_then(|v| match p.locator.position {
                Position::Core => Some(&v.core),
                Position::Tool(k) => step.tool_calls.get(k).and_then(|c| v.tools.get(&c.tool)),
            });
            let status = match (&verifier, checker) {
                (None, _) => "unchecked".to_string(),
                (Some(_), None) => "no checker for this component".to_string(),
                (Some(_), Some(c)) => match c.authenticate(&p.payload) {
                    Ok(_) => "ok".into(),
                    Err(r) => format!("rejected: {r}"),
                },
            };
            let (origin, request_bytes, disclosed, redacted) = match &p.payload {
                ProofPayload::WebProof(w) => {
                    let d = &w.request.disclosure.ranges;
                    let total = w.request.commitment.total_length;
                    (
                        w.statement.statement.server_domain.clone(),
                        total,
                        d.iter().map(|r| (r.offset, r.offset + r.length)).collect(),
                        complement(d, total),
                    )
                }
                ProofPayload::TeeAttestation(t) => {
                    let n = t.request.len() as u64;
                    (t.attestation.tee_type.clone(), n, vec![(0, n)], vec![])
                }
            };
            proofs.push(ProofReport {
                locator: p.locator.position.to_string(),
                kind: p.payload.kind().into(),
                status,
                origin,
                request_bytes,
                disclosed,
                redacted,
            });
        }
        let ok = !proofs.is_empty() && proofs.iter().all(|p| p.status == "ok" || p.status == "unchecked");
        steps.push(StepReport {
            step: j,
            core_output: step.core_output.clone(),
            tool_calls: step.tool_calls.iter().map(|c| (c.tool.clone(), c.input.clone(), c.result.clone())).collect(),
            proofs,
            ok,
        });
    }
    let verdict = verifier.as_ref().map(|v| {
        let m =
            bundle.claims.last().map(|c| c.value.clone()).or_else(|| bundle.trace.steps.last().map(|s| s.core_output.clone())).unwrap_or_default();
        match v.verify(&m, bundle) {
            Ok(a) => format!("accept ({})", a.locator),
            Err(e) => format!("reject: {} ({e})", e.code()),
        }
    });
    let verdict = match (aid_match, verdict) {
        (Some(false), _) => Some("reject: aid-mismatch".to_string()),
        (_, v) => v,
    };
    InspectReport { aid_id: bundle.aid_id.clone(), aid_match, steps, verdict }
}

impl InspectReport {
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "agent id   {}", self.aid_id);
        match self.aid_match {
            Some(true) => s.push_str("document   matches\n"),
            Some(false) => s.push_str("document   DOES NOT MATCH\n"),
            None => s.push_str("document   not supplied, proofs unchecked\n"),
        }
        for step in &self.steps {
            let _ = writeln!(s, "\nstep {} [{}]", step.step, if step.ok { "ok" } else { "FAIL" });
            let _ = writeln!(s, "  core output  {}", step.core_output);
            for (tool, x, r) in &step.tool_calls {
                let _ = writeln!(s, "  call         {tool}({x}) -> {r}");
            }
            for p in &step.proofs {
                let _ = writeln!(s, "  proof {:<7} {:<15} {:<16} {}", p.locator, p.kind, p.origin, p.status);
                let shown: u64 = p.disclosed.iter().map(|(a, b)| b - a).sum();
                let _ = writeln!(s, "    request    {} bytes, {} disclosed", p.request_bytes, shown);
                for (a, b) in &p.redacted {
                    let _ = writeln!(s, "    redacted   bytes {a}..{b} ({} bytes)", b - a);
                }
            }
        }
        if let Some(v) = &self.verdict {
            let _ = writeln!(s, "\nverdict    {v}");
        }
        s
    }
}

/// Channel capacities the demo uses, for reference in reports.
pub fn demo_capacity() -> CapacityProfile {
    CapacityProfile { up: CALIBRATED_UNIT, down: DOWN_CAPACITY }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composer::verify_trace;

    #[test]
    fn seed_zero_holds_and_verifies() {
        let world = World::new(WorldOptions::new(0));
        let run = run_veritrade(&world, 0).unwrap();
        assert_eq!(run.decision.action, "hold");
        assert_eq!(run.bundle.proofs.len(), 4);
        let kinds: Vec<_> = run.bundle.proofs.iter().map(|p| p.payload.kind()).collect();
        assert_eq!(kinds, ["webproof", "tee_attestation", "tee_attestation", "webproof"]);
        let report = inspect(&run.bundle, Some((&veritrade_aid(&world.keys), &world.trust())));
        assert!(report.steps.iter().all(|s| s.ok), "{}", report.render());
        assert!(!report.render().contains(&world.options.api_key));
    }

    #[test]
    fn random_agents_prove_and_verify() {
        let tools = [(mock::ECHO_TOOL, Scheme::WebProof), (mock::PRICE_TOOL, Scheme::Proxy), (mock::SENTIMENT_TOOL, Scheme::Proxy)];
        for seed in 0..5 {
            let opts = WorldOptions {
                brain: BrainKind::Random { tools: tools.iter().map(|t| t.0.to_string()).collect(), max_steps: 4 },
                ..WorldOptions::new(seed)
            };
            let world = World::new(opts);
            let aid = agent_aid("Random", Scheme::WebProof, &tools, &world.keys);
            let bundle = world.prove(&aid, "go", 6).unwrap();
            let last = bundle.trace.steps.last().unwrap().core_output.clone();
            verify_trace(&last, &bundle, &aid, &world.trust()).unwrap();
        }
    }

    #[test]
    fn modeled_first_round_ordering() {
        let fr = compare_first_round(0, &CostModel::calibrated()).unwrap();
        assert!(fr.direct < fr.proxy && fr.proxy < fr.webproof, "{fr:?}");
        let o = fr.proxy_overhead();
        assert!((0.01..=0.20).contains(&o), "{o}");
    }
}
