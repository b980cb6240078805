//! Composition: one component proof per invocation, bundled with the trace,
//! checked against the identity document.
//!
//! A bundle is accepted for a claimed value `m` iff the document hashes to
//! the bundle's id, every component proof verifies under the checker the
//! document prescribes, the values the proofs authenticate line up with the
//! trace (each core request carries exactly the transcript rebuilt from the
//! earlier steps, each tool proof carries the input the core emitted and the
//! result the trace records), and `m` is a core output or a tool input.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_agent, AgentError, Core, CoreOutput, ExecutionTrace, Tool, ToolInvocation, ToolSet, Transcript};
use crate::aid::{compute_id, instantiate_verifier, AgentIdentityDocument, InstantiateError};
use crate::canonical::{find_number, string_num, to_canonical_vec};
use crate::commitment::Digest;
use crate::notary::NotaryLink;
use crate::proxy::{ProxyEnclave, ProxyError, TeeChecker, TeeProof, Upstream};
use crate::template::{InjectionTemplate, ParseError, ParseTemplate, RenderedRequest, TemplateError, TemplateRegistry};
use crate::verdict::{parse_failure, Authenticated, Rejection};
use crate::webproof::{run_session, ChannelSpec, SessionError, WebProof, WebProofChecker};

/// Which invocation within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    Core,
    /// The k-th tool call of the step.
    Tool(usize),
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Position::Core => f.write_str("core"),
            Position::Tool(k) => write!(f, "tool:{k}"),
        }
    }
}

impl std::str::FromStr for Position {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "core" {
            return Ok(Position::Core);
        }
        s.strip_prefix("tool:")
            .filter(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) && (k.len() == 1 || !k.starts_with('0')))
            .and_then(|k| k.parse().ok())
            .map(Position::Tool)
            .ok_or_else(|| format!("bad position {s:?}; expected \"core\" or \"tool:<k>\""))
    }
}

impl Serialize for Position {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Position {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Locator {
    #[serde(with = "string_num")]
    pub step: usize,
    pub position: Position,
}

impl Locator {
    pub fn core(step: usize) -> Self {
        Self { step, position: Position::Core }
    }

    pub fn tool(step: usize, k: usize) -> Self {
        Self { step, position: Position::Tool(k) }
    }
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}/{}", self.step, self.position)
    }
}

// Payloads live in a Vec and are read far more than moved.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "proof", deny_unknown_fields)]
pub enum ProofPayload {
    #[serde(rename = "webproof")]
    WebProof(WebProof),
    #[serde(rename = "tee_attestation")]
    TeeAttestation(TeeProof),
}

impl ProofPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            ProofPayload::WebProof(_) => "webproof",
            ProofPayload::TeeAttestation(_) => "tee_attestation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentProof {
    pub locator: Locator,
    pub payload: ProofPayload,
}

/// A value the prover claims, and where in the trace it sits. A core
/// locator names the core output, a tool locator names the tool input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claim {
    pub value: String,
    pub locator: Locator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiableExecutionTrace {
    pub aid_id: String,
    pub trace: ExecutionTrace,
    pub proofs: Vec<ComponentProof>,
    pub claims: Vec<Claim>,
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle is not valid JSON of the expected shape: {0}")]
    Parse(String),
}

impl VerifiableExecutionTrace {
    pub fn to_canonical_json(&self) -> Vec<u8> {
        to_canonical_vec(self).expect("bundles hold strings only")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, BundleError> {
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| BundleError::Parse(e.to_string()))?;
        if let Some(path) = find_number(&value) {
            return Err(BundleError::Parse(format!("number at {path}")));
        }
        serde_json::from_value(value).map_err(|e| BundleError::Parse(e.to_string()))
    }

    pub fn proof_at(&self, locator: Locator) -> Option<&ComponentProof> {
        self.proofs.iter().find(|p| p.locator == locator)
    }
}

/// Verifier-side anchors beyond the document: template bodies by uid, and
/// optional pins for server keys and proxy measurements.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    pub registry: TemplateRegistry,
    /// Server domain to key fingerprint.
    pub server_pins: BTreeMap<String, String>,
    /// Trusted proxy measurements; empty trusts any.
    pub proxy_measurements: BTreeSet<Digest>,
}

/// On-disk form of the pins in a [`TrustStore`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustFile {
    #[serde(default)]
    pub server_pins: BTreeMap<String, String>,
    #[serde(default)]
    pub proxy_measurements: BTreeSet<Digest>,
}

impl TrustStore {
    pub fn new(registry: TemplateRegistry) -> Self {
        Self { registry, ..Self::default() }
    }

    pub fn with_file(registry: TemplateRegistry, file: TrustFile) -> Self {
        Self { registry, server_pins: file.server_pins, proxy_measurements: file.proxy_measurements }
    }

    pub fn to_file(&self) -> TrustFile {
        TrustFile { server_pins: self.server_pins.clone(), proxy_measurements: self.proxy_measurements.clone() }
    }
}

#[derive(Debug, Clone)]
pub enum ComponentChecker {
    WebProof(WebProofChecker),
    Tee(TeeChecker),
}

impl ComponentChecker {
    pub fn scheme(&self) -> &'static str {
        match self {
            ComponentChecker::WebProof(_) => "TLSNotary",
            ComponentChecker::Tee(_) => "ProxyTEE",
        }
    }

    pub fn parser(&self) -> &ParseTemplate {
        match self {
            ComponentChecker::WebProof(c) => &c.parser,
            ComponentChecker::Tee(c) => &c.parser,
        }
    }

    pub fn injection(&self) -> &InjectionTemplate {
        match self {
            ComponentChecker::WebProof(c) => &c.injection,
            ComponentChecker::Tee(c) => &c.injection,
        }
    }

    pub fn authenticate(&self, payload: &ProofPayload) -> Result<Authenticated, Rejection> {
        match (self, payload) {
            (ComponentChecker::WebProof(c), ProofPayload::WebProof(p)) => c.authenticate(p),
            (ComponentChecker::Tee(c), ProofPayload::TeeAttestation(p)) => c.authenticate(p),
            _ => Err(Rejection::new(
                crate::verdict::RejectReason::UnsupportedComponent,
                format!("a {} proof cannot satisfy a {} component", payload.kind(), self.scheme()),
            )),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceRejection {
    #[error("bundle is for agent {found}, document hashes to {expected}")]
    AidMismatch { expected: String, found: String },
    #[error("sub-proof at {locator} is invalid: {detail}")]
    SubproofInvalid { locator: Locator, detail: String },
    #[error("transcript inconsistent at step {step}: {detail}")]
    TranscriptInconsistent { step: usize, detail: String },
    #[error("claimed value is neither a core output nor a tool input of the trace")]
    OutputNotFound,
    #[error("claim {index} does not match the trace at {locator}")]
    ClaimMismatch { index: usize, locator: Locator },
    #[error("cannot build a verifier from the document: {0}")]
    Verifier(#[from] InstantiateError),
}

impl TraceRejection {
    /// Stable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            TraceRejection::AidMismatch { .. } => "aid-mismatch",
            TraceRejection::SubproofInvalid { .. } => "subproof-invalid",
            TraceRejection::TranscriptInconsistent { .. } => "transcript-inconsistent",
            TraceRejection::OutputNotFound => "output-not-found",
            TraceRejection::ClaimMismatch { .. } => "claim-mismatch",
            TraceRejection::Verifier(_) => "verifier-unavailable",
        }
    }
}

/// Values extracted from the accepted proofs of one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepData {
    /// Core input (the transcript) and parsed output.
    pub core: (Vec<u8>, CoreOutput),
    /// Per tool call: authenticated input and parsed result.
    pub tools: Vec<(String, String)>,
}

fn inconsistent(step: usize, detail: impl Into<String>) -> TraceRejection {
    TraceRejection::TranscriptInconsistent { step, detail: detail.into() }
}

/// Consistency of a trace with the values its proofs authenticate.
pub fn check_trace(trace: &ExecutionTrace, data: &[StepData]) -> Result<(), TraceRejection> {
    if trace.steps.is_empty() {
        return Err(inconsistent(0, "trace has no steps"));
    }
    if data.len() != trace.steps.len() {
        return Err(inconsistent(data.len().min(trace.steps.len()), "step data does not cover the trace"));
    }
    let last = trace.steps.len() - 1;
    let mut transcript = Transcript::new();
    transcript.push_frame(crate::agent::tag::INITIAL_INPUT, trace.initial_input.as_bytes());
    for (j, (step, d)) in trace.steps.iter().zip(data).enumerate() {
        if step.step_index != j as u64 {
            return Err(inconsistent(j, format!("step index {} out of order", step.step_index)));
        }
        if j < last && step.tool_calls.is_empty() {
            return Err(inconsistent(j, "core halted but the trace continues"));
        }
        if j == last && trace.truncated == step.tool_calls.is_empty() {
            return Err(inconsistent(j, "truncation flag disagrees with the last step"));
        }
        let (x, out) = &d.core;
        if x.as_slice() != transcript.as_bytes() {
            return Err(inconsistent(j, "core request does not carry the transcript of the earlier steps"));
        }
        if out.output != step.core_output {
            return Err(inconsistent(j, "core output differs from the proven output"));
        }
        let recorded: Vec<ToolInvocation> = step.invocations();
        if out.calls != recorded {
            return Err(inconsistent(j, "tool calls differ from the calls the core emitted"));
        }
        if d.tools.len() != step.tool_calls.len() {
            return Err(inconsistent(j, "tool data does not cover the calls"));
        }
        for (k, (call, (x, r))) in step.tool_calls.iter().zip(&d.tools).enumerate() {
            if &call.input != x {
                return Err(inconsistent(j, format!("tool call {k} input differs from the proven input")));
            }
            if &call.result != r {
                return Err(inconsistent(j, format!("tool call {k} result differs from the proven result")));
            }
        }
        transcript.push_step(step);
    }
    Ok(())
}

/// Boolean form of [`check_trace`].
pub fn valid_trace(trace: &ExecutionTrace, data: &[StepData]) -> bool {
    check_trace(trace, data).is_ok()
}

/// Where a claimed value was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accepted {
    pub locator: Locator,
}

/// The verifier an identity document describes.
#[derive(Debug, Clone)]
pub struct ComposedVerifier {
    pub aid_id: String,
    pub core: ComponentChecker,
    pub tools: BTreeMap<String, ComponentChecker>,
}

fn subproof(locator: Locator, detail: impl fmt::Display) -> TraceRejection {
    TraceRejection::SubproofInvalid { locator, detail: detail.to_string() }
}

fn parse_err(locator: Locator, e: ParseError) -> TraceRejection {
    subproof(locator, parse_failure(e))
}

impl ComposedVerifier {
    pub fn checker_count(&self) -> usize {
        1 + self.tools.len()
    }

    /// Checks every sub-proof and returns the values they authenticate.
    pub fn step_data(&self, bundle: &VerifiableExecutionTrace) -> Result<Vec<StepData>, TraceRejection> {
        let trace = &bundle.trace;
        let mut by_locator: BTreeMap<Locator, &ProofPayload> = BTreeMap::new();
        for p in &bundle.proofs {
            let exists = trace.steps.get(p.locator.step).is_some_and(|s| match p.locator.position {
                Position::Core => true,
                Position::Tool(k) => k < s.tool_calls.len(),
            });
            if !exists {
                return Err(subproof(p.locator, "no such invocation in the trace"));
            }
            if by_locator.insert(p.locator, &p.payload).is_some() {
                return Err(subproof(p.locator, "more than one proof for this invocation"));
            }
        }
        let mut out = Vec::with_capacity(trace.steps.len());
        for (j, step) in trace.steps.iter().enumerate() {
            let loc = Locator::core(j);
            let payload = by_locator.get(&loc).ok_or_else(|| subproof(loc, "missing proof"))?;
            let auth = self.core.authenticate(payload).map_err(|r| subproof(loc, r))?;
            let output = self.core.parser().parse_core(&auth.response).map_err(|e| parse_err(loc, e))?;
            let core = (auth.input, output);
            let mut tools = Vec::with_capacity(step.tool_calls.len());
            for (k, call) in step.tool_calls.iter().enumerate() {
                let loc = Locator::tool(j, k);
                let checker = self
                    .tools
                    .get(&call.tool)
                    .ok_or_else(|| inconsistent(j, format!("tool {:?} is not declared in the identity document", call.tool)))?;
                let payload = by_locator.get(&loc).ok_or_else(|| subproof(loc, "missing proof"))?;
                let auth = checker.authenticate(payload).map_err(|r| subproof(loc, r))?;
                let x = auth.input_str().map_err(|r| subproof(loc, r))?.to_string();
                let r = checker.parser().parse_tool(&auth.response, &x).map_err(|e| parse_err(loc, e))?;
                tools.push((x, r));
            }
            out.push(StepData { core, tools });
        }
        Ok(out)
    }

    /// Full check of `m` against `bundle`.
    pub fn verify(&self, m: &str, bundle: &VerifiableExecutionTrace) -> Result<Accepted, TraceRejection> {
        if bundle.aid_id != self.aid_id {
            return Err(TraceRejection::AidMismatch { expected: self.aid_id.clone(), found: bundle.aid_id.clone() });
        }
        let data = self.step_data(bundle)?;
        check_trace(&bundle.trace, &data)?;
        let value_at = |loc: &Locator| -> Option<&str> {
            let step = bundle.trace.steps.get(loc.step)?;
            match loc.position {
                Position::Core => Some(step.core_output.as_str()),
                Position::Tool(k) => step.tool_calls.get(k).map(|c| c.input.as_str()),
            }
        };
        for (index, claim) in bundle.claims.iter().enumerate() {
            if value_at(&claim.locator) != Some(claim.value.as_str()) {
                return Err(TraceRejection::ClaimMismatch { index, locator: claim.locator });
            }
        }
        for (j, step) in bundle.trace.steps.iter().enumerate().rev() {
            if step.core_output == m {
                return Ok(Accepted { locator: Locator::core(j) });
            }
            if let Some(k) = step.tool_calls.iter().position(|c| c.input == m) {
                return Ok(Accepted { locator: Locator::tool(j, k) });
            }
        }
        Err(TraceRejection::OutputNotFound)
    }
}

/// Builds the verifier from `aid` and checks `m` against `bundle`.
pub fn verify_trace(m: &str, bundle: &VerifiableExecutionTrace, aid: &AgentIdentityDocument, trust: &TrustStore) -> Result<Accepted, TraceRejection> {
    let expected = compute_id(aid).map_err(|e| TraceRejection::AidMismatch { expected: e.to_string(), found: bundle.aid_id.clone() })?;
    if expected != bundle.aid_id {
        return Err(TraceRejection::AidMismatch { expected, found: bundle.aid_id.clone() });
    }
    instantiate_verifier(aid, trust)?.verify(m, bundle)
}

#[derive(Debug, Error)]
pub enum ProveError {
    #[error("no prover for component {0:?}")]
    MissingProver(String),
    #[error("{locator}: {source}")]
    Template { locator: Locator, source: TemplateError },
    #[error("{locator}: {source}")]
    Session { locator: Locator, source: SessionError },
    #[error("{locator}: {source}")]
    Proxy { locator: Locator, source: ProxyError },
    #[error("{locator}: response does not parse: {source}")]
    Parse { locator: Locator, source: ParseError },
    #[error("{locator}: {message}")]
    Exchange { locator: Locator, message: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("identity document: {0}")]
    Aid(String),
    #[error("{component}: {source}")]
    Component { component: String, source: Box<ProveError> },
}

impl ProveError {
    fn at(self, locator: Locator) -> Self {
        match self {
            ProveError::Template { source, .. } => ProveError::Template { locator, source },
            ProveError::Session { source, .. } => ProveError::Session { locator, source },
            ProveError::Proxy { source, .. } => ProveError::Proxy { locator, source },
            ProveError::Parse { source, .. } => ProveError::Parse { locator, source },
            ProveError::Exchange { message, .. } => ProveError::Exchange { locator, message },
            other => other,
        }
    }
}

/// Performs one proven exchange: sends the rendered request, returns the
/// response and the proof for it.
pub trait ComponentProver {
    fn prove_exchange(&mut self, rendered: &RenderedRequest) -> Result<(Vec<u8>, ProofPayload), ProveError>;
}

const NOWHERE: Locator = Locator { step: 0, position: Position::Core };

/// Proves exchanges through a notary.
pub struct WebProofProver {
    pub link: Box<dyn NotaryLink>,
    pub channel: ChannelSpec,
    /// When set, each channel's upstream capacity is the request length
    /// rounded up to this unit instead of `channel.capacity_up`.
    pub size_unit: Option<u64>,
    pub rng: ChaCha20Rng,
}

impl ComponentProver for WebProofProver {
    fn prove_exchange(&mut self, rendered: &RenderedRequest) -> Result<(Vec<u8>, ProofPayload), ProveError> {
        let mut channel = self.channel.clone();
        if let Some(unit) = self.size_unit.filter(|&u| u > 0) {
            channel.capacity_up = (rendered.bytes.len() as u64).div_ceil(unit).max(1) * unit;
        }
        let (response, proof) =
            run_session(&channel, rendered, self.link.as_mut(), &mut self.rng).map_err(|source| ProveError::Session { locator: NOWHERE, source })?;
        Ok((response, ProofPayload::WebProof(proof)))
    }
}

/// Proves exchanges through an in-process attested proxy.
pub struct LocalProxyProver {
    pub enclave: std::sync::Arc<ProxyEnclave>,
    pub upstream: Box<dyn Upstream>,
}

impl ComponentProver for LocalProxyProver {
    fn prove_exchange(&mut self, rendered: &RenderedRequest) -> Result<(Vec<u8>, ProofPayload), ProveError> {
        let (response, attestation) =
            self.enclave.fetch(&rendered.bytes, self.upstream.as_mut()).map_err(|source| ProveError::Proxy { locator: NOWHERE, source })?;
        Ok((response.clone(), ProofPayload::TeeAttestation(TeeProof { request: rendered.bytes.clone(), response, attestation })))
    }
}

/// Provers for each component plus the secrets the templates need.
pub struct ProverSet {
    pub core: Box<dyn ComponentProver>,
    pub tools: BTreeMap<String, Box<dyn ComponentProver>>,
    pub secrets: BTreeMap<String, String>,
}

#[derive(Default)]
struct Recorder {
    step: usize,
    call: usize,
    proofs: Vec<ComponentProof>,
    error: Option<ProveError>,
}

type Shared = Rc<RefCell<Recorder>>;

fn fail(rec: &Shared, e: ProveError) -> AgentError {
    let msg = e.to_string();
    rec.borrow_mut().error = Some(e);
    AgentError::Core(msg)
}

struct ProvingCore<'a> {
    prover: &'a mut dyn ComponentProver,
    injection: InjectionTemplate,
    parser: ParseTemplate,
    secrets: &'a BTreeMap<String, String>,
    rec: Shared,
    calls: usize,
}

impl Core for ProvingCore<'_> {
    fn respond(&mut self, transcript: &Transcript) -> Result<CoreOutput, AgentError> {
        let locator = Locator::core(self.calls);
        {
            let mut r = self.rec.borrow_mut();
            r.step = self.calls;
            r.call = 0;
        }
        self.calls += 1;
        let rendered =
            self.injection.inject(transcript.as_bytes(), self.secrets).map_err(|source| fail(&self.rec, ProveError::Template { locator, source }))?;
        let (response, payload) = self.prover.prove_exchange(&rendered).map_err(|e| {
            fail(&self.rec, ProveError::Component { component: format!("core at {}", self.injection.host), source: Box::new(e.at(locator)) })
        })?;
        let out = self.parser.parse_core(&response).map_err(|source| fail(&self.rec, ProveError::Parse { locator, source }))?;
        self.rec.borrow_mut().proofs.push(ComponentProof { locator, payload });
        Ok(out)
    }
}

struct ProvingTool<'a> {
    name: String,
    prover: &'a mut dyn ComponentProver,
    injection: InjectionTemplate,
    parser: ParseTemplate,
    secrets: &'a BTreeMap<String, String>,
    rec: Shared,
}

impl Tool for ProvingTool<'_> {
    fn call(&mut self, input: &str) -> Result<String, AgentError> {
        let locator = {
            let mut r = self.rec.borrow_mut();
            let l = Locator::tool(r.step, r.call);
            r.call += 1;
            l
        };
        let rendered =
            self.injection.inject(input.as_bytes(), self.secrets).map_err(|source| fail(&self.rec, ProveError::Template { locator, source }))?;
        let (response, payload) = self.prover.prove_exchange(&rendered).map_err(|e| {
            fail(
                &self.rec,
                ProveError::Component { component: format!("tool {} at {}", self.name, self.injection.host), source: Box::new(e.at(locator)) },
            )
        })?;
        let result = self.parser.parse_tool(&response, input).map_err(|source| fail(&self.rec, ProveError::Parse { locator, source }))?;
        self.rec.borrow_mut().proofs.push(ComponentProof { locator, payload });
        Ok(result)
    }
}

/// Runs the agent the document describes, proving every exchange, and
/// bundles the trace with its proofs. The final core output is claimed.
pub fn prove_trace(
    aid: &AgentIdentityDocument,
    registry: &TemplateRegistry,
    initial_input: &str,
    provers: &mut ProverSet,
    max_steps: usize,
) -> Result<VerifiableExecutionTrace, ProveError> {
    let aid_id = compute_id(aid).map_err(|e| ProveError::Aid(e.to_string()))?;
    let templates = |uid_i: &str, uid_p: &str| -> Result<(InjectionTemplate, ParseTemplate), ProveError> {
        Ok((
            registry.injection(uid_i).map_err(|e| ProveError::Aid(e.to_string()))?.clone(),
            registry.parsing(uid_p).map_err(|e| ProveError::Aid(e.to_string()))?.clone(),
        ))
    };
    let rec: Shared = Rc::default();
    let (ci, cp) = templates(&aid.core.injection_algorithm_uid, &aid.core.parsing_algorithm_uid)?;
    let secrets = &provers.secrets;
    let mut core = ProvingCore { prover: provers.core.as_mut(), injection: ci, parser: cp, secrets, rec: rec.clone(), calls: 0 };
    let mut tools: ToolSet<'_> = BTreeMap::new();
    for (name, prover) in provers.tools.iter_mut() {
        let entry = aid.tool(name).ok_or_else(|| ProveError::MissingProver(format!("{name} is not in the identity document")))?;
        let (injection, parser) = templates(&entry.injection_algorithm_uid, &entry.parsing_algorithm_uid)?;
        tools.insert(
            name.clone(),
            Box::new(ProvingTool { name: name.clone(), prover: prover.as_mut(), injection, parser, secrets, rec: rec.clone() }),
        );
    }
    for t in &aid.tools {
        let name = t.name.clone().unwrap_or_default();
        if !tools.contains_key(&name) {
            return Err(ProveError::MissingProver(name));
        }
    }
    let result = run_agent(&mut core, &mut tools, initial_input, max_steps);
    drop(tools);
    drop(core);
    let mut rec = Rc::try_unwrap(rec).map_err(|_| ProveError::Aid("prover state still shared".into()))?.into_inner();
    let trace = match (result, rec.error.take()) {
        (_, Some(e)) => return Err(e),
        (Err(e), None) => return Err(e.into()),
        (Ok(t), None) => t,
    };
    let mut proofs = rec.proofs;
    proofs.sort_by_key(|p| p.locator);
    let last = trace.steps.len() - 1;
    let claims = vec![Claim { value: trace.steps[last].core_output.clone(), locator: Locator::core(last) }];
    Ok(VerifiableExecutionTrace { aid_id, trace, proofs, claims })
}

/// Loads an agent's templates and builds the matching verifier in one step.
pub fn verifier_for(aid: &AgentIdentityDocument, trust: &TrustStore) -> Result<ComposedVerifier, InstantiateError> {
    instantiate_verifier(aid, trust)
}
