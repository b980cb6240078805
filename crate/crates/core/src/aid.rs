//! Agent Identity Documents: what an agent is made of and how each part is
//! to be verified. The document's hash is the agent's identity.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::canonical::{find_number, is_sha256_uid, sha256_uid, to_canonical_vec};
use crate::composer::{ComponentChecker, ComposedVerifier, TrustStore};
use crate::crypto::parse_public_key;
use crate::proxy::TeeChecker;
use crate::template::{Algorithm, RegistryError, TemplateRegistry};
use crate::webproof::{WebProofChecker, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum Verification {
    #[serde(rename = "TLSNotary")]
    TlsNotary { protocol_version: String, notary_public_key: String },
    #[serde(rename = "ProxyTEE")]
    ProxyTee { tee_type: String, enclave_public_key: String },
    /// Reserved; documents may name it but no verifier exists for it.
    Consensus(BTreeMap<String, String>),
}

impl Verification {
    pub fn scheme(&self) -> &'static str {
        match self {
            Verification::TlsNotary { .. } => "TLSNotary",
            Verification::ProxyTee { .. } => "ProxyTEE",
            Verification::Consensus(_) => "Consensus",
        }
    }
}

/// One component: the core (with `model`) or a tool (with `name`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub endpoint: String,
    pub injection_algorithm_uid: String,
    pub parsing_algorithm_uid: String,
    pub verification: Verification,
}

impl ComponentEntry {
    /// Host of the endpoint URL, if it parses.
    pub fn host(&self) -> Option<String> {
        Url::parse(&self.endpoint).ok().and_then(|u| u.host_str().map(str::to_string))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentIdentityDocument {
    pub agent_name: String,
    pub core: ComponentEntry,
    pub tools: Vec<ComponentEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_hash: Option<String>,
}

impl AgentIdentityDocument {
    pub fn tool(&self, name: &str) -> Option<&ComponentEntry> {
        self.tools.iter().find(|t| t.name.as_deref() == Some(name))
    }

    /// A copy with `agent_hash` set to the computed id.
    pub fn with_hash(&self) -> Result<Self, AidError> {
        Ok(Self { agent_hash: Some(compute_id(self)?), ..self.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AidError {
    #[error("not an identity document: {0}")]
    Parse(String),
    #[error("document is structurally invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstantiateError {
    #[error("document does not validate: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("{path}: verification scheme {scheme} is not supported")]
    UnsupportedScheme { path: String, scheme: String },
    #[error("{path}: {source}")]
    UnknownTemplate { path: String, source: RegistryError },
}

/// Parses an identity document. Numbers and unknown fields are rejected.
pub fn parse_aid(bytes: &[u8]) -> Result<AgentIdentityDocument, AidError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| AidError::Parse(e.to_string()))?;
    if let Some(path) = find_number(&value) {
        return Err(AidError::Parse(format!("number at {path}; scalars must be strings")));
    }
    serde_json::from_value(value).map_err(|e| AidError::Parse(e.to_string()))
}

fn v(path: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { path: path.into(), message: message.into() }
}

/// Violations of the document's shape: names, roles and tool uniqueness.
fn structural_violations(aid: &AgentIdentityDocument) -> Vec<Violation> {
    let mut out = Vec::new();
    if aid.agent_name.is_empty() {
        out.push(v("/agent_name", "must not be empty"));
    }
    match &aid.core.model {
        Some(m) if !m.is_empty() => {}
        _ => out.push(v("/core/model", "core entry needs a model id")),
    }
    if aid.core.name.is_some() {
        out.push(v("/core/name", "core entry takes no name"));
    }
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for (i, t) in aid.tools.iter().enumerate() {
        match &t.name {
            Some(n) if !n.is_empty() => {
                if !seen.insert(n.clone()) {
                    dup.insert(n.clone());
                }
            }
            _ => out.push(v(format!("/tools/{i}/name"), "tool entry needs a name")),
        }
        if t.model.is_some() {
            out.push(v(format!("/tools/{i}/model"), "tool entry takes no model"));
        }
    }
    if !dup.is_empty() {
        out.push(v("/tools", format!("duplicate tool names: {}", dup.into_iter().collect::<Vec<_>>().join(", "))));
    }
    out
}

/// Canonical bytes of the document without `agent_hash`: sorted keys, no
/// whitespace, strings only.
pub fn canonicalize(aid: &AgentIdentityDocument) -> Result<Vec<u8>, AidError> {
    let structural = structural_violations(aid);
    if !structural.is_empty() {
        return Err(AidError::Invalid(structural));
    }
    let stripped = AgentIdentityDocument { agent_hash: None, ..aid.clone() };
    Ok(to_canonical_vec(&stripped).expect("documents hold strings only"))
}

/// `sha256:` plus the hex digest of the canonical bytes.
pub fn compute_id(aid: &AgentIdentityDocument) -> Result<String, AidError> {
    Ok(sha256_uid(&canonicalize(aid)?))
}

fn component_violations(entry: &ComponentEntry, path: &str, registry: Option<&TemplateRegistry>, out: &mut Vec<Violation>) {
    let host = match Url::parse(&entry.endpoint) {
        Ok(u) if u.scheme() == "https" && u.host_str().is_some() => u.host_str().map(str::to_string),
        Ok(_) => {
            out.push(v(format!("{path}/endpoint"), "endpoint must be an https URL with a host"));
            None
        }
        Err(e) => {
            out.push(v(format!("{path}/endpoint"), format!("endpoint does not parse: {e}")));
            None
        }
    };
    for (field, uid, kind) in
        [("injection_algorithm_uid", &entry.injection_algorithm_uid, "injection"), ("parsing_algorithm_uid", &entry.parsing_algorithm_uid, "parsing")]
    {
        let p = format!("{path}/{field}");
        if !is_sha256_uid(uid) {
            out.push(v(p, format!("{uid:?} is not sha256: followed by 64 lowercase hex digits")));
            continue;
        }
        let Some(reg) = registry else { continue };
        match reg.get(uid) {
            None => out.push(v(p, format!("template {uid} is not registered"))),
            Some(Algorithm::Injection(t)) if kind == "injection" => {
                if let Some(h) = &host {
                    if &t.host != h {
                        out.push(v(p, format!("template {uid} targets host {:?}, endpoint host is {h:?}", t.host)));
                    }
                }
                if let Ok(u) = Url::parse(&entry.endpoint) {
                    let tpath = t.path.split('?').next().unwrap_or_default();
                    if tpath != u.path() {
                        out.push(v(format!("{path}/endpoint"), format!("endpoint path {:?} differs from template path {tpath:?}", u.path())));
                    }
                }
            }
            Some(Algorithm::Parsing(_)) if kind == "parsing" => {}
            Some(_) => out.push(v(p, format!("template {uid} is not a {kind} algorithm"))),
        }
    }
    let vp = format!("{path}/verification");
    match &entry.verification {
        Verification::TlsNotary { protocol_version, notary_public_key } => {
            if protocol_version.is_empty() {
                out.push(v(format!("{vp}/TLSNotary/protocol_version"), "must not be empty"));
            }
            if let Err(e) = parse_public_key(notary_public_key) {
                out.push(v(format!("{vp}/TLSNotary/notary_public_key"), e.to_string()));
            }
        }
        Verification::ProxyTee { tee_type, enclave_public_key } => {
            if tee_type.is_empty() {
                out.push(v(format!("{vp}/ProxyTEE/tee_type"), "must not be empty"));
            }
            if let Err(e) = parse_public_key(enclave_public_key) {
                out.push(v(format!("{vp}/ProxyTEE/enclave_public_key"), e.to_string()));
            }
        }
        Verification::Consensus(_) => {}
    }
}

/// Every invariant of the document; with a registry, also that each uid is
/// registered with the right kind and targets the endpoint's host.
pub fn validate(aid: &AgentIdentityDocument, registry: Option<&TemplateRegistry>) -> Vec<Violation> {
    let mut out = structural_violations(aid);
    component_violations(&aid.core, "/core", registry, &mut out);
    for (i, t) in aid.tools.iter().enumerate() {
        component_violations(t, &format!("/tools/{i}"), registry, &mut out);
    }
    if let Some(claimed) = &aid.agent_hash {
        if let Ok(id) = compute_id(aid) {
            if &id != claimed {
                out.push(v("/agent_hash", format!("claims {claimed}, document hashes to {id}")));
            }
        }
    }
    out
}

fn checker_for(entry: &ComponentEntry, path: &str, trust: &TrustStore) -> Result<ComponentChecker, InstantiateError> {
    let unsupported = |scheme: &str| InstantiateError::UnsupportedScheme { path: format!("{path}/verification"), scheme: scheme.into() };
    if let Verification::Consensus(_) = entry.verification {
        return Err(unsupported("Consensus"));
    }
    let unknown = |source| InstantiateError::UnknownTemplate { path: path.to_string(), source };
    let injection = trust.registry.injection(&entry.injection_algorithm_uid).map_err(unknown)?.clone();
    let parser = trust.registry.parsing(&entry.parsing_algorithm_uid).map_err(unknown)?.clone();
    match &entry.verification {
        Verification::TlsNotary { protocol_version, notary_public_key } => {
            if protocol_version != PROTOCOL_VERSION {
                return Err(unsupported(&format!("TLSNotary {protocol_version}")));
            }
            let notary_key = parse_public_key(notary_public_key).map_err(|_| unsupported("TLSNotary key"))?;
            Ok(ComponentChecker::WebProof(WebProofChecker {
                domain: injection.host.clone(),
                server_pin: trust.server_pins.get(&injection.host).cloned(),
                notary_key,
                injection,
                parser,
            }))
        }
        Verification::ProxyTee { tee_type, enclave_public_key } => {
            let enclave_key = parse_public_key(enclave_public_key).map_err(|_| unsupported("ProxyTEE key"))?;
            Ok(ComponentChecker::Tee(TeeChecker {
                enclave_key,
                tee_type: tee_type.clone(),
                injection,
                parser,
                measurements: (!trust.proxy_measurements.is_empty()).then(|| trust.proxy_measurements.clone()),
            }))
        }
        Verification::Consensus(_) => Err(unsupported("Consensus")),
    }
}

/// Builds the verifier the document describes. Keys, schemes and templates
/// come from the document; the trust store supplies the template bodies and
/// optional server pins and proxy measurements.
pub fn instantiate_verifier(aid: &AgentIdentityDocument, trust: &TrustStore) -> Result<ComposedVerifier, InstantiateError> {
    let violations = validate(aid, None);
    if !violations.is_empty() {
        return Err(InstantiateError::Invalid(violations));
    }
    let aid_id = compute_id(aid).map_err(|e| match e {
        AidError::Invalid(v) => InstantiateError::Invalid(v),
        AidError::Parse(m) => InstantiateError::Invalid(vec![v("", m)]),
    })?;
    let core = checker_for(&aid.core, "/core", trust)?;
    let mut tools = BTreeMap::new();
    for (i, t) in aid.tools.iter().enumerate() {
        let name = t.name.clone().expect("validated tools are named");
        tools.insert(name, checker_for(t, &format!("/tools/{i}"), trust)?);
    }
    let violations = validate(aid, Some(&trust.registry));
    if !violations.is_empty() {
        return Err(InstantiateError::Invalid(violations));
    }
    Ok(ComposedVerifier { aid_id, core, tools })
}
