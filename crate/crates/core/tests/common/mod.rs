//! Honest bundles and forgers shared by the soundness suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ed25519_dalek::SigningKey;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use vet_core::aid::{compute_id, instantiate_verifier, AgentIdentityDocument, Verification};
use vet_core::commitment::{commit, ByteRange};
use vet_core::composer::{verify_trace, Position, ProofPayload, TrustStore, VerifiableExecutionTrace};
use vet_core::crypto::format_public_key;
use vet_core::demo::{self, agent_aid, run_veritrade, veritrade_aid, BrainKind, Keys, Scheme, World, WorldOptions};
use vet_core::mock;
use vet_core::tls::{record_hash, seal_record, Direction};
use vet_core::webproof::{DirectionProof, SignedStatement, WebProof};

/// A bundle together with everything needed to check it.
#[derive(Clone)]
pub struct Case {
    pub m: String,
    pub bundle: VerifiableExecutionTrace,
    pub aid: AgentIdentityDocument,
    pub trust: TrustStore,
}

impl Case {
    pub fn accepted(&self) -> bool {
        verify_trace(&self.m, &self.bundle, &self.aid, &self.trust).is_ok()
    }

    pub fn rejection(&self) -> Option<&'static str> {
        verify_trace(&self.m, &self.bundle, &self.aid, &self.trust).err().map(|e| e.code())
    }
}

fn final_output(bundle: &VerifiableExecutionTrace) -> String {
    bundle.trace.steps.last().map(|s| s.core_output.clone()).unwrap_or_default()
}

pub fn veritrade_case(seed: u64, tick: u64) -> Case {
    veritrade_case_with(WorldOptions::new(seed), Keys::derived(), tick)
}

pub fn veritrade_case_with(options: WorldOptions, keys: Keys, tick: u64) -> Case {
    let world = World::with_keys(options, keys);
    let run = run_veritrade(&world, tick).expect("honest run proves and verifies");
    Case { m: final_output(&run.bundle), aid: veritrade_aid(&world.keys), trust: world.trust(), bundle: run.bundle }
}

/// Tools of the mixed random agent; two are notarized so tool web proofs
/// are exercised too.
pub const RANDOM_TOOLS: [(&str, Scheme); 3] =
    [(mock::ECHO_TOOL, Scheme::WebProof), (mock::PRICE_TOOL, Scheme::Proxy), (mock::SENTIMENT_TOOL, Scheme::WebProof)];

pub fn random_case(seed: u64) -> Case {
    let opts = WorldOptions {
        brain: BrainKind::Random { tools: RANDOM_TOOLS.iter().map(|t| t.0.to_string()).collect(), max_steps: 4 },
        ..WorldOptions::new(seed)
    };
    let world = World::new(opts);
    let aid = agent_aid("Random", Scheme::WebProof, &RANDOM_TOOLS, &world.keys);
    let bundle = world.prove(&aid, &format!("task {seed}"), 6).expect("honest random run proves");
    Case { m: final_output(&bundle), aid, trust: world.trust(), bundle }
}

pub fn fresh_key(rng: &mut ChaCha20Rng) -> SigningKey {
    let mut seed = [0u8; 32];
    rng.fill(&mut seed);
    SigningKey::from_bytes(&seed)
}

/// Honest bundles from a notary the verifier does not trust.
pub fn colluding_notary_case(seed: u64) -> Case {
    let mut keys = Keys::derived();
    keys.notary = fresh_key(&mut ChaCha20Rng::seed_from_u64(0xC011_0DE0 + seed));
    veritrade_case_with(WorldOptions::new(seed), keys, 0)
}

pub struct Corpus {
    pub honest: Vec<Case>,
    pub rogue_notary: Vec<Case>,
}

impl Corpus {
    pub fn build(veritrade: u64, random: u64, rogue: u64) -> Self {
        let mut honest: Vec<Case> = (0..veritrade).map(|s| veritrade_case(s, s % 3)).collect();
        honest.extend((0..random).map(|s| random_case(100 + s)));
        let rogue_notary = (0..rogue).map(colluding_notary_case).collect();
        Self { honest, rogue_notary }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forgery {
    CiphertextMutation,
    PlaintextRecommit,
    RecordSplice,
    TraceMutation,
    ProofSubstitution,
    AidSubstitution,
    NotaryKeySubstitution,
}

impl Forgery {
    pub const ALL: [Forgery; 7] = [
        Forgery::CiphertextMutation,
        Forgery::PlaintextRecommit,
        Forgery::RecordSplice,
        Forgery::TraceMutation,
        Forgery::ProofSubstitution,
        Forgery::AidSubstitution,
        Forgery::NotaryKeySubstitution,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Forgery::CiphertextMutation => "ciphertext mutation after signing",
            Forgery::PlaintextRecommit => "plaintext change with recomputed commitment",
            Forgery::RecordSplice => "cross-session record splicing",
            Forgery::TraceMutation => "trace field mutation",
            Forgery::ProofSubstitution => "sub-proof substitution",
            Forgery::AidSubstitution => "identity document substitution",
            Forgery::NotaryKeySubstitution => "notary key substitution",
        }
    }
}

fn flip(bytes: &mut [u8], rng: &mut ChaCha20Rng) {
    if bytes.is_empty() {
        return;
    }
    let i = rng.gen_range(0..bytes.len());
    bytes[i] ^= 1 << rng.gen_range(0..8);
}

fn webproof_indices(bundle: &VerifiableExecutionTrace) -> Vec<usize> {
    (0..bundle.proofs.len()).filter(|&i| matches!(bundle.proofs[i].payload, ProofPayload::WebProof(_))).collect()
}

fn webproof_mut(bundle: &mut VerifiableExecutionTrace, i: usize) -> &mut WebProof {
    match &mut bundle.proofs[i].payload {
        ProofPayload::WebProof(w) => w,
        ProofPayload::TeeAttestation(_) => unreachable!("index selected among web proofs"),
    }
}

/// The prover's view of one direction: disclosed bytes, unknown ones `None`.
fn view(d: &DirectionProof) -> Vec<Option<u8>> {
    let mut out = vec![None; d.commitment.total_length as usize];
    let cs = d.commitment.chunk_size as usize;
    for c in &d.disclosure.chunks {
        for (j, b) in c.bytes.iter().enumerate() {
            // Spliced disclosures may not fit this commitment.
            if let Some(slot) = out.get_mut(c.index as usize * cs + j) {
                *slot = Some(*b);
            }
        }
    }
    out
}

/// Recommits `plaintext` and discloses the same ranges as `old`.
fn recommit(old: &DirectionProof, plaintext: &[u8], rng: &mut ChaCha20Rng) -> DirectionProof {
    let (commitment, opening) = commit(plaintext, old.commitment.chunk_size, rng);
    let ranges: Vec<ByteRange> = old.disclosure.ranges.clone();
    let disclosure = opening.disclose(&ranges).expect("same ranges fit the same length");
    DirectionProof { commitment, disclosure, record_keys: old.record_keys.clone() }
}

/// Changes a disclosed byte of `plaintext`: a digit becomes another digit,
/// "hold"/"sell" swap, or a random byte changes.
fn tamper_plaintext(plain: &mut [u8], known: &[bool], rng: &mut ChaCha20Rng) -> bool {
    let positions: Vec<usize> = (0..plain.len()).filter(|&i| known[i]).collect();
    if positions.is_empty() {
        return false;
    }
    match rng.gen_range(0..3) {
        0 => {
            let digits: Vec<usize> = positions.iter().copied().filter(|&i| plain[i].is_ascii_digit()).collect();
            if let Some(&i) = digits.choose(rng) {
                plain[i] = b'0' + (plain[i] - b'0' + rng.gen_range(1..10)) % 10;
                return true;
            }
        }
        1 => {
            for (from, to) in [(&b"hold"[..], &b"sell"[..]), (b"sell", b"hold"), (b"buy\\", b"sel\\")] {
                if let Some(p) = plain.windows(4).position(|w| w == from) {
                    if (p..p + 4).all(|i| known[i]) {
                        plain[p..p + 4].copy_from_slice(to);
                        return true;
                    }
                }
            }
        }
        _ => {}
    }
    let &i = positions.choose(rng).unwrap();
    plain[i] = plain[i].wrapping_add(rng.gen_range(1..=255));
    true
}

/// If the core response of the final step now parses to a different
/// output, make the trace and the claim follow it, as a forger would.
fn follow_core_output(case: &mut Case, proof_index: usize) {
    let loc = case.bundle.proofs[proof_index].locator;
    if loc.position != vet_core::composer::Position::Core {
        return;
    }
    let ProofPayload::WebProof(w) = &case.bundle.proofs[proof_index].payload else { return };
    let response: Option<Vec<u8>> = view(&w.response).into_iter().collect();
    let Some(response) = response else { return };
    if let Ok(out) = demo::core_parsing().parse_core(&response) {
        let step = &mut case.bundle.trace.steps[loc.step];
        if step.core_output != out.output {
            step.core_output = out.output.clone();
            if loc.step + 1 == case.bundle.trace.steps.len() {
                case.m = out.output;
            }
        }
    }
}

fn ciphertext_mutation(case: &mut Case, rng: &mut ChaCha20Rng) {
    let idx = *webproof_indices(&case.bundle).choose(rng).expect("every bundle has a core web proof");
    let w = webproof_mut(&mut case.bundle, idx);
    match rng.gen_range(0..5) {
        0 => {
            let r = w.statement.statement.records.choose_mut(rng).unwrap();
            flip(&mut r.ciphertext_hash.0, rng);
        }
        1 | 2 => {
            let d = if rng.gen_bool(0.5) { &mut w.response } else { &mut w.request };
            match d.disclosure.chunks.choose_mut(rng) {
                Some(c) if !c.bytes.is_empty() => flip(&mut c.bytes, rng),
                _ => flip(&mut w.response.disclosure.chunks[0].bytes, rng),
            }
        }
        3 => {
            let d = if rng.gen_bool(0.5) { &mut w.response } else { &mut w.request };
            let k = d.record_keys.choose_mut(rng).unwrap();
            flip(&mut k.key, rng);
        }
        _ => {
            let d = if rng.gen_bool(0.5) { &mut w.response } else { &mut w.request };
            flip(&mut d.commitment.root.0, rng);
        }
    }
    follow_core_output(case, idx);
}

fn plaintext_recommit(case: &mut Case, rng: &mut ChaCha20Rng) {
    let idx = *webproof_indices(&case.bundle).choose(rng).unwrap();
    let w = webproof_mut(&mut case.bundle, idx);
    let response = rng.gen_bool(0.7);
    let d = if response { &w.response } else { &w.request };
    let v = view(d);
    let known: Vec<bool> = v.iter().map(Option::is_some).collect();
    let mut plain: Vec<u8> = v.iter().map(|b| b.unwrap_or(0)).collect();
    assert!(tamper_plaintext(&mut plain, &known, rng), "disclosed directions are never empty");
    // The statement keeps the notarized ciphertext hashes: the forger
    // cannot re-sign them.
    let forged = recommit(d, &plain, rng);
    if response {
        w.response = forged;
    } else {
        w.request = forged;
    }
    follow_core_output(case, idx);
}

fn record_splice(case: &mut Case, donor: &Case, rng: &mut ChaCha20Rng) {
    let idx = *webproof_indices(&case.bundle).choose(rng).unwrap();
    let donor_proofs: Vec<WebProof> = donor
        .bundle
        .proofs
        .iter()
        .filter_map(|p| match &p.payload {
            ProofPayload::WebProof(w) => Some(w.clone()),
            _ => None,
        })
        .collect();
    let other = donor_proofs.choose(rng).unwrap();
    let w = webproof_mut(&mut case.bundle, idx);
    assert_ne!(w.statement, other.statement);
    match rng.gen_range(0..5) {
        0 => w.response = other.response.clone(),
        1 => w.request = other.request.clone(),
        2 => {
            // Downstream records of the other session under this signature.
            let s = &mut w.statement.statement;
            s.records.retain(|r| r.direction == Direction::Up);
            s.records.extend(other.statement.statement.records.iter().filter(|r| r.direction == Direction::Down).cloned());
            w.response = other.response.clone();
        }
        3 => {
            // This session's disclosures under the other session's statement.
            w.statement = other.statement.clone();
        }
        _ => {
            // One record key and its chunk bytes from the other session.
            w.response.record_keys = other.response.record_keys.clone();
            w.response.disclosure = other.response.disclosure.clone();
        }
    }
    follow_core_output(case, idx);
}

fn trace_mutation(case: &mut Case, rng: &mut ChaCha20Rng) {
    let before = case.bundle.trace.clone();
    let t = &mut case.bundle.trace;
    let n = t.steps.len();
    let s = rng.gen_range(0..n);
    let mutate = |text: &mut String, rng: &mut ChaCha20Rng| {
        if text.is_empty() || rng.gen_bool(0.3) {
            text.push(char::from(b'a' + rng.gen_range(0..26)));
        } else {
            let mut b = std::mem::take(text).into_bytes();
            let i = rng.gen_range(0..b.len());
            b[i] = if b[i].is_ascii_alphanumeric() {
                if b[i] == b'x' {
                    b'y'
                } else {
                    b'x'
                }
            } else {
                b'z'
            };
            *text = String::from_utf8_lossy(&b).into_owned();
        }
    };
    let calls: Vec<usize> = (0..n).filter(|&i| !t.steps[i].tool_calls.is_empty()).collect();
    match rng.gen_range(0..10) {
        0 => mutate(&mut t.initial_input, rng),
        1 => {
            mutate(&mut t.steps[s].core_output, rng);
            if s + 1 == n {
                case.m = t.steps[s].core_output.clone();
            }
        }
        2 if !calls.is_empty() => {
            let st = &mut t.steps[*calls.choose(rng).unwrap()];
            let k = rng.gen_range(0..st.tool_calls.len());
            mutate(&mut st.tool_calls[k].input, rng);
        }
        3 if !calls.is_empty() => {
            let st = &mut t.steps[*calls.choose(rng).unwrap()];
            let k = rng.gen_range(0..st.tool_calls.len());
            mutate(&mut st.tool_calls[k].result, rng);
        }
        4 if !calls.is_empty() => {
            let st = &mut t.steps[*calls.choose(rng).unwrap()];
            let k = rng.gen_range(0..st.tool_calls.len());
            mutate(&mut st.tool_calls[k].tool, rng);
        }
        5 => t.steps[s].step_index += rng.gen_range(1..4),
        6 => t.truncated = !t.truncated,
        7 if n > 1 => {
            t.steps.remove(rng.gen_range(0..n - 1));
        }
        8 if !calls.is_empty() => {
            let st = &mut t.steps[*calls.choose(rng).unwrap()];
            if st.tool_calls.len() > 1 && st.tool_calls[0] != st.tool_calls[1] {
                st.tool_calls.swap(0, 1);
            } else {
                st.tool_calls.pop();
            }
        }
        _ => {
            let dup = t.steps[s].clone();
            t.steps.insert(s, dup);
        }
    }
    if case.bundle.trace == before {
        case.bundle.trace.initial_input.push('!');
    }
}

/// The exchange a payload authenticates at `locator`, if it authenticates.
fn exchange(case: &Case, locator: vet_core::composer::Locator, payload: &ProofPayload) -> Option<vet_core::verdict::Authenticated> {
    let verifier = instantiate_verifier(&case.aid, &case.trust).ok()?;
    let checker = match locator.position {
        Position::Core => &verifier.core,
        Position::Tool(k) => verifier.tools.get(&case.bundle.trace.steps.get(locator.step)?.tool_calls.get(k)?.tool)?,
    };
    checker.authenticate(payload).ok()
}

/// Replaces one proof with a proof of a different exchange. A proof of a
/// byte-identical exchange (same tool, input and response) is not a
/// forgery, so such candidates are skipped.
fn proof_substitution(case: &mut Case, donors: &[&Case], rng: &mut ChaCha20Rng) {
    let i = rng.gen_range(0..case.bundle.proofs.len());
    let locator = case.bundle.proofs[i].locator;
    let original = exchange(case, locator, &case.bundle.proofs[i].payload).expect("honest proofs authenticate");
    loop {
        let replacement = if rng.gen_bool(0.4) && case.bundle.proofs.len() > 1 {
            let j = rng.gen_range(0..case.bundle.proofs.len());
            case.bundle.proofs[j].payload.clone()
        } else {
            let donor = donors.choose(rng).unwrap();
            let same: Vec<_> = donor.bundle.proofs.iter().filter(|p| p.locator == locator).collect();
            match same.choose(rng) {
                Some(p) if rng.gen_bool(0.7) => p.payload.clone(),
                _ => donor.bundle.proofs.choose(rng).unwrap().payload.clone(),
            }
        };
        if exchange(case, locator, &replacement).as_ref() != Some(&original) {
            case.bundle.proofs[i].payload = replacement;
            return;
        }
    }
}

/// Verifies the bundle against a document that differs in a component the
/// trace exercises. Documents differing only in components the trace never
/// uses accept the same traces, so they are not substitutions.
fn aid_substitution(case: &mut Case, rng: &mut ChaCha20Rng) {
    let mut aid = case.aid.clone();
    if rng.gen_range(0..8) == 0 {
        // Claim a different identity without touching the document.
        case.bundle.aid_id = compute_id(&AgentIdentityDocument { agent_name: format!("{}-impostor", aid.agent_name), ..aid.clone() }).unwrap();
        return;
    }
    let used: BTreeSet<String> = case.bundle.trace.steps.iter().flat_map(|s| s.tool_calls.iter().map(|c| c.tool.clone())).collect();
    let keys = Keys::derived();
    let other_key = format_public_key(&fresh_key(rng).verifying_key());
    let notary = |key: String| Verification::TlsNotary { protocol_version: vet_core::webproof::PROTOCOL_VERSION.into(), notary_public_key: key };
    let tee = |key: String| Verification::ProxyTee { tee_type: demo::TEE_TYPE.into(), enclave_public_key: key };
    // None is the core, Some(i) the i-th tool.
    let mut targets: Vec<Option<usize>> = vec![None];
    targets.extend((0..aid.tools.len()).filter(|&i| used.contains(aid.tools[i].name.as_deref().unwrap_or_default())).map(Some));
    let target = *targets.choose(rng).unwrap();
    let op = if target.is_none() { rng.gen_range(0..2) } else { rng.gen_range(0..5) };
    let entry = match target {
        None => &mut aid.core,
        Some(i) => &mut aid.tools[i],
    };
    match op {
        0 => {
            entry.verification = match entry.verification {
                Verification::TlsNotary { .. } => notary(other_key),
                _ => tee(other_key),
            }
        }
        1 => {
            entry.verification = match entry.verification {
                Verification::ProxyTee { .. } => notary(format_public_key(&keys.notary.verifying_key())),
                _ => tee(format_public_key(&keys.enclave.verifying_key())),
            }
        }
        2 => {
            let i = target.unwrap();
            let others: Vec<usize> = (0..aid.tools.len()).filter(|&j| j != i).collect();
            let j = *others.choose(rng).unwrap();
            let name = aid.tools[i].name.clone();
            aid.tools[i] = vet_core::aid::ComponentEntry { name, ..aid.tools[j].clone() };
        }
        3 => {
            aid.tools.remove(target.unwrap());
        }
        _ => {
            let t = &mut aid.tools[target.unwrap()];
            t.name = Some(format!("{}V2", t.name.clone().unwrap()));
        }
    }
    if rng.gen_bool(0.8) {
        case.bundle.aid_id = compute_id(&aid).unwrap();
    }
    case.aid = aid;
}

fn notary_key_substitution(case: &mut Case, corpus: &Corpus, rng: &mut ChaCha20Rng) {
    if rng.gen_bool(0.5) {
        // A whole bundle notarized by a notary the document does not name.
        let rogue = corpus.rogue_notary.choose(rng).unwrap();
        case.bundle = rogue.bundle.clone();
        case.m = rogue.m.clone();
        return;
    }
    // Tamper with a response, re-encrypt it under the revealed record keys
    // and re-sign the statement with the forger's own key.
    let forger = fresh_key(rng);
    let idx = *webproof_indices(&case.bundle).choose(rng).unwrap();
    let w = webproof_mut(&mut case.bundle, idx);
    let v = view(&w.response);
    let known: Vec<bool> = v.iter().map(Option::is_some).collect();
    let mut plain: Vec<u8> = v.iter().map(|b| b.unwrap_or(0)).collect();
    tamper_plaintext(&mut plain, &known, rng);
    w.response = recommit(&w.response, &plain, rng);
    let mut st = w.statement.statement.clone();
    let mut offset = 0usize;
    for r in st.records.iter_mut().filter(|r| r.direction == Direction::Down) {
        let len = r.length as usize;
        if let Some(k) = w.response.record_keys.iter().find(|k| k.index == r.index) {
            r.ciphertext_hash.0 = record_hash(&seal_record(&k.key, Direction::Down, r.index, &plain[offset..offset + len]));
        }
        offset += len;
    }
    if rng.gen_bool(0.5) {
        st.notary_key = format_public_key(&forger.verifying_key());
    }
    w.statement = SignedStatement::sign(st, &forger);
    follow_core_output(case, idx);
}

/// One forged case of class `kind`, built from a random honest case.
pub fn forge(kind: Forgery, corpus: &Corpus, rng: &mut ChaCha20Rng) -> Case {
    let i = rng.gen_range(0..corpus.honest.len());
    let mut case = corpus.honest[i].clone();
    let donors: Vec<&Case> = corpus.honest.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c).collect();
    match kind {
        Forgery::CiphertextMutation => ciphertext_mutation(&mut case, rng),
        Forgery::PlaintextRecommit => plaintext_recommit(&mut case, rng),
        Forgery::RecordSplice => record_splice(&mut case, donors.choose(rng).unwrap(), rng),
        Forgery::TraceMutation => trace_mutation(&mut case, rng),
        Forgery::ProofSubstitution => proof_substitution(&mut case, &donors, rng),
        Forgery::AidSubstitution => aid_substitution(&mut case, rng),
        Forgery::NotaryKeySubstitution => notary_key_substitution(&mut case, corpus, rng),
    }
    case
}
