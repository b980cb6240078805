//! Reason codes of the two component verifiers on honest demo proofs.

mod common;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use vet_core::aid::instantiate_verifier;
use vet_core::composer::{ComponentChecker, Locator, Position, ProofPayload};
use vet_core::demo::{core_injection, core_parsing, tool_templates};
use vet_core::mock;
use vet_core::proxy::{TeeChecker, TeeProof};
use vet_core::verdict::{RejectReason, Role};
use vet_core::webproof::{proof_bytes, WebProof, WebProofChecker};

use common::{fresh_key, veritrade_case, Case};

fn core_parts(case: &Case) -> (WebProofChecker, WebProof, String) {
    let v = instantiate_verifier(&case.aid, &case.trust).unwrap();
    let ComponentChecker::WebProof(checker) = v.core else { panic!("demo core is notarized") };
    let ProofPayload::WebProof(proof) = case.bundle.proof_at(Locator::core(0)).unwrap().payload.clone() else { panic!("core proof is a web proof") };
    (checker, proof, case.bundle.trace.steps[0].core_output.clone())
}

fn tool_parts(case: &Case) -> (TeeChecker, TeeProof, String, String) {
    let v = instantiate_verifier(&case.aid, &case.trust).unwrap();
    let p = case.bundle.proofs.iter().find(|p| matches!(p.locator.position, Position::Tool(_))).expect("demo calls a tool");
    let Position::Tool(k) = p.locator.position else { unreachable!() };
    let call = &case.bundle.trace.steps[p.locator.step].tool_calls[k];
    let ComponentChecker::Tee(checker) = v.tools[&call.tool].clone() else { panic!("demo tools are proxied") };
    let ProofPayload::TeeAttestation(proof) = p.payload.clone() else { panic!("tool proof is an attestation") };
    (checker, proof, call.input.clone(), call.result.clone())
}

fn reason<T>(r: Result<T, vet_core::verdict::Rejection>) -> RejectReason {
    match r {
        Ok(_) => panic!("expected a rejection"),
        Err(e) => e.reason,
    }
}

#[test]
fn honest_web_proof_verifies_in_its_role_only() {
    let case = veritrade_case(11, 0);
    let (c, p, out) = core_parts(&case);
    c.verify(&out, &p, Role::CoreOutput).unwrap();
    assert_eq!(reason(c.verify("HOLD", &p, Role::CoreOutput)), RejectReason::ValueMismatch);
    // The core's input is the transcript, not a value a claim can name.
    assert!(c.verify(&out, &p, Role::ToolInput).is_err());
}

#[test]
fn web_proof_reasons() {
    let case = veritrade_case(12, 0);
    let (c, p, out) = core_parts(&case);
    let mut rng = ChaCha20Rng::seed_from_u64(12);

    let mut q = p.clone();
    q.statement.statement.closed_at += 1;
    assert_eq!(reason(c.verify(&out, &q, Role::CoreOutput)), RejectReason::BadSignature);

    let other = WebProofChecker { notary_key: fresh_key(&mut rng).verifying_key(), ..c.clone() };
    assert_eq!(reason(other.verify(&out, &p, Role::CoreOutput)), RejectReason::BadSignature);

    let elsewhere = WebProofChecker { domain: mock::ECHO_HOST.into(), ..c.clone() };
    assert_eq!(reason(elsewhere.verify(&out, &p, Role::CoreOutput)), RejectReason::WrongDomain);

    let pinned = WebProofChecker { server_pin: Some("ed25519:00".into()), ..c.clone() };
    assert_eq!(reason(pinned.verify(&out, &p, Role::CoreOutput)), RejectReason::WrongDomain);

    let mut q = p.clone();
    q.response.record_keys[0].key[0] ^= 1;
    assert_eq!(reason(c.verify(&out, &q, Role::CoreOutput)), RejectReason::CipherMismatch);

    let mut q = p.clone();
    q.request.record_keys.clear();
    assert_eq!(reason(c.verify(&out, &q, Role::CoreOutput)), RejectReason::CipherMismatch);

    let (price_inject, price_parse) = tool_templates(mock::PRICE_TOOL).unwrap();
    let wrong_template = WebProofChecker { injection: price_inject, ..c.clone() };
    assert_eq!(reason(wrong_template.verify(&out, &p, Role::CoreOutput)), RejectReason::TemplateMismatch);

    let wrong_parser = WebProofChecker { parser: price_parse, ..c.clone() };
    assert_eq!(reason(wrong_parser.verify(&out, &p, Role::ToolResult)), RejectReason::ParseFailure);
    assert_eq!(c.parser, core_parsing());
}

#[test]
fn every_single_byte_change_to_a_web_proof_is_rejected() {
    let case = veritrade_case(13, 0);
    let (c, p, out) = core_parts(&case);
    let bytes = proof_bytes(&p);
    let mut parsed = 0;
    for i in 0..bytes.len() {
        let mut b = bytes.clone();
        b[i] ^= 1;
        let Ok(q) = serde_json::from_slice::<WebProof>(&b) else { continue };
        parsed += 1;
        assert!(q != p, "byte {i} changed the encoding but not the proof");
        assert!(c.verify(&out, &q, Role::CoreOutput).is_err(), "mutation at byte {i} accepted");
    }
    assert!(parsed > bytes.len() / 4, "only {parsed} of {} mutations parsed", bytes.len());
}

#[test]
fn attestation_reasons() {
    let case = veritrade_case(14, 0);
    let (c, p, input, result) = tool_parts(&case);
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    c.verify(&input, &p, Role::ToolInput).unwrap();
    c.verify(&result, &p, Role::ToolResult).unwrap();
    assert_eq!(reason(c.verify("ETH", &p, Role::ToolInput)), RejectReason::ValueMismatch);

    let other = TeeChecker { enclave_key: fresh_key(&mut rng).verifying_key(), ..c.clone() };
    assert_eq!(reason(other.authenticate(&p)), RejectReason::BadSignature);
    let other_type = TeeChecker { tee_type: "sim-sev".into(), ..c.clone() };
    assert_eq!(reason(other_type.authenticate(&p)), RejectReason::BadSignature);

    let strict = TeeChecker { measurements: Some(Default::default()), ..c.clone() };
    assert_eq!(reason(strict.authenticate(&p)), RejectReason::UntrustedMeasurement);

    let mut q = p.clone();
    let i = rng.gen_range(0..q.response.len());
    q.response[i] ^= 0x20;
    assert_eq!(reason(c.authenticate(&q)), RejectReason::HashMismatch);
    let mut q = p.clone();
    q.request.push(b' ');
    assert_eq!(reason(c.authenticate(&q)), RejectReason::HashMismatch);

    let mut q = p.clone();
    q.attestation.timestamp += 1;
    assert_eq!(reason(c.authenticate(&q)), RejectReason::BadSignature);

    let wrong = TeeChecker { injection: core_injection(), ..c.clone() };
    assert_eq!(reason(wrong.authenticate(&p)), RejectReason::TemplateMismatch);
}

#[test]
fn schemes_do_not_substitute_for_each_other() {
    let case = veritrade_case(15, 0);
    let v = instantiate_verifier(&case.aid, &case.trust).unwrap();
    let (_, tee, _, _) = tool_parts(&case);
    let err = v.core.authenticate(&ProofPayload::TeeAttestation(tee)).unwrap_err();
    assert_eq!(err.reason, RejectReason::UnsupportedComponent);
}
