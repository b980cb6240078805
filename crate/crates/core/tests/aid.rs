use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;

use vet_core::aid::{canonicalize, compute_id, instantiate_verifier, parse_aid, validate, AgentIdentityDocument, AidError, InstantiateError};
use vet_core::demo::{registry, trust_store, veritrade_aid, Keys};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/aid").join(name)
}

fn load(name: &str) -> AgentIdentityDocument {
    parse_aid(&fs::read(fixture(&format!("{name}.json"))).unwrap()).unwrap()
}

#[test]
fn fixture_goldens() {
    for name in ["trading-bot", "veritrade-excerpt"] {
        let aid = load(name);
        let golden = fs::read(fixture(&format!("{name}.canonical"))).unwrap();
        let id = fs::read_to_string(fixture(&format!("{name}.id"))).unwrap();
        assert_eq!(canonicalize(&aid).unwrap(), golden, "{name}");
        assert_eq!(compute_id(&aid).unwrap(), id.trim(), "{name}");
    }
}

#[test]
fn agent_hash_is_excluded_and_checked() {
    let aid = load("trading-bot");
    let without = AgentIdentityDocument { agent_hash: None, ..aid.clone() };
    assert_eq!(compute_id(&aid).unwrap(), compute_id(&without).unwrap());
    let hashed = without.with_hash().unwrap();
    assert!(!validate(&hashed, None).iter().any(|v| v.path == "/agent_hash"));
    // The printed hash is truncated, so it cannot match.
    assert!(validate(&aid, None).iter().any(|v| v.path == "/agent_hash"));
}

#[test]
fn key_order_and_whitespace_do_not_matter() {
    let text = fs::read_to_string(fixture("veritrade-excerpt.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let compact = serde_json::to_vec(&value).unwrap();
    assert_eq!(compute_id(&parse_aid(&compact).unwrap()).unwrap(), compute_id(&load("veritrade-excerpt")).unwrap());
}

#[test]
fn numbers_and_unknown_fields_are_rejected() {
    let text = fs::read_to_string(fixture("trading-bot.json")).unwrap();
    let numeric = text.replace("\"committee_size\": \"7\"", "\"committee_size\": 7");
    assert!(matches!(parse_aid(numeric.as_bytes()), Err(AidError::Parse(m)) if m.contains("number")));
    let extra = text.replacen("\"agent_name\"", "\"colour\": \"red\", \"agent_name\"", 1);
    assert!(parse_aid(extra.as_bytes()).is_err());
}

#[test]
fn structural_violations_block_hashing() {
    let mut aid = load("veritrade-excerpt");
    aid.tools.push(aid.tools[0].clone());
    assert!(matches!(compute_id(&aid), Err(AidError::Invalid(v)) if v.iter().any(|x| x.message.contains("duplicate"))));
    let mut aid = load("veritrade-excerpt");
    aid.core.model = None;
    assert!(compute_id(&aid).is_err());
}

#[test]
fn printed_fixtures_validate_only_structurally() {
    // The printed documents carry truncated keys and uids: they hash, but
    // a verifier cannot be built from them.
    let v = validate(&load("trading-bot"), None);
    assert!(v.iter().any(|x| x.path == "/core/injection_algorithm_uid"));
    assert!(v.iter().any(|x| x.path == "/core/verification/TLSNotary/notary_public_key"));
    let trust = trust_store(&Keys::derived());
    assert!(matches!(instantiate_verifier(&load("trading-bot"), &trust), Err(InstantiateError::Invalid(_))));
}

#[test]
fn demo_document_instantiates() {
    let keys = Keys::derived();
    let aid = veritrade_aid(&keys);
    assert!(validate(&aid, Some(&registry())).is_empty());
    let v = instantiate_verifier(&aid, &trust_store(&keys)).unwrap();
    assert_eq!(v.checker_count(), 3);
    assert_eq!(v.aid_id, compute_id(&aid).unwrap());
}

#[test]
fn consensus_is_named_but_not_verifiable() {
    let keys = Keys::derived();
    let mut aid = veritrade_aid(&keys);
    aid.tools[0].verification = load("trading-bot").tools[0].verification.clone();
    assert!(
        matches!(instantiate_verifier(&aid, &trust_store(&keys)), Err(InstantiateError::UnsupportedScheme { scheme, .. }) if scheme == "Consensus")
    );
}

#[test]
fn unregistered_templates_are_reported() {
    let keys = Keys::derived();
    let mut trust = trust_store(&keys);
    trust.registry = vet_core::template::TemplateRegistry::new();
    assert!(instantiate_verifier(&veritrade_aid(&keys), &trust).is_err());
    let v = validate(&veritrade_aid(&keys), Some(&trust.registry));
    assert!(v.iter().any(|x| x.message.contains("not registered")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn any_agent_name_change_changes_the_id(name in "[A-Za-z0-9 _-]{1,24}") {
        let aid = veritrade_aid(&Keys::derived());
        let renamed = AgentIdentityDocument { agent_name: name.clone(), ..aid.clone() };
        prop_assert_eq!(compute_id(&renamed).unwrap() == compute_id(&aid).unwrap(), name == aid.agent_name);
    }

    #[test]
    fn canonical_bytes_round_trip(endpoint_path in "/[a-z]{1,12}") {
        let mut aid = veritrade_aid(&Keys::derived());
        aid.tools[0].endpoint = format!("https://prices.mock{endpoint_path}");
        let bytes = canonicalize(&aid).unwrap();
        let back = parse_aid(&bytes).unwrap();
        prop_assert_eq!(canonicalize(&back).unwrap(), bytes);
    }
}
