use std::fs;
use std::sync::Arc;

use vet_core::crypto::derived_signing_key;
use vet_core::demo::{veritrade_aid, World, WorldOptions};
use vet_core::notary::{Ledger, Notary, NotaryConfig, NotaryError, SessionState};

fn notary_with(path: &std::path::Path, label: &str) -> Arc<Notary> {
    let mut n = Notary::new(derived_signing_key(label, 0), NotaryConfig::default());
    n.set_ledger(Ledger::with_file(path).unwrap());
    Arc::new(n)
}

#[test]
fn restart_resumes_session_numbering() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    let first: Vec<String> = {
        let n = notary_with(&path, "notary");
        (0..3).map(|_| n.open_session(1024, 1024).unwrap().0.id().to_string()).collect()
    };
    let n = notary_with(&path, "notary");
    assert_eq!(n.ledger().entries().count(), 3);
    assert!(n.ledger().entries().all(|e| e.state == SessionState::Aborted));
    let (s, _) = n.open_session(1024, 1024).unwrap();
    assert!(!first.contains(&s.id().to_string()));
    assert!(s.id().ends_with("-00000003"), "{}", s.id());

    // A different key sharing the file numbers its own sessions from zero.
    let other = notary_with(&path, "other-notary");
    let (t, _) = other.open_session(1024, 1024).unwrap();
    assert!(t.id().ends_with("-00000000"));
    assert_ne!(t.id().split('-').next(), s.id().split('-').next());
}

#[test]
fn ledger_lines_are_canonical_and_append_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    drop(notary_with(&path, "notary").open_session(512, 512).unwrap());
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "open then abort");
    for l in &lines {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["capacity"]["up"].is_string());
    }
    assert!(lines[0].contains("\"open\"") && lines[1].contains("\"aborted\""));
}

#[test]
fn corrupt_ledger_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    fs::write(&path, "{\"session_id\":\"x\"}\n").unwrap();
    let err = Ledger::with_file(&path).unwrap_err();
    assert_eq!(err.kind(), std::io::ErrorKind::InvalidData);
}

#[test]
fn session_limit_frees_on_drop() {
    let config = NotaryConfig { max_sessions: 2, ..NotaryConfig::default() };
    let n = Arc::new(Notary::new(derived_signing_key("notary", 0), config));
    let a = n.open_session(1, 1).unwrap();
    let _b = n.open_session(1, 1).unwrap();
    assert!(matches!(n.open_session(1, 1), Err(NotaryError::Busy(2))));
    drop(a);
    assert_eq!(n.active_sessions(), 1);
    n.open_session(1, 1).unwrap();
}

#[test]
fn honest_run_finalizes_every_notarized_session() {
    let world = World::new(WorldOptions::new(5));
    let bundle = world.prove(&veritrade_aid(&world.keys), &vet_core::demo::tick_prompt(5, 0), 4).unwrap();
    let ledger = world.notary.ledger();
    let signed: Vec<_> = ledger.entries().filter(|e| e.state == SessionState::Finalized).collect();
    assert_eq!(signed.len(), bundle.trace.steps.len());
    assert!(signed.iter().all(|e| e.statement_digest.is_some()));
    assert_eq!(world.notary.active_sessions(), 0);
}
