use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

fn vet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vet")).args(args).env_remove("VET_KEY_DIR").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/aid").join(name)
}

fn demo(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["demo", "veritrade", "--out", p(dir)];
    args.extend_from_slice(extra);
    vet(&args)
}

fn verify(dir: &Path, claim: &str) -> Output {
    vet(&[
        "verify",
        "--aid",
        p(&dir.join("aid.json")),
        "--bundle",
        p(&dir.join("bundle.json")),
        "--templates",
        p(&dir.join("templates")),
        "--trust",
        p(&dir.join("trust.json")),
        "--claim",
        claim,
    ])
}

#[test]
fn demo_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = demo(dir.path(), &["--seed", "3", "--tick", "1"]);
    assert!(out.status.success(), "{}{}", stdout(&out), String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("verdict   accept"));
    for f in ["aid.json", "bundle.json", "trust.json", "decision.json", "templates"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let claim = format!("@{}", p(&dir.path().join("decision.json")));
    let ok = verify(dir.path(), &claim);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).starts_with("accept"));

    let bad = verify(dir.path(), "{\"action\":\"SELL\"}");
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("output-not-found"));
}

#[test]
fn verify_json_reports_reason_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(demo(dir.path(), &[]).status.success());
    let bundle = dir.path().join("bundle.json");
    let text = std::fs::read_to_string(&bundle).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let aid_id = v["aid_id"].as_str().unwrap();
    std::fs::write(&bundle, text.replace(aid_id, &format!("sha256:{}", "1".repeat(64)))).unwrap();
    let out = vet(&[
        "verify",
        "--json",
        "--aid",
        p(&dir.path().join("aid.json")),
        "--bundle",
        p(&bundle),
        "--templates",
        p(&dir.path().join("templates")),
        "--claim",
        "x",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["verdict"], "reject");
    assert_eq!(r["reason"], "aid-mismatch");
}

#[test]
fn inspect_with_and_without_the_document() {
    let dir = tempfile::tempdir().unwrap();
    assert!(demo(dir.path(), &[]).status.success());
    let bundle = dir.path().join("bundle.json");
    let plain = vet(&["inspect", "--bundle", p(&bundle)]);
    assert!(plain.status.success());
    let full = vet(&[
        "inspect",
        "--json",
        "--bundle",
        p(&bundle),
        "--aid",
        p(&dir.path().join("aid.json")),
        "--templates",
        p(&dir.path().join("templates")),
        "--trust",
        p(&dir.path().join("trust.json")),
    ]);
    assert!(full.status.success(), "{}", stdout(&full));
    let r: serde_json::Value = serde_json::from_slice(&full.stdout).unwrap();
    assert!(r["verdict"].as_str().unwrap().starts_with("accept"));
}

#[test]
fn aid_hash_matches_the_golden() {
    let out = vet(&["aid", "hash", p(&fixture("trading-bot.json"))]);
    assert!(out.status.success());
    let golden = std::fs::read_to_string(fixture("trading-bot.id")).unwrap();
    assert_eq!(stdout(&out).trim(), golden.trim());

    let canon = vet(&["aid", "canonical", p(&fixture("veritrade-excerpt.json"))]);
    assert_eq!(canon.stdout.strip_suffix(b"\n").unwrap(), std::fs::read(fixture("veritrade-excerpt.canonical")).unwrap());

    // Truncated keys in the printed example fail validation.
    let val = vet(&["aid", "validate", p(&fixture("trading-bot.json"))]);
    assert_eq!(val.status.code(), Some(1));
}

#[test]
fn bench_channels_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ch.csv");
    let out = vet(&["bench", "channels", "--rounds", "6", "--csv", p(&csv)]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("max feasible rounds"));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 1 + 2 * 6, "{text}");
    assert!(rows[0].contains("strategy"));
}

#[test]
fn keygen_writes_loadable_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = vet(&["keygen", "--out", p(dir.path()), "notary", "enclave"]);
    assert!(out.status.success());
    let listed = stdout(&out);
    assert_eq!(listed.lines().count(), 2);
    let key = std::fs::read_to_string(dir.path().join("notary.key")).unwrap();
    assert_eq!(key.trim().len(), 64);
    assert!(listed.lines().next().unwrap().starts_with("notary ed25519:"));
}

#[test]
fn unreadable_inputs_exit_two() {
    assert_eq!(vet(&["aid", "hash", "/nonexistent/aid.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"agent_name\": 5}").unwrap();
    assert_eq!(vet(&["aid", "hash", p(&bad)]).status.code(), Some(2));
    assert_eq!(vet(&["inspect", "--bundle", p(&bad)]).status.code(), Some(2));
}

struct Service(Child);

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_addr() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

fn serve(args: &[&str], addr: &str) -> Service {
    let child = Command::new(env!("CARGO_BIN_EXE_vet"))
        .args(args)
        .args(["--listen", addr])
        .env_remove("VET_KEY_DIR")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let service = Service(child);
    let deadline = Instant::now() + Duration::from_secs(20);
    while TcpStream::connect(addr).is_err() {
        assert!(Instant::now() < deadline, "{args:?} did not start on {addr}");
        sleep(Duration::from_millis(50));
    }
    service
}

#[test]
fn networked_demo_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("ledger.jsonl");
    let llm = free_addr();
    let prices = free_addr();
    let sentiment = free_addr();
    let notary_addr = free_addr();
    let proxy_addr = free_addr();
    let _m1 = serve(&["mock", "serve", "--kind", "llm", "--seed", "0"], &llm);
    let _m2 = serve(&["mock", "serve", "--kind", "price_feed", "--seed", "0"], &prices);
    let _m3 = serve(&["mock", "serve", "--kind", "sentiment", "--seed", "0"], &sentiment);
    let _n = serve(&["notary", "serve", "--ledger", p(&ledger)], &notary_addr);
    let price_route = format!("prices.mock={prices}");
    let sentiment_route = format!("sentiment.mock={sentiment}");
    let _x = serve(&["proxy", "serve", "--route", &price_route, "--route", &sentiment_route], &proxy_addr);

    let llm_route = format!("llm.mock={llm}");
    let out_dir = dir.path().join("out");
    let out = demo(&out_dir, &["--notary", &notary_addr, "--proxy", &proxy_addr, "--route", &llm_route]);
    assert!(out.status.success(), "{}{}", stdout(&out), String::from_utf8_lossy(&out.stderr));
    let claim = format!("@{}", p(&out_dir.join("decision.json")));
    assert_eq!(verify(&out_dir, &claim).status.code(), Some(0));

    let lines = std::fs::read_to_string(&ledger).unwrap();
    assert!(lines.lines().any(|l| l.contains("\"finalized\"")), "{lines}");
}
