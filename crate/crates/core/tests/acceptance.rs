//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines print in
//! order and unbuffered.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde_json::Value;

use common::{random_case, veritrade_case, Corpus, Forgery};
use vet_core::aid::{canonicalize, compute_id, parse_aid};
use vet_core::commitment::{commit, verify_disclosure, ByteRange};
use vet_core::demo::{compare_first_round, run_veritrade, World, WorldOptions};
use vet_core::notary::CapacityProfile;
use vet_core::sim::{self, CostModel, SessionWorkload, Strategy, CALIBRATED_UNIT};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol * target.abs()
}

fn completeness() -> Outcome {
    let start = Instant::now();
    let mut accepted = 0;
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        let case = if seed < 60 { veritrade_case(seed, seed % 5) } else { random_case(seed) };
        if case.accepted() {
            accepted += 1;
        } else {
            failures.push(format!("seed {seed}: {:?}", case.rejection()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = accepted == 100 && secs < 60.0;
    outcome(
        pass,
        format!(
            "{accepted}/100 honest runs accepted in {secs:.1} s (limit 60 s){}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

fn soundness() -> Outcome {
    const PER_CLASS: usize = 1500;
    let corpus = Corpus::build(12, 8, 4);
    let mut rng = ChaCha20Rng::seed_from_u64(0x500D_AE55);
    let mut total = 0;
    let mut accepted = 0;
    let mut lines = Vec::new();
    for kind in Forgery::ALL {
        let mut acc = 0;
        let mut reasons = BTreeSet::new();
        for _ in 0..PER_CLASS {
            let case = common::forge(kind, &corpus, &mut rng);
            match case.rejection() {
                None => acc += 1,
                Some(code) => {
                    reasons.insert(code);
                }
            }
        }
        total += PER_CLASS;
        accepted += acc;
        lines.push(format!("{}: {acc} accepted [{}]", kind.label(), reasons.into_iter().collect::<Vec<_>>().join(" ")));
    }
    outcome(accepted == 0 && total >= 10_000, format!("{accepted} of {total} forgeries accepted\n      {}", lines.join("\n      ")))
}

/// Every window of `len` bytes of `secret`, raw and hex-encoded.
fn windows(secret: &str, len: usize) -> Vec<Vec<u8>> {
    let b = secret.as_bytes();
    b.windows(len).flat_map(|w| [w.to_vec(), hex::encode(w).into_bytes()]).collect()
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

fn privacy() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5EC2E7);
    let charset: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
    let mut leaks = Vec::new();
    let mut tapped = 0usize;
    for i in 0..100u64 {
        let len = rng.gen_range(20..=64);
        let secret: String = (0..len).map(|_| *charset.choose(&mut rng).unwrap() as char).collect();
        let opts = WorldOptions { api_key: secret.clone(), ..WorldOptions::new(i) };
        let mut world = World::new(opts);
        let tap = world.tap_notary();
        let run = match run_veritrade(&world, i % 4) {
            Ok(r) => r,
            Err(e) => {
                leaks.push(format!("run {i} failed: {e}"));
                continue;
            }
        };
        let bundle = run.bundle.to_canonical_json();
        let observed = tap.lock().unwrap().clone();
        tapped += observed.len();
        for w in windows(&secret, 16) {
            if contains(&bundle, &w) {
                leaks.push(format!("run {i}: bundle"));
                break;
            }
            if contains(&observed, &w) {
                leaks.push(format!("run {i}: notary stream"));
                break;
            }
        }
    }
    outcome(
        leaks.is_empty() && tapped > 0,
        format!(
            "100 secrets, {} leaks; notary observed {tapped} bytes in total{}",
            leaks.len(),
            if leaks.is_empty() { String::new() } else { format!(": {}", leaks.join(", ")) }
        ),
    )
}

fn channel_scaling() -> Outcome {
    let start = Instant::now();
    let m = CostModel::calibrated();
    let cap = CapacityProfile::SELF_HOSTED;
    let w6 = SessionWorkload::reference(6);
    let run = |s| sim::simulate(&sim::plan_channels(&w6, s, CALIBRATED_UNIT).unwrap(), &m);
    let naive = run(Strategy::Naive);
    let opt = run(Strategy::Optimized);
    let base = SessionWorkload::reference(1);
    let naive_max = sim::max_feasible_rounds(&base, Strategy::Naive, CALIBRATED_UNIT, cap, 200);
    let opt_max = sim::max_feasible_rounds(&base, Strategy::Optimized, CALIBRATED_UNIT, cap, 200);
    let ratio = opt.rounds[0].latency / m.direct_latency();
    let secs = start.elapsed().as_secs_f64();
    // (label, value, target, role) where role says whether the value was
    // a calibration input or a prediction of the fitted model.
    let checks = [
        ("naive 6-round setup", naive.setup_total, 9.8, "fitted"),
        ("optimized setup", opt.setup_total, 1.5, "fitted"),
        ("optimized short-horizon mean", opt.mean_latency(6), 2.5, "predicted"),
        ("naive short-horizon mean", naive.mean_latency(6), 2.1, "fitted"),
        ("first-round notarized/direct", ratio, 2460.0 / 1800.0, "fitted"),
    ];
    let mut pass = naive_max == 6 && opt_max >= 32 && secs < 5.0;
    let mut lines = Vec::new();
    for (label, v, t, role) in checks {
        let ok = within(v, t, 0.20);
        pass &= ok;
        lines.push(format!("{label}: {v:.3} vs {t:.3} ({:+.1}%, {role}) {}", 100.0 * (v - t) / t, if ok { "ok" } else { "OUT OF BAND" }));
    }
    lines.push(format!("feasible rounds under 64 KiB: naive {naive_max} (want 6), optimized {opt_max} (want >= 32); predicted"));
    lines.push(format!("simulator time {secs:.3} s (limit 5 s)"));
    outcome(pass, lines.join("\n      "))
}

fn overhead_ordering() -> Outcome {
    let m = CostModel::calibrated();
    let mut pass = true;
    let mut worst = (f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..20u64 {
        let fr = match compare_first_round(seed, &m) {
            Ok(fr) => fr,
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        };
        let o = fr.proxy_overhead();
        worst = (worst.0.min(o), worst.1.max(o));
        pass &= fr.direct < fr.proxy && fr.proxy < fr.webproof;
        pass &= (0.01 - 0.05..=0.20 + 0.05).contains(&o);
    }
    let fr = compare_first_round(0, &m).expect("seed 0 ran above");
    outcome(
        pass,
        format!(
            "20 modeled runs; seed 0: direct {:.3} s < proxy {:.3} s < web proof {:.3} s; proxy overhead {:.1}%..{:.1}% (band 1-20% +/- 5 pp)",
            fr.direct,
            fr.proxy,
            fr.webproof,
            100.0 * worst.0,
            100.0 * worst.1
        ),
    )
}

/// Every path to a string leaf.
fn string_paths(v: &Value, path: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    match v {
        Value::String(_) => out.push(path.clone()),
        Value::Object(map) => {
            for (k, child) in map {
                path.push(k.clone());
                string_paths(child, path, out);
                path.pop();
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                path.push(i.to_string());
                string_paths(child, path, out);
                path.pop();
            }
        }
        _ => {}
    }
}

fn leaf_mut<'a>(v: &'a mut Value, path: &[String]) -> &'a mut Value {
    path.iter().fold(v, |node, key| match node {
        Value::Object(map) => map.get_mut(key).unwrap(),
        Value::Array(items) => &mut items[key.parse::<usize>().unwrap()],
        _ => unreachable!("paths lead through containers"),
    })
}

fn aid_goldens() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/aid");
    let mut lines = Vec::new();
    let mut pass = true;
    let mut rng = ChaCha20Rng::seed_from_u64(0xA1D);
    let mut flips = 0;
    let mut trials = 0;
    for name in ["trading-bot", "veritrade-excerpt"] {
        let text = fs::read(dir.join(format!("{name}.json"))).unwrap();
        let golden_bytes = fs::read(dir.join(format!("{name}.canonical"))).unwrap();
        let golden_id = fs::read_to_string(dir.join(format!("{name}.id"))).unwrap().trim().to_string();
        let aid = parse_aid(&text).unwrap();
        let bytes_ok = canonicalize(&aid).unwrap() == golden_bytes;
        let id = compute_id(&aid).unwrap();
        let id_ok = id == golden_id;
        pass &= bytes_ok && id_ok;
        lines.push(format!("{name}: bytes {}, id {}", if bytes_ok { "match" } else { "DIFFER" }, if id_ok { "match" } else { "DIFFERS" }));

        let value: Value = serde_json::from_slice(&text).unwrap();
        let mut paths = Vec::new();
        string_paths(&value, &mut Vec::new(), &mut paths);
        paths.retain(|p| p.first().map(String::as_str) != Some("agent_hash"));
        for _ in 0..5000 {
            let mut v = value.clone();
            let path = paths.choose(&mut rng).unwrap();
            let Value::String(s) = leaf_mut(&mut v, path) else { unreachable!() };
            let mut chars: Vec<char> = s.chars().collect();
            match rng.gen_range(0..3) {
                0 if !chars.is_empty() => {
                    let i = rng.gen_range(0..chars.len());
                    chars[i] = if chars[i] == 'q' { 'r' } else { 'q' };
                }
                1 if !chars.is_empty() => {
                    chars.remove(rng.gen_range(0..chars.len()));
                }
                _ => chars.insert(rng.gen_range(0..=chars.len()), 'z'),
            }
            *s = chars.into_iter().collect();
            let mutated = parse_aid(&serde_json::to_vec(&v).unwrap()).unwrap();
            trials += 1;
            // Emptying a required name makes the document invalid, which also
            // changes (removes) its id.
            if compute_id(&mutated).map_or(true, |m| m != id) {
                flips += 1;
            }
        }
    }
    pass &= flips == trials && trials >= 10_000;
    lines.push(format!("{flips}/{trials} single-field mutations changed the id"));
    outcome(pass, lines.join("\n      "))
}

fn commitment_properties() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0xC0_11_17);
    let mut forged = 0;
    let mut leaks = 0;
    let mut cover_errors = 0;
    for t in 0..10_000 {
        let len = rng.gen_range(1..400usize);
        let cs = rng.gen_range(1..40u64);
        let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let nr = rng.gen_range(1..4);
        let ranges: Vec<ByteRange> = (0..nr)
            .map(|_| {
                let a = rng.gen_range(0..len as u64);
                ByteRange::new(a, rng.gen_range(1..=(len as u64 - a).min(60)))
            })
            .collect();
        let (c, opening) = commit(&data, cs, &mut rng);
        let d = opening.disclose(&ranges).unwrap();

        // Minimality against a byte-by-byte cover oracle.
        let mut oracle = BTreeSet::new();
        for byte in 0..len as u64 {
            if ranges.iter().any(|r| r.offset <= byte && byte < r.end()) {
                oracle.insert(byte / cs);
            }
        }
        let got: BTreeSet<u64> = d.chunks.iter().map(|ch| ch.index).collect();
        if got != oracle {
            cover_errors += 1;
        }

        // Hiding: bytes of chunks outside the cover appear nowhere.
        let json = serde_json::to_vec(&d).unwrap();
        for i in 0..(len as u64).div_ceil(cs) {
            let s = (i * cs) as usize;
            let e = ((i + 1) * cs).min(len as u64) as usize;
            if !oracle.contains(&i) && e - s >= 8 && contains(&json, hex::encode(&data[s..e]).as_bytes()) {
                leaks += 1;
            }
        }

        // Binding: a tampered disclosure must not verify.
        let mut bad = d.clone();
        match t % 5 {
            0 => {
                let ch = bad.chunks.choose_mut(&mut rng).unwrap();
                let i = rng.gen_range(0..ch.bytes.len());
                ch.bytes[i] ^= 1 << rng.gen_range(0..8);
            }
            1 => {
                let ch = bad.chunks.choose_mut(&mut rng).unwrap();
                ch.salt[rng.gen_range(0..16)] ^= 1;
            }
            2 if !bad.proof.is_empty() => {
                let i = rng.gen_range(0..bad.proof.len());
                bad.proof[i].0[rng.gen_range(0..32)] ^= 1;
            }
            3 => {
                // Same chunk contents under another commitment's salts.
                let (_, other) = commit(&data, cs, &mut rng);
                bad = other.disclose(&ranges).unwrap();
            }
            _ => {
                let ch = bad.chunks.choose_mut(&mut rng).unwrap();
                ch.bytes = (0..ch.bytes.len()).map(|_| rng.gen()).collect();
                if ch.bytes == d.chunks.iter().find(|x| x.index == ch.index).unwrap().bytes {
                    ch.bytes[0] ^= 1;
                }
            }
        }
        if bad != d && verify_disclosure(&c, &bad).is_ok() {
            forged += 1;
        }
        if verify_disclosure(&c, &d).is_err() {
            forged += 1_000_000;
        }
    }
    outcome(
        forged == 0 && leaks == 0 && cover_errors == 0,
        format!("10000 trials: {forged} forged disclosures accepted, {leaks} hidden-chunk leaks, {cover_errors} covers differing from the brute-force oracle"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("completeness", completeness),
        ("soundness", soundness),
        ("privacy", privacy),
        ("channel scaling", channel_scaling),
        ("overhead ordering", overhead_ordering),
        ("identity goldens", aid_goldens),
        ("commitment properties", commitment_properties),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        failed += usize::from(!o.pass);
        println!("[{}] {}. {name} ({:.1} s): {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, start.elapsed().as_secs_f64(), o.detail);
    }
    println!(
        "[SUBSTITUTED] 8. absolute wall-clock latencies: not reproducible without live commercial APIs and real MPC-TLS; covered by 4 and 5 on the calibrated model. ZKML comparison: out of scope."
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
