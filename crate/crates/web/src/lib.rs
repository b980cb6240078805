//! Browser bindings for three self-contained operations: channel
//! provisioning curves, commit-then-disclose on a transcript, and agent
//! identity hashing. Every export takes and returns strings; JSON results
//! are produced with `serde_json`.

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use vet_core::aid::{compute_id, parse_aid, validate};
use vet_core::commitment::{commit, normalize_ranges, verify_disclosure, ByteRange};
use vet_core::notary::CapacityProfile;
use vet_core::sim::{self, CostModel, SessionWorkload, Strategy};

#[derive(Serialize)]
struct Curve {
    strategy: &'static str,
    channels: usize,
    setup: f64,
    latencies: Vec<f64>,
    cumulative: Vec<f64>,
    feasible: bool,
    note: String,
}

#[derive(Serialize)]
struct Curves {
    rounds: u32,
    unit: u64,
    curves: Vec<Curve>,
}

/// Simulates naive and optimized provisioning for `rounds` rounds of the
/// reference workload under the calibrated cost model.
pub fn channels(rounds: u32, unit: u64) -> Result<String, String> {
    if rounds == 0 || rounds > 200 {
        return Err("rounds must be between 1 and 200".into());
    }
    let workload = SessionWorkload::reference(rounds);
    let model = CostModel::calibrated();
    let mut curves = Vec::new();
    for strategy in [Strategy::Naive, Strategy::Optimized] {
        let plan = sim::plan_channels(&workload, strategy, unit).map_err(|e| e.to_string())?;
        let check = plan.check_feasible(CapacityProfile::SELF_HOSTED);
        let r = sim::simulate(&plan, &model);
        curves.push(Curve {
            strategy: strategy.name(),
            channels: plan.channels.len(),
            setup: r.setup_total,
            latencies: r.latencies(),
            cumulative: r.rounds.iter().map(|x| x.cumulative).collect(),
            feasible: check.is_ok(),
            note: check.err().map(|e| e.to_string()).unwrap_or_default(),
        });
    }
    Ok(serde_json::to_string(&Curves { rounds, unit, curves }).expect("plain data serializes"))
}

#[derive(Serialize)]
struct DisclosureView {
    root: String,
    leaves: u64,
    revealed_chunks: Vec<u64>,
    proof_nodes: usize,
    /// What a verifier sees: bytes of revealed chunks, `*` elsewhere. Whole
    /// chunks are revealed, so this can exceed the requested ranges.
    view: String,
    verified: bool,
    disclosure_bytes: usize,
}

/// Parses `start-end` pairs separated by commas, end exclusive.
fn parse_ranges(spec: &str) -> Result<Vec<ByteRange>, String> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (a, b) = s.split_once('-').ok_or_else(|| format!("range {s:?} is not start-end"))?;
            let a: u64 = a.trim().parse().map_err(|_| format!("bad start in {s:?}"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad end in {s:?}"))?;
            if b < a {
                return Err(format!("range {s:?} ends before it starts"));
            }
            Ok(ByteRange::new(a, b - a))
        })
        .collect()
}

/// Commits to `transcript` in `chunk_size` chunks, discloses `ranges`, and
/// checks the disclosure against the commitment.
pub fn disclose(transcript: &str, chunk_size: u64, ranges: &str, seed: u64) -> Result<String, String> {
    if chunk_size == 0 {
        return Err("chunk size must be at least 1".into());
    }
    let bytes = transcript.as_bytes();
    let ranges = normalize_ranges(&parse_ranges(ranges)?);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (commitment, opening) = commit(bytes, chunk_size, &mut rng);
    let disclosure = opening.disclose(&ranges).map_err(|e| e.to_string())?;
    let verified = verify_disclosure(&commitment, &disclosure).is_ok();
    let mut view = vec![b'*'; bytes.len()];
    for c in &disclosure.chunks {
        let s = (c.index * chunk_size) as usize;
        view[s..s + c.bytes.len()].copy_from_slice(&c.bytes);
    }
    let out = DisclosureView {
        root: hex::encode(commitment.root.0),
        leaves: commitment.leaf_count(),
        revealed_chunks: disclosure.chunks.iter().map(|c| c.index).collect(),
        proof_nodes: disclosure.proof.len(),
        view: String::from_utf8_lossy(&view).into_owned(),
        verified,
        disclosure_bytes: serde_json::to_vec(&disclosure).map(|v| v.len()).unwrap_or(0),
    };
    Ok(serde_json::to_string(&out).expect("plain data serializes"))
}

#[derive(Serialize)]
struct IdView {
    id: String,
    violations: Vec<String>,
}

/// Computes an identity document's id and lists structural violations.
pub fn identity(document: &str) -> Result<String, String> {
    let aid = parse_aid(document.as_bytes()).map_err(|e| e.to_string())?;
    let id = compute_id(&aid).map_err(|e| e.to_string())?;
    let violations = validate(&aid, None).iter().map(ToString::to_string).collect();
    Ok(serde_json::to_string(&IdView { id, violations }).expect("plain data serializes"))
}

#[wasm_bindgen]
pub fn simulate_channels(rounds: u32, unit: u32) -> Result<String, JsValue> {
    channels(rounds, unit.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn commit_and_disclose(transcript: &str, chunk_size: u32, ranges: &str, seed: u32) -> Result<String, JsValue> {
    disclose(transcript, chunk_size.into(), ranges, seed.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn aid_id(document: &str) -> Result<String, JsValue> {
    identity(document).map_err(|e| JsValue::from_str(&e))
}
