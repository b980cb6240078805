//! Deterministic stand-ins for the services an agent talks to: a tool-calling
//! LLM API, a price feed, a sentiment feed and an echo endpoint.

use std::collections::BTreeMap;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::{tag, CoreOutput, ToolInvocation, Transcript};
use crate::canonical::{sha256, string_num, to_canonical_vec};
use crate::clock::ManualClock;
use crate::http::{self, json_response, HttpHandler, Request};

pub const LLM_HOST: &str = "llm.mock";
pub const PRICE_HOST: &str = "prices.mock";
pub const SENTIMENT_HOST: &str = "sentiment.mock";
pub const ECHO_HOST: &str = "echo.mock";

pub const LLM_PATH: &str = "/v1/messages";
pub const PRICE_PATH: &str = "/api/v3/simple/price";
pub const SENTIMENT_PATH: &str = "/v1/sentiment";
pub const ECHO_PATH: &str = "/echo";

pub const PRICE_TOOL: &str = "FetchMarketPrice";
pub const SENTIMENT_TOOL: &str = "FetchMarketSentiment";
pub const ECHO_TOOL: &str = "Echo";

pub const ASSETS: [&str; 4] = ["bitcoin", "ethereum", "solana", "dogecoin"];

fn error(status: u16, message: &str) -> Vec<u8> {
    json_response(status, &serde_json::to_vec(&json!({ "error": message })).unwrap())
}

fn parse_or_400(raw: &[u8]) -> Result<Request, Vec<u8>> {
    http::parse_request(raw).map_err(|e| error(400, &e.to_string()))
}

/// Which mock a server runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    PriceFeed,
    Sentiment,
    Llm,
    Echo,
}

impl ServiceKind {
    pub fn host(self) -> &'static str {
        match self {
            ServiceKind::PriceFeed => PRICE_HOST,
            ServiceKind::Sentiment => SENTIMENT_HOST,
            ServiceKind::Llm => LLM_HOST,
            ServiceKind::Echo => ECHO_HOST,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "price_feed" | "price" => Some(ServiceKind::PriceFeed),
            "sentiment" => Some(ServiceKind::Sentiment),
            "llm" => Some(ServiceKind::Llm),
            "echo" => Some(ServiceKind::Echo),
            _ => None,
        }
    }
}

/// Mock server settings as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockServerConfig {
    pub kind: ServiceKind,
    pub listen: String,
    #[serde(with = "string_num")]
    pub seed: u64,
    /// Required `x-api-key` for the LLM mock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
}

/// Market conditions for one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub prices: BTreeMap<String, String>,
    pub sentiment: BTreeMap<String, String>,
}

impl Scenario {
    /// Seed 0 is the fixed baseline market; other seeds draw prices around
    /// the same bases and sentiment scores in [0.30, 0.70].
    pub fn from_seed(seed: u64) -> Self {
        if seed == 0 {
            return Self::baseline();
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5ce7_a210);
        let bases = [64_000.0, 3_100.0, 145.0, 0.12];
        let mut prices = BTreeMap::new();
        let mut sentiment = BTreeMap::new();
        for (asset, base) in ASSETS.iter().zip(bases) {
            let price: f64 = base * rng.gen_range(0.9..1.1);
            prices.insert(asset.to_string(), format!("{price:.2}"));
            let score: u32 = rng.gen_range(30..=70);
            sentiment.insert(asset.to_string(), format!("0.{score:02}"));
        }
        Self { prices, sentiment }
    }

    pub fn baseline() -> Self {
        let table = [("bitcoin", "64250.12", "0.52"), ("ethereum", "3120.55", "0.47"), ("solana", "144.80", "0.63"), ("dogecoin", "0.12", "0.35")];
        Self {
            prices: table.iter().map(|(a, p, _)| (a.to_string(), p.to_string())).collect(),
            sentiment: table.iter().map(|(a, _, s)| (a.to_string(), s.to_string())).collect(),
        }
    }

    pub fn price(&self, asset: &str) -> String {
        self.prices.get(asset).cloned().unwrap_or_else(|| {
            let h = sha256(asset.as_bytes());
            format!("{}.{:02}", u16::from_be_bytes([h[0], h[1]]), h[2] % 100)
        })
    }

    pub fn sentiment(&self, asset: &str) -> String {
        self.sentiment.get(asset).cloned().unwrap_or_else(|| format!("0.{:02}", 30 + sha256(asset.as_bytes())[0] % 41))
    }
}

/// `GET /api/v3/simple/price?ids=<asset>&vs_currencies=usd`
pub struct PriceFeed(pub Arc<Scenario>);

impl HttpHandler for PriceFeed {
    fn handle(&mut self, raw: &[u8]) -> Vec<u8> {
        let req = match parse_or_400(raw) {
            Ok(r) => r,
            Err(resp) => return resp,
        };
        if req.method != "GET" || req.path() != PRICE_PATH {
            return error(404, "no such route");
        }
        let Some(ids) = req.query_param("ids") else { return error(400, "missing ids") };
        if req.query_param("vs_currencies").as_deref() != Some("usd") {
            return error(400, "only usd quotes are served");
        }
        let mut body = serde_json::Map::new();
        body.insert(ids.clone(), json!({ "usd": self.0.price(&ids), "last_updated_at": "1700000000" }));
        json_response(200, &serde_json::to_vec(&body).unwrap())
    }
}

/// `GET /v1/sentiment?asset=<asset>`
pub struct SentimentFeed(pub Arc<Scenario>);

impl HttpHandler for SentimentFeed {
    fn handle(&mut self, raw: &[u8]) -> Vec<u8> {
        let req = match parse_or_400(raw) {
            Ok(r) => r,
            Err(resp) => return resp,
        };
        if req.method != "GET" || req.path() != SENTIMENT_PATH {
            return error(404, "no such route");
        }
        let Some(asset) = req.query_param("asset") else { return error(400, "missing asset") };
        let body = json!({ "asset": asset, "score": self.0.sentiment(&asset), "market": format!("Will {asset} close higher this week?") });
        json_response(200, &serde_json::to_vec(&body).unwrap())
    }
}

/// `GET /echo?msg=<text>`
pub struct Echo;

impl HttpHandler for Echo {
    fn handle(&mut self, raw: &[u8]) -> Vec<u8> {
        let req = match parse_or_400(raw) {
            Ok(r) => r,
            Err(resp) => return resp,
        };
        if req.method != "GET" || req.path() != ECHO_PATH {
            return error(404, "no such route");
        }
        let msg = req.query_param("msg").unwrap_or_default();
        json_response(200, &serde_json::to_vec(&json!({ "echo": msg })).unwrap())
    }
}

/// The reasoning behind the mock LLM.
pub trait Brain: Send {
    fn think(&mut self, transcript: &Transcript) -> CoreOutput;
}

/// `POST /v1/messages` with `x-api-key` and body `{"history": <base64>, "model": ...}`.
/// Responds `{"output": {"text": ...}, "tool_calls": [{"name", "arguments"}], "model": ...}`.
pub struct MockLlm {
    pub api_key: String,
    pub brain: Box<dyn Brain>,
}

impl MockLlm {
    pub fn new(api_key: &str, brain: impl Brain + 'static) -> Self {
        Self { api_key: api_key.into(), brain: Box::new(brain) }
    }
}

impl HttpHandler for MockLlm {
    fn handle(&mut self, raw: &[u8]) -> Vec<u8> {
        let req = match parse_or_400(raw) {
            Ok(r) => r,
            Err(resp) => return resp,
        };
        if req.method != "POST" || req.path() != LLM_PATH {
            return error(404, "no such route");
        }
        if req.header("x-api-key") != Some(self.api_key.as_str()) {
            return error(401, "invalid api key");
        }
        let body: Value = match serde_json::from_slice(&req.body) {
            Ok(v) => v,
            Err(e) => return error(400, &e.to_string()),
        };
        let Some(history) = body.get("history").and_then(Value::as_str).and_then(|h| B64.decode(h).ok()) else {
            return error(400, "history must be base64");
        };
        let transcript = Transcript::from_bytes(history);
        if transcript.frames().is_err() {
            return error(400, "history is not a transcript");
        }
        let out = self.brain.think(&transcript);
        let calls: Vec<Value> = out.calls.iter().map(|c| json!({ "name": c.tool, "arguments": c.input })).collect();
        let resp = json!({
            "model": body.get("model").cloned().unwrap_or(Value::Null),
            "output": { "type": "text", "text": out.output },
            "tool_calls": calls,
            "stop_reason": if out.calls.is_empty() { "end_turn" } else { "tool_use" },
        });
        json_response(200, &serde_json::to_vec(&resp).unwrap())
    }
}

/// Charges a fixed latency to a virtual clock on every request.
pub struct Latency<H> {
    pub inner: H,
    pub clock: Arc<ManualClock>,
    pub secs: f64,
}

impl<H: HttpHandler> HttpHandler for Latency<H> {
    fn handle(&mut self, raw: &[u8]) -> Vec<u8> {
        self.clock.advance_secs(self.secs);
        self.inner.handle(raw)
    }
}

/// The core output of a trading agent: canonical JSON of this struct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeDecision {
    pub action: String,
    pub asset: String,
    pub size: String,
    pub rationale: String,
}

impl TradeDecision {
    pub fn to_canonical_string(&self) -> String {
        String::from_utf8(to_canonical_vec(self).expect("decisions are strings")).unwrap()
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_str(s).ok()
    }
}

/// The tick a trading agent is asked about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickPrompt {
    pub asset: String,
    #[serde(with = "string_num")]
    pub tick: u64,
}

impl TickPrompt {
    pub fn to_canonical_string(&self) -> String {
        String::from_utf8(to_canonical_vec(self).expect("prompts are strings")).unwrap()
    }
}

/// Decision rule: buy above 0.60 sentiment, sell below 0.40, else hold.
pub fn decide(asset: &str, price: &str, sentiment: &str) -> TradeDecision {
    let score: f64 = sentiment.parse().unwrap_or(0.5);
    let (action, size) = if score >= 0.6 {
        ("buy", "0.25")
    } else if score <= 0.4 {
        ("sell", "0.25")
    } else {
        ("hold", "0")
    };
    TradeDecision { action: action.into(), asset: asset.into(), size: size.into(), rationale: format!("sentiment {sentiment} at price {price} usd") }
}

/// Fetches price and sentiment for the prompted asset, then decides.
#[derive(Debug, Default, Clone, Copy)]
pub struct TradingBrain;

impl Brain for TradingBrain {
    fn think(&mut self, transcript: &Transcript) -> CoreOutput {
        let frames = transcript.frames().unwrap_or_default();
        let prompt = frames.iter().find(|(t, _)| *t == tag::INITIAL_INPUT).and_then(|(_, p)| serde_json::from_slice::<TickPrompt>(p).ok());
        let Some(prompt) = prompt else {
            return CoreOutput { output: "I can only decide on a tick prompt.".into(), calls: vec![] };
        };
        let mut results: BTreeMap<String, String> = BTreeMap::new();
        let mut current_tool = String::new();
        for (t, p) in &frames {
            match *t {
                tag::TOOL_ID => current_tool = String::from_utf8_lossy(p).into_owned(),
                tag::TOOL_RESULT => {
                    results.insert(current_tool.clone(), String::from_utf8_lossy(p).into_owned());
                }
                _ => {}
            }
        }
        match (results.get(PRICE_TOOL), results.get(SENTIMENT_TOOL)) {
            (Some(price), Some(score)) => CoreOutput { output: decide(&prompt.asset, price, score).to_canonical_string(), calls: vec![] },
            _ => CoreOutput {
                output: format!("Fetching market data for {}.", prompt.asset),
                calls: vec![
                    ToolInvocation { tool: PRICE_TOOL.into(), input: prompt.asset.clone() },
                    ToolInvocation { tool: SENTIMENT_TOOL.into(), input: prompt.asset.clone() },
                ],
            },
        }
    }
}

/// A core whose behaviour is a pure function of its seed and the step it is
/// at: a seeded number of tool-calling steps with random inputs, then a final
/// answer.
#[derive(Debug, Clone)]
pub struct RandomBrain {
    pub seed: u64,
    pub tools: Vec<String>,
    pub max_steps: usize,
}

const ALPHABET: &[&str] = &["a", "z", "0", "9", " ", "&", "/", "~", "?", "=", "%", "\"", "\\", "é", "ß", "→", "{input}", "-", "."];

fn random_text(rng: &mut ChaCha20Rng, max_len: usize) -> String {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

impl RandomBrain {
    pub fn steps(&self) -> usize {
        ChaCha20Rng::seed_from_u64(self.seed).gen_range(1..=self.max_steps.max(1))
    }
}

impl Brain for RandomBrain {
    fn think(&mut self, transcript: &Transcript) -> CoreOutput {
        let frames = transcript.frames().unwrap_or_default();
        let j = frames.iter().filter(|(t, _)| *t == tag::CORE_OUTPUT).count();
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(j as u64));
        let output = format!("step {j}: {}", random_text(&mut rng, 24));
        if j + 1 >= self.steps() || self.tools.is_empty() {
            return CoreOutput { output, calls: vec![] };
        }
        let n = rng.gen_range(1..=2);
        let calls = (0..n)
            .map(|_| {
                let tool = self.tools.choose(&mut rng).unwrap().clone();
                let input = if tool == ECHO_TOOL { random_text(&mut rng, 16) } else { ASSETS.choose(&mut rng).unwrap().to_string() };
                ToolInvocation { tool, input }
            })
            .collect();
        CoreOutput { output, calls }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::parse_response;

    fn get(h: &mut dyn HttpHandler, target: &str, host: &str) -> (u16, Value) {
        let raw = format!("GET {target} HTTP/1.1\r\nhost: {host}\r\n\r\n");
        let resp = parse_response(&h.handle(raw.as_bytes())).unwrap();
        (resp.status, serde_json::from_slice(&resp.body).unwrap())
    }

    #[test]
    fn price_feed_shape() {
        let mut feed = PriceFeed(Arc::new(Scenario::from_seed(0)));
        let (status, body) = get(&mut feed, "/api/v3/simple/price?ids=bitcoin&vs_currencies=usd", PRICE_HOST);
        assert_eq!(status, 200);
        assert!(body["bitcoin"]["usd"].as_str().unwrap().contains('.'));
        assert_eq!(get(&mut feed, "/api/v3/simple/price?ids=bitcoin&vs_currencies=eur", PRICE_HOST).0, 400);
        assert_eq!(get(&mut feed, "/nope", PRICE_HOST).0, 404);
    }

    #[test]
    fn llm_requires_key_and_follows_brain() {
        let mut llm = MockLlm::new("k3y", TradingBrain);
        let mut t = Transcript::new();
        t.push_frame(tag::INITIAL_INPUT, TickPrompt { asset: "solana".into(), tick: 0 }.to_canonical_string().as_bytes());
        let body = serde_json::to_vec(&json!({ "model": "m", "history": B64.encode(t.as_bytes()) })).unwrap();
        let req = |key: &str| {
            let mut r =
                format!("POST /v1/messages HTTP/1.1\r\nhost: llm.mock\r\nx-api-key: {key}\r\ncontent-length: {}\r\n\r\n", body.len()).into_bytes();
            r.extend_from_slice(&body);
            r
        };
        assert_eq!(parse_response(&llm.handle(&req("wrong"))).unwrap().status, 401);
        let resp = parse_response(&llm.handle(&req("k3y"))).unwrap();
        let v: Value = serde_json::from_slice(&resp.body).unwrap();
        assert_eq!(v["tool_calls"][0], json!({ "name": PRICE_TOOL, "arguments": "solana" }));
        assert_eq!(v["tool_calls"][1]["name"], SENTIMENT_TOOL);
    }

    #[test]
    fn decision_thresholds() {
        assert_eq!(decide("x", "1", "0.60").action, "buy");
        assert_eq!(decide("x", "1", "0.59").action, "hold");
        assert_eq!(decide("x", "1", "0.41").action, "hold");
        assert_eq!(decide("x", "1", "0.40").action, "sell");
    }

    #[test]
    fn random_brain_is_a_function_of_seed_and_step() {
        let brain = RandomBrain { seed: 7, tools: vec![ECHO_TOOL.into()], max_steps: 4 };
        let mut t = Transcript::new();
        t.push_frame(tag::INITIAL_INPUT, b"q");
        assert_eq!(brain.clone().think(&t), brain.clone().think(&t));
    }
}
