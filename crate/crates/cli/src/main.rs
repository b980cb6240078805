//! `vet`: identity documents, services, proving, verification and benches.
//!
//! Exit codes: 0 success or accept, 1 reject or invalid document, 2 usage or
//! I/O error.

mod keys;

use std::collections::BTreeMap;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use serde_json::json;

use vet_core::aid::{canonicalize, compute_id, parse_aid, validate, AgentIdentityDocument, Verification};
use vet_core::composer::{prove_trace, ComponentProver, ProverSet, TrustFile, TrustStore, VerifiableExecutionTrace, WebProofProver};
use vet_core::demo::{self, World, WorldOptions};
use vet_core::mock::{self, MockLlm, MockServerConfig, Scenario, ServiceKind, TradingBrain};
use vet_core::net::{self, HttpUpstream, NotaryService, ProxyService, TcpNotaryLink, TcpProxyProver};
use vet_core::notary::{CapacityProfile, Ledger, Notary, NotaryConfig};
use vet_core::proxy::ProxyEnclave;
use vet_core::sim::{self, CostModel, HistoryPolicy, SessionWorkload, Strategy, CALIBRATED_UNIT, DEFAULT_UNIT};
use vet_core::template::{Algorithm, TemplateRegistry};
use vet_core::tls::TlsServer;
use vet_core::webproof::ChannelSpec;

#[derive(Parser)]
#[command(name = "vet", version, about = "Verifiable execution traces for API-based agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Agent identity documents.
    #[command(subcommand)]
    Aid(AidCommand),
    /// Notary service.
    #[command(subcommand)]
    Notary(ServeCommand<NotaryServe>),
    /// Attested proxy service.
    #[command(subcommand)]
    Proxy(ServeCommand<ProxyServe>),
    /// Mock upstream services.
    #[command(subcommand)]
    Mock(ServeCommand<MockServe>),
    /// Run an agent against live services and write a proof bundle.
    Prove(ProveArgs),
    /// Check a claimed output against a bundle and identity document.
    Verify(VerifyArgs),
    /// Describe a bundle, checking each proof when a document is given.
    Inspect(InspectArgs),
    /// Channel provisioning benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// End-to-end demos.
    #[command(subcommand)]
    Demo(DemoCommand),
    /// Write fresh service keys.
    Keygen(KeygenArgs),
}

#[derive(Subcommand)]
enum AidCommand {
    /// Print the document's id.
    Hash { file: PathBuf },
    /// Print the canonical bytes the id is computed over.
    Canonical { file: PathBuf },
    /// Check the document, and its template references when a directory is given.
    Validate {
        file: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ServeCommand<A: Args> {
    Serve(A),
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    SelfHosted,
    Public,
}

#[derive(Args)]
struct NotaryServe {
    #[arg(long, default_value = "127.0.0.1:7047")]
    listen: String,
    /// Signing key file; defaults to $VET_KEY_DIR/notary.key.
    #[arg(long)]
    key: Option<PathBuf>,
    /// Append signed sessions to this JSONL file.
    #[arg(long)]
    ledger: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "self-hosted")]
    profile: Profile,
    #[arg(long, default_value_t = 64)]
    max_sessions: usize,
    /// Sleep for the modeled channel setup time of this cost model.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct ProxyServe {
    #[arg(long, default_value = "127.0.0.1:7048")]
    listen: String,
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value = demo::TEE_TYPE)]
    tee_type: String,
    /// Template directory; its injection templates form the served set.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Upstream route, `host=addr`; repeatable.
    #[arg(long = "route")]
    routes: Vec<String>,
}

#[derive(Args)]
struct MockServe {
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ServiceKind>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    api_key: Option<String>,
    /// Read settings from a mock server config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    key: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ServiceKind, String> {
    ServiceKind::parse(s).ok_or_else(|| format!("unknown mock kind {s:?}; expected llm, price_feed, sentiment or echo"))
}

#[derive(Args)]
struct ProveArgs {
    #[arg(long)]
    aid: PathBuf,
    #[arg(long)]
    templates: PathBuf,
    /// Initial input to the agent.
    #[arg(long)]
    input: String,
    #[arg(long)]
    notary: Option<String>,
    #[arg(long)]
    proxy: Option<String>,
    /// Server address for a host, `host=addr`; repeatable.
    #[arg(long = "route")]
    routes: Vec<String>,
    /// Template secret, `name=value`; repeatable.
    #[arg(long = "secret")]
    secrets: Vec<String>,
    /// Pins server keys when proving.
    #[arg(long)]
    trust: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    max_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = demo::DOWN_CAPACITY)]
    capacity_down: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    aid: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    /// The claimed output, or `@file` to read it from a file.
    #[arg(long)]
    claim: String,
    #[arg(long)]
    templates: PathBuf,
    #[arg(long)]
    trust: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, requires = "templates")]
    aid: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    trust: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Simulate naive and optimized channel provisioning.
    Channels(ChannelsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Naive,
    Optimized,
    Both,
}

#[derive(Args)]
struct ChannelsArgs {
    #[arg(long, value_enum, default_value = "both")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 6)]
    rounds: u32,
    /// Cost model file; defaults to the calibrated model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Channel size unit in bytes.
    #[arg(long, default_value_t = DEFAULT_UNIT)]
    unit: u64,
    #[arg(long, default_value_t = 500)]
    message_size: u64,
    #[arg(long, default_value_t = 1000)]
    response_size: u64,
    #[arg(long, default_value_t = sim::DEFAULT_PREFIX)]
    prefix_size: u64,
    /// Summarize history to at most this many bytes.
    #[arg(long)]
    summarize: Option<u64>,
}

#[derive(Subcommand)]
enum DemoCommand {
    /// One proven trading decision.
    Veritrade(VeritradeArgs),
}

#[derive(Args)]
struct VeritradeArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    tick: u64,
    #[arg(long, short, default_value = "veritrade-out")]
    out: PathBuf,
    /// Charge modeled latencies (calibrated model) to a virtual clock.
    #[arg(long)]
    modeled: bool,
    /// Use running services instead of in-process ones.
    #[arg(long, requires_all = ["proxy"])]
    notary: Option<String>,
    #[arg(long)]
    proxy: Option<String>,
    #[arg(long = "route")]
    routes: Vec<String>,
    #[arg(long)]
    api_key: Option<String>,
}

#[derive(Args)]
struct KeygenArgs {
    /// Directory to write into; defaults to $VET_KEY_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Key names; defaults to every demo service.
    names: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Aid(c) => aid_cmd(c),
        Command::Notary(ServeCommand::Serve(a)) => notary_serve(a),
        Command::Proxy(ServeCommand::Serve(a)) => proxy_serve(a),
        Command::Mock(ServeCommand::Serve(a)) => mock_serve(a),
        Command::Prove(a) => prove(a),
        Command::Verify(a) => verify(a),
        Command::Inspect(a) => inspect(a),
        Command::Bench(BenchCommand::Channels(a)) => bench_channels(a),
        Command::Demo(DemoCommand::Veritrade(a)) => veritrade(a),
        Command::Keygen(a) => keygen(a),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_aid(path: &Path) -> Result<AgentIdentityDocument> {
    parse_aid(&read(path)?).with_context(|| format!("{}", path.display()))
}

fn load_registry(dir: &Path) -> Result<TemplateRegistry> {
    TemplateRegistry::load_dir(dir).map_err(|e| anyhow!("templates: {e}"))
}

fn load_trust(registry: TemplateRegistry, path: Option<&Path>) -> Result<TrustStore> {
    let file = match path {
        Some(p) => {
            let bytes = read(p)?;
            let v: serde_json::Value = serde_json::from_slice(&bytes).with_context(|| format!("{}", p.display()))?;
            if let Some(at) = vet_core::canonical::find_number(&v) {
                bail!("{}: number at {at}; scalars must be strings", p.display());
            }
            serde_json::from_value::<TrustFile>(v).with_context(|| format!("{}", p.display()))?
        }
        None => TrustFile::default(),
    };
    Ok(TrustStore::with_file(registry, file))
}

fn load_bundle(path: &Path) -> Result<VerifiableExecutionTrace> {
    VerifiableExecutionTrace::from_json(&read(path)?).with_context(|| format!("{}", path.display()))
}

fn pairs(specs: &[String], what: &str) -> Result<BTreeMap<String, String>> {
    specs
        .iter()
        .map(|s| s.split_once('=').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(|| anyhow!("{what} {s:?} is not name=value")))
        .collect()
}

fn listen(addr: &str) -> Result<TcpListener> {
    let l = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on {}", l.local_addr()?);
    Ok(l)
}

fn aid_cmd(c: AidCommand) -> Result<ExitCode> {
    match c {
        AidCommand::Hash { file } => match compute_id(&load_aid(&file)?) {
            Ok(id) => {
                println!("{id}");
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => {
                println!("invalid: {e}");
                Ok(ExitCode::from(1))
            }
        },
        AidCommand::Canonical { file } => match canonicalize(&load_aid(&file)?) {
            Ok(bytes) => {
                println!("{}", String::from_utf8_lossy(&bytes));
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => {
                println!("invalid: {e}");
                Ok(ExitCode::from(1))
            }
        },
        AidCommand::Validate { file, templates } => {
            let aid = load_aid(&file)?;
            let registry = templates.as_deref().map(load_registry).transpose()?;
            let violations = validate(&aid, registry.as_ref());
            if violations.is_empty() {
                println!("valid {}", compute_id(&aid).map_err(|e| anyhow!("{e}"))?);
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    println!("{v}");
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn notary_serve(a: NotaryServe) -> Result<ExitCode> {
    let key = keys::load("notary", a.key.as_deref())?;
    let model = a.model.as_deref().map(load_model).transpose()?;
    let config = NotaryConfig {
        max_capacity: match a.profile {
            Profile::SelfHosted => CapacityProfile::SELF_HOSTED,
            Profile::Public => CapacityProfile::PUBLIC,
        },
        max_sessions: a.max_sessions,
        modeled_latency: model,
        ..NotaryConfig::default()
    };
    let mut notary = Notary::new(key, config);
    if let Some(path) = &a.ledger {
        notary.set_ledger(Ledger::with_file(path).with_context(|| format!("ledger {}", path.display()))?);
    }
    eprintln!("notary key {}", notary.public_key_string());
    NotaryService::new(Arc::new(notary)).serve(listen(&a.listen)?)?;
    Ok(ExitCode::SUCCESS)
}

fn proxy_serve(a: ProxyServe) -> Result<ExitCode> {
    let key = keys::load("enclave", a.key.as_deref())?;
    let enclave = match &a.templates {
        Some(dir) => {
            let reg = load_registry(dir)?;
            let templates: Vec<_> = reg
                .iter()
                .filter_map(|(uid, alg)| match alg {
                    Algorithm::Injection(t) => Some((uid.clone(), t.clone())),
                    Algorithm::Parsing(_) => None,
                })
                .collect();
            ProxyEnclave::new(key, &a.tee_type, &templates, &[])
        }
        None => {
            let mut keys = vet_core::demo::Keys::derived();
            keys.enclave = key;
            demo::enclave(&keys)
        }
    };
    let upstream = HttpUpstream::from_specs(&a.routes).map_err(|e| anyhow!(e))?;
    eprintln!("enclave key {} measurement {}", vet_core::crypto::format_public_key(&enclave.public_key()), enclave.measurement());
    ProxyService { enclave: Arc::new(enclave), upstream }.serve(listen(&a.listen)?)?;
    Ok(ExitCode::SUCCESS)
}

fn mock_serve(a: MockServe) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_slice::<MockServerConfig>(&read(p)?).with_context(|| format!("{}", p.display()))?,
        None => MockServerConfig {
            kind: a.kind.ok_or_else(|| anyhow!("--kind or --config is required"))?,
            listen: "127.0.0.1:0".into(),
            seed: 0,
            api_key: None,
        },
    };
    if let Some(k) = a.kind {
        cfg.kind = k;
    }
    if let Some(l) = a.listen {
        cfg.listen = l;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.api_key.is_some() {
        cfg.api_key = a.api_key;
    }
    let host = cfg.kind.host();
    let key = keys::load(&keys::server_key_name(host), a.key.as_deref())?;
    let scenario = Arc::new(Scenario::from_seed(cfg.seed));
    let server = match cfg.kind {
        ServiceKind::Llm => {
            let api_key = cfg.api_key.clone().unwrap_or_else(|| WorldOptions::new(cfg.seed).api_key);
            TlsServer::new(key, host, MockLlm::new(&api_key, TradingBrain), cfg.seed)
        }
        ServiceKind::PriceFeed => TlsServer::new(key, host, mock::PriceFeed(scenario), cfg.seed),
        ServiceKind::Sentiment => TlsServer::new(key, host, mock::SentimentFeed(scenario), cfg.seed),
        ServiceKind::Echo => TlsServer::new(key, host, mock::Echo, cfg.seed),
    };
    eprintln!("{host} key {}", vet_core::crypto::format_public_key(&server.public_key()));
    net::serve_tls_server(server, listen(&cfg.listen)?)?;
    Ok(ExitCode::SUCCESS)
}

fn is_proxy(v: &Verification) -> bool {
    matches!(v, Verification::ProxyTee { .. })
}

/// Provers for `aid` that reach the services over TCP.
fn remote_provers(
    aid: &AgentIdentityDocument,
    notary: Option<&str>,
    proxy: Option<&str>,
    routes: &BTreeMap<String, String>,
    pins: &BTreeMap<String, String>,
    capacity_down: u64,
    seed: u64,
) -> Result<BTreeMap<String, Box<dyn ComponentProver>>> {
    let mut out: BTreeMap<String, Box<dyn ComponentProver>> = BTreeMap::new();
    let entries = std::iter::once(("".to_string(), &aid.core)).chain(aid.tools.iter().map(|t| (t.name.clone().unwrap_or_default(), t)));
    for (i, (name, entry)) in entries.enumerate() {
        let host = entry.host().ok_or_else(|| anyhow!("component {name:?} has no endpoint host"))?;
        let prover: Box<dyn ComponentProver> = if is_proxy(&entry.verification) {
            let addr = proxy.ok_or_else(|| anyhow!("component {name:?} needs --proxy"))?;
            Box::new(TcpProxyProver { addr: addr.into() })
        } else {
            let addr = notary.ok_or_else(|| anyhow!("component {name:?} needs --notary"))?;
            let target = routes.get(&host).ok_or_else(|| anyhow!("no --route for {host}"))?;
            let channel = ChannelSpec {
                target: target.clone(),
                domain: host.clone(),
                capacity_up: CALIBRATED_UNIT,
                capacity_down,
                server_pin: pins.get(&host).cloned(),
            };
            Box::new(WebProofProver {
                link: Box::new(TcpNotaryLink::new(addr)),
                channel,
                size_unit: Some(CALIBRATED_UNIT),
                rng: rand_chacha::ChaCha20Rng::seed_from_u64(seed.wrapping_add(i as u64)),
            })
        };
        out.insert(name, prover);
    }
    Ok(out)
}

fn prover_set(mut provers: BTreeMap<String, Box<dyn ComponentProver>>, secrets: BTreeMap<String, String>) -> ProverSet {
    let core = provers.remove("").expect("core prover is always built");
    ProverSet { core, tools: provers, secrets }
}

fn prove(a: ProveArgs) -> Result<ExitCode> {
    let aid = load_aid(&a.aid)?;
    let registry = load_registry(&a.templates)?;
    let trust = load_trust(TemplateRegistry::new(), a.trust.as_deref())?;
    let routes = pairs(&a.routes, "route")?;
    let provers = remote_provers(&aid, a.notary.as_deref(), a.proxy.as_deref(), &routes, &trust.server_pins, a.capacity_down, a.seed)?;
    let mut set = prover_set(provers, pairs(&a.secrets, "secret")?);
    let bundle = prove_trace(&aid, &registry, &a.input, &mut set, a.max_steps)?;
    write(&a.out, &bundle.to_canonical_json())?;
    let last = bundle.trace.steps.last().map(|s| s.core_output.as_str()).unwrap_or_default();
    println!("wrote {} ({} steps, {} proofs)", a.out.display(), bundle.trace.steps.len(), bundle.proofs.len());
    println!("output {last}");
    Ok(ExitCode::SUCCESS)
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let aid = load_aid(&a.aid)?;
    let bundle = load_bundle(&a.bundle)?;
    let claim = match a.claim.strip_prefix('@') {
        Some(path) => String::from_utf8(read(Path::new(path))?).context("claim file is not UTF-8")?,
        None => a.claim.clone(),
    };
    let trust = load_trust(load_registry(&a.templates)?, a.trust.as_deref())?;
    let result = vet_core::composer::verify_trace(&claim, &bundle, &aid, &trust);
    let accepted = result.is_ok();
    if a.json {
        let v = match &result {
            Ok(acc) => json!({ "verdict": "accept", "locator": acc.locator, "aid_id": bundle.aid_id }),
            Err(e) => json!({ "verdict": "reject", "reason": e.code(), "detail": e.to_string(), "aid_id": bundle.aid_id }),
        };
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        match &result {
            Ok(acc) => println!("accept: found at {}", acc.locator),
            Err(e) => println!("reject: {}: {e}", e.code()),
        }
    }
    Ok(if accepted { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn inspect(a: InspectArgs) -> Result<ExitCode> {
    let bundle = load_bundle(&a.bundle)?;
    let loaded = match (&a.aid, &a.templates) {
        (Some(aid), Some(t)) => Some((load_aid(aid)?, load_trust(load_registry(t)?, a.trust.as_deref())?)),
        _ => None,
    };
    let report = demo::inspect(&bundle, loaded.as_ref().map(|(a, t)| (a, t)));
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render());
    }
    let ok = report.verdict.as_deref().is_none_or(|v| v.starts_with("accept"));
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn load_model(path: &Path) -> Result<CostModel> {
    serde_json::from_slice(&read(path)?).with_context(|| format!("cost model {}", path.display()))
}

fn bench_channels(a: ChannelsArgs) -> Result<ExitCode> {
    let model = match &a.model {
        Some(p) => load_model(p)?,
        None => CostModel::calibrated(),
    };
    if a.rounds == 0 {
        bail!("--rounds must be positive");
    }
    let workload = SessionWorkload {
        rounds: a.rounds,
        message_size: a.message_size,
        response_size: a.response_size,
        prefix_size: a.prefix_size,
        history: a.summarize.map_or(HistoryPolicy::FullRetransmit, |cap| HistoryPolicy::Summarized { cap }),
    };
    let strategies: &[Strategy] = match a.strategy {
        StrategyArg::Naive => &[Strategy::Naive],
        StrategyArg::Optimized => &[Strategy::Optimized],
        StrategyArg::Both => &[Strategy::Naive, Strategy::Optimized],
    };
    let cap = CapacityProfile::SELF_HOSTED;
    let mut results = Vec::new();
    for &s in strategies {
        let plan = sim::plan_channels(&workload, s, a.unit)?;
        let feasible = match plan.check_feasible(cap) {
            Ok(()) => "feasible".to_string(),
            Err(e) => format!("INFEASIBLE under the {}/{} byte session cap: {e}", cap.up, cap.down),
        };
        let r = sim::simulate(&plan, &model);
        println!("{} ({} channel{}): {feasible}", s.name(), plan.channels.len(), if plan.channels.len() == 1 { "" } else { "s" });
        println!("  setup before round 1  {:.3} s", r.setup_total);
        println!("  round  transcript  uncovered  latency  cumulative");
        for row in &r.rounds {
            println!("  {:>5}  {:>10}  {:>9.3}  {:>7.3}  {:>10.3}", row.round, row.transcript, row.uncovered_setup, row.latency, row.cumulative);
        }
        println!("  mean latency {:.3} s, total {:.3} s", r.mean_latency(r.rounds.len()), r.total_time());
        println!("  max feasible rounds under cap: {}", sim::max_feasible_rounds(&workload, s, a.unit, cap, 256));
        results.push(r);
    }
    if let Some(path) = &a.csv {
        write(path, sim::csv(&results).as_bytes())?;
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn write_demo_files(out: &Path, aid: &AgentIdentityDocument, trust: &TrustStore) -> Result<()> {
    let aid = aid.with_hash().map_err(|e| anyhow!("{e}"))?;
    write(&out.join("aid.json"), &vet_core::canonical::to_canonical_vec(&aid)?)?;
    trust.registry.save_dir(&out.join("templates")).map_err(|e| anyhow!("{e}"))?;
    write(&out.join("trust.json"), &vet_core::canonical::to_canonical_vec(&trust.to_file())?)?;
    Ok(())
}

fn veritrade(a: VeritradeArgs) -> Result<ExitCode> {
    let (bundle, aid, trust, latency) = match &a.notary {
        None => {
            let mut opts = WorldOptions::new(a.seed);
            if let Some(k) = &a.api_key {
                opts.api_key = k.clone();
            }
            if a.modeled {
                opts.modeled = Some(CostModel::calibrated());
            }
            let world = World::with_keys(opts, keys::demo_keys()?);
            let run = demo::run_veritrade(&world, a.tick)?;
            (run.bundle, demo::veritrade_aid(&world.keys), world.trust(), a.modeled.then_some((run.elapsed_secs, run.setup_secs)))
        }
        Some(notary) => {
            let keys = keys::demo_keys()?;
            let aid = demo::veritrade_aid(&keys);
            let trust = demo::trust_store(&keys);
            let routes = pairs(&a.routes, "route")?;
            let provers = remote_provers(&aid, Some(notary), a.proxy.as_deref(), &routes, &trust.server_pins, demo::DOWN_CAPACITY, a.seed)?;
            let api_key = a.api_key.clone().unwrap_or_else(|| WorldOptions::new(a.seed).api_key);
            let mut set = prover_set(provers, BTreeMap::from([("api_key".to_string(), api_key)]));
            let bundle = prove_trace(&aid, &trust.registry, &demo::tick_prompt(a.seed, a.tick), &mut set, 4)?;
            (bundle, aid, trust, None)
        }
    };
    let decision_text = bundle.trace.steps.last().map(|s| s.core_output.clone()).unwrap_or_default();
    let verdict = vet_core::composer::verify_trace(&decision_text, &bundle, &aid, &trust);
    write_demo_files(&a.out, &aid, &trust)?;
    write(&a.out.join("bundle.json"), &bundle.to_canonical_json())?;
    write(&a.out.join("decision.json"), decision_text.as_bytes())?;

    println!("agent     {}", bundle.aid_id);
    println!("decision  {decision_text}");
    println!("proofs    {}", bundle.proofs.iter().map(|p| format!("{}={}", p.locator.position, p.payload.kind())).collect::<Vec<_>>().join(" "));
    if let Some((elapsed, setup)) = latency {
        println!("latency   {elapsed:.2} s modeled, of which {setup:.2} s channel setup");
        let fr = demo::compare_first_round(a.seed, &CostModel::calibrated())?;
        println!(
            "round 1   direct {:.3} s, proxy {:.3} s (+{:.1}%), web proof {:.3} s",
            fr.direct,
            fr.proxy,
            100.0 * fr.proxy_overhead(),
            fr.webproof
        );
    }
    println!("files     {}", a.out.display());
    match verdict {
        Ok(acc) => {
            println!("verdict   accept ({})", acc.locator);
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            println!("verdict   reject: {}: {e}", e.code());
            Ok(ExitCode::from(1))
        }
    }
}

fn keygen(a: KeygenArgs) -> Result<ExitCode> {
    let dir = a.out.or_else(keys::key_dir).ok_or_else(|| anyhow!("--out or ${} is required", keys::KEY_DIR_ENV))?;
    let names = if a.names.is_empty() { keys::default_names() } else { a.names };
    for (name, public) in keys::generate(&dir, &names)? {
        println!("{name} {public}");
    }
    Ok(ExitCode::SUCCESS)
}
