//! Channel provisioning under a per-session capacity cap.
//!
//! A naive plan opens one channel large enough for the whole conversation. An
//! optimized plan opens one channel per round, sized to that round, and
//! prepares channel k+1 while round k is in flight. Setup cost is linear in
//! capacity, so the optimized plan pays a small visible setup and hides most
//! of the rest.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::string_num;
use crate::notary::CapacityProfile;

/// Bytes of fixed per-request context (system prompt, tool schemas, headers)
/// in the reference deployment.
pub const DEFAULT_PREFIX: u64 = 5 * 1024;
/// Channel size unit of the calibrated deployment.
pub const CALIBRATED_UNIT: u64 = 1024;
/// Default channel size unit.
pub const DEFAULT_UNIT: u64 = 16 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("need at least {needed} datapoints, got {got}")]
    TooFewDatapoints { needed: usize, got: usize },
    #[error("datapoints do not determine the model (rank {rank} of {needed})")]
    Degenerate { rank: usize, needed: usize },
    #[error("plan is infeasible: round {round} needs {needed} bytes {direction}, cap is {cap}")]
    Infeasible { round: u32, direction: &'static str, needed: u64, cap: u64 },
    #[error("channel unit must be positive")]
    ZeroUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum HistoryPolicy {
    /// Every request carries the whole conversation so far.
    FullRetransmit,
    /// History is summarized to at most `cap` bytes.
    Summarized {
        #[serde(with = "string_num")]
        cap: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionWorkload {
    #[serde(with = "string_num")]
    pub rounds: u32,
    #[serde(with = "string_num")]
    pub message_size: u64,
    #[serde(with = "string_num")]
    pub response_size: u64,
    #[serde(with = "string_num")]
    pub prefix_size: u64,
    pub history: HistoryPolicy,
}

impl SessionWorkload {
    /// 500 B messages, 1 KB responses, full history, reference prefix.
    pub fn reference(rounds: u32) -> Self {
        Self { rounds, message_size: 500, response_size: 1000, prefix_size: DEFAULT_PREFIX, history: HistoryPolicy::FullRetransmit }
    }

    /// Request bytes of round `k` (1-based).
    pub fn up(&self, k: u32) -> u64 {
        let k = k as u64;
        let history = (k - 1) * (self.message_size + self.response_size);
        let history = match self.history {
            HistoryPolicy::FullRetransmit => history,
            HistoryPolicy::Summarized { cap } => history.min(cap),
        };
        self.prefix_size + history + self.message_size
    }

    pub fn down(&self, _k: u32) -> u64 {
        self.response_size
    }

    pub fn transcript(&self, k: u32) -> u64 {
        self.up(k) + self.down(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// No notarization.
    Direct,
    /// Attested proxy.
    Proxy,
    /// One channel for the whole session.
    Naive,
    /// One right-sized channel per round, prepared one round ahead.
    Optimized,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Proxy => "proxy",
            Strategy::Naive => "naive",
            Strategy::Optimized => "optimized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    /// First round served by this channel (1-based).
    pub first_round: u32,
    pub capacity: CapacityProfile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub strategy: Strategy,
    pub workload: SessionWorkload,
    pub channels: Vec<Channel>,
}

fn round_up(x: u64, unit: u64) -> u64 {
    x.div_ceil(unit) * unit
}

/// Plans channels for `workload`. Naive: one channel sized to the sum of all
/// rounds. Optimized: one channel per round, each direction rounded up to a
/// multiple of `unit`. Direct and proxy use no channels.
pub fn plan_channels(workload: &SessionWorkload, strategy: Strategy, unit: u64) -> Result<ChannelPlan, SimError> {
    if unit == 0 {
        return Err(SimError::ZeroUnit);
    }
    let rounds = 1..=workload.rounds;
    let channels = match strategy {
        Strategy::Direct | Strategy::Proxy => Vec::new(),
        Strategy::Naive => vec![Channel {
            first_round: 1,
            capacity: CapacityProfile { up: rounds.clone().map(|k| workload.up(k)).sum(), down: rounds.map(|k| workload.down(k)).sum() },
        }],
        Strategy::Optimized => rounds
            .map(|k| Channel {
                first_round: k,
                capacity: CapacityProfile { up: round_up(workload.up(k), unit), down: round_up(workload.down(k), unit) },
            })
            .collect(),
    };
    Ok(ChannelPlan { strategy, workload: workload.clone(), channels })
}

impl ChannelPlan {
    /// Checks every channel against a notary's per-session cap.
    pub fn check_feasible(&self, cap: CapacityProfile) -> Result<(), SimError> {
        for ch in &self.channels {
            if ch.capacity.up > cap.up {
                return Err(SimError::Infeasible { round: self.failing_round(ch, cap), direction: "up", needed: ch.capacity.up, cap: cap.up });
            }
            if ch.capacity.down > cap.down {
                return Err(SimError::Infeasible { round: self.failing_round(ch, cap), direction: "down", needed: ch.capacity.down, cap: cap.down });
            }
        }
        Ok(())
    }

    /// The first round whose cumulative demand on `ch` overflows `cap`.
    fn failing_round(&self, ch: &Channel, cap: CapacityProfile) -> u32 {
        if self.strategy != Strategy::Naive {
            return ch.first_round;
        }
        let (mut up, mut down) = (0, 0);
        for k in 1..=self.workload.rounds {
            up += self.workload.up(k);
            down += self.workload.down(k);
            if up > cap.up || down > cap.down {
                return k;
            }
        }
        self.workload.rounds
    }
}

/// Largest round count for which `strategy` stays under `cap`.
pub fn max_feasible_rounds(base: &SessionWorkload, strategy: Strategy, unit: u64, cap: CapacityProfile, limit: u32) -> u32 {
    (1..=limit)
        .take_while(|&n| {
            let w = SessionWorkload { rounds: n, ..base.clone() };
            plan_channels(&w, strategy, unit).and_then(|p| p.check_feasible(cap)).is_ok()
        })
        .last()
        .unwrap_or(0)
}

/// Linear latency model, all times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(with = "string_num")]
    pub setup_base: f64,
    /// Per byte of declared capacity, both directions.
    #[serde(with = "string_num")]
    pub setup_per_byte: f64,
    /// Per byte actually transferred through a notarized channel.
    #[serde(with = "string_num")]
    pub transfer_per_byte: f64,
    #[serde(with = "string_num")]
    pub rtt: f64,
    #[serde(with = "string_num")]
    pub api_latency: f64,
    /// Fixed online cost of bringing up a fresh session for a round.
    #[serde(with = "string_num")]
    pub session_online: f64,
    /// Constant per-request cost of an attested proxy.
    #[serde(with = "string_num")]
    pub proxy_overhead: f64,
}

impl CostModel {
    pub fn zero() -> Self {
        Self { setup_base: 0.0, setup_per_byte: 0.0, transfer_per_byte: 0.0, rtt: 0.0, api_latency: 0.0, session_online: 0.0, proxy_overhead: 0.0 }
    }

    /// The model fitted to the reference observations.
    pub fn calibrated() -> Self {
        calibrate(&reference_datapoints(), Self::reference_fixed()).expect("reference datapoints determine the model").model
    }

    /// Parameters that are measured directly rather than fitted.
    pub fn reference_fixed() -> Self {
        Self { rtt: 0.005, api_latency: 1.795, proxy_overhead: 0.17, ..Self::zero() }
    }

    pub fn setup_time(&self, capacity_bytes: f64) -> f64 {
        self.setup_base + self.setup_per_byte * capacity_bytes
    }

    fn channel_setup(&self, c: &Channel) -> f64 {
        self.setup_time((c.capacity.up + c.capacity.down) as f64)
    }

    pub fn direct_latency(&self) -> f64 {
        self.rtt + self.api_latency
    }

    /// One notarized exchange of `transfer` bytes.
    pub fn exchange(&self, transfer: u64) -> f64 {
        self.rtt + self.api_latency + self.transfer_per_byte * transfer as f64
    }

    fn params(&self) -> [f64; 4] {
        [self.setup_base, self.setup_per_byte, self.transfer_per_byte, self.session_online]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    SetupStart { channel: usize },
    SetupDone { channel: usize },
    RoundStart { round: u32 },
    RoundDone { round: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: u32,
    pub transcript: u64,
    /// Wait for the round's channel after the previous round finished.
    pub uncovered_setup: f64,
    pub latency: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub strategy: Strategy,
    /// Setup paid before the first message can be sent.
    pub setup_total: f64,
    pub rounds: Vec<RoundResult>,
    pub events: Vec<Event>,
}

impl SimulationResult {
    pub fn latencies(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.latency).collect()
    }

    /// Mean per-message latency over the first `n` rounds.
    pub fn mean_latency(&self, n: usize) -> f64 {
        let n = n.min(self.rounds.len()).max(1);
        self.rounds.iter().take(n).map(|r| r.latency).sum::<f64>() / n as f64
    }

    /// Setup plus all round latencies.
    pub fn total_time(&self) -> f64 {
        self.setup_total + self.rounds.last().map_or(0.0, |r| r.cumulative)
    }
}

/// Ordered event queue entry; ties break by insertion order.
#[derive(Debug, PartialEq)]
struct Pending {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

struct Queue {
    heap: BinaryHeap<Reverse<Pending>>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Pending { time, seq: self.seq, kind }));
    }
}

/// Discrete-event simulation of a plan on a virtual clock. Time zero is when
/// the first channel starts its setup; round 1 starts once that channel is
/// ready. Channel k+1 starts its setup when round k starts.
pub fn simulate(plan: &ChannelPlan, model: &CostModel) -> SimulationResult {
    let w = &plan.workload;
    let n = w.rounds;
    let mut q = Queue { heap: BinaryHeap::new(), seq: 0 };
    let mut events = Vec::new();
    let mut ready = vec![None; plan.channels.len()];
    let channel_of = |k: u32| plan.channels.iter().rposition(|c| c.first_round <= k);
    let exchange = |k: u32| match plan.strategy {
        Strategy::Direct => model.direct_latency(),
        Strategy::Proxy => model.direct_latency() + model.proxy_overhead,
        Strategy::Naive => model.exchange(w.transcript(k)),
        Strategy::Optimized => model.exchange(w.transcript(k)) + model.session_online,
    };

    if plan.channels.is_empty() {
        if n > 0 {
            q.push(0.0, EventKind::RoundStart { round: 1 });
        }
    } else {
        q.push(0.0, EventKind::SetupStart { channel: 0 });
    }
    let mut setup_total = 0.0;
    let mut prev_done = None::<f64>;
    let mut waiting: Option<u32> = None;
    let mut rounds = Vec::new();
    let mut start_of = vec![0.0; n as usize + 1];

    while let Some(Reverse(ev)) = q.heap.pop() {
        events.push(Event { time: ev.time, kind: ev.kind });
        match ev.kind {
            EventKind::SetupStart { channel } => {
                q.push(ev.time + model.channel_setup(&plan.channels[channel]), EventKind::SetupDone { channel });
            }
            EventKind::SetupDone { channel } => {
                ready[channel] = Some(ev.time);
                if channel == 0 {
                    setup_total = ev.time;
                    q.push(ev.time, EventKind::RoundStart { round: 1 });
                } else if waiting == Some(plan.channels[channel].first_round) {
                    waiting = None;
                    q.push(ev.time, EventKind::RoundStart { round: plan.channels[channel].first_round });
                }
            }
            EventKind::RoundStart { round } => {
                start_of[round as usize] = ev.time;
                if let Some(next) = channel_of(round).map(|c| c + 1).filter(|&c| c < plan.channels.len()) {
                    if plan.channels[next].first_round == round + 1 {
                        q.push(ev.time, EventKind::SetupStart { channel: next });
                    }
                }
                q.push(ev.time + exchange(round), EventKind::RoundDone { round });
            }
            EventKind::RoundDone { round } => {
                let sent = prev_done.unwrap_or(start_of[round as usize]);
                let uncovered = start_of[round as usize] - sent;
                let latency = ev.time - sent;
                let cumulative = rounds.last().map_or(0.0, |r: &RoundResult| r.cumulative) + latency;
                rounds.push(RoundResult { round, transcript: w.transcript(round), uncovered_setup: uncovered, latency, cumulative });
                prev_done = Some(ev.time);
                if round < n {
                    let next = round + 1;
                    match channel_of(next) {
                        Some(c) if ready[c].is_none() => waiting = Some(next),
                        _ => q.push(ev.time, EventKind::RoundStart { round: next }),
                    }
                }
            }
        }
    }
    SimulationResult { strategy: plan.strategy, setup_total, rounds, events }
}

/// Closed-form latencies for a plan; must agree with [`simulate`].
pub fn analytic_latencies(plan: &ChannelPlan, model: &CostModel) -> (f64, Vec<f64>) {
    let w = &plan.workload;
    match plan.strategy {
        Strategy::Direct => (0.0, vec![model.direct_latency(); w.rounds as usize]),
        Strategy::Proxy => (0.0, vec![model.direct_latency() + model.proxy_overhead; w.rounds as usize]),
        Strategy::Naive => {
            let setup = plan.channels.first().map_or(0.0, |c| model.channel_setup(c));
            (setup, (1..=w.rounds).map(|k| model.exchange(w.transcript(k))).collect())
        }
        Strategy::Optimized => {
            let setup = plan.channels.first().map_or(0.0, |c| model.channel_setup(c));
            let mut out = Vec::new();
            for k in 1..=w.rounds {
                let exchange = model.exchange(w.transcript(k)) + model.session_online;
                let uncovered = if k == 1 {
                    0.0
                } else {
                    // channel k started when round k-1 started
                    let prev = model.exchange(w.transcript(k - 1)) + model.session_online;
                    (model.channel_setup(&plan.channels[k as usize - 1]) - prev).max(0.0)
                };
                out.push(uncovered + exchange);
            }
            (setup, out)
        }
    }
}

/// One observation for calibration, linear in the fitted parameters
/// (setup_base, setup_per_byte, transfer_per_byte, session_online).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datapoint {
    pub label: String,
    pub coefficients: [f64; 4],
    /// Part of the observation explained by fixed parameters.
    pub offset: f64,
    pub observed: f64,
}

impl Datapoint {
    /// Setup of one channel with `capacity_bytes` in total.
    pub fn setup(label: &str, capacity_bytes: u64, observed: f64) -> Self {
        Self { label: label.into(), coefficients: [1.0, capacity_bytes as f64, 0.0, 0.0], offset: 0.0, observed }
    }

    /// Mean latency of notarized exchanges with the given transcripts; with
    /// `fresh_session` each exchange also brings up a session.
    pub fn mean_latency(label: &str, transcripts: &[u64], fresh_session: bool, fixed: &CostModel, observed: f64) -> Self {
        let mean = transcripts.iter().sum::<u64>() as f64 / transcripts.len().max(1) as f64;
        Self { label: label.into(), coefficients: [0.0, 0.0, mean, if fresh_session { 1.0 } else { 0.0 }], offset: fixed.direct_latency(), observed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub model: CostModel,
    /// Predicted minus observed, per datapoint.
    pub residuals: Vec<f64>,
}

/// Least-squares fit of the four linear parameters; `fixed` supplies rtt,
/// api latency and proxy overhead.
pub fn calibrate(points: &[Datapoint], fixed: CostModel) -> Result<Calibration, SimError> {
    const P: usize = 4;
    if points.len() < P {
        return Err(SimError::TooFewDatapoints { needed: P, got: points.len() });
    }
    // Scale columns so byte-sized coefficients do not swamp the rank test.
    let mut scale = [0.0f64; P];
    for p in points {
        for (s, c) in scale.iter_mut().zip(p.coefficients) {
            *s = s.max(c.abs());
        }
    }
    let a = DMatrix::from_fn(points.len(), P, |i, j| if scale[j] > 0.0 { points[i].coefficients[j] / scale[j] } else { 0.0 });
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.observed - p.offset));
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * max_sv.max(1e-300)).count();
    if rank < P {
        return Err(SimError::Degenerate { rank, needed: P });
    }
    let x = svd.solve(&b, 1e-12 * max_sv).map_err(|_| SimError::Degenerate { rank, needed: P })?;
    let params: Vec<f64> = (0..P).map(|j| x[j] / scale[j]).collect();
    let model = CostModel { setup_base: params[0], setup_per_byte: params[1], transfer_per_byte: params[2], session_online: params[3], ..fixed };
    let residuals =
        points.iter().map(|p| p.offset + p.coefficients.iter().zip(model.params()).map(|(c, v)| c * v).sum::<f64>() - p.observed).collect();
    Ok(Calibration { model, residuals })
}

/// Reference observations: naive six-round setup 9.8 s, optimized first
/// channel setup 1.5 s, first notarized round 2.46 s (direct 1.80 s), naive
/// short-horizon mean 2.1 s.
pub fn reference_datapoints() -> Vec<Datapoint> {
    let fixed = CostModel::reference_fixed();
    let w = SessionWorkload::reference(6);
    let naive = plan_channels(&w, Strategy::Naive, CALIBRATED_UNIT).expect("unit is positive");
    let opt = plan_channels(&w, Strategy::Optimized, CALIBRATED_UNIT).expect("unit is positive");
    let bytes = |c: &Channel| c.capacity.up + c.capacity.down;
    let transcripts: Vec<u64> = (1..=6).map(|k| w.transcript(k)).collect();
    vec![
        Datapoint::setup("naive-6-round-setup", bytes(&naive.channels[0]), 9.8),
        Datapoint::setup("optimized-setup", bytes(&opt.channels[0]), 1.5),
        Datapoint::mean_latency("optimized-first-round", &transcripts[..1], true, &fixed, 2.46),
        Datapoint::mean_latency("naive-short-horizon-mean", &transcripts, false, &fixed, 2.1),
    ]
}

/// Rows for `bench channels --csv`.
pub fn csv(results: &[SimulationResult]) -> String {
    let mut out = String::from("strategy,round,transcript_bytes,uncovered_setup_s,latency_s,cumulative_s,setup_total_s\n");
    for r in results {
        for row in &r.rounds {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.strategy.name(),
                row.round,
                row.transcript,
                row.uncovered_setup,
                row.latency,
                row.cumulative,
                r.setup_total
            ));
        }
    }
    out
}
