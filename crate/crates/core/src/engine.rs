//! Deterministic discrete-event core: event queue, simulation clock, seeded
//! traffic generation, and orchestration of the phy and protocol state
//! machines over one run.
//!
//! A run is strictly single-threaded and share-nothing: identical
//! `(config, seed)` pairs produce byte-identical event logs. Sweeps may
//! execute many runs concurrently by instantiating the engine per run.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use core::fmt::Write as _;

use crate::error::ConfigError;
use crate::metrics::{MetricsReport, NodeMetrics};
use crate::phy::{self, Geometry, Outcome, RadioConfig};
use crate::protocol::{
    fragment_payload, nack_frame_bytes, AfterTx, AppPacket, GatewayState, GenAction, GroupNack,
    NodeState, PacketId, ReceivedUplink, Strategy, Uplink,
};
use crate::rng::{purpose, Stream};

/// One radio channel. Frequency is a label for logs; the interference model
/// treats channels as perfectly orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub frequency_hz: f64,
}

/// Spacing used when synthesising a default channel plan.
pub const CHANNEL_SPACING_HZ: f64 = 200_000.0;
pub const BASE_FREQUENCY_HZ: f64 = 868_100_000.0;

/// Builds `count` channels starting at the 868 MHz base frequency.
pub fn default_channels(count: u16) -> Vec<Channel> {
    (0..count)
        .map(|i| Channel {
            frequency_hz: BASE_FREQUENCY_HZ + CHANNEL_SPACING_HZ * i as f64,
        })
        .collect()
}

/// Application traffic process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrafficModel {
    /// Fixed inter-arrival with a per-node uniform random phase.
    Periodic { interval_s: f64 },
    /// Exponential inter-arrivals with the given mean.
    Poisson { mean_interval_s: f64 },
}

impl TrafficModel {
    pub fn nominal_interval_s(&self) -> f64 {
        match *self {
            TrafficModel::Periodic { interval_s } => interval_s,
            TrafficModel::Poisson { mean_interval_s } => mean_interval_s,
        }
    }
}

/// How long a run lasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunLength {
    /// Run until every node drains (buffers empty, sessions concluded).
    Drain,
    /// Hard cutoff at the given simulation time: whatever is still queued
    /// or in flight then counts as not correct.
    Seconds(f64),
}

/// Everything a run needs. All fields have defaults reproducing the dense
/// single-channel SF7 scenario (200 B payloads, 1% duty cycle).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub node_count: u32,
    pub channels: Vec<Channel>,
    pub radio: RadioConfig,
    pub duty_cycle_percent: f64,
    pub strategy: Strategy,
    pub payload_bytes: u32,
    pub fragment_header_bytes: u32,
    pub packets_per_node: u32,
    pub traffic: TrafficModel,
    pub run_length: RunLength,
    pub seed: u64,
    pub capture_margin_db: Option<f64>,
    pub sensitivity_dbm: f64,
    pub geometry: Geometry,
    pub rx1_delay_s: f64,
    pub rx2_delay_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            node_count: 50,
            channels: default_channels(1),
            radio: RadioConfig::default(),
            duty_cycle_percent: 1.0,
            strategy: Strategy::Aloha,
            payload_bytes: 200,
            fragment_header_bytes: 9,
            packets_per_node: 100,
            traffic: TrafficModel::Poisson {
                mean_interval_s: 120.0,
            },
            run_length: RunLength::Drain,
            seed: 1,
            capture_margin_db: None,
            sensitivity_dbm: phy::DEFAULT_SENSITIVITY_DBM,
            geometry: Geometry::default(),
            rx1_delay_s: 1.0,
            rx2_delay_s: 2.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_count == 0 {
            return Err(ConfigError::NodeCount(self.node_count));
        }
        if self.channels.is_empty() {
            return Err(ConfigError::NoChannels);
        }
        self.radio.validate()?;
        if self.duty_cycle_percent.is_nan()
            || self.duty_cycle_percent <= 0.0
            || self.duty_cycle_percent > 100.0
        {
            return Err(ConfigError::DutyCycle(self.duty_cycle_percent));
        }
        self.strategy.validate()?;
        if self.payload_bytes == 0 {
            return Err(ConfigError::FrameBytes(self.payload_bytes));
        }
        // Fragmentation must be feasible for the configured payload.
        fragment_payload(self.payload_bytes, self.strategy.fragments())?;
        if self.packets_per_node == 0 {
            return Err(ConfigError::PacketsPerNode(self.packets_per_node));
        }
        let interval = self.traffic.nominal_interval_s();
        if !interval.is_finite() || interval <= 0.0 {
            return Err(ConfigError::TrafficInterval(interval));
        }
        if let RunLength::Seconds(s) = self.run_length {
            if s.is_nan() || s <= 0.0 {
                return Err(ConfigError::SimDuration(s));
            }
        }
        if let Some(margin) = self.capture_margin_db {
            if margin.is_nan() || margin < 0.0 {
                return Err(ConfigError::CaptureMargin(margin));
            }
        }
        if self.rx1_delay_s.is_nan()
            || self.rx2_delay_s.is_nan()
            || self.rx1_delay_s <= 0.0
            || self.rx2_delay_s <= self.rx1_delay_s
        {
            return Err(ConfigError::ReceiveWindows {
                rx1_s: self.rx1_delay_s,
                rx2_s: self.rx2_delay_s,
            });
        }
        self.geometry.validate()?;
        Ok(())
    }

    /// Receive-window listen duration: long enough to detect a downlink
    /// preamble.
    pub fn rx_window_s(&self) -> f64 {
        self.radio.preamble_duration_s()
    }

    /// On-air size of a group NACK for this scenario.
    pub fn nack_bytes(&self) -> u32 {
        nack_frame_bytes(self.strategy.fragments(), self.fragment_header_bytes)
    }

    /// The effective cutoff time of the run (infinite for [`RunLength::Drain`]).
    pub fn resolve_horizon_s(&self) -> Result<f64, ConfigError> {
        match self.run_length {
            RunLength::Drain => Ok(f64::INFINITY),
            RunLength::Seconds(s) => Ok(s),
        }
    }
}

/// Produces the per-node arrival times for one traffic source.
///
/// Exactly `packets` arrivals. The periodic model spaces them by the
/// configured interval with a uniform random phase in `[0, interval)`; the
/// Poisson model draws exponential inter-arrivals.
pub fn generate_traffic(model: &TrafficModel, packets: u32, stream: &mut Stream) -> Vec<f64> {
    match *model {
        TrafficModel::Periodic { interval_s } => {
            let phase = stream.next_f64() * interval_s;
            (0..packets)
                .map(|k| phase + k as f64 * interval_s)
                .collect()
        }
        TrafficModel::Poisson { mean_interval_s } => {
            let mut t = 0.0;
            (0..packets)
                .map(|_| {
                    t += stream.next_exp(mean_interval_s);
                    t
                })
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Event log
// ---------------------------------------------------------------------------

/// Log record kinds, one per line in the serialized log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    PacketGenerated,
    TxStart,
    TxEnd,
    RxWindowOpen,
    RxWindowClose,
    NackTx,
    ChannelFree,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::PacketGenerated => "PacketGenerated",
            EventKind::TxStart => "TxStart",
            EventKind::TxEnd => "TxEnd",
            EventKind::RxWindowOpen => "RxWindowOpen",
            EventKind::RxWindowClose => "RxWindowClose",
            EventKind::NackTx => "NackTx",
            EventKind::ChannelFree => "ChannelFree",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subject {
    Node(u32),
    Gateway,
}

/// Per-kind detail carried in the `outcome` column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detail {
    /// `tx` | `buf` | `drop`
    Generated(GenAction),
    /// `p<seq>` for whole packets, `p<seq>.f<i>.s<k>` for fragments.
    TxStart {
        pkt_seq: u32,
        fragment: Option<FragmentTag>,
    },
    /// `ok` | `col` | `low`
    TxEnd(Outcome),
    /// `w1` | `w2`
    WindowOpen {
        which: u8,
    },
    /// `w1.empty` | `w1.nack` | `w2.empty`
    WindowClose {
        which: u8,
        got_nack: bool,
    },
    /// `n<node>.p<seq>.b<bitmap>` with bit i printed 1 when fragment i was
    /// received.
    Nack {
        node: u32,
        pkt_seq: u32,
        bitmap: u64,
        n_f: u8,
    },
    None,
}

/// One simulated event, as it appears in the serialized log.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub subject: Subject,
    pub channel: Option<u16>,
    pub bytes: Option<u32>,
    pub detail: Detail,
}

impl EventRecord {
    /// Serializes to the stable tab-separated line format:
    /// `time  kind  subject  channel  bytes  outcome`.
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}\t{}\t", self.time, self.kind.as_str());
        match self.subject {
            Subject::Node(n) => {
                let _ = write!(s, "n{n}");
            }
            Subject::Gateway => s.push_str("gw"),
        }
        s.push('\t');
        match self.channel {
            Some(c) => {
                let _ = write!(s, "{c}");
            }
            None => s.push('-'),
        }
        s.push('\t');
        match self.bytes {
            Some(b) => {
                let _ = write!(s, "{b}");
            }
            None => s.push('-'),
        }
        s.push('\t');
        match self.detail {
            Detail::Generated(GenAction::StartNow) => s.push_str("tx"),
            Detail::Generated(GenAction::Buffered) => s.push_str("buf"),
            Detail::Generated(GenAction::Dropped) => s.push_str("drop"),
            Detail::TxStart { pkt_seq, fragment } => {
                let _ = write!(s, "p{pkt_seq}");
                if let Some(tag) = fragment {
                    let _ = write!(s, ".f{}.s{}", tag.seq_index, tag.session);
                }
            }
            Detail::TxEnd(Outcome::Delivered) => s.push_str("ok"),
            Detail::TxEnd(Outcome::Collided) => s.push_str("col"),
            Detail::TxEnd(Outcome::BelowSensitivity) => s.push_str("low"),
            Detail::WindowOpen { which } => {
                let _ = write!(s, "w{which}");
            }
            Detail::WindowClose { which, got_nack } => {
                let _ = write!(s, "w{which}.{}", if got_nack { "nack" } else { "empty" });
            }
            Detail::Nack {
                node,
                pkt_seq,
                bitmap,
                n_f,
            } => {
                let _ = write!(s, "n{node}.p{pkt_seq}.b");
                for i in 0..n_f {
                    s.push(if bitmap & (1 << i) != 0 { '1' } else { '0' });
                }
            }
            Detail::None => s.push('-'),
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragmentTag {
    pub seq_index: u8,
    pub session: u8,
}

/// Append-only record of everything a run did, sufficient to re-derive the
/// full metrics report offline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    /// Serializes the log with its scenario embedded as `#`-prefixed header
    /// lines, making the file self-contained for replay.
    pub fn to_text(&self, config: &ScenarioConfig) -> String {
        let mut out = String::with_capacity(64 + self.records.len() * 40);
        out.push_str("# fragsim event log v1\n");
        for line in crate::config::to_text(config).lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("# columns: time kind subject channel bytes outcome\n");
        for rec in &self.records {
            out.push_str(&rec.to_line());
            out.push('\n');
        }
        out
    }
}

/// A failed parse of a serialized event log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

impl core::fmt::Display for LogParseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl core::error::Error for LogParseError {}

fn parse_subject(s: &str) -> Option<Subject> {
    if s == "gw" {
        return Some(Subject::Gateway);
    }
    s.strip_prefix('n')?.parse().ok().map(Subject::Node)
}

fn parse_detail(kind: EventKind, s: &str) -> Option<Detail> {
    match kind {
        EventKind::PacketGenerated => match s {
            "tx" => Some(Detail::Generated(GenAction::StartNow)),
            "buf" => Some(Detail::Generated(GenAction::Buffered)),
            "drop" => Some(Detail::Generated(GenAction::Dropped)),
            _ => None,
        },
        EventKind::TxStart => {
            let mut parts = s.split('.');
            let pkt_seq: u32 = parts.next()?.strip_prefix('p')?.parse().ok()?;
            let fragment = match parts.next() {
                Some(f) => {
                    let seq_index: u8 = f.strip_prefix('f')?.parse().ok()?;
                    let session: u8 = parts.next()?.strip_prefix('s')?.parse().ok()?;
                    Some(FragmentTag { seq_index, session })
                }
                None => None,
            };
            Some(Detail::TxStart { pkt_seq, fragment })
        }
        EventKind::TxEnd => match s {
            "ok" => Some(Detail::TxEnd(Outcome::Delivered)),
            "col" => Some(Detail::TxEnd(Outcome::Collided)),
            "low" => Some(Detail::TxEnd(Outcome::BelowSensitivity)),
            _ => None,
        },
        EventKind::RxWindowOpen => {
            let which: u8 = s.strip_prefix('w')?.parse().ok()?;
            Some(Detail::WindowOpen { which })
        }
        EventKind::RxWindowClose => {
            let mut parts = s.split('.');
            let which: u8 = parts.next()?.strip_prefix('w')?.parse().ok()?;
            let got_nack = match parts.next()? {
                "nack" => true,
                "empty" => false,
                _ => return None,
            };
            Some(Detail::WindowClose { which, got_nack })
        }
        EventKind::NackTx => {
            let mut parts = s.split('.');
            let node: u32 = parts.next()?.strip_prefix('n')?.parse().ok()?;
            let pkt_seq: u32 = parts.next()?.strip_prefix('p')?.parse().ok()?;
            let bits = parts.next()?.strip_prefix('b')?;
            let mut bitmap = 0u64;
            for (i, c) in bits.chars().enumerate() {
                match c {
                    '1' => bitmap |= 1 << i,
                    '0' => {}
                    _ => return None,
                }
            }
            Some(Detail::Nack {
                node,
                pkt_seq,
                bitmap,
                n_f: bits.len() as u8,
            })
        }
        EventKind::ChannelFree => (s == "-").then_some(Detail::None),
    }
}

/// Parses one serialized record line.
pub fn parse_record_line(line: &str) -> Option<EventRecord> {
    let mut f = line.split('\t');
    let time: f64 = f.next()?.parse().ok()?;
    let kind = match f.next()? {
        "PacketGenerated" => EventKind::PacketGenerated,
        "TxStart" => EventKind::TxStart,
        "TxEnd" => EventKind::TxEnd,
        "RxWindowOpen" => EventKind::RxWindowOpen,
        "RxWindowClose" => EventKind::RxWindowClose,
        "NackTx" => EventKind::NackTx,
        "ChannelFree" => EventKind::ChannelFree,
        _ => return None,
    };
    let subject = parse_subject(f.next()?)?;
    let channel = match f.next()? {
        "-" => None,
        c => Some(c.parse().ok()?),
    };
    let bytes = match f.next()? {
        "-" => None,
        b => Some(b.parse().ok()?),
    };
    let detail = parse_detail(kind, f.next()?)?;
    if f.next().is_some() {
        return None;
    }
    Some(EventRecord {
        time,
        kind,
        subject,
        channel,
        bytes,
        detail,
    })
}

/// Parses a serialized log back into its embedded scenario and records.
pub fn parse_log_text(text: &str) -> Result<(ScenarioConfig, EventLog), LogParseError> {
    let mut config_text = String::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if rest.contains('=') {
                config_text.push_str(rest);
                config_text.push('\n');
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record_line(line).ok_or_else(|| LogParseError {
            line: lineno,
            message: String::from("malformed event record"),
        })?;
        records.push(rec);
    }
    let config = crate::config::parse_text(&config_text).map_err(|e| LogParseError {
        line: 0,
        message: alloc::format!("embedded config: {e}"),
    })?;
    Ok((config, EventLog { records }))
}

// ---------------------------------------------------------------------------
// Engine internals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Act {
    TxEnd,
    WindowOpen { which: u8 },
    NackStart { nack: GroupNack, channel: u16 },
    NackArrive { nack: GroupNack },
    WindowClose { which: u8 },
    ChannelWake { channel: u16 },
    Arrival { pkt_seq: u32 },
}

impl Act {
    fn rank(&self) -> u8 {
        match self {
            Act::TxEnd => 0,
            Act::WindowOpen { .. } => 1,
            Act::NackStart { .. } => 2,
            Act::NackArrive { .. } => 3,
            Act::WindowClose { .. } => 4,
            Act::ChannelWake { .. } => 5,
            Act::Arrival { .. } => 6,
        }
    }
}

#[derive(Debug, Clone)]
struct Ev {
    time: f64,
    node: u32,
    rank: u8,
    seq: u64,
    act: Act,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Ev {}

impl Ord for Ev {
    // Equal-time ties break on (stable node index, event kind, insertion).
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.node.cmp(&other.node))
            .then_with(|| self.rank.cmp(&other.rank))
            .then_with(|| self.seq.cmp(&other.seq))
    }
}
impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct ActiveTx {
    node: u32,
    mw: f64,
    end: f64,
}

#[derive(Debug, Clone)]
struct CurrentTx {
    uplink: Uplink,
    channel: u16,
    toa: f64,
    /// Aggregate received power of everything that has overlapped this
    /// transmission so far.
    interference_mw: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct NodeAccum {
    asked: u64,
    sent: u64,
    energy_j: f64,
}

/// Options controlling a single run.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Collect the full event log (sweeps usually skip it).
    pub collect_log: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { collect_log: true }
    }
}

/// Result of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsReport,
    pub log: Option<EventLog>,
}

/// Executes one scenario, collecting the event log.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    run_with_options(config, RunOptions::default())
}

/// Executes one scenario.
pub fn run_with_options(
    config: &ScenarioConfig,
    options: RunOptions,
) -> Result<RunOutput, ConfigError> {
    let mut sim = Sim::new(config, options)?;
    sim.schedule_arrivals();
    sim.run_loop();
    Ok(sim.finish())
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    horizon: f64,
    window_s: f64,
    nack_bytes: u32,
    nack_toa: f64,
    nodes: Vec<NodeState>,
    rx_power_dbm: Vec<f64>,
    rx_power_mw: Vec<f64>,
    chan_streams: Vec<Stream>,
    gateway: GatewayState,
    queue: BinaryHeap<Reverse<Ev>>,
    next_seq: u64,
    active: Vec<Vec<ActiveTx>>,
    current: Vec<Option<CurrentTx>>,
    wake_pending: Vec<bool>,
    log: Option<Vec<EventRecord>>,
    m_asked: u64,
    m_sent: u64,
    node_energy_j: f64,
    gateway_energy_j: f64,
    per_node: Vec<NodeAccum>,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, options: RunOptions) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let horizon = cfg.resolve_horizon_s()?;
        let n = cfg.node_count as usize;
        let channels = cfg.channels.len();

        let mut nodes = Vec::with_capacity(n);
        let mut rx_power_dbm = Vec::with_capacity(n);
        let mut chan_streams = Vec::with_capacity(n);
        for i in 0..cfg.node_count {
            nodes.push(NodeState::new(
                i,
                cfg.strategy,
                cfg.fragment_header_bytes,
                cfg.duty_cycle_percent,
                channels,
            )?);
            let mut placement = Stream::derive(cfg.seed, i as u64, purpose::PLACEMENT);
            let distance = cfg.geometry.radius_m * libm::sqrt(placement.next_f64());
            rx_power_dbm.push(
                cfg.geometry
                    .received_power_dbm(cfg.radio.tx_power_dbm, distance),
            );
            chan_streams.push(Stream::derive(cfg.seed, i as u64, purpose::CHANNEL));
        }
        let rx_power_mw = rx_power_dbm.iter().map(|&p| phy::dbm_to_mw(p)).collect();
        let nack_bytes = cfg.nack_bytes();
        let nack_toa = phy::compute_toa(nack_bytes, &cfg.radio)?;

        Ok(Self {
            cfg,
            horizon,
            window_s: cfg.rx_window_s(),
            nack_bytes,
            nack_toa,
            nodes,
            rx_power_dbm,
            rx_power_mw,
            chan_streams,
            gateway: GatewayState::new(cfg.strategy, cfg.node_count),
            queue: BinaryHeap::new(),
            next_seq: 0,
            active: vec![Vec::new(); channels],
            current: vec![None; n],
            wake_pending: vec![false; n],
            log: options.collect_log.then(Vec::new),
            m_asked: 0,
            m_sent: 0,
            node_energy_j: 0.0,
            gateway_energy_j: 0.0,
            per_node: vec![NodeAccum::default(); n],
        })
    }

    fn push(&mut self, time: f64, node: u32, act: Act) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let rank = act.rank();
        self.queue.push(Reverse(Ev {
            time,
            node,
            rank,
            seq,
            act,
        }));
    }

    fn record(
        &mut self,
        time: f64,
        kind: EventKind,
        subject: Subject,
        channel: Option<u16>,
        bytes: Option<u32>,
        detail: Detail,
    ) {
        if let Some(log) = &mut self.log {
            log.push(EventRecord {
                time,
                kind,
                subject,
                channel,
                bytes,
                detail,
            });
        }
    }

    fn schedule_arrivals(&mut self) {
        for i in 0..self.cfg.node_count {
            let mut traffic = Stream::derive(self.cfg.seed, i as u64, purpose::TRAFFIC);
            let times =
                generate_traffic(&self.cfg.traffic, self.cfg.packets_per_node, &mut traffic);
            for (k, t) in times.into_iter().enumerate() {
                self.push(t, i, Act::Arrival { pkt_seq: k as u32 });
            }
        }
    }

    fn run_loop(&mut self) {
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time > self.horizon {
                // Past the cutoff only in-flight transmissions resolve, so
                // every TxStart stays paired with a TxEnd; nothing new is
                // scheduled and nothing counts towards delivery.
                if let Act::TxEnd = ev.act {
                    self.on_tx_end(ev.node, ev.time, true);
                }
                continue;
            }
            self.dispatch(ev);
        }
    }

    fn dispatch(&mut self, ev: Ev) {
        let now = ev.time;
        let node = ev.node;
        match ev.act {
            Act::Arrival { pkt_seq } => self.on_arrival(node, pkt_seq, now),
            Act::TxEnd => self.on_tx_end(node, now, false),
            Act::WindowOpen { which } => {
                self.record(
                    now,
                    EventKind::RxWindowOpen,
                    Subject::Node(node),
                    None,
                    None,
                    Detail::WindowOpen { which },
                );
                let e = self.cfg.radio.rx_energy_j(self.window_s);
                self.node_energy_j += e;
                self.per_node[node as usize].energy_j += e;
            }
            Act::WindowClose { which } => {
                self.record(
                    now,
                    EventKind::RxWindowClose,
                    Subject::Node(node),
                    None,
                    None,
                    Detail::WindowClose {
                        which,
                        got_nack: false,
                    },
                );
                if which == 2 {
                    self.nodes[node as usize].on_windows_elapsed();
                    self.try_start(node, now);
                }
            }
            Act::NackStart { nack, channel } => {
                self.record(
                    now,
                    EventKind::NackTx,
                    Subject::Gateway,
                    Some(channel),
                    Some(self.nack_bytes),
                    Detail::Nack {
                        node,
                        pkt_seq: nack.packet_id.seq,
                        bitmap: nack.bitmap.raw(),
                        n_f: nack.n_f,
                    },
                );
                self.gateway_energy_j += self.cfg.radio.tx_energy_j(self.nack_toa);
                let e = self.cfg.radio.rx_energy_j(self.nack_toa);
                self.node_energy_j += e;
                self.per_node[node as usize].energy_j += e;
                self.push(now + self.nack_toa, node, Act::NackArrive { nack });
            }
            Act::NackArrive { nack } => {
                self.record(
                    now,
                    EventKind::RxWindowClose,
                    Subject::Node(node),
                    None,
                    None,
                    Detail::WindowClose {
                        which: 1,
                        got_nack: true,
                    },
                );
                let applied = self.nodes[node as usize].on_nack(&nack);
                debug_assert!(
                    applied.is_ok(),
                    "engine delivered a stale NACK: {applied:?}"
                );
                self.try_start(node, now);
            }
            Act::ChannelWake { channel } => {
                self.wake_pending[node as usize] = false;
                self.record(
                    now,
                    EventKind::ChannelFree,
                    Subject::Node(node),
                    Some(channel),
                    None,
                    Detail::None,
                );
                self.try_start(node, now);
            }
        }
    }

    fn on_arrival(&mut self, node: u32, pkt_seq: u32, now: f64) {
        self.m_asked += 1;
        self.per_node[node as usize].asked += 1;
        let pkt = AppPacket {
            packet_id: PacketId { node, seq: pkt_seq },
            payload_bytes: self.cfg.payload_bytes,
            generated_at: now,
        };
        let action = self.nodes[node as usize].on_packet_generated(pkt, now);
        self.record(
            now,
            EventKind::PacketGenerated,
            Subject::Node(node),
            None,
            Some(self.cfg.payload_bytes),
            Detail::Generated(action),
        );
        if action == GenAction::StartNow {
            self.try_start(node, now);
        }
    }

    fn try_start(&mut self, node: u32, now: f64) {
        let n = node as usize;
        if let Some((uplink, channel)) = self.nodes[n].next_uplink(now, &mut self.chan_streams[n]) {
            self.begin_tx(node, uplink, channel, now);
        } else if self.nodes[n].has_work() && !self.wake_pending[n] {
            let (channel, t) = self.nodes[n].duty_cycle().earliest();
            debug_assert!(t > now);
            self.wake_pending[n] = true;
            self.push(
                t,
                node,
                Act::ChannelWake {
                    channel: channel as u16,
                },
            );
        }
    }

    fn begin_tx(&mut self, node: u32, uplink: Uplink, channel: u16, now: f64) {
        let n = node as usize;
        let toa = phy::compute_toa(uplink.frame_bytes, &self.cfg.radio)
            .expect("radio validated at configuration");
        if uplink.session == 0 && uplink.seq_index == 0 {
            self.m_sent += 1;
            self.per_node[n].sent += 1;
        }
        let my_mw = self.rx_power_mw[n];
        let mut interference = 0.0;
        let lane = &mut self.active[channel as usize];
        lane.retain(|a| a.end > now);
        for a in lane.iter() {
            interference += a.mw;
            self.current[a.node as usize]
                .as_mut()
                .expect("active transmission has current state")
                .interference_mw += my_mw;
        }
        lane.push(ActiveTx {
            node,
            mw: my_mw,
            end: now + toa,
        });
        self.current[n] = Some(CurrentTx {
            uplink,
            channel,
            toa,
            interference_mw: interference,
        });
        self.record(
            now,
            EventKind::TxStart,
            Subject::Node(node),
            Some(channel),
            Some(uplink.frame_bytes),
            Detail::TxStart {
                pkt_seq: uplink.packet_id.seq,
                fragment: uplink.is_fragment.then_some(FragmentTag {
                    seq_index: uplink.seq_index,
                    session: uplink.session,
                }),
            },
        );
        self.push(now + toa, node, Act::TxEnd);
    }

    fn on_tx_end(&mut self, node: u32, now: f64, after_cutoff: bool) {
        let n = node as usize;
        let ct = self.current[n]
            .take()
            .expect("TxEnd without a transmission");
        let lane = &mut self.active[ct.channel as usize];
        if let Some(pos) = lane.iter().position(|a| a.node == node) {
            lane.swap_remove(pos);
        }
        let outcome = phy::decide_outcome(
            self.rx_power_dbm[n],
            ct.interference_mw,
            self.cfg.sensitivity_dbm,
            self.cfg.capture_margin_db,
        );
        self.record(
            now,
            EventKind::TxEnd,
            Subject::Node(node),
            Some(ct.channel),
            Some(ct.uplink.frame_bytes),
            Detail::TxEnd(outcome),
        );
        let e = self.cfg.radio.tx_energy_j(ct.toa);
        self.node_energy_j += e;
        self.per_node[n].energy_j += e;
        if after_cutoff {
            return;
        }

        let mut nack_to_send = None;
        if outcome.is_delivered() {
            let gw_out = self.gateway.on_reception(&ReceivedUplink {
                packet_id: ct.uplink.packet_id,
                seq_index: ct.uplink.seq_index,
                is_fragment: ct.uplink.is_fragment,
                requests_nack: ct.uplink.requests_nack,
            });
            nack_to_send = gw_out.nack;
        }

        match self.nodes[n].on_tx_end(ct.channel, now, ct.toa, &ct.uplink) {
            AfterTx::MoreFragments | AfterTx::PacketConcluded => self.try_start(node, now),
            AfterTx::AwaitNack => {
                let t1 = now + self.cfg.rx1_delay_s;
                self.push(t1, node, Act::WindowOpen { which: 1 });
                if let Some(nack) = nack_to_send {
                    self.push(
                        t1,
                        node,
                        Act::NackStart {
                            nack,
                            channel: ct.channel,
                        },
                    );
                } else {
                    self.push(t1 + self.window_s, node, Act::WindowClose { which: 1 });
                    let t2 = now + self.cfg.rx2_delay_s;
                    self.push(t2, node, Act::WindowOpen { which: 2 });
                    self.push(t2 + self.window_s, node, Act::WindowClose { which: 2 });
                }
            }
        }
        debug_assert!(
            nack_to_send.is_none() || self.current[n].is_none(),
            "a scheduled NACK must follow a requesting uplink"
        );
    }

    fn finish(mut self) -> RunOutput {
        self.gateway.finalize();
        let correct_per_node = self.gateway.correct_per_node().to_vec();
        let mut per_node = Vec::with_capacity(self.per_node.len());
        let mut dropped_total = 0;
        for (i, acc) in self.per_node.iter().enumerate() {
            let dropped = self.nodes[i].dropped();
            dropped_total += dropped;
            per_node.push(NodeMetrics {
                asked: acc.asked,
                sent: acc.sent,
                correct: correct_per_node[i],
                dropped,
                energy_j: acc.energy_j,
            });
        }
        let metrics = MetricsReport {
            m_asked: self.m_asked,
            m_sent: self.m_sent,
            m_correct: self.gateway.m_correct(),
            dropped: dropped_total,
            node_energy_j: self.node_energy_j,
            gateway_energy_j: self.gateway_energy_j,
            per_node,
        };
        debug_assert!(metrics.m_correct <= metrics.m_sent);
        debug_assert!(metrics.m_sent <= metrics.m_asked);
        RunOutput {
            metrics,
            log: self.log.map(|records| EventLog { records }),
        }
    }
}
