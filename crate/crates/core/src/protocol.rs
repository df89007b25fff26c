//! Transmission strategies and the node/gateway protocol state machines.
//!
//! Nodes either send packets whole (Aloha, Buffered Aloha) or split them
//! into equal-size fragments. With retransmissions enabled, the last
//! fragment of each session requests a group NACK: a per-packet bitmap of
//! which fragments the gateway holds. The node then resends exactly the
//! fragments marked missing, up to a session budget, after which the gateway
//! discards whatever is still incomplete.
//!
//! The state machines are pure: the event engine owns the clock and the
//! channel, and drives them through the methods below.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{ConfigError, ProtocolError};
use crate::phy::DutyCycleLimiter;
use crate::rng::Stream;

/// Largest supported fragment count (bitmaps are stored in a u64).
pub const MAX_FRAGMENTS: u8 = 64;

/// Which of the four transmission policies a run uses. All nodes of a run
/// share one strategy, including the fragment count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Send unfragmented immediately, or drop if no channel is available.
    Aloha,
    /// Queue unfragmented packets until a channel becomes available.
    BufferedAloha,
    /// Buffered with fragmentation; incomplete packets are dropped by the
    /// gateway.
    Frag { fragments: u8 },
    /// Buffered with fragmentation and up to `sessions` group-NACK
    /// retransmission rounds per packet.
    FragRetx { fragments: u8, sessions: u8 },
}

impl Strategy {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            Strategy::Aloha | Strategy::BufferedAloha => Ok(()),
            Strategy::Frag { fragments } => {
                if !(2..=MAX_FRAGMENTS).contains(&fragments) {
                    return Err(ConfigError::FragmentCount(fragments));
                }
                Ok(())
            }
            Strategy::FragRetx {
                fragments,
                sessions,
            } => {
                if !(2..=MAX_FRAGMENTS).contains(&fragments) {
                    return Err(ConfigError::FragmentCount(fragments));
                }
                if sessions == 0 {
                    return Err(ConfigError::RetxSessions(sessions));
                }
                Ok(())
            }
        }
    }

    /// Fragments per packet; 1 for the unfragmented strategies.
    pub fn fragments(&self) -> u8 {
        match *self {
            Strategy::Aloha | Strategy::BufferedAloha => 1,
            Strategy::Frag { fragments } | Strategy::FragRetx { fragments, .. } => fragments,
        }
    }

    /// Retransmission session budget; 0 when NACKs are not used.
    pub fn sessions(&self) -> u8 {
        match *self {
            Strategy::FragRetx { sessions, .. } => sessions,
            _ => 0,
        }
    }

    pub fn is_fragmented(&self) -> bool {
        self.fragments() > 1
    }

    pub fn is_buffered(&self) -> bool {
        !matches!(self, Strategy::Aloha)
    }
}

/// Identifies an application packet: owning node plus per-node sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PacketId {
    pub node: u32,
    pub seq: u32,
}

/// One application payload unit, before fragmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppPacket {
    pub packet_id: PacketId,
    pub payload_bytes: u32,
    pub generated_at: f64,
}

/// Splits a payload into `n_f` sizes as equal as possible (max - min <= 1),
/// larger fragments first. The sizes always sum to `payload_bytes`.
pub fn fragment_payload(payload_bytes: u32, n_f: u8) -> Result<Vec<u32>, ConfigError> {
    if !(1..=MAX_FRAGMENTS).contains(&n_f) {
        return Err(ConfigError::FragmentCount(n_f));
    }
    if payload_bytes < n_f as u32 {
        return Err(ConfigError::PayloadTooSmall {
            payload_bytes,
            fragments: n_f,
        });
    }
    let n = n_f as u32;
    let base = payload_bytes / n;
    let remainder = payload_bytes % n;
    Ok((0..n)
        .map(|i| if i < remainder { base + 1 } else { base })
        .collect())
}

/// Per-packet fragment-status bitmap: bit `i` set means fragment `i` was
/// received. Holds up to [`MAX_FRAGMENTS`] fragments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FragBitmap(u64);

impl FragBitmap {
    pub fn empty() -> Self {
        Self(0)
    }

    pub fn set(&mut self, index: u8) {
        self.0 |= 1u64 << index;
    }

    pub fn get(&self, index: u8) -> bool {
        self.0 & (1u64 << index) != 0
    }

    pub fn is_complete(&self, n_f: u8) -> bool {
        self.0 == Self::full(n_f).0
    }

    pub fn full(n_f: u8) -> Self {
        debug_assert!((1..=MAX_FRAGMENTS).contains(&n_f));
        if n_f as u32 == 64 {
            Self(u64::MAX)
        } else {
            Self((1u64 << n_f) - 1)
        }
    }

    pub fn missing(&self, n_f: u8) -> impl Iterator<Item = u8> + '_ {
        let bits = self.0;
        (0..n_f).filter(move |&i| bits & (1u64 << i) == 0)
    }

    pub fn raw(&self) -> u64 {
        self.0
    }
}

/// Group NACK issued by the gateway: which fragments of one packet arrived.
/// Only constructible when at least one fragment is missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupNack {
    pub packet_id: PacketId,
    pub bitmap: FragBitmap,
    pub n_f: u8,
}

impl GroupNack {
    pub fn new(packet_id: PacketId, bitmap: FragBitmap, n_f: u8) -> Result<Self, ProtocolError> {
        if bitmap.is_complete(n_f) {
            return Err(ProtocolError::NackWithoutLoss);
        }
        Ok(Self {
            packet_id,
            bitmap,
            n_f,
        })
    }

    /// On-air frame size: header plus one bitmap bit per fragment, rounded
    /// up to whole bytes.
    pub fn frame_bytes(&self, header_bytes: u32) -> u32 {
        header_bytes + (self.n_f as u32).div_ceil(8)
    }
}

/// Frame size of a group NACK for a given fragment count.
pub fn nack_frame_bytes(n_f: u8, header_bytes: u32) -> u32 {
    header_bytes + (n_f as u32).div_ceil(8)
}

/// One uplink the node wants to put on the air.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uplink {
    pub packet_id: PacketId,
    /// Fragment sequence index; 0 for unfragmented packets.
    pub seq_index: u8,
    /// 0 for the initial session, k for the k-th retransmission session.
    pub session: u8,
    pub frame_bytes: u32,
    pub payload_bytes: u32,
    pub is_fragment: bool,
    /// True only on the transmission sent last in a session, when another
    /// NACK round is still permitted.
    pub requests_nack: bool,
}

/// What happened to a freshly generated packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenAction {
    /// Aloha with no channel available (or radio busy): counted, not sent.
    Dropped,
    /// Queued behind the current work.
    Buffered,
    /// The node is idle and may transmit now.
    StartNow,
}

/// Node guidance to the engine after a transmission ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfterTx {
    /// More fragments of the current session remain; wake the node when its
    /// duty cycle next allows.
    MoreFragments,
    /// The uplink requested a NACK; open the receive windows.
    AwaitNack,
    /// Packet concluded from the node's point of view; poll for more work.
    PacketConcluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Transmitting,
    AwaitingNack,
}

#[derive(Debug, Clone)]
struct InFlight {
    packet: AppPacket,
    frag_sizes: Vec<u32>,
    /// Sequence indices still to send in the current session.
    pending: VecDeque<u8>,
    sessions_used: u8,
}

/// Node-side protocol state machine.
#[derive(Debug, Clone)]
pub struct NodeState {
    id: u32,
    strategy: Strategy,
    header_bytes: u32,
    duty: DutyCycleLimiter,
    buffer: VecDeque<AppPacket>,
    in_flight: Option<InFlight>,
    phase: Phase,
    dropped: u64,
    avail_scratch: Vec<usize>,
}

impl NodeState {
    pub fn new(
        id: u32,
        strategy: Strategy,
        header_bytes: u32,
        duty_cycle_percent: f64,
        channels: usize,
    ) -> Result<Self, ConfigError> {
        strategy.validate()?;
        Ok(Self {
            id,
            strategy,
            header_bytes,
            duty: DutyCycleLimiter::new(duty_cycle_percent, channels)?,
            buffer: VecDeque::new(),
            in_flight: None,
            phase: Phase::Idle,
            dropped: 0,
            avail_scratch: Vec::new(),
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn duty_cycle(&self) -> &DutyCycleLimiter {
        &self.duty
    }

    /// True when the node has nothing queued, nothing in flight and is not
    /// waiting on receive windows.
    pub fn is_drained(&self) -> bool {
        self.phase == Phase::Idle && self.in_flight.is_none() && self.buffer.is_empty()
    }

    /// True when the node could transmit as soon as a channel frees up.
    pub fn has_work(&self) -> bool {
        self.phase == Phase::Idle && (self.in_flight.is_some() || !self.buffer.is_empty())
    }

    /// Handles a packet handed down by the traffic source.
    ///
    /// Aloha transmits immediately when a channel is available and otherwise
    /// drops the packet; buffered strategies enqueue unconditionally.
    pub fn on_packet_generated(&mut self, pkt: AppPacket, now: f64) -> GenAction {
        debug_assert_eq!(pkt.packet_id.node, self.id);
        if self.strategy.is_buffered() {
            self.buffer.push_back(pkt);
            if self.phase == Phase::Idle && self.in_flight.is_none() {
                GenAction::StartNow
            } else {
                GenAction::Buffered
            }
        } else {
            let idle = self.phase == Phase::Idle && self.in_flight.is_none();
            if idle && self.duty.any_available(now) {
                self.buffer.push_back(pkt);
                GenAction::StartNow
            } else {
                self.dropped += 1;
                GenAction::Dropped
            }
        }
    }

    /// Returns the next transmission to put on the air, with the channel to
    /// use, or `None` when the node has nothing to send or every channel is
    /// still under its off-time (poll again at
    /// [`DutyCycleLimiter::earliest_available`]).
    pub fn next_uplink(&mut self, now: f64, channel_picks: &mut Stream) -> Option<(Uplink, u16)> {
        if self.phase != Phase::Idle {
            return None;
        }
        if self.in_flight.is_none() {
            let pkt = self.buffer.pop_front()?;
            let n_f = self.strategy.fragments();
            let frag_sizes = if self.strategy.is_fragmented() {
                fragment_payload(pkt.payload_bytes, n_f).expect("validated at configuration")
            } else {
                alloc::vec![pkt.payload_bytes]
            };
            self.in_flight = Some(InFlight {
                packet: pkt,
                frag_sizes,
                pending: (0..n_f).collect(),
                sessions_used: 0,
            });
        }

        self.duty.available_channels(now, &mut self.avail_scratch);
        if self.avail_scratch.is_empty() {
            return None;
        }
        let channel = self.avail_scratch[channel_picks.pick(self.avail_scratch.len())] as u16;

        let flight = self.in_flight.as_mut().expect("set above");
        let seq = flight
            .pending
            .pop_front()
            .expect("pending is never empty here");
        let last_of_session = flight.pending.is_empty();
        let requests_nack = last_of_session
            && self.strategy.sessions() > 0
            && flight.sessions_used < self.strategy.sessions();
        let payload = flight.frag_sizes[seq as usize];
        let uplink = Uplink {
            packet_id: flight.packet.packet_id,
            seq_index: seq,
            session: flight.sessions_used,
            frame_bytes: payload + self.header_bytes,
            payload_bytes: payload,
            is_fragment: self.strategy.is_fragmented(),
            requests_nack,
        };
        self.phase = Phase::Transmitting;
        Some((uplink, channel))
    }

    /// Records the end of an uplink: charges the duty cycle and advances the
    /// state machine.
    pub fn on_tx_end(&mut self, channel: u16, end_time: f64, toa_s: f64, sent: &Uplink) -> AfterTx {
        debug_assert_eq!(self.phase, Phase::Transmitting);
        self.duty.record_tx(channel as usize, end_time, toa_s);
        let flight = self
            .in_flight
            .as_ref()
            .expect("transmitting implies in flight");
        if !flight.pending.is_empty() {
            self.phase = Phase::Idle;
            return AfterTx::MoreFragments;
        }
        if sent.requests_nack {
            self.phase = Phase::AwaitingNack;
            return AfterTx::AwaitNack;
        }
        // Session finished with no NACK requested: the packet is concluded
        // from this node's point of view.
        self.in_flight = None;
        self.phase = Phase::Idle;
        AfterTx::PacketConcluded
    }

    /// Applies a received group NACK: queues exactly the fragments marked
    /// missing, in ascending sequence order, as a new session.
    pub fn on_nack(&mut self, nack: &GroupNack) -> Result<(), ProtocolError> {
        if self.phase != Phase::AwaitingNack {
            return Err(ProtocolError::UnexpectedNack);
        }
        if nack.bitmap.is_complete(nack.n_f) {
            return Err(ProtocolError::NackWithoutLoss);
        }
        let flight = self.in_flight.as_mut().ok_or(ProtocolError::StaleNack)?;
        if flight.packet.packet_id != nack.packet_id {
            return Err(ProtocolError::StaleNack);
        }
        debug_assert!(flight.sessions_used < self.strategy.sessions());
        flight.pending = nack.bitmap.missing(nack.n_f).collect();
        flight.sessions_used += 1;
        self.phase = Phase::Idle;
        Ok(())
    }

    /// Both receive windows elapsed without a NACK: the node treats the
    /// packet as concluded and resumes its buffer.
    pub fn on_windows_elapsed(&mut self) {
        debug_assert_eq!(self.phase, Phase::AwaitingNack);
        self.in_flight = None;
        self.phase = Phase::Idle;
    }
}

/// Reception handed to the gateway for a delivered uplink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedUplink {
    pub packet_id: PacketId,
    pub seq_index: u8,
    pub is_fragment: bool,
    pub requests_nack: bool,
}

/// Gateway reaction to one delivered uplink.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GatewayOutcome {
    /// Set when this reception completed a packet (counted exactly once).
    pub completed: Option<PacketId>,
    /// Set when a group NACK must be scheduled towards the sender.
    pub nack: Option<GroupNack>,
    /// An older packet of the same node implicitly abandoned and discarded.
    pub discarded_previous: Option<PacketId>,
    /// This packet discarded: its sessions are exhausted (or the single
    /// no-retransmission session ended) with fragments missing.
    pub discarded: Option<PacketId>,
}

#[derive(Debug, Clone)]
struct GatewayEntry {
    bitmap: FragBitmap,
    nacks_issued: u8,
    /// Highest sequence index requested by the most recent NACK; used to
    /// recognise the end of the final session.
    last_nack_tail: Option<u8>,
    concluded: bool,
}

/// Gateway-side reassembly state: per-packet fragment bitmaps, NACK
/// issuance and the discard bookkeeping.
#[derive(Debug, Clone)]
pub struct GatewayState {
    n_f: u8,
    sessions_max: u8,
    /// Open (not yet concluded) entry per node; nodes send strictly one
    /// packet at a time so one open entry suffices.
    open: alloc::collections::BTreeMap<u32, (u32, GatewayEntry)>,
    delivered: Vec<PacketId>,
    discards: Vec<PacketId>,
    correct_per_node: Vec<u64>,
}

impl GatewayState {
    pub fn new(strategy: Strategy, node_count: u32) -> Self {
        Self {
            n_f: strategy.fragments(),
            sessions_max: strategy.sessions(),
            open: alloc::collections::BTreeMap::new(),
            delivered: Vec::new(),
            discards: Vec::new(),
            correct_per_node: alloc::vec![0; node_count as usize],
        }
    }

    pub fn m_correct(&self) -> u64 {
        self.delivered.len() as u64
    }

    pub fn correct_per_node(&self) -> &[u64] {
        &self.correct_per_node
    }

    pub fn delivered_log(&self) -> &[PacketId] {
        &self.delivered
    }

    pub fn discard_log(&self) -> &[PacketId] {
        &self.discards
    }

    fn count_correct(&mut self, id: PacketId) {
        self.delivered.push(id);
        self.correct_per_node[id.node as usize] += 1;
    }

    /// Processes one delivered uplink and decides what, if anything, the
    /// gateway does in response. Duplicate fragments are idempotent.
    pub fn on_reception(&mut self, rx: &ReceivedUplink) -> GatewayOutcome {
        let mut outcome = GatewayOutcome::default();

        if !rx.is_fragment {
            // Unfragmented packets are complete on arrival.
            outcome.completed = Some(rx.packet_id);
            self.count_correct(rx.packet_id);
            return outcome;
        }

        let node = rx.packet_id.node;
        // A fragment of a newer packet means the node moved on; whatever was
        // open before is now permanently incomplete.
        if let Some(&(open_seq, ref entry)) = self.open.get(&node) {
            if open_seq != rx.packet_id.seq && !entry.concluded {
                let stale = PacketId {
                    node,
                    seq: open_seq,
                };
                self.discards.push(stale);
                outcome.discarded_previous = Some(stale);
            }
        }
        let (_, entry) = self
            .open
            .entry(node)
            .and_modify(|(seq, entry)| {
                if *seq != rx.packet_id.seq {
                    *seq = rx.packet_id.seq;
                    *entry = GatewayEntry {
                        bitmap: FragBitmap::empty(),
                        nacks_issued: 0,
                        last_nack_tail: None,
                        concluded: false,
                    };
                }
            })
            .or_insert_with(|| {
                (
                    rx.packet_id.seq,
                    GatewayEntry {
                        bitmap: FragBitmap::empty(),
                        nacks_issued: 0,
                        last_nack_tail: None,
                        concluded: false,
                    },
                )
            });

        if entry.concluded {
            return outcome; // late duplicate of a finished packet
        }

        entry.bitmap.set(rx.seq_index);

        if entry.bitmap.is_complete(self.n_f) {
            entry.concluded = true;
            outcome.completed = Some(rx.packet_id);
            self.count_correct(rx.packet_id);
            return outcome;
        }

        if rx.requests_nack {
            if entry.nacks_issued < self.sessions_max {
                let nack = GroupNack::new(rx.packet_id, entry.bitmap, self.n_f)
                    .expect("bitmap checked incomplete above");
                entry.nacks_issued += 1;
                entry.last_nack_tail = entry.bitmap.missing(self.n_f).last();
                outcome.nack = Some(nack);
            } else {
                debug_assert!(false, "node requested a NACK beyond the session budget");
            }
            return outcome;
        }

        // No NACK requested. If this was the observable end of the last
        // possible session, the packet can never complete: discard it.
        let session_over = if self.sessions_max == 0 {
            rx.seq_index == self.n_f - 1
        } else {
            entry.nacks_issued == self.sessions_max && entry.last_nack_tail == Some(rx.seq_index)
        };
        if session_over {
            entry.concluded = true;
            self.discards.push(rx.packet_id);
            outcome.discarded = Some(rx.packet_id);
        }
        outcome
    }

    /// End-of-run sweep: everything still open and incomplete is discarded.
    pub fn finalize(&mut self) {
        let open = core::mem::take(&mut self.open);
        for (node, (seq, entry)) in open {
            if !entry.concluded {
                self.discards.push(PacketId { node, seq });
            }
        }
    }
}
