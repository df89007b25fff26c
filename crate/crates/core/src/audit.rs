//! Whole-log invariant checkers.
//!
//! These run over structured [`EventRecord`]s and re-derive protocol rules
//! from scratch: duty-cycle spacing from frame sizes, session budgets and
//! retransmission minimality from transmission tags and NACK bitmaps. Tests
//! and the acceptance suite apply them to full runs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::engine::{Detail, EventKind, EventRecord, ScenarioConfig, Subject};
use crate::phy::compute_toa;

/// Clock slack allowed by the checkers (1 µs).
pub const TIME_SLACK_S: f64 = 1e-6;

/// A violated invariant, with the time it was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub time: f64,
    pub message: String,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "t={}: {}", self.time, self.message)
    }
}

fn violation(time: f64, message: String) -> Result<(), Violation> {
    Err(Violation { time, message })
}

/// Event timestamps must be non-decreasing.
pub fn check_clock_monotonic(records: &[EventRecord]) -> Result<(), Violation> {
    let mut prev = f64::NEG_INFINITY;
    for rec in records {
        if rec.time < prev {
            return violation(
                rec.time,
                format!("clock moved backwards: {} after {}", rec.time, prev),
            );
        }
        prev = rec.time;
    }
    Ok(())
}

/// Every consecutive same-node, same-channel transmission pair must respect
/// the mandatory off-time of the earlier transmission:
/// `gap >= T_oA * (100 - DC) / DC`, up to [`TIME_SLACK_S`].
pub fn check_duty_cycle(records: &[EventRecord], cfg: &ScenarioConfig) -> Result<(), Violation> {
    let dc = cfg.duty_cycle_percent;
    // (node, channel) -> earliest next permitted start.
    let mut next_allowed: BTreeMap<(u32, u16), f64> = BTreeMap::new();
    for rec in records {
        let Subject::Node(node) = rec.subject else {
            continue;
        };
        match rec.kind {
            EventKind::TxStart => {
                let channel = rec.channel.unwrap_or(0);
                match next_allowed.get(&(node, channel)) {
                    Some(&allowed) if rec.time + TIME_SLACK_S < allowed => {
                        return violation(
                            rec.time,
                            format!(
                                "node {node} transmitted on channel {channel} at {} before its off-time expired at {allowed}",
                                rec.time
                            ),
                        );
                    }
                    _ => {}
                }
            }
            EventKind::TxEnd => {
                let channel = rec.channel.unwrap_or(0);
                let bytes = rec
                    .bytes
                    .expect("TxEnd records always carry the frame size");
                let toa = compute_toa(bytes, &cfg.radio)
                    .expect("log frame sizes are valid for the embedded radio");
                let toff = toa * (100.0 - dc) / dc;
                next_allowed.insert((node, channel), rec.time + toff);
            }
            _ => {}
        }
    }
    Ok(())
}

/// Every `TxStart` must be closed by a `TxEnd` of the same node, and a node
/// never has two transmissions in the air.
pub fn check_tx_pairing(records: &[EventRecord]) -> Result<(), Violation> {
    let mut open: BTreeMap<u32, f64> = BTreeMap::new();
    for rec in records {
        let Subject::Node(node) = rec.subject else {
            continue;
        };
        match rec.kind {
            EventKind::TxStart => {
                if let Some(since) = open.insert(node, rec.time) {
                    return violation(
                        rec.time,
                        format!(
                            "node {node} started a transmission while one was open since {since}"
                        ),
                    );
                }
            }
            EventKind::TxEnd if open.remove(&node).is_none() => {
                return violation(
                    rec.time,
                    format!("node {node} ended a transmission it never started"),
                );
            }
            _ => {}
        }
    }
    if let Some((&node, &since)) = open.iter().next() {
        return violation(since, format!("node {node} transmission never ended"));
    }
    Ok(())
}

/// Session tags never exceed the configured budget, and runs without
/// retransmissions contain no NACKs and no session tags above zero.
pub fn check_session_bounds(
    records: &[EventRecord],
    cfg: &ScenarioConfig,
) -> Result<(), Violation> {
    let budget = cfg.strategy.sessions();
    for rec in records {
        match rec.detail {
            Detail::TxStart {
                fragment: Some(tag),
                ..
            } if tag.session > budget => {
                return violation(
                    rec.time,
                    format!(
                        "session {} exceeds the budget of {budget} sessions",
                        tag.session
                    ),
                );
            }
            Detail::Nack { .. } if budget == 0 => {
                return violation(
                    rec.time,
                    String::from("NACK in a run without retransmissions"),
                );
            }
            _ => {}
        }
    }
    Ok(())
}

/// Every retransmitted fragment must answer a 0-bit of the most recent NACK
/// for its packet: nothing is ever resent speculatively.
pub fn check_retx_minimality(records: &[EventRecord]) -> Result<(), Violation> {
    // (node, packet) -> (bitmap, bits already answered this session)
    let mut last_nack: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for rec in records {
        match rec.detail {
            Detail::Nack {
                node,
                pkt_seq,
                bitmap,
                ..
            } => {
                last_nack.insert((node, pkt_seq), bitmap);
            }
            Detail::TxStart {
                pkt_seq,
                fragment: Some(tag),
            } if tag.session > 0 => {
                let Subject::Node(node) = rec.subject else {
                    continue;
                };
                match last_nack.get(&(node, pkt_seq)) {
                    Some(bitmap) if bitmap & (1u64 << tag.seq_index) == 0 => {}
                    Some(_) => {
                        return violation(
                            rec.time,
                            format!(
                                "node {node} resent fragment {} of packet {pkt_seq} although the NACK marked it received",
                                tag.seq_index
                            ),
                        );
                    }
                    None => {
                        return violation(
                            rec.time,
                            format!(
                                "node {node} resent fragment {} of packet {pkt_seq} without any NACK",
                                tag.seq_index
                            ),
                        );
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Runs every checker and collects the failures.
pub fn check_all(records: &[EventRecord], cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    for result in [
        check_clock_monotonic(records),
        check_duty_cycle(records, cfg),
        check_tx_pairing(records),
        check_session_bounds(records, cfg),
        check_retx_minimality(records),
    ] {
        if let Err(v) = result {
            out.push(v);
        }
    }
    out
}
