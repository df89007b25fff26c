//! Configuration and protocol error types.

use core::fmt;

/// Rejected scenario or radio parameters. Every validation failure is
/// reported before any simulation event executes.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    SpreadingFactor(u8),
    Bandwidth(u32),
    CodingRate(u8),
    PreambleSymbols(u16),
    DutyCycle(f64),
    NonPositiveCurrent(f64),
    NonPositiveVoltage(f64),
    FrameBytes(u32),
    NonPositiveToa(f64),
    FragmentCount(u8),
    RetxSessions(u8),
    PayloadTooSmall { payload_bytes: u32, fragments: u8 },
    NodeCount(u32),
    PacketsPerNode(u32),
    NoChannels,
    TrafficInterval(f64),
    SimDuration(f64),
    ReceiveWindows { rx1_s: f64, rx2_s: f64 },
    Geometry(&'static str),
    CaptureMargin(f64),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SpreadingFactor(sf) => write!(f, "spreading factor {sf} outside 7..=12"),
            Self::Bandwidth(bw) => {
                write!(f, "bandwidth {bw} Hz not one of 125000, 250000, 500000")
            }
            Self::CodingRate(cr) => write!(f, "coding rate denominator {cr} outside 5..=8"),
            Self::PreambleSymbols(n) => write!(f, "preamble length {n} symbols invalid"),
            Self::DutyCycle(dc) => write!(f, "duty cycle {dc}% outside (0, 100]"),
            Self::NonPositiveCurrent(a) => write!(f, "radio current {a} A must be positive"),
            Self::NonPositiveVoltage(v) => write!(f, "supply voltage {v} V must be positive"),
            Self::FrameBytes(b) => write!(f, "frame of {b} bytes; frames need at least 1 byte"),
            Self::NonPositiveToa(t) => write!(f, "time on air {t} s must be positive"),
            Self::FragmentCount(n) => write!(f, "fragment count {n} outside 2..=64"),
            Self::RetxSessions(n) => write!(f, "retransmission session budget {n} must be >= 1"),
            Self::PayloadTooSmall {
                payload_bytes,
                fragments,
            } => write!(
                f,
                "payload of {payload_bytes} B cannot be split into {fragments} fragments"
            ),
            Self::NodeCount(n) => write!(f, "node count {n} must be >= 1"),
            Self::PacketsPerNode(n) => write!(f, "packets per node {n} must be >= 1"),
            Self::NoChannels => write!(f, "at least one channel is required"),
            Self::TrafficInterval(s) => write!(f, "traffic interval {s} s must be positive"),
            Self::SimDuration(s) => write!(f, "simulation duration {s} s must be positive"),
            Self::ReceiveWindows { rx1_s, rx2_s } => write!(
                f,
                "receive window delays rx1={rx1_s} s rx2={rx2_s} s must satisfy 0 < rx1 < rx2"
            ),
            Self::Geometry(what) => write!(f, "geometry: {what}"),
            Self::CaptureMargin(db) => write!(f, "capture margin {db} dB must be non-negative"),
        }
    }
}

impl core::error::Error for ConfigError {}

/// Protocol-level anomalies surfaced by the state machines. These are logged
/// rather than fatal: a run keeps going when e.g. a stale NACK shows up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolError {
    /// A NACK whose packet id does not match the in-flight packet.
    StaleNack,
    /// A group NACK with an all-ones bitmap (nothing to resend).
    NackWithoutLoss,
    /// A NACK arrived while no NACK was expected.
    UnexpectedNack,
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StaleNack => write!(f, "NACK for a packet that is no longer in flight"),
            Self::NackWithoutLoss => write!(f, "group NACK carries an all-ones bitmap"),
            Self::UnexpectedNack => write!(f, "NACK received outside a receive window"),
        }
    }
}

impl core::error::Error for ProtocolError {}
