//! Deterministic discrete-event simulation of dense, duty-cycle-restricted
//! LPWAN uplink networks.
//!
//! The crate models a single-gateway LoRa-style network in which every node
//! obeys a per-channel duty cycle and picks one of four transmission
//! strategies: pure Aloha, Buffered Aloha, Buffered Aloha with aggressive
//! packet fragmentation, and fragmentation with group-NACK retransmission
//! sessions. A run produces a [`metrics::MetricsReport`] (goodput,
//! application capacity, energy efficiency, header overhead inputs) together
//! with a replayable [`engine::EventLog`].
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats and the CLI
//! live in the companion `fragsim` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod audit;
pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod phy;
pub mod protocol;
pub mod rng;

pub use engine::{run, EventLog, RunLength, RunOutput, ScenarioConfig, TrafficModel};
pub use error::ConfigError;
pub use metrics::MetricsReport;
pub use phy::{compute_toa, compute_toff, resolve_reception, RadioConfig, Transmission};
pub use protocol::Strategy;
