//! Physical-layer model: time on air, mandatory off-time, received power and
//! the fate of overlapping transmissions at the gateway.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::ConfigError;

/// Typical SF7 / 125 kHz gateway sensitivity.
pub const DEFAULT_SENSITIVITY_DBM: f64 = -123.0;

/// Radio parameters: everything needed to compute time on air and energy.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    /// Spreading factor, 7..=12.
    pub spreading_factor: u8,
    /// Bandwidth in Hz: 125000, 250000 or 500000.
    pub bandwidth_hz: u32,
    /// Coding rate denominator, 5..=8 (4/5 .. 4/8).
    pub coding_rate_denominator: u8,
    pub preamble_symbols: u16,
    pub explicit_header: bool,
    pub crc_enabled: bool,
    pub low_data_rate_optimize: bool,
    pub tx_power_dbm: f64,
    pub tx_current_a: f64,
    pub rx_current_a: f64,
    pub supply_voltage_v: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            spreading_factor: 7,
            bandwidth_hz: 125_000,
            coding_rate_denominator: 5,
            preamble_symbols: 8,
            explicit_header: true,
            crc_enabled: true,
            low_data_rate_optimize: false,
            tx_power_dbm: 14.0,
            // SX127x-class figures: PA at 14 dBm, LnaBoost receive.
            tx_current_a: 0.044,
            rx_current_a: 0.011,
            supply_voltage_v: 3.3,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(7..=12).contains(&self.spreading_factor) {
            return Err(ConfigError::SpreadingFactor(self.spreading_factor));
        }
        if ![125_000, 250_000, 500_000].contains(&self.bandwidth_hz) {
            return Err(ConfigError::Bandwidth(self.bandwidth_hz));
        }
        if !(5..=8).contains(&self.coding_rate_denominator) {
            return Err(ConfigError::CodingRate(self.coding_rate_denominator));
        }
        if self.preamble_symbols == 0 {
            return Err(ConfigError::PreambleSymbols(self.preamble_symbols));
        }
        if self.tx_current_a <= 0.0 {
            return Err(ConfigError::NonPositiveCurrent(self.tx_current_a));
        }
        if self.rx_current_a <= 0.0 {
            return Err(ConfigError::NonPositiveCurrent(self.rx_current_a));
        }
        if self.supply_voltage_v <= 0.0 {
            return Err(ConfigError::NonPositiveVoltage(self.supply_voltage_v));
        }
        Ok(())
    }

    /// Symbol duration `2^SF / BW` in seconds.
    pub fn symbol_duration_s(&self) -> f64 {
        (1u64 << self.spreading_factor) as f64 / self.bandwidth_hz as f64
    }

    /// Preamble duration: `(n_preamble + 4.25)` symbols.
    pub fn preamble_duration_s(&self) -> f64 {
        (self.preamble_symbols as f64 + 4.25) * self.symbol_duration_s()
    }

    /// Number of symbols in the payload section of a frame of `frame_bytes`.
    ///
    /// This is the ceiling term of the LoRa modem airtime formula; all inputs
    /// are integers so the ceiling is computed exactly.
    pub fn payload_symbols(&self, frame_bytes: u32) -> u32 {
        let pl = frame_bytes as i64;
        let sf = self.spreading_factor as i64;
        let crc = if self.crc_enabled { 1 } else { 0 };
        let implicit = if self.explicit_header { 0 } else { 1 };
        let de = if self.low_data_rate_optimize { 1 } else { 0 };
        let numerator = 8 * pl - 4 * sf + 28 + 16 * crc - 20 * implicit;
        let denominator = 4 * (sf - 2 * de);
        let blocks = if numerator <= 0 {
            0
        } else {
            (numerator + denominator - 1) / denominator
        };
        (8 + blocks * self.coding_rate_denominator as i64) as u32
    }

    /// Airtime of the payload section alone (no preamble).
    pub fn payload_airtime_s(&self, frame_bytes: u32) -> f64 {
        self.payload_symbols(frame_bytes) as f64 * self.symbol_duration_s()
    }

    /// Uplink transmission energy for the given airtime, in joules.
    pub fn tx_energy_j(&self, toa_s: f64) -> f64 {
        self.supply_voltage_v * self.tx_current_a * toa_s
    }

    /// Receive/listen energy for the given duration, in joules.
    pub fn rx_energy_j(&self, seconds: f64) -> f64 {
        self.supply_voltage_v * self.rx_current_a * seconds
    }
}

/// Full time on air of a frame: preamble plus payload section.
pub fn compute_toa(frame_bytes: u32, radio: &RadioConfig) -> Result<f64, ConfigError> {
    radio.validate()?;
    if frame_bytes == 0 {
        return Err(ConfigError::FrameBytes(frame_bytes));
    }
    Ok(radio.preamble_duration_s() + radio.payload_airtime_s(frame_bytes))
}

/// Mandatory off-time after a transmission: `T_oA * (100 - DC) / DC`.
pub fn compute_toff(toa_s: f64, duty_cycle_percent: f64) -> Result<f64, ConfigError> {
    if toa_s.is_nan() || toa_s <= 0.0 {
        return Err(ConfigError::NonPositiveToa(toa_s));
    }
    if duty_cycle_percent.is_nan() || duty_cycle_percent <= 0.0 || duty_cycle_percent > 100.0 {
        return Err(ConfigError::DutyCycle(duty_cycle_percent));
    }
    Ok(toa_s * (100.0 - duty_cycle_percent) / duty_cycle_percent)
}

/// Per-node, per-channel duty-cycle gate.
///
/// After a transmission ending at `t` with airtime `toa` on channel `c`, the
/// channel is unavailable to the owning node until `t + toff(toa)`.
#[derive(Debug, Clone)]
pub struct DutyCycleLimiter {
    duty_cycle_percent: f64,
    next_allowed: Vec<f64>,
}

impl DutyCycleLimiter {
    pub fn new(duty_cycle_percent: f64, channels: usize) -> Result<Self, ConfigError> {
        if duty_cycle_percent.is_nan() || duty_cycle_percent <= 0.0 || duty_cycle_percent > 100.0 {
            return Err(ConfigError::DutyCycle(duty_cycle_percent));
        }
        if channels == 0 {
            return Err(ConfigError::NoChannels);
        }
        Ok(Self {
            duty_cycle_percent,
            next_allowed: vec![0.0; channels],
        })
    }

    pub fn record_tx(&mut self, channel: usize, end_time: f64, toa_s: f64) {
        let toff = toa_s * (100.0 - self.duty_cycle_percent) / self.duty_cycle_percent;
        self.next_allowed[channel] = end_time + toff;
    }

    pub fn is_available(&self, channel: usize, now: f64) -> bool {
        now >= self.next_allowed[channel]
    }

    pub fn any_available(&self, now: f64) -> bool {
        self.next_allowed.iter().any(|&t| now >= t)
    }

    /// Channels usable at `now`, in index order.
    pub fn available_channels(&self, now: f64, out: &mut Vec<usize>) {
        out.clear();
        out.extend(
            self.next_allowed
                .iter()
                .enumerate()
                .filter(|(_, &t)| now >= t)
                .map(|(c, _)| c),
        );
    }

    /// Earliest instant at which some channel becomes available.
    pub fn earliest_available(&self) -> f64 {
        self.next_allowed
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Channel with the earliest availability (lowest index on ties).
    pub fn earliest(&self) -> (usize, f64) {
        let mut best = (0, self.next_allowed[0]);
        for (c, &t) in self.next_allowed.iter().enumerate().skip(1) {
            if t < best.1 {
                best = (c, t);
            }
        }
        best
    }

    pub fn next_allowed(&self, channel: usize) -> f64 {
        self.next_allowed[channel]
    }
}

/// What a transmission carried, for logs and accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Packet,
    Fragment,
    Nack,
}

/// One on-air transmission as seen by the gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub source: u32,
    pub channel: u16,
    pub start: f64,
    pub duration: f64,
    pub rx_power_dbm: f64,
    pub payload_kind: PayloadKind,
    pub frame_bytes: u32,
}

impl Transmission {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Fate of a transmission at the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Delivered,
    /// Received power below the gateway sensitivity.
    BelowSensitivity,
    /// Destroyed by one or more time-overlapping transmissions.
    Collided,
}

impl Outcome {
    pub fn is_delivered(self) -> bool {
        matches!(self, Outcome::Delivered)
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    libm::pow(10.0, dbm / 10.0)
}

/// Delivery rule shared by [`resolve_reception`] and the engine's online
/// bookkeeping: a transmission survives when it is above sensitivity and
/// either nothing overlapped it, or capture is enabled and its power exceeds
/// the aggregate interference by at least the capture margin.
pub fn decide_outcome(
    rx_power_dbm: f64,
    interference_mw: f64,
    sensitivity_dbm: f64,
    capture_margin_db: Option<f64>,
) -> Outcome {
    if rx_power_dbm < sensitivity_dbm {
        return Outcome::BelowSensitivity;
    }
    if interference_mw <= 0.0 {
        return Outcome::Delivered;
    }
    match capture_margin_db {
        Some(margin) if dbm_to_mw(rx_power_dbm) >= dbm_to_mw(margin) * interference_mw => {
            Outcome::Delivered
        }
        _ => Outcome::Collided,
    }
}

/// Resolves the fate of every transmission in a set, honouring per-channel
/// time overlap, the sensitivity threshold and the optional capture margin.
///
/// Overlap means intersecting `[start, end)` intervals on the same channel.
pub fn resolve_reception(
    transmissions: &[Transmission],
    sensitivity_dbm: f64,
    capture_margin_db: Option<f64>,
) -> Vec<Outcome> {
    // Sweep in start order, keeping the set of transmissions still in the
    // air per channel and accumulating mutual interference as overlaps are
    // discovered.
    let mut order: Vec<usize> = (0..transmissions.len()).collect();
    order.sort_by(|&a, &b| {
        transmissions[a]
            .start
            .total_cmp(&transmissions[b].start)
            .then(a.cmp(&b))
    });

    let mut interference_mw = vec![0.0f64; transmissions.len()];
    let mut active: Vec<usize> = Vec::new();
    for &i in &order {
        let tx = &transmissions[i];
        active.retain(|&j| transmissions[j].end() > tx.start);
        for &j in &active {
            if transmissions[j].channel == tx.channel {
                interference_mw[j] += dbm_to_mw(tx.rx_power_dbm);
                interference_mw[i] += dbm_to_mw(transmissions[j].rx_power_dbm);
            }
        }
        active.push(i);
    }

    transmissions
        .iter()
        .zip(interference_mw)
        .map(|(tx, mw)| decide_outcome(tx.rx_power_dbm, mw, sensitivity_dbm, capture_margin_db))
        .collect()
}

/// Node placement and log-distance path loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// Disc radius around the gateway, metres.
    pub radius_m: f64,
    pub path_loss_exponent: f64,
    /// Loss at the reference distance, dB.
    pub reference_loss_db: f64,
    pub reference_distance_m: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        // Defaults keep every node comfortably above the SF7 sensitivity.
        Self {
            radius_m: 500.0,
            path_loss_exponent: 2.7,
            reference_loss_db: 40.0,
            reference_distance_m: 1.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.radius_m.is_nan() || self.radius_m <= 0.0 {
            return Err(ConfigError::Geometry("radius must be positive"));
        }
        if self.path_loss_exponent.is_nan() || self.path_loss_exponent <= 0.0 {
            return Err(ConfigError::Geometry("path loss exponent must be positive"));
        }
        if self.reference_distance_m.is_nan() || self.reference_distance_m <= 0.0 {
            return Err(ConfigError::Geometry("reference distance must be positive"));
        }
        if !self.reference_loss_db.is_finite() {
            return Err(ConfigError::Geometry("reference loss must be finite"));
        }
        Ok(())
    }

    /// Received power at the gateway for a node at `distance_m`.
    pub fn received_power_dbm(&self, tx_power_dbm: f64, distance_m: f64) -> f64 {
        let d = if distance_m < self.reference_distance_m {
            self.reference_distance_m
        } else {
            distance_m
        };
        let loss = self.reference_loss_db
            + 10.0 * self.path_loss_exponent * libm::log10(d / self.reference_distance_m);
        tx_power_dbm - loss
    }
}
