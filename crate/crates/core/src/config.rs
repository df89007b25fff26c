//! Plain-text `key = value` scenario schema.
//!
//! The same schema serves three places: CLI configuration files, the
//! `#`-prefixed header embedded in serialized event logs (which makes log
//! files self-contained for replay), and golden-diff fixtures. Unknown keys
//! are rejected with the offending line number; every key has a default, so
//! an empty document yields the baseline dense-network scenario.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::engine::{default_channels, RunLength, ScenarioConfig, TrafficModel};
use crate::protocol::Strategy;

/// A rejected configuration document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigTextError {
    /// 1-based line of the offending entry; 0 when the document as a whole
    /// is inconsistent.
    pub line: usize,
    pub message: String,
}

impl core::fmt::Display for ConfigTextError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl core::error::Error for ConfigTextError {}

/// Serializes a scenario to the text schema, one key per line.
pub fn to_text(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "nodes = {}", cfg.node_count);
    let _ = writeln!(s, "channels = {}", cfg.channels.len());
    let _ = writeln!(s, "spreading_factor = {}", cfg.radio.spreading_factor);
    let _ = writeln!(s, "bandwidth_hz = {}", cfg.radio.bandwidth_hz);
    let _ = writeln!(s, "coding_rate = {}", cfg.radio.coding_rate_denominator);
    let _ = writeln!(s, "preamble_symbols = {}", cfg.radio.preamble_symbols);
    let _ = writeln!(s, "explicit_header = {}", cfg.radio.explicit_header);
    let _ = writeln!(s, "crc = {}", cfg.radio.crc_enabled);
    let _ = writeln!(
        s,
        "low_data_rate_optimize = {}",
        cfg.radio.low_data_rate_optimize
    );
    let _ = writeln!(s, "tx_power_dbm = {}", cfg.radio.tx_power_dbm);
    let _ = writeln!(s, "tx_current_a = {}", cfg.radio.tx_current_a);
    let _ = writeln!(s, "rx_current_a = {}", cfg.radio.rx_current_a);
    let _ = writeln!(s, "supply_voltage_v = {}", cfg.radio.supply_voltage_v);
    let _ = writeln!(s, "duty_cycle_percent = {}", cfg.duty_cycle_percent);
    let strategy = match cfg.strategy {
        Strategy::Aloha => "aloha",
        Strategy::BufferedAloha => "buffered_aloha",
        Strategy::Frag { .. } => "frag",
        Strategy::FragRetx { .. } => "frag_retx",
    };
    let _ = writeln!(s, "strategy = {strategy}");
    if cfg.strategy.is_fragmented() {
        let _ = writeln!(s, "fragments = {}", cfg.strategy.fragments());
    }
    if cfg.strategy.sessions() > 0 {
        let _ = writeln!(s, "retx_sessions = {}", cfg.strategy.sessions());
    }
    let _ = writeln!(s, "payload_bytes = {}", cfg.payload_bytes);
    let _ = writeln!(s, "fragment_header_bytes = {}", cfg.fragment_header_bytes);
    let _ = writeln!(s, "packets_per_node = {}", cfg.packets_per_node);
    match cfg.traffic {
        TrafficModel::Periodic { interval_s } => {
            let _ = writeln!(s, "traffic = periodic");
            let _ = writeln!(s, "traffic_interval_s = {interval_s}");
        }
        TrafficModel::Poisson { mean_interval_s } => {
            let _ = writeln!(s, "traffic = poisson");
            let _ = writeln!(s, "traffic_interval_s = {mean_interval_s}");
        }
    }
    match cfg.run_length {
        RunLength::Drain => {
            let _ = writeln!(s, "sim_duration = drain");
        }
        RunLength::Seconds(secs) => {
            let _ = writeln!(s, "sim_duration = {secs}");
        }
    }
    let _ = writeln!(s, "seed = {}", cfg.seed);
    match cfg.capture_margin_db {
        None => {
            let _ = writeln!(s, "capture_margin_db = off");
        }
        Some(db) => {
            let _ = writeln!(s, "capture_margin_db = {db}");
        }
    }
    let _ = writeln!(s, "sensitivity_dbm = {}", cfg.sensitivity_dbm);
    let _ = writeln!(s, "radius_m = {}", cfg.geometry.radius_m);
    let _ = writeln!(
        s,
        "path_loss_exponent = {}",
        cfg.geometry.path_loss_exponent
    );
    let _ = writeln!(s, "reference_loss_db = {}", cfg.geometry.reference_loss_db);
    let _ = writeln!(
        s,
        "reference_distance_m = {}",
        cfg.geometry.reference_distance_m
    );
    let _ = writeln!(s, "rx1_delay_s = {}", cfg.rx1_delay_s);
    let _ = writeln!(s, "rx2_delay_s = {}", cfg.rx2_delay_s);
    s
}

fn bad(line: usize, message: impl core::fmt::Display) -> ConfigTextError {
    ConfigTextError {
        line,
        message: message.to_string(),
    }
}

fn parse_num<T: core::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigTextError> {
    v.parse()
        .map_err(|_| bad(line, format!("invalid value {v:?} for {key}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigTextError> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(bad(line, format!("invalid boolean {v:?} for {key}"))),
    }
}

/// Parses the text schema into a scenario, starting from the defaults.
pub fn parse_text(text: &str) -> Result<ScenarioConfig, ConfigTextError> {
    let mut cfg = ScenarioConfig::default();
    // Strategy pieces may arrive in any key order; assembled at the end.
    let mut strategy_kind: Option<(usize, String)> = None;
    let mut fragments: Option<(usize, u8)> = None;
    let mut sessions: Option<(usize, u8)> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(lineno, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "nodes" => cfg.node_count = parse_num(lineno, key, value)?,
            "channels" => {
                let count: u16 = parse_num(lineno, key, value)?;
                cfg.channels = default_channels(count);
            }
            "spreading_factor" => cfg.radio.spreading_factor = parse_num(lineno, key, value)?,
            "bandwidth_hz" => cfg.radio.bandwidth_hz = parse_num(lineno, key, value)?,
            "coding_rate" => cfg.radio.coding_rate_denominator = parse_num(lineno, key, value)?,
            "preamble_symbols" => cfg.radio.preamble_symbols = parse_num(lineno, key, value)?,
            "explicit_header" => cfg.radio.explicit_header = parse_bool(lineno, key, value)?,
            "crc" => cfg.radio.crc_enabled = parse_bool(lineno, key, value)?,
            "low_data_rate_optimize" => {
                cfg.radio.low_data_rate_optimize = parse_bool(lineno, key, value)?
            }
            "tx_power_dbm" => cfg.radio.tx_power_dbm = parse_num(lineno, key, value)?,
            "tx_current_a" => cfg.radio.tx_current_a = parse_num(lineno, key, value)?,
            "rx_current_a" => cfg.radio.rx_current_a = parse_num(lineno, key, value)?,
            "supply_voltage_v" => cfg.radio.supply_voltage_v = parse_num(lineno, key, value)?,
            "duty_cycle_percent" => cfg.duty_cycle_percent = parse_num(lineno, key, value)?,
            "strategy" => strategy_kind = Some((lineno, value.to_string())),
            "fragments" => fragments = Some((lineno, parse_num(lineno, key, value)?)),
            "retx_sessions" => sessions = Some((lineno, parse_num(lineno, key, value)?)),
            "payload_bytes" => cfg.payload_bytes = parse_num(lineno, key, value)?,
            "fragment_header_bytes" => cfg.fragment_header_bytes = parse_num(lineno, key, value)?,
            "packets_per_node" => cfg.packets_per_node = parse_num(lineno, key, value)?,
            "traffic" => {
                let interval = cfg.traffic.nominal_interval_s();
                cfg.traffic = match value {
                    "periodic" => TrafficModel::Periodic {
                        interval_s: interval,
                    },
                    "poisson" => TrafficModel::Poisson {
                        mean_interval_s: interval,
                    },
                    _ => return Err(bad(lineno, format!("unknown traffic model {value:?}"))),
                };
            }
            "traffic_interval_s" => {
                let interval: f64 = parse_num(lineno, key, value)?;
                cfg.traffic = match cfg.traffic {
                    TrafficModel::Periodic { .. } => TrafficModel::Periodic {
                        interval_s: interval,
                    },
                    TrafficModel::Poisson { .. } => TrafficModel::Poisson {
                        mean_interval_s: interval,
                    },
                };
            }
            "sim_duration" => {
                cfg.run_length = match value {
                    "drain" => RunLength::Drain,
                    _ => RunLength::Seconds(parse_num(lineno, key, value)?),
                };
            }
            "seed" => cfg.seed = parse_num(lineno, key, value)?,
            "capture_margin_db" => {
                cfg.capture_margin_db = match value {
                    "off" | "none" => None,
                    _ => Some(parse_num(lineno, key, value)?),
                };
            }
            "sensitivity_dbm" => cfg.sensitivity_dbm = parse_num(lineno, key, value)?,
            "radius_m" => cfg.geometry.radius_m = parse_num(lineno, key, value)?,
            "path_loss_exponent" => {
                cfg.geometry.path_loss_exponent = parse_num(lineno, key, value)?
            }
            "reference_loss_db" => cfg.geometry.reference_loss_db = parse_num(lineno, key, value)?,
            "reference_distance_m" => {
                cfg.geometry.reference_distance_m = parse_num(lineno, key, value)?
            }
            "rx1_delay_s" => cfg.rx1_delay_s = parse_num(lineno, key, value)?,
            "rx2_delay_s" => cfg.rx2_delay_s = parse_num(lineno, key, value)?,
            _ => return Err(bad(lineno, format!("unknown key {key:?}"))),
        }
    }

    if let Some((lineno, kind)) = strategy_kind {
        cfg.strategy = build_strategy(lineno, &kind, fragments, sessions)?;
    } else {
        // Fragment options without an explicit strategy only make sense for
        // a fragmenting default; the baseline default is Aloha.
        if let Some((lineno, _)) = fragments.or(sessions) {
            return Err(bad(
                lineno,
                "fragments/retx_sessions require `strategy = frag` or `strategy = frag_retx`",
            ));
        }
    }
    Ok(cfg)
}

/// Assembles a strategy from its text pieces (shared with the CLI flags).
pub fn build_strategy(
    line: usize,
    kind: &str,
    fragments: Option<(usize, u8)>,
    sessions: Option<(usize, u8)>,
) -> Result<Strategy, ConfigTextError> {
    let frag = fragments.map(|(_, f)| f);
    let sess = sessions.map(|(_, s)| s);
    match kind {
        "aloha" => Ok(Strategy::Aloha),
        "buffered_aloha" => Ok(Strategy::BufferedAloha),
        "frag" => Ok(Strategy::Frag {
            fragments: frag.unwrap_or(2),
        }),
        "frag_retx" => Ok(Strategy::FragRetx {
            fragments: frag.unwrap_or(2),
            sessions: sess.unwrap_or(1),
        }),
        _ => Err(bad(line, format!("unknown strategy {kind:?}"))),
    }
}

/// Vec of all serialized keys, for schema documentation and tests.
pub fn known_keys() -> Vec<&'static str> {
    alloc::vec![
        "nodes",
        "channels",
        "spreading_factor",
        "bandwidth_hz",
        "coding_rate",
        "preamble_symbols",
        "explicit_header",
        "crc",
        "low_data_rate_optimize",
        "tx_power_dbm",
        "tx_current_a",
        "rx_current_a",
        "supply_voltage_v",
        "duty_cycle_percent",
        "strategy",
        "fragments",
        "retx_sessions",
        "payload_bytes",
        "fragment_header_bytes",
        "packets_per_node",
        "traffic",
        "traffic_interval_s",
        "sim_duration",
        "seed",
        "capture_margin_db",
        "sensitivity_dbm",
        "radius_m",
        "path_loss_exponent",
        "reference_loss_db",
        "reference_distance_m",
        "rx1_delay_s",
        "rx2_delay_s",
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_baseline() {
        let cfg = parse_text("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let mut cfg = ScenarioConfig {
            node_count: 7,
            strategy: Strategy::FragRetx {
                fragments: 5,
                sessions: 2,
            },
            traffic: TrafficModel::Poisson {
                mean_interval_s: 37.5,
            },
            run_length: RunLength::Seconds(1234.5),
            capture_margin_db: Some(6.0),
            seed: 99,
            ..ScenarioConfig::default()
        };
        cfg.radio.spreading_factor = 9;
        let text = to_text(&cfg);
        assert_eq!(parse_text(&text).unwrap(), cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_text("nodes = 3\nbogus_key = 1\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_text("nodes three\n").unwrap_err();
        assert_eq!(err.line, 1);
        let err = parse_text("\n\nnodes = many\n").unwrap_err();
        assert_eq!(err.line, 3);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_text("# a comment\n\nnodes = 5 # trailing\n").unwrap();
        assert_eq!(cfg.node_count, 5);
    }

    #[test]
    fn strategy_pieces_merge_in_any_order() {
        let cfg = parse_text("fragments = 4\nstrategy = frag_retx\nretx_sessions = 2\n").unwrap();
        assert_eq!(
            cfg.strategy,
            Strategy::FragRetx {
                fragments: 4,
                sessions: 2
            }
        );
        assert!(parse_text("fragments = 4\n").is_err());
    }
}
