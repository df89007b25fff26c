//! End-to-end engine checks: determinism, conservation, replay fidelity,
//! duty-cycle compliance and the scripted protocol narratives.

use fragsim_core::audit;
use fragsim_core::engine::{
    self, generate_traffic, parse_log_text, RunLength, ScenarioConfig, TrafficModel,
};
use fragsim_core::metrics::{self, MetricsReport};
use fragsim_core::protocol::Strategy;
use fragsim_core::rng::{purpose, Stream};

fn small_config(strategy: Strategy, nodes: u32, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        node_count: nodes,
        strategy,
        packets_per_node: 20,
        seed,
        ..ScenarioConfig::default()
    }
}

fn all_strategies() -> Vec<Strategy> {
    vec![
        Strategy::Aloha,
        Strategy::BufferedAloha,
        Strategy::Frag { fragments: 3 },
        Strategy::FragRetx {
            fragments: 3,
            sessions: 1,
        },
        Strategy::FragRetx {
            fragments: 5,
            sessions: 2,
        },
    ]
}

#[test]
fn zero_nodes_is_a_configuration_error() {
    let cfg = small_config(Strategy::Aloha, 0, 1);
    assert!(engine::run(&cfg).is_err());
}

#[test]
fn single_node_has_perfect_goodput_for_every_strategy() {
    for strategy in all_strategies() {
        let cfg = small_config(strategy, 1, 7);
        let out = engine::run(&cfg).unwrap();
        // Aloha may drop under its own duty cycle, but everything that went
        // on the air must arrive.
        assert_eq!(out.metrics.m_asked, 20, "{strategy:?}");
        if strategy.is_buffered() {
            assert_eq!(out.metrics.m_sent, 20, "{strategy:?}");
        }
        assert_eq!(out.metrics.goodput_percent(), Some(100.0), "{strategy:?}");
    }
}

#[test]
fn identical_config_and_seed_give_byte_identical_logs() {
    for strategy in all_strategies() {
        let cfg = small_config(strategy, 8, 42);
        let a = engine::run(&cfg).unwrap();
        let b = engine::run(&cfg).unwrap();
        let ta = a.log.unwrap().to_text(&cfg);
        let tb = b.log.unwrap().to_text(&cfg);
        assert_eq!(ta, tb, "{strategy:?}");
    }
}

#[test]
fn different_seeds_differ() {
    let a = engine::run(&small_config(Strategy::BufferedAloha, 8, 1)).unwrap();
    let b = engine::run(&small_config(Strategy::BufferedAloha, 8, 2)).unwrap();
    assert_ne!(
        a.log
            .unwrap()
            .to_text(&small_config(Strategy::BufferedAloha, 8, 1)),
        b.log
            .unwrap()
            .to_text(&small_config(Strategy::BufferedAloha, 8, 2))
    );
}

#[test]
fn conservation_and_audit_hold_across_strategies_and_densities() {
    for strategy in all_strategies() {
        for nodes in [1, 5, 20] {
            let cfg = small_config(strategy, nodes, 3);
            let out = engine::run(&cfg).unwrap();
            let m = &out.metrics;
            assert!(m.m_correct <= m.m_sent, "{strategy:?} {nodes}");
            assert!(m.m_sent <= m.m_asked, "{strategy:?} {nodes}");
            assert!(m.node_energy_j >= 0.0);
            let log = out.log.unwrap();
            let violations = audit::check_all(&log.records, &cfg);
            assert!(
                violations.is_empty(),
                "{strategy:?} {nodes}: {violations:?}"
            );
        }
    }
}

#[test]
fn aloha_drop_accounting_balances() {
    // Poisson traffic provokes duty-cycle drops.
    let mut cfg = small_config(Strategy::Aloha, 6, 5);
    cfg.traffic = TrafficModel::Poisson {
        mean_interval_s: 45.0,
    };
    cfg.run_length = RunLength::Drain;
    let out = engine::run(&cfg).unwrap();
    let m = &out.metrics;
    assert!(
        m.dropped > 0,
        "expected duty-cycle drops under Poisson load"
    );
    assert_eq!(m.m_sent + m.dropped, m.m_asked);
    for node in &m.per_node {
        assert_eq!(node.sent + node.dropped, node.asked);
    }
}

#[test]
fn buffered_strategies_send_everything_when_drained() {
    for strategy in [
        Strategy::BufferedAloha,
        Strategy::FragRetx {
            fragments: 4,
            sessions: 1,
        },
    ] {
        let mut cfg = small_config(strategy, 10, 9);
        cfg.run_length = RunLength::Drain;
        let out = engine::run(&cfg).unwrap();
        assert_eq!(out.metrics.m_sent, out.metrics.m_asked, "{strategy:?}");
        assert_eq!(out.metrics.dropped, 0);
    }
}

#[test]
fn replay_reproduces_the_report_bit_for_bit() {
    for strategy in all_strategies() {
        let cfg = small_config(strategy, 12, 11);
        let out = engine::run(&cfg).unwrap();
        let text = out.log.unwrap().to_text(&cfg);
        let (parsed_cfg, replayed) = metrics::replay_text(&text).unwrap();
        assert_eq!(parsed_cfg, cfg, "{strategy:?}");
        assert_reports_bit_identical(&out.metrics, &replayed);
    }
}

fn assert_reports_bit_identical(a: &MetricsReport, b: &MetricsReport) {
    assert_eq!(a.m_asked, b.m_asked);
    assert_eq!(a.m_sent, b.m_sent);
    assert_eq!(a.m_correct, b.m_correct);
    assert_eq!(a.dropped, b.dropped);
    assert_eq!(a.node_energy_j.to_bits(), b.node_energy_j.to_bits());
    assert_eq!(a.gateway_energy_j.to_bits(), b.gateway_energy_j.to_bits());
    assert_eq!(a.per_node.len(), b.per_node.len());
    for (x, y) in a.per_node.iter().zip(&b.per_node) {
        assert_eq!(x.asked, y.asked);
        assert_eq!(x.sent, y.sent);
        assert_eq!(x.correct, y.correct);
        assert_eq!(x.dropped, y.dropped);
        assert_eq!(x.energy_j.to_bits(), y.energy_j.to_bits());
    }
}

#[test]
fn log_round_trips_through_text() {
    let cfg = small_config(
        Strategy::FragRetx {
            fragments: 3,
            sessions: 2,
        },
        10,
        13,
    );
    let out = engine::run(&cfg).unwrap();
    let log = out.log.unwrap();
    let text = log.to_text(&cfg);
    let (cfg2, log2) = parse_log_text(&text).unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(log2, log);
}

#[test]
fn periodic_traffic_is_an_arithmetic_progression() {
    let model = TrafficModel::Periodic { interval_s: 60.0 };
    let mut stream = Stream::derive(99, 4, purpose::TRAFFIC);
    let times = generate_traffic(&model, 3, &mut stream);
    assert_eq!(times.len(), 3);
    let phase = times[0];
    assert!((0.0..60.0).contains(&phase));
    assert!((times[1] - (phase + 60.0)).abs() < 1e-12);
    assert!((times[2] - (phase + 120.0)).abs() < 1e-12);
}

#[test]
fn poisson_traffic_is_reproducible_and_increasing() {
    let model = TrafficModel::Poisson {
        mean_interval_s: 60.0,
    };
    let mut s1 = Stream::derive(7, 0, purpose::TRAFFIC);
    let mut s2 = Stream::derive(7, 0, purpose::TRAFFIC);
    let a = generate_traffic(&model, 50, &mut s1);
    let b = generate_traffic(&model, 50, &mut s2);
    assert_eq!(a, b);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn traffic_volume_matches_nodes_times_packets() {
    let cfg = ScenarioConfig {
        node_count: 50,
        packets_per_node: 100,
        strategy: Strategy::BufferedAloha,
        ..ScenarioConfig::default()
    };
    let out = engine::run(&cfg).unwrap();
    assert_eq!(out.metrics.m_asked, 5000);
    let gen_lines = out
        .log
        .unwrap()
        .records
        .iter()
        .filter(|r| r.kind == engine::EventKind::PacketGenerated)
        .count();
    assert_eq!(gen_lines, 5000);
}

#[test]
fn per_node_traffic_is_independent_of_network_size() {
    // Node 1's arrivals must not change when more nodes join the network.
    let small = small_config(Strategy::BufferedAloha, 2, 21);
    let large = small_config(Strategy::BufferedAloha, 50, 21);
    let arrivals = |cfg: &ScenarioConfig| -> Vec<f64> {
        engine::run(cfg)
            .unwrap()
            .log
            .unwrap()
            .records
            .iter()
            .filter(|r| {
                r.kind == engine::EventKind::PacketGenerated
                    && r.subject == engine::Subject::Node(1)
            })
            .map(|r| r.time)
            .collect()
    };
    assert_eq!(arrivals(&small), arrivals(&large));
}

#[test]
fn clock_is_monotone_in_every_log() {
    for strategy in all_strategies() {
        let cfg = small_config(strategy, 15, 17);
        let out = engine::run(&cfg).unwrap();
        audit::check_clock_monotonic(&out.log.unwrap().records).unwrap();
    }
}

#[test]
fn hard_cutoff_truncates_sending() {
    let mut cfg = small_config(Strategy::BufferedAloha, 1, 23);
    // Arrivals every 20 s against a ~34 s service time: the queue grows and
    // the cutoff strands the backlog.
    cfg.traffic = TrafficModel::Periodic { interval_s: 20.0 };
    cfg.run_length = RunLength::Seconds(400.0);
    let out = engine::run(&cfg).unwrap();
    let m = &out.metrics;
    assert!(m.m_sent < m.m_asked, "cutoff should strand queued packets");
    assert!(m.m_correct <= m.m_sent);
    // Every started transmission still resolves in the log.
    audit::check_tx_pairing(&out.log.unwrap().records).unwrap();
}

#[test]
fn capture_effect_rescues_the_strong_node() {
    // Two nodes, one much closer to the gateway. Force simultaneous phases
    // via identical traffic? Instead, rely on dense Poisson traffic to
    // produce overlaps, then compare outcomes with and without capture.
    let mut base = small_config(Strategy::BufferedAloha, 8, 31);
    base.traffic = TrafficModel::Poisson {
        mean_interval_s: 40.0,
    };
    base.run_length = RunLength::Drain;
    let without = engine::run(&base).unwrap().metrics;
    let mut with = base.clone();
    with.capture_margin_db = Some(6.0);
    let with = engine::run(&with).unwrap().metrics;
    assert!(
        with.m_correct >= without.m_correct,
        "capture can only help: {} vs {}",
        with.m_correct,
        without.m_correct
    );
}

#[test]
fn fragmented_runs_reassemble_whole_payloads() {
    // Every packet counted correct must have all fragment payload bytes
    // delivered: reconstruct byte counts from the log.
    use std::collections::BTreeMap;
    let cfg = small_config(
        Strategy::FragRetx {
            fragments: 3,
            sessions: 1,
        },
        15,
        37,
    );
    let out = engine::run(&cfg).unwrap();
    let log = out.log.unwrap();
    let mut delivered: BTreeMap<(u32, u32), BTreeMap<u8, u32>> = BTreeMap::new();
    let mut open: BTreeMap<u32, (u32, u32, Option<engine::FragmentTag>)> = BTreeMap::new();
    let horizon = cfg.resolve_horizon_s().unwrap();
    for rec in &log.records {
        match (rec.kind, rec.subject) {
            (engine::EventKind::TxStart, engine::Subject::Node(n)) => {
                if let engine::Detail::TxStart { pkt_seq, fragment } = rec.detail {
                    open.insert(n, (rec.bytes.unwrap(), pkt_seq, fragment));
                }
            }
            (engine::EventKind::TxEnd, engine::Subject::Node(n)) => {
                let (bytes, pkt_seq, fragment) = open.remove(&n).unwrap();
                if matches!(
                    rec.detail,
                    engine::Detail::TxEnd(fragsim_core::phy::Outcome::Delivered)
                ) && rec.time <= horizon
                {
                    if let Some(tag) = fragment {
                        delivered
                            .entry((n, pkt_seq))
                            .or_default()
                            .insert(tag.seq_index, bytes - cfg.fragment_header_bytes);
                    }
                }
            }
            _ => {}
        }
    }
    let complete = delivered
        .values()
        .filter(|frags| frags.len() == 3)
        .inspect(|frags| {
            let total: u32 = frags.values().sum();
            assert_eq!(total, cfg.payload_bytes);
        })
        .count() as u64;
    assert_eq!(complete, out.metrics.m_correct);
    assert!(complete > 0);
}
