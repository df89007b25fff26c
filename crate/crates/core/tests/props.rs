//! Property suites: airtime monotonicity, fragmentation arithmetic, and
//! agreement of the reception resolver with a brute-force overlap oracle.

use fragsim_core::phy::{
    self, compute_toa, dbm_to_mw, resolve_reception, Outcome, PayloadKind, RadioConfig,
    Transmission,
};
use fragsim_core::protocol::fragment_payload;
use proptest::prelude::*;

/// Naive O(n^2) oracle: for every transmission, gather everything that
/// time-overlaps it on its channel by pairwise interval checks, then apply
/// the sensitivity/capture rule directly.
fn brute_force_outcomes(
    txs: &[Transmission],
    sensitivity_dbm: f64,
    capture_margin_db: Option<f64>,
) -> Vec<Outcome> {
    txs.iter()
        .enumerate()
        .map(|(i, tx)| {
            if tx.rx_power_dbm < sensitivity_dbm {
                return Outcome::BelowSensitivity;
            }
            let mut aggregate_mw = 0.0;
            let mut overlaps = 0;
            for (j, other) in txs.iter().enumerate() {
                if i == j || other.channel != tx.channel {
                    continue;
                }
                if other.start < tx.end() && tx.start < other.end() {
                    overlaps += 1;
                    aggregate_mw += dbm_to_mw(other.rx_power_dbm);
                }
            }
            if overlaps == 0 {
                return Outcome::Delivered;
            }
            match capture_margin_db {
                Some(margin) if dbm_to_mw(tx.rx_power_dbm) >= dbm_to_mw(margin) * aggregate_mw => {
                    Outcome::Delivered
                }
                _ => Outcome::Collided,
            }
        })
        .collect()
}

fn arb_transmission() -> impl Strategy<Value = Transmission> {
    (
        0.0f64..10.0,
        0.01f64..1.0,
        -130.0f64..-60.0,
        0u16..3,
        0u32..20,
    )
        .prop_map(
            |(start, duration, rx_power_dbm, channel, source)| Transmission {
                source,
                channel,
                start,
                duration,
                rx_power_dbm,
                payload_kind: PayloadKind::Packet,
                frame_bytes: 10,
            },
        )
}

proptest! {
    #[test]
    fn resolver_agrees_with_brute_force(
        txs in prop::collection::vec(arb_transmission(), 0..20),
        capture in prop::option::of(0.0f64..12.0),
    ) {
        let got = resolve_reception(&txs, -123.0, capture);
        let expected = brute_force_outcomes(&txs, -123.0, capture);
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn every_member_of_an_overlap_set_dies_without_capture(
        txs in prop::collection::vec(arb_transmission(), 2..15),
    ) {
        // Force everything above sensitivity so only overlap matters.
        let txs: Vec<_> = txs
            .into_iter()
            .map(|mut t| {
                t.rx_power_dbm = -90.0;
                t
            })
            .collect();
        let out = resolve_reception(&txs, -123.0, None);
        for (i, tx) in txs.iter().enumerate() {
            let overlapped = txs.iter().enumerate().any(|(j, o)| {
                i != j && o.channel == tx.channel && o.start < tx.end() && tx.start < o.end()
            });
            prop_assert_eq!(out[i] == Outcome::Collided, overlapped);
        }
    }

    #[test]
    fn toa_is_monotone_in_frame_size(a in 1u32..512, b in 1u32..512) {
        let radio = RadioConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(compute_toa(lo, &radio).unwrap() <= compute_toa(hi, &radio).unwrap());
    }

    #[test]
    fn toa_is_positive_for_all_radio_settings(
        bytes in 1u32..256,
        sf in 7u8..=12,
        bw_idx in 0usize..3,
        cr in 5u8..=8,
        crc in any::<bool>(),
        explicit in any::<bool>(),
        ldro in any::<bool>(),
    ) {
        let radio = RadioConfig {
            spreading_factor: sf,
            bandwidth_hz: [125_000, 250_000, 500_000][bw_idx],
            coding_rate_denominator: cr,
            crc_enabled: crc,
            explicit_header: explicit,
            low_data_rate_optimize: ldro,
            ..RadioConfig::default()
        };
        prop_assert!(compute_toa(bytes, &radio).unwrap() > 0.0);
    }

    #[test]
    fn fragment_sizes_balance_and_sum(payload in 1u32..4096, n_f in 1u8..=64) {
        prop_assume!(payload >= n_f as u32);
        let sizes = fragment_payload(payload, n_f).unwrap();
        prop_assert_eq!(sizes.len(), n_f as usize);
        prop_assert_eq!(sizes.iter().sum::<u32>(), payload);
        let max = *sizes.iter().max().unwrap();
        let min = *sizes.iter().min().unwrap();
        prop_assert!(max - min <= 1);
        // Larger fragments first.
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn toff_scales_with_duty_cycle(toa in 1e-4f64..10.0, dc in 0.1f64..=100.0) {
        let toff = phy::compute_toff(toa, dc).unwrap();
        prop_assert!(toff >= 0.0);
        // Occupancy never exceeds the duty cycle.
        let occupancy = toa / (toa + toff);
        prop_assert!(occupancy <= dc / 100.0 + 1e-12);
    }
}

#[test]
fn thousand_random_instances_match_the_oracle() {
    // Fixed-seed volume pass over small instances, complementing the
    // shrinking-oriented proptest cases above.
    use fragsim_core::rng::Stream;
    let mut rng = Stream::new(0xACCE97);
    for case in 0..1000 {
        let n = rng.pick(20);
        let txs: Vec<Transmission> = (0..n)
            .map(|i| Transmission {
                source: i as u32,
                channel: rng.pick(2) as u16,
                start: rng.next_f64() * 10.0,
                duration: 0.01 + rng.next_f64(),
                rx_power_dbm: -130.0 + 70.0 * rng.next_f64(),
                payload_kind: PayloadKind::Fragment,
                frame_bytes: 10,
            })
            .collect();
        let capture = if case % 3 == 0 { Some(6.0) } else { None };
        assert_eq!(
            resolve_reception(&txs, -123.0, capture),
            brute_force_outcomes(&txs, -123.0, capture),
            "case {case}"
        );
    }
}
