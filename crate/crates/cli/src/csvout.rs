//! CSV emission. Undefined metrics are written as `NA`, never 0 or inf.

use fragsim_core::engine::ScenarioConfig;
use fragsim_core::metrics::{self, MetricsReport};

use crate::strategies;
use crate::sweep::{RunRow, Stat, SummaryRow};

pub const RUNS_HEADER: &str = "node_count,strategy,n_f,retx_sessions,seed,m_asked,m_sent,m_correct,goodput_pct,app_capacity_pct,energy_J,energy_per_pkt_J,header_overhead_pct";

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".into(),
    }
}

/// Analytic header overhead for the run's configuration; absent for
/// unfragmented strategies.
pub fn run_header_overhead(cfg: &ScenarioConfig) -> Option<f64> {
    let n_f = cfg.strategy.fragments();
    (n_f >= 2)
        .then(|| {
            metrics::header_overhead(
                n_f,
                cfg.payload_bytes,
                cfg.fragment_header_bytes,
                &cfg.radio,
            )
            .ok()
        })
        .flatten()
}

/// One row of the per-run CSV.
pub fn run_row_csv(cfg: &ScenarioConfig, report: &MetricsReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        cfg.node_count,
        strategies::kind_name(&cfg.strategy),
        cfg.strategy.fragments(),
        cfg.strategy.sessions(),
        cfg.seed,
        report.m_asked,
        report.m_sent,
        report.m_correct,
        opt(report.goodput_percent()),
        opt(report.app_capacity_percent()),
        report.node_energy_j,
        opt(report.energy_per_correct_j()),
        opt(run_header_overhead(cfg)),
    )
}

/// The full per-run CSV document for a sweep.
pub fn runs_csv(base: &ScenarioConfig, rows: &[RunRow]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for row in rows {
        let cfg = ScenarioConfig {
            node_count: row.node_count,
            strategy: row.strategy,
            seed: row.seed,
            ..base.clone()
        };
        out.push_str(&run_row_csv(&cfg, &row.metrics));
        out.push('\n');
    }
    out
}

fn stat_cols(stat: Option<Stat>, with_ci: bool) -> String {
    match (stat, with_ci) {
        (Some(s), true) => format!("{},{}", s.mean, s.ci95),
        (Some(s), false) => format!("{}", s.mean),
        (None, true) => "NA,NA".into(),
        (None, false) => "NA".into(),
    }
}

/// Aggregated CSV; confidence-interval columns are present only when more
/// than one seed per point was run.
pub fn summary_csv(summary: &[SummaryRow], with_ci: bool) -> String {
    let mut out = String::from("node_count,strategy,n_f,retx_sessions,seeds");
    for metric in [
        "goodput_pct",
        "app_capacity_pct",
        "energy_J",
        "energy_per_pkt_J",
    ] {
        out.push(',');
        out.push_str(metric);
        out.push_str("_mean");
        if with_ci {
            out.push(',');
            out.push_str(metric);
            out.push_str("_ci95");
        }
    }
    out.push_str(",drops\n");
    for row in summary {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.node_count,
            strategies::kind_name(&row.strategy),
            row.strategy.fragments(),
            row.strategy.sessions(),
            row.seeds,
            stat_cols(row.goodput, with_ci),
            stat_cols(row.app_capacity, with_ci),
            stat_cols(row.energy_j, with_ci),
            stat_cols(row.energy_per_pkt_j, with_ci),
            row.drops,
        ));
    }
    out
}
